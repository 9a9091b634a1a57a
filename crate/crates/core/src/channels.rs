//! Boolean noiseless channels.
//!
//! * Bernoulli group testing: each individual joins a test independently with
//!   probability `ν/k`; the test is positive iff it contains an infected
//!   individual.
//! * Sparse balanced Gaussian: `Y = 1(⟨X, θ⟩ ∈ A)` with i.i.d. standard
//!   Gaussian design and a finite union of intervals `A` of Gaussian mass 1/2.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gauss;
use crate::model::{BitRow, DesignRow, KSparsePrior, Signal};

/// Tolerance on `|P(Z ∈ A) − 1/2|` for a set to count as balanced.
pub const BALANCE_TOLERANCE: f64 = 1e-10;

/// Solves `(1 − ν/k)^k = q` for `ν ∈ (0, k)`.
pub fn bgt_solve_nu(q: f64, k: usize) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain {
            name: "q",
            value: q,
            domain: "(0, 1)",
        });
    }
    if k == 0 {
        return Err(Error::InvalidPrior { n: 0, k });
    }
    let k = k as f64;
    // k(1 - q^{1/k}) written with expm1 to keep precision for large k
    Ok(-k * (q.ln() / k).exp_m1())
}

/// Group-testing outcome: 1 iff the pool hits the support of θ.
pub fn bgt_apply(x: &BitRow, theta: &Signal) -> Result<bool> {
    if x.len() != theta.dim() {
        return Err(Error::LengthMismatch {
            expected: theta.dim(),
            got: x.len(),
        });
    }
    Ok(bgt_eval(x, theta))
}

#[inline]
fn bgt_eval(x: &BitRow, theta: &Signal) -> bool {
    match theta.mask() {
        Some(mask) => x.words()[0] & mask != 0,
        None => theta.support().iter().any(|&i| x.get(i as usize)),
    }
}

/// Balanced-Gaussian outcome: 1 iff `⟨x, θ⟩ ∈ A`.
pub fn sbg_apply(x: &[f64], theta: &Signal, set: &BalancedSet) -> Result<bool> {
    if x.len() != theta.dim() {
        return Err(Error::LengthMismatch {
            expected: theta.dim(),
            got: x.len(),
        });
    }
    Ok(set.contains(projection(x, theta)))
}

#[inline]
fn projection(x: &[f64], theta: &Signal) -> f64 {
    let s: f64 = theta.support().iter().map(|&i| x[i as usize]).sum();
    s * theta.amplitude()
}

/// The median of |Z|: `P(|Z| ≤ u) = 1/2`, i.e. `Φ(u) = 3/4`.
pub fn symmetric_interval_u() -> f64 {
    gauss::quantile(0.75)
}

/// Closed interval `[lo, hi]` of the extended real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn mass(&self) -> f64 {
        // subtract in whichever tail keeps the operands small
        if self.lo >= 0.0 {
            gauss::sf(self.lo) - gauss::sf(self.hi)
        } else {
            gauss::cdf(self.hi) - gauss::cdf(self.lo)
        }
    }
}

fn check_intervals(intervals: &[Interval]) -> Result<()> {
    for iv in intervals {
        if iv.lo.is_nan() || iv.hi.is_nan() || !(iv.lo < iv.hi) {
            return Err(Error::InvalidSet(format!(
                "interval [{}, {}] is empty or malformed",
                iv.lo, iv.hi
            )));
        }
    }
    for w in intervals.windows(2) {
        if !(w[0].hi < w[1].lo) {
            return Err(Error::InvalidSet(format!(
                "intervals [{}, {}] and [{}, {}] overlap or are out of order",
                w[0].lo, w[0].hi, w[1].lo, w[1].hi
            )));
        }
    }
    Ok(())
}

/// Standard-Gaussian mass of a sorted, disjoint union of intervals.
pub fn gaussian_mass(intervals: &[Interval]) -> Result<f64> {
    check_intervals(intervals)?;
    Ok(intervals.iter().map(Interval::mass).sum())
}

/// Parses `"a:b,c:d"` with `inf` / `-inf` endpoints. Does not check balance.
pub fn parse_intervals(s: &str) -> Result<Vec<Interval>> {
    let parse_end = |t: &str| -> Result<f64> {
        match t.trim() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidSet(format!("bad endpoint {other:?}"))),
        }
    };
    let out = s
        .split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| Error::InvalidSet(format!("expected a:b, got {part:?}")))?;
            Ok(Interval::new(parse_end(a)?, parse_end(b)?))
        })
        .collect::<Result<Vec<_>>>()?;
    check_intervals(&out)?;
    Ok(out)
}

/// Finite union of intervals with Gaussian mass 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedSet {
    intervals: Vec<Interval>,
}

impl BalancedSet {
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        let mass = gaussian_mass(&intervals)?;
        if (mass - 0.5).abs() > BALANCE_TOLERANCE {
            return Err(Error::Unbalanced {
                mass,
                tol: BALANCE_TOLERANCE,
            });
        }
        Ok(Self { intervals })
    }

    /// `[0, ∞)`, the perceptron.
    pub fn half_space() -> Self {
        Self {
            intervals: vec![Interval::new(0.0, f64::INFINITY)],
        }
    }

    /// `[−u, u]` with `u` the median of `|Z|`.
    pub fn symmetric() -> Self {
        let u = symmetric_interval_u();
        Self::new(vec![Interval::new(-u, u)]).expect("median interval is balanced")
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn mass(&self) -> f64 {
        self.intervals.iter().map(Interval::mass).sum()
    }

    pub fn contains(&self, t: f64) -> bool {
        // last interval starting at or before t
        let idx = self.intervals.partition_point(|iv| iv.lo <= t);
        idx > 0 && t <= self.intervals[idx - 1].hi
    }

    /// The complement, also balanced.
    pub fn complement(&self) -> Result<Self> {
        let mut out = Vec::new();
        let mut cursor = f64::NEG_INFINITY;
        for iv in &self.intervals {
            if iv.lo > cursor {
                out.push(Interval::new(cursor, iv.lo));
            }
            cursor = iv.hi;
        }
        if cursor < f64::INFINITY {
            out.push(Interval::new(cursor, f64::INFINITY));
        }
        Self::new(out)
    }
}

impl FromStr for BalancedSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(parse_intervals(s)?)
    }
}

impl fmt::Display for BalancedSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let end = |v: f64| {
            if v == f64::INFINITY {
                "inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{v}")
            }
        };
        let parts: Vec<String> = self
            .intervals
            .iter()
            .map(|iv| format!("{}:{}", end(iv.lo), end(iv.hi)))
            .collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BgtChannel {
    dim: usize,
    sparsity: usize,
    q: f64,
    nu: f64,
}

impl BgtChannel {
    pub fn new(dim: usize, sparsity: usize, q: f64) -> Result<Self> {
        KSparsePrior::new(dim, sparsity)?;
        let nu = bgt_solve_nu(q, sparsity)?;
        Ok(Self {
            dim,
            sparsity,
            q,
            nu,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Per-individual inclusion probability `ν/k`.
    pub fn inclusion(&self) -> f64 {
        self.nu / self.sparsity as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbgChannel {
    dim: usize,
    sparsity: usize,
    set: BalancedSet,
}

impl SbgChannel {
    pub fn new(dim: usize, sparsity: usize, set: BalancedSet) -> Result<Self> {
        KSparsePrior::new(dim, sparsity)?;
        Ok(Self { dim, sparsity, set })
    }

    pub fn set(&self) -> &BalancedSet {
        &self.set
    }
}

/// A validated boolean channel.
#[derive(Debug, Clone, PartialEq)]
pub enum Channel {
    Bgt(BgtChannel),
    Sbg(SbgChannel),
}

impl Channel {
    pub fn bgt(dim: usize, sparsity: usize, q: f64) -> Result<Self> {
        BgtChannel::new(dim, sparsity, q).map(Channel::Bgt)
    }

    pub fn sbg(dim: usize, sparsity: usize, set: BalancedSet) -> Result<Self> {
        SbgChannel::new(dim, sparsity, set).map(Channel::Sbg)
    }

    pub fn dim(&self) -> usize {
        match self {
            Channel::Bgt(c) => c.dim,
            Channel::Sbg(c) => c.dim,
        }
    }

    pub fn sparsity(&self) -> usize {
        match self {
            Channel::Bgt(c) => c.sparsity,
            Channel::Sbg(c) => c.sparsity,
        }
    }

    /// Matching prior.
    pub fn prior(&self) -> KSparsePrior {
        KSparsePrior::new(self.dim(), self.sparsity()).expect("validated at construction")
    }

    /// `p = P(g(X, θ) = 1)`.
    pub fn p_one(&self) -> f64 {
        match self {
            Channel::Bgt(c) => 1.0 - c.q,
            Channel::Sbg(_) => 0.5,
        }
    }

    pub(crate) fn check_signal(&self, theta: &Signal) -> Result<()> {
        if theta.dim() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: theta.dim(),
            });
        }
        if theta.sparsity() != self.sparsity() {
            return Err(Error::MismatchedSparsity {
                left: self.sparsity(),
                right: theta.sparsity(),
            });
        }
        Ok(())
    }

    /// Draws one row from the design law.
    pub fn sample_row<R: Rng + ?Sized>(&self, rng: &mut R) -> DesignRow {
        match self {
            Channel::Bgt(c) => {
                let mut row = BitRow::zeros(c.dim);
                let pi = c.inclusion();
                for i in 0..c.dim {
                    if rng.random::<f64>() < pi {
                        row.set(i);
                    }
                }
                DesignRow::Bits(row)
            }
            Channel::Sbg(c) => DesignRow::Real(
                (0..c.dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            ),
        }
    }

    /// `g(x, θ)` with length and family checks.
    pub fn apply(&self, x: &DesignRow, theta: &Signal) -> Result<bool> {
        self.check_signal(theta)?;
        match (self, x) {
            (Channel::Bgt(_), DesignRow::Bits(b)) => bgt_apply(b, theta),
            (Channel::Sbg(c), DesignRow::Real(v)) => sbg_apply(v, theta, &c.set),
            _ => Err(Error::Config(
                "design row family does not match the channel".into(),
            )),
        }
    }

    /// `g(x, θ)` for rows this channel produced.
    #[inline]
    pub(crate) fn eval(&self, x: &DesignRow, theta: &Signal) -> bool {
        match (self, x) {
            (Channel::Bgt(_), DesignRow::Bits(b)) => bgt_eval(b, theta),
            (Channel::Sbg(c), DesignRow::Real(v)) => c.set.contains(projection(v, theta)),
            _ => panic!("design row family does not match the channel"),
        }
    }

    /// Short human-readable tag.
    pub fn label(&self) -> String {
        match self {
            Channel::Bgt(c) => format!("bgt(q={})", c.q),
            Channel::Sbg(c) => format!("sbg(A={})", c.set),
        }
    }
}
