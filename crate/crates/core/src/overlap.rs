//! Agreement probabilities as functions of the overlap.
//!
//! For two signals at overlap `ρ`, `R1(ρ)` is the probability that both
//! channel outputs are 1, `R0(ρ)` that both are 0, and `R = R0 + R1`. For
//! group testing these have closed forms; for balanced Gaussian sets they are
//! Gaussian noise-stability values `E[f(Z) f(Z_ρ)]` with `f = 1_A`, computed
//! from the Hermite expansion of `f`.

use std::io::Write;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::channels::{BalancedSet, Channel, Interval};
use crate::error::{Error, Result};
use crate::gauss;
use crate::model::{binomial, KSparsePrior, Signal};
use crate::rng::stream_rng;
use crate::stats::fmt_f64;

/// Largest Hermite order accepted by [`hermite_coeffs`].
pub const HERMITE_ORDER_CAP: usize = 200;
/// Truncation used when callers do not pick one.
pub const DEFAULT_HERMITE_ORDER: usize = 128;
/// Points in a default ρ grid.
pub const DEFAULT_GRID_POINTS: usize = 1001;

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value: v,
            domain: "[0, 1]",
        })
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "q",
            value: q,
            domain: "(0, 1)",
        })
    }
}

/// Group testing `R1(ρ) = 1 − 2q + q^{2−ρ}`.
pub fn bgt_r1(rho: f64, q: f64) -> Result<f64> {
    check_unit("rho", rho)?;
    check_q(q)?;
    Ok(1.0 - 2.0 * q + q.powf(2.0 - rho))
}

/// Group testing `R0(ρ) = q^{2−ρ}`.
pub fn bgt_r0(rho: f64, q: f64) -> Result<f64> {
    check_unit("rho", rho)?;
    check_q(q)?;
    Ok(q.powf(2.0 - rho))
}

/// `P(Z ≥ 0, Z_ρ ≥ 0) = (1 + (2/π) arcsin ρ) / 4`.
pub fn sheppard(rho: f64) -> f64 {
    0.25 * (1.0 + std::f64::consts::FRAC_2_PI * rho.asin())
}

/// Coefficients of `1_A` in the orthonormal basis `h_j = He_j / √(j!)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermiteExpansion {
    pub coeffs: Vec<f64>,
    /// Parseval residual `E[f²] − Σ_{j≤K} f̂_j²`.
    pub tail_bound: f64,
}

impl HermiteExpansion {
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `Σ_{j≤K} f̂_j²`.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// Partial Parseval sums `Σ_{j≤K'} f̂_j²` for `K' = 0..=K`.
    pub fn partial_energies(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c * c;
                Some(*acc)
            })
            .collect()
    }
}

/// `h_j(x) φ(x)` for `j = 0..len`, by the normalized three-term recurrence.
fn weighted_hermite(x: f64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    if x.is_infinite() || len == 0 {
        return out;
    }
    out[0] = gauss::pdf(x);
    if len > 1 {
        out[1] = x * out[0];
    }
    for j in 1..len.saturating_sub(1) {
        out[j + 1] = (x * out[j] - (j as f64).sqrt() * out[j - 1]) / ((j + 1) as f64).sqrt();
    }
    out
}

/// Hermite coefficients of the indicator of `set`, up to order `order`.
///
/// Uses `∫_a^b He_j φ = He_{j−1}(a)φ(a) − He_{j−1}(b)φ(b)`, which in the
/// normalized basis reads `f̂_j = (h_{j−1}φ)(a) − (h_{j−1}φ)(b)` divided by `√j`.
pub fn hermite_coeffs(set: &BalancedSet, order: usize) -> Result<HermiteExpansion> {
    hermite_coeffs_of(set.intervals(), order)
}

pub(crate) fn hermite_coeffs_of(intervals: &[Interval], order: usize) -> Result<HermiteExpansion> {
    if order == 0 || order > HERMITE_ORDER_CAP {
        return Err(Error::TruncationTooLarge {
            order,
            cap: HERMITE_ORDER_CAP,
        });
    }
    let mass = crate::channels::gaussian_mass(intervals)?;
    let mut coeffs = vec![0.0; order + 1];
    coeffs[0] = mass;
    for iv in intervals {
        let lo = weighted_hermite(iv.lo, order);
        let hi = weighted_hermite(iv.hi, order);
        for j in 1..=order {
            coeffs[j] += (lo[j - 1] - hi[j - 1]) / (j as f64).sqrt();
        }
    }
    let energy: f64 = coeffs.iter().map(|c| c * c).sum();
    Ok(HermiteExpansion {
        coeffs,
        tail_bound: (mass - energy).max(0.0),
    })
}

/// A truncated series value with a bound on the omitted tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// `R1(ρ) = Σ_j ρ^j f̂_j²` for `ρ ∈ [0, 1)`.
///
/// The reported tail bound is `ρ^{K+1} · residual / (1 − ρ)`, which dominates
/// the omitted terms since they are nonnegative and sum to at most the
/// Parseval residual.
pub fn sbg_r1(rho: f64, expansion: &HermiteExpansion) -> Result<SeriesValue> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain {
            name: "rho",
            value: rho,
            domain: "[0, 1) (use sbg_r1_with_boundary at rho = 1)",
        });
    }
    // Horner from the top
    let value = expansion
        .coeffs
        .iter()
        .rev()
        .fold(0.0, |acc, c| acc * rho + c * c);
    let k = expansion.order() as i32;
    let tail_bound = rho.powi(k + 1) * expansion.tail_bound / (1.0 - rho);
    Ok(SeriesValue { value, tail_bound })
}

/// [`sbg_r1`] extended to `ρ = 1`, where `R1(1) = E[f²] = P(Z ∈ A)` exactly.
pub fn sbg_r1_with_boundary(rho: f64, expansion: &HermiteExpansion) -> Result<SeriesValue> {
    if rho == 1.0 {
        Ok(SeriesValue {
            value: expansion.coeffs[0],
            tail_bound: 0.0,
        })
    } else {
        sbg_r1(rho, expansion)
    }
}

/// Law of `ℓ = |S ∩ S'|` for two independent uniform k-subsets of `[N]`.
pub fn overlap_pmf(dim: usize, sparsity: usize) -> Result<Vec<f64>> {
    let prior = KSparsePrior::new(dim, sparsity)?;
    let total = prior.cardinality().clone();
    Ok((0..=sparsity)
        .map(|l| {
            let count: BigUint = binomial(sparsity, l) * binomial(dim - sparsity, sparsity - l);
            ratio(&count, &total)
        })
        .collect())
}

fn ratio(num: &BigUint, den: &BigUint) -> f64 {
    match (num.to_f64(), den.to_f64()) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => a / b,
        _ => (crate::model::ln_big(num) - crate::model::ln_big(den)).exp(),
    }
}

/// Where a set of curves came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveSource {
    ClosedForm,
    HermiteSeries,
    MonteCarlo,
}

impl CurveSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveSource::ClosedForm => "closed-form",
            CurveSource::HermiteSeries => "hermite-series",
            CurveSource::MonteCarlo => "monte-carlo",
        }
    }
}

/// `R1`, `R0`, `R` sampled on a ρ grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapCurves {
    pub grid: Vec<f64>,
    pub r1: Vec<f64>,
    pub r0: Vec<f64>,
    pub r: Vec<f64>,
    pub source: CurveSource,
    /// Per-point truncation or sampling error bound; zero for closed forms.
    pub tail_bound: Vec<f64>,
}

/// `points` equally spaced values from 0 to 1 inclusive.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    assert!(points >= 2, "grid needs at least two points");
    let last = (points - 1) as f64;
    (0..points).map(|i| i as f64 / last).collect()
}

impl OverlapCurves {
    fn from_parts(
        grid: Vec<f64>,
        r1: Vec<f64>,
        r0: Vec<f64>,
        source: CurveSource,
        tail_bound: Vec<f64>,
    ) -> Self {
        let r = r1.iter().zip(&r0).map(|(a, b)| a + b).collect();
        Self {
            grid,
            r1,
            r0,
            r,
            source,
            tail_bound,
        }
    }

    /// Closed-form group-testing curves.
    pub fn bgt(q: f64, grid: &[f64]) -> Result<Self> {
        let r1 = grid
            .iter()
            .map(|&t| bgt_r1(t, q))
            .collect::<Result<Vec<_>>>()?;
        let r0 = grid
            .iter()
            .map(|&t| bgt_r0(t, q))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_parts(
            grid.to_vec(),
            r1,
            r0,
            CurveSource::ClosedForm,
            vec![0.0; grid.len()],
        ))
    }

    /// Half-space curves from the arcsine law.
    pub fn sheppard(grid: &[f64]) -> Result<Self> {
        for &t in grid {
            check_unit("rho", t)?;
        }
        let r1: Vec<f64> = grid.iter().map(|&t| sheppard(t)).collect();
        Ok(Self::from_parts(
            grid.to_vec(),
            r1.clone(),
            r1,
            CurveSource::ClosedForm,
            vec![0.0; grid.len()],
        ))
    }

    /// Balanced-set curves from truncated Hermite series; `R0` uses the
    /// expansion of the complement.
    pub fn sbg(set: &BalancedSet, order: usize, grid: &[f64]) -> Result<Self> {
        let inside = hermite_coeffs(set, order)?;
        let outside = hermite_coeffs(&set.complement()?, order)?;
        let mut r1 = Vec::with_capacity(grid.len());
        let mut r0 = Vec::with_capacity(grid.len());
        let mut tail = Vec::with_capacity(grid.len());
        for &t in grid {
            check_unit("rho", t)?;
            let a = sbg_r1_with_boundary(t, &inside)?;
            let b = sbg_r1_with_boundary(t, &outside)?;
            r1.push(a.value);
            r0.push(b.value);
            tail.push(a.tail_bound.max(b.tail_bound));
        }
        Ok(Self::from_parts(
            grid.to_vec(),
            r1,
            r0,
            CurveSource::HermiteSeries,
            tail,
        ))
    }

    /// Monte Carlo curves at the attainable overlaps `ℓ/k` of a channel.
    /// `tail_bound` holds the larger of the two standard errors.
    pub fn monte_carlo(channel: &Channel, draws: usize, seed: u64) -> Self {
        let k = channel.sparsity();
        let mut grid = Vec::new();
        let (mut r1, mut r0, mut se) = (Vec::new(), Vec::new(), Vec::new());
        for shared in 0..=k {
            let est = mc_pair_agreement(channel, shared, draws, seed.wrapping_add(shared as u64))
                .expect("sparsity fits twice in the dimension");
            grid.push(shared as f64 / k as f64);
            r1.push(est.r1);
            r0.push(est.r0);
            se.push(est.r1_se.max(est.r0_se));
        }
        Self::from_parts(grid, r1, r0, CurveSource::MonteCarlo, se)
    }

    /// `max_i |r_i − r0_i − r1_i|`.
    pub fn sum_defect(&self) -> f64 {
        self.r
            .iter()
            .zip(self.r0.iter().zip(&self.r1))
            .map(|(r, (a, b))| (r - a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with header `rho,r1,r0,r,source,tail_bound`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rho", "r1", "r0", "r", "source", "tail_bound"])
            .map_err(csv_err)?;
        for i in 0..self.grid.len() {
            w.write_record([
                fmt_f64(self.grid[i]),
                fmt_f64(self.r1[i]),
                fmt_f64(self.r0[i]),
                fmt_f64(self.r[i]),
                self.source.as_str().to_string(),
                fmt_f64(self.tail_bound[i]),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Monte Carlo estimate of `R1`, `R0` at one overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEstimate {
    pub r1: f64,
    pub r1_se: f64,
    pub r0: f64,
    pub r0_se: f64,
}

fn bernoulli_estimate(hits: usize, draws: usize) -> (f64, f64) {
    let p = hits as f64 / draws as f64;
    (p, (p * (1.0 - p) / draws as f64).sqrt())
}

/// Estimates `R1`, `R0` by drawing design rows against two signals that share
/// exactly `shared` support indices.
pub fn mc_pair_agreement(
    channel: &Channel,
    shared: usize,
    draws: usize,
    seed: u64,
) -> Result<PairEstimate> {
    let (n, k) = (channel.dim(), channel.sparsity());
    if shared > k || 2 * k - shared > n {
        return Err(Error::Config(format!(
            "cannot place two {k}-subsets sharing {shared} indices in dimension {n}"
        )));
    }
    let a = Signal::new(n, (0..k as u32).collect())?;
    let b = Signal::new(n, ((k - shared) as u32..(2 * k - shared) as u32).collect())?;
    let mut rng = stream_rng(seed, 0);
    let (mut both1, mut both0) = (0usize, 0usize);
    for _ in 0..draws {
        let x = channel.sample_row(&mut rng);
        match (channel.eval(&x, &a), channel.eval(&x, &b)) {
            (true, true) => both1 += 1,
            (false, false) => both0 += 1,
            _ => {}
        }
    }
    let (r1, r1_se) = bernoulli_estimate(both1, draws);
    let (r0, r0_se) = bernoulli_estimate(both0, draws);
    Ok(PairEstimate {
        r1,
        r1_se,
        r0,
        r0_se,
    })
}

/// Estimates `P(Z ∈ A, Z_ρ ∈ A)` from correlated standard normal pairs.
/// Returns `(estimate, stderr)`.
pub fn mc_gaussian_pair(set: &BalancedSet, rho: f64, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, 0);
    let c = (1.0 - rho * rho).max(0.0).sqrt();
    let hits = (0..draws)
        .filter(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let w: f64 = rng.sample(StandardNormal);
            set.contains(z) && set.contains(rho * z + c * w)
        })
        .count();
    bernoulli_estimate(hits, draws)
}

/// Finite-N checks of the regularity assumptions on the agreement curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Successive differences of `R` exceed `−1e−9` and `R` rises overall.
    pub r_strictly_increasing: bool,
    pub r0_nondecreasing: bool,
    pub r1_nondecreasing: bool,
    /// `|R(ρ₁) − R(0)| ≤ 10 · ρ₁` for the first grid step.
    pub r_continuous_at_zero: bool,
    /// `R = R0 + R1` and all values lie in `[0, 1]`.
    pub curves_consistent: bool,
    pub min_r_increment: f64,
    /// `max_ℓ [ln P(⟨θ,θ'⟩ ≥ ℓ/k) / ln M + ℓ/k]`; tends to 0 when the prior
    /// has overlap rate `r(t) = t`. `None` for a single-atom prior.
    pub overlap_rate_surrogate: Option<f64>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.r_strictly_increasing
            && self.r0_nondecreasing
            && self.r1_nondecreasing
            && self.r_continuous_at_zero
            && self.curves_consistent
    }
}

const MONOTONE_SLACK: f64 = 1e-9;
const MIN_VALIDATION_POINTS: usize = 101;

pub fn validate_assumptions(
    curves: &OverlapCurves,
    prior: &KSparsePrior,
) -> Result<AssumptionReport> {
    let g = &curves.grid;
    if g.len() < MIN_VALIDATION_POINTS {
        return Err(Error::Config(format!(
            "assumption validation needs at least {MIN_VALIDATION_POINTS} grid points, got {}",
            g.len()
        )));
    }
    let nondecreasing = |v: &[f64]| v.windows(2).all(|w| w[1] - w[0] > -MONOTONE_SLACK);
    let min_r_increment = curves
        .r
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let total_rise = curves.r[curves.r.len() - 1] - curves.r[0];
    let step = g[1] - g[0];
    let in_unit = |v: &[f64]| v.iter().all(|x| (-1e-12..=1.0 + 1e-12).contains(x));

    let overlap_rate_surrogate = if prior.is_degenerate() {
        None
    } else {
        let pmf = overlap_pmf(prior.dim(), prior.sparsity())?;
        let ln_m = prior.ln_cardinality();
        let k = prior.sparsity();
        let mut tail = 0.0;
        let mut best = f64::NEG_INFINITY;
        for l in (0..=k).rev() {
            tail += pmf[l];
            best = best.max(tail.ln() / ln_m + l as f64 / k as f64);
        }
        Some(best)
    };

    Ok(AssumptionReport {
        r_strictly_increasing: nondecreasing(&curves.r) && total_rise > 0.0,
        r0_nondecreasing: nondecreasing(&curves.r0),
        r1_nondecreasing: nondecreasing(&curves.r1),
        r_continuous_at_zero: (curves.r[1] - curves.r[0]).abs() <= 10.0 * step,
        curves_consistent: curves.sum_defect() <= 1e-9
            && in_unit(&curves.r)
            && in_unit(&curves.r0)
            && in_unit(&curves.r1),
        min_r_increment,
        overlap_rate_surrogate,
    })
}
