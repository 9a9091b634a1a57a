//! Grid verification of the sufficient condition for the all-or-nothing
//! transition on boolean channels,
//!
//! ```text
//! r(ρ) ≥ W(ρ, p) = (1/h(p)) · ( p ln(R1(ρ)/p²) + (1−p) ln(R0(ρ)/(1−p)²) )   ∀ρ ∈ [0, 1],
//! ```
//!
//! together with the scalar inequalities that establish it for group testing
//! and for balanced Gaussian sets. Everything here is deterministic.

use serde::Serialize;

use crate::channels::BalancedSet;
use crate::error::{Error, Result};
use crate::overlap::{hermite_coeffs, sbg_r1_with_boundary, sheppard, OverlapCurves};
use crate::stats::binary_entropy;

/// Default pointwise tolerance on the condition margin.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Slack allowed when checking `2^ρ ≥ 1 + (2/π) arcsin ρ`.
pub const ARCSINE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Fails,
    /// The worst violation is within the curves' own error bounds.
    InconclusiveNearTolerance,
}

/// Whether a configuration lies where the condition is known to imply the
/// transition. Outside it, reports are descriptive only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Proven,
    OutsideProvenRegime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub p: f64,
    pub tolerance: f64,
    pub grid: Vec<f64>,
    /// `r(ρ)`.
    pub lhs: Vec<f64>,
    /// `W(ρ, p)`.
    pub rhs: Vec<f64>,
    /// `r(ρ) − W(ρ, p)`.
    pub margin: Vec<f64>,
    pub min_margin: f64,
    pub argmin_rho: f64,
    /// Smallest margin over grid points strictly inside (0, 1).
    pub min_interior_margin: f64,
    pub equality_at_zero: bool,
    pub equality_at_one: bool,
    pub verdict: Verdict,
    pub regime: Regime,
}

impl ConditionReport {
    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

/// `W(ρ, p)` from agreement probabilities.
pub fn exponent_w(r1: f64, r0: f64, p: f64) -> f64 {
    (p * (r1 / (p * p)).ln() + (1.0 - p) * (r0 / ((1.0 - p) * (1.0 - p))).ln()) / binary_entropy(p)
}

/// Evaluates `r(ρ) ≥ W(ρ, p) − tol` on the grid of `curves`.
///
/// A point violating the inequality by more than `tol` but less than the
/// propagated error bound of the curves makes the verdict inconclusive rather
/// than failing.
pub fn check_condition<F: Fn(f64) -> f64>(
    curves: &OverlapCurves,
    p: f64,
    rate: F,
    tol: f64,
) -> Result<ConditionReport> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            name: "p",
            value: p,
            domain: "(0, 1)",
        });
    }
    let h = binary_entropy(p);
    let n = curves.grid.len();
    let (mut lhs, mut rhs, mut margin) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    let mut worst_excess = f64::NEG_INFINITY;
    for i in 0..n {
        let rho = curves.grid[i];
        let (r1, r0) = (curves.r1[i], curves.r0[i]);
        for v in [r1, r0] {
            if !(v > 0.0) {
                return Err(Error::NonPositiveCurve { rho, value: v });
            }
        }
        let l = rate(rho);
        let w = exponent_w(r1, r0, p);
        let m = l - w;
        // first-order propagation of the curve error bound into W
        let unc = curves.tail_bound[i] * (p / r1 + (1.0 - p) / r0) / h;
        worst_excess = worst_excess.max(-m - tol - unc);
        lhs.push(l);
        rhs.push(w);
        margin.push(m);
    }
    let (argmin, min_margin) =
        margin
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, m)| if m < acc.1 { (i, m) } else { acc },
            );
    let min_interior_margin = curves
        .grid
        .iter()
        .zip(&margin)
        .filter(|(r, _)| **r > 0.0 && **r < 1.0)
        .map(|(_, m)| *m)
        .fold(f64::INFINITY, f64::min);
    let at = |target: f64| {
        curves
            .grid
            .iter()
            .position(|&r| r == target)
            .map(|i| margin[i].abs() <= tol)
            .unwrap_or(false)
    };
    let (equality_at_zero, equality_at_one) = (at(0.0), at(1.0));
    let verdict = if min_margin >= -tol {
        Verdict::Holds
    } else if worst_excess > 0.0 {
        Verdict::Fails
    } else {
        Verdict::InconclusiveNearTolerance
    };
    Ok(ConditionReport {
        p,
        tolerance: tol,
        grid: curves.grid.clone(),
        lhs,
        rhs,
        margin,
        min_margin,
        argmin_rho: curves.grid[argmin],
        min_interior_margin,
        equality_at_zero,
        equality_at_one,
        verdict,
        regime: Regime::Proven,
    })
}

/// The condition for group testing with `r(t) = t` and closed-form curves.
/// Configurations with `q > 1/2` are labelled outside the proven regime.
pub fn check_bgt(q: f64, grid: &[f64], tol: f64) -> Result<ConditionReport> {
    let curves = OverlapCurves::bgt(q, grid)?;
    let mut rep = check_condition(&curves, 1.0 - q, |t| t, tol)?;
    if q > 0.5 {
        rep.regime = Regime::OutsideProvenRegime;
    }
    Ok(rep)
}

/// The condition for a balanced Gaussian set with `r(t) = t`, using Hermite
/// series of order `order` for the curves.
pub fn check_sbg(
    set: &BalancedSet,
    order: usize,
    grid: &[f64],
    tol: f64,
) -> Result<ConditionReport> {
    let curves = OverlapCurves::sbg(set, order, grid)?;
    check_condition(&curves, 0.5, |t| t, tol)
}

/// Group-testing margin in its reduced form. Since `R0(ρ) = (1−p)^{2−ρ}`, the
/// condition with `r(t) = t` is `R1(ρ) ≤ p^{2−ρ}`, and the margin equals
/// `−(p/h(p)) ln(R1(ρ)/p^{2−ρ})`.
pub fn bgt_reduced_margin(rho: f64, q: f64) -> Result<f64> {
    let p = 1.0 - q;
    let r1 = crate::overlap::bgt_r1(rho, q)?;
    Ok(-(p / binary_entropy(p)) * (r1 / p.powf(2.0 - rho)).ln())
}

/// The two scalar facts behind the group-testing condition for `q ≤ 1/2`:
/// `f(ρ) = (1−q)^{2−ρ} − q^{2−ρ}` is concave with `f(0) = f(1) = 1 − 2q`, and
/// `g(q) = (1−q) ln(1−q) − q ln q ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BgtWitnessReport {
    pub q: f64,
    pub regime: Regime,
    pub f_at_zero: f64,
    pub f_at_one: f64,
    /// `max |f(0) − (1−2q)|, |f(1) − (1−2q)|`.
    pub f_endpoint_defect: f64,
    /// `min_ρ −f''(ρ)` over the grid; nonnegative means concave on the grid.
    pub f_concavity_slack: f64,
    /// `g(q)`.
    pub g_slack: f64,
    pub f_concave: bool,
    pub g_nonnegative: bool,
}

pub fn bgt_f(rho: f64, q: f64) -> f64 {
    (1.0 - q).powf(2.0 - rho) - q.powf(2.0 - rho)
}

/// `f''(ρ) = ln(1−q)² (1−q)^{2−ρ} − ln(q)² q^{2−ρ}`.
pub fn bgt_f_second_derivative(rho: f64, q: f64) -> f64 {
    let a = (1.0 - q).ln();
    let b = q.ln();
    a * a * (1.0 - q).powf(2.0 - rho) - b * b * q.powf(2.0 - rho)
}

pub fn bgt_g(q: f64) -> f64 {
    (1.0 - q) * (1.0 - q).ln() - q * q.ln()
}

pub fn bgt_witnesses(q: f64, grid: &[f64]) -> Result<BgtWitnessReport> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain {
            name: "q",
            value: q,
            domain: "(0, 1)",
        });
    }
    let f0 = bgt_f(0.0, q);
    let f1 = bgt_f(1.0, q);
    let target = 1.0 - 2.0 * q;
    let f_concavity_slack = grid
        .iter()
        .map(|&r| -bgt_f_second_derivative(r, q))
        .fold(f64::INFINITY, f64::min);
    let g = bgt_g(q);
    Ok(BgtWitnessReport {
        q,
        regime: if q <= 0.5 {
            Regime::Proven
        } else {
            Regime::OutsideProvenRegime
        },
        f_at_zero: f0,
        f_at_one: f1,
        f_endpoint_defect: (f0 - target).abs().max((f1 - target).abs()),
        f_concavity_slack,
        g_slack: g,
        f_concave: f_concavity_slack >= -1e-15,
        g_nonnegative: g >= -1e-15,
    })
}

/// `2^ρ − 1 − (2/π) arcsin ρ`.
pub fn arcsine_slack(rho: f64) -> f64 {
    rho.exp2() - 1.0 - std::f64::consts::FRAC_2_PI * rho.asin()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcsineReport {
    pub points: usize,
    pub min_slack: f64,
    pub argmin_rho: f64,
    /// Smallest slack strictly inside (0, 1); `None` if the grid has no
    /// interior point.
    pub min_interior_slack: Option<f64>,
    pub argmin_interior_rho: Option<f64>,
    pub slack_at_zero: Option<f64>,
    pub slack_at_one: Option<f64>,
    pub slack_at_half: Option<f64>,
    pub holds: bool,
}

/// Checks `2^ρ ≥ 1 + (2/π) arcsin ρ` pointwise with slack
/// [`ARCSINE_TOLERANCE`].
pub fn arcsine_inequality_check(grid: &[f64]) -> Result<ArcsineReport> {
    let mut min_slack = f64::INFINITY;
    let mut argmin = f64::NAN;
    let mut interior: Option<(f64, f64)> = None;
    let (mut at0, mut at1, mut at_half) = (None, None, None);
    for &r in grid {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain {
                name: "rho",
                value: r,
                domain: "[0, 1]",
            });
        }
        let s = arcsine_slack(r);
        if s < min_slack {
            min_slack = s;
            argmin = r;
        }
        if r > 0.0 && r < 1.0 && interior.is_none_or(|(v, _)| s < v) {
            interior = Some((s, r));
        }
        match r {
            0.0 => at0 = Some(s),
            1.0 => at1 = Some(s),
            0.5 => at_half = Some(s),
            _ => {}
        }
    }
    Ok(ArcsineReport {
        points: grid.len(),
        min_slack,
        argmin_rho: argmin,
        min_interior_slack: interior.map(|(s, _)| s),
        argmin_interior_rho: interior.map(|(_, r)| r),
        slack_at_zero: at0,
        slack_at_one: at1,
        slack_at_half: at_half,
        holds: min_slack >= -ARCSINE_TOLERANCE,
    })
}

/// Compares `P(Z ∈ A, Z_ρ ∈ A)` with the half-space value given by the
/// arcsine law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BorellReport {
    pub grid: Vec<f64>,
    pub series: Vec<f64>,
    pub half_space: Vec<f64>,
    pub tail_bound: Vec<f64>,
    /// `max_ρ (series − half_space − tail_bound)`; must not exceed `tol`.
    pub max_excess: f64,
    /// Smallest `half_space − series` over interior grid points.
    pub min_interior_gap: f64,
    pub holds: bool,
}

pub fn borell_bound_check(
    set: &BalancedSet,
    order: usize,
    grid: &[f64],
    tol: f64,
) -> Result<BorellReport> {
    let e = hermite_coeffs(set, order)?;
    let mut series = Vec::with_capacity(grid.len());
    let mut half = Vec::with_capacity(grid.len());
    let mut tail = Vec::with_capacity(grid.len());
    for &r in grid {
        let v = sbg_r1_with_boundary(r, &e)?;
        series.push(v.value);
        tail.push(v.tail_bound);
        half.push(sheppard(r));
    }
    let max_excess = (0..grid.len())
        .map(|i| series[i] - half[i] - tail[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let min_interior_gap = (0..grid.len())
        .filter(|&i| grid[i] > 0.0 && grid[i] < 1.0)
        .map(|i| half[i] - series[i])
        .fold(f64::INFINITY, f64::min);
    Ok(BorellReport {
        grid: grid.to_vec(),
        series,
        half_space: half,
        tail_bound: tail,
        max_excess,
        min_interior_gap,
        holds: max_excess <= tol,
    })
}
