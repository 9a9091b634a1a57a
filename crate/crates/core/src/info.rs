//! Entropies, the critical sample size and the planted-versus-null KL
//! divergence.
//!
//! With a noiseless channel the mutual information between the signal and
//! the data is `ln M − E[ln Z_0]`, so the divergence between the planted law
//! `P_n` and the null law `Q_n` (same marginals, labels independent of the
//! design) is
//!
//! ```text
//! D(P_n ‖ Q_n) = n·H(Y) − I(θ; Y^n | X^n) = n·H(Y) − ln M + E[ln Z_0].
//! ```
//!
//! All entropies are in nats.

use std::io::Write;

use serde::Serialize;

use crate::channels::Channel;
use crate::error::{Error, Result};
use crate::model::KSparsePrior;
use crate::overlap::csv_err;
use crate::posterior::{run_trials, TrialPoint};
use crate::stats::{binary_entropy, fmt_f64, Estimate};

/// `H(θ) = ln C(N, k)`.
pub fn prior_entropy(prior: &KSparsePrior) -> f64 {
    prior.ln_cardinality()
}

/// `H(Y) = h(p)`.
pub fn output_entropy(channel: &Channel) -> f64 {
    binary_entropy(channel.p_one())
}

/// `n* = ⌊H(θ) / H(Y)⌋`.
pub fn n_star(prior: &KSparsePrior, channel: &Channel) -> Result<usize> {
    let p = channel.p_one();
    let hy = binary_entropy(p);
    if !(p > 0.0 && p < 1.0) || hy <= 0.0 {
        return Err(Error::DegenerateChannel { p });
    }
    Ok((prior_entropy(prior) / hy).floor() as usize)
}

/// Per-trial `n·H(Y) − ln M + ln Z_0`, whose mean is the KL estimate.
fn kl_samples(runs: &[Vec<TrialPoint>], n: usize, h_y: f64, ln_m: f64) -> Vec<f64> {
    runs.iter()
        .map(|r| n as f64 * h_y - ln_m + r[n].ln_z0)
        .collect()
}

/// Monte Carlo estimate of `D(P_n ‖ Q_n)`. Not clamped at zero.
pub fn kl_estimate(
    channel: &Channel,
    n: usize,
    trials: usize,
    seed: u64,
    budget: u64,
) -> Result<Estimate> {
    if trials < 2 {
        return Err(Error::Config("kl_estimate needs at least 2 trials".into()));
    }
    let prior = channel.prior();
    let runs = run_trials(channel, n, trials, seed, 0, budget)?;
    Ok(Estimate::from_samples(&kl_samples(
        &runs,
        n,
        output_entropy(channel),
        prior.ln_cardinality(),
    )))
}

/// KL estimate and predictive entropy at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlPoint {
    pub n: usize,
    pub kl: Estimate,
    /// `E[ln Z_0]`, the posterior entropy.
    pub posterior_entropy: Estimate,
    /// `H(Y_{n+1} | Y^n, X^{n+1})` estimated from fresh rows.
    pub pred_entropy: Estimate,
}

/// The normalized divergence curve `D_N(β)`, linear between the anchors
/// `β = n / n*`.
#[derive(Debug, Clone, Serialize)]
pub struct DnCurve {
    pub beta_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub n_star: usize,
    pub h_theta: f64,
    pub h_y: f64,
    pub points: Vec<KlPoint>,
    /// Per-trial `ln Z_0` at each `n`, kept so that differences along the
    /// curve get paired standard errors.
    #[serde(skip)]
    trial_ln_z: Vec<Vec<f64>>,
}

impl DnCurve {
    /// Per-trial values of `D̂(n)/H(θ)`.
    fn normalized_samples(&self, n: usize) -> Vec<f64> {
        self.trial_ln_z
            .iter()
            .map(|z| (n as f64 * self.h_y - self.h_theta + z[n]) / self.h_theta)
            .collect()
    }

    /// Largest `n` with an estimate.
    pub fn n_max(&self) -> usize {
        self.points.len() - 1
    }

    fn anchors(&self, beta: f64) -> (usize, f64) {
        let x = beta * self.n_star as f64;
        let lo = x.floor();
        (lo as usize, x - lo)
    }

    /// `D_N(β)` with a paired standard error, for any `β` the curve covers.
    pub fn evaluate(&self, beta: f64) -> Result<Estimate> {
        if !(beta > 0.0) {
            return Err(Error::Domain {
                name: "beta",
                value: beta,
                domain: "(0, ∞)",
            });
        }
        let (lo, frac) = self.anchors(beta);
        if lo + 1 > self.n_max() {
            return Err(Error::GridBoundary { beta });
        }
        let a = self.normalized_samples(lo);
        let b = self.normalized_samples(lo + 1);
        let mixed: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (1.0 - frac) * x + frac * y)
            .collect();
        Ok(Estimate::from_samples(&mixed))
    }

    /// CSV with header
    /// `beta,n_low,n_high,dn,stderr,left_deriv,pred_entropy_ratio`.
    /// Derivative columns are empty where the left segment is not covered.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "beta",
            "n_low",
            "n_high",
            "dn",
            "stderr",
            "left_deriv",
            "pred_entropy_ratio",
        ])
        .map_err(csv_err)?;
        for (i, &beta) in self.beta_grid.iter().enumerate() {
            let (lo, _) = self.anchors(beta);
            let (deriv, ratio) = match (left_derivative(self, beta), entropy_slope(self, beta)) {
                (Ok(d), Ok(e)) => (fmt_f64(d.mean), fmt_f64(1.0 - e.mean)),
                _ => (String::new(), String::new()),
            };
            w.write_record([
                fmt_f64(beta),
                lo.to_string(),
                (lo + 1).to_string(),
                fmt_f64(self.values[i]),
                fmt_f64(self.stderrs[i]),
                deriv,
                ratio,
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Estimates `D(P_n ‖ Q_n)` for `n = 0..=⌊β_max n*⌋ + 1` on shared trials
/// (each trial's dataset for `n` is a prefix of its dataset for `n + 1`) and
/// interpolates at every `β` in `beta_grid`.
pub fn dn_curve(
    channel: &Channel,
    beta_grid: &[f64],
    trials: usize,
    seed: u64,
    mc_draws: usize,
    budget: u64,
) -> Result<DnCurve> {
    if trials < 2 {
        return Err(Error::Config("dn_curve needs at least 2 trials".into()));
    }
    if mc_draws == 0 {
        return Err(Error::Config("mc_draws must be at least 1".into()));
    }
    if beta_grid.is_empty() || beta_grid.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
        return Err(Error::Config(
            "beta values must be positive and finite".into(),
        ));
    }
    if beta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "beta grid must be strictly increasing".into(),
        ));
    }
    let prior = channel.prior();
    if prior.is_degenerate() {
        return Err(Error::Config(
            "D_N is undefined for a single-atom prior".into(),
        ));
    }
    let n_star = n_star(&prior, channel)?;
    let h_theta = prior_entropy(&prior);
    let h_y = output_entropy(channel);
    let beta_max = beta_grid[beta_grid.len() - 1];
    let n_max = (beta_max * n_star as f64).floor() as usize + 1;

    let runs = run_trials(channel, n_max, trials, seed, mc_draws, budget)?;
    let trial_ln_z: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| r.iter().map(|p| p.ln_z0).collect())
        .collect();
    let points = (0..=n_max)
        .map(|n| {
            let pe: Vec<f64> = runs.iter().map(|r| r[n].pred_entropy).collect();
            let lz: Vec<f64> = runs.iter().map(|r| r[n].ln_z0).collect();
            KlPoint {
                n,
                kl: Estimate::from_samples(&kl_samples(&runs, n, h_y, h_theta)),
                posterior_entropy: Estimate::from_samples(&lz),
                pred_entropy: Estimate::from_samples(&pe),
            }
        })
        .collect();

    let mut curve = DnCurve {
        beta_grid: beta_grid.to_vec(),
        values: Vec::new(),
        stderrs: Vec::new(),
        n_star,
        h_theta,
        h_y,
        points,
        trial_ln_z,
    };
    for &beta in beta_grid {
        let e = curve.evaluate(beta)?;
        curve.values.push(e.mean);
        curve.stderrs.push(e.stderr);
    }
    Ok(curve)
}

/// Segment `(⌈βn*⌉ − 1, ⌈βn*⌉)` ending at β, if the curve covers it.
fn left_segment(curve: &DnCurve, beta: f64) -> Result<(usize, usize)> {
    let first = curve.beta_grid[0];
    let last = curve.beta_grid[curve.beta_grid.len() - 1];
    let hi = (beta * curve.n_star as f64).ceil();
    if !(beta >= first && beta <= last) || hi < 1.0 || hi as usize > curve.n_max() {
        return Err(Error::GridBoundary { beta });
    }
    let hi = hi as usize;
    Ok((hi - 1, hi))
}

/// Left derivative of `D_N` at β: the slope `n*·(D̂(n) − D̂(n−1))/H(θ)` of the
/// segment ending at `n = ⌈βn*⌉`, with a paired standard error.
pub fn left_derivative(curve: &DnCurve, beta: f64) -> Result<Estimate> {
    let (lo, hi) = left_segment(curve, beta)?;
    let a = curve.normalized_samples(lo);
    let b = curve.normalized_samples(hi);
    let slopes: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (y - x) * curve.n_star as f64)
        .collect();
    Ok(Estimate::from_samples(&slopes))
}

/// `1 − H(Y_n | Y^{n−1}, X^n)/H(Y)` at `n = ⌈βn*⌉`, the entropy form of the
/// left derivative.
pub fn entropy_slope(curve: &DnCurve, beta: f64) -> Result<Estimate> {
    let (lo, _) = left_segment(curve, beta)?;
    let pe = curve.points[lo].pred_entropy;
    Ok(Estimate {
        mean: 1.0 - pe.mean / curve.h_y,
        stderr: pe.stderr / curve.h_y,
    })
}
