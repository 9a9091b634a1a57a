//! Exact posterior by enumeration.
//!
//! For a noiseless channel the posterior is uniform on the prior atoms that
//! reproduce every observation. [`PosteriorState`] keeps that consistent set
//! and answers counting, mean and entropy queries on it.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::Channel;
use crate::error::{Error, Result};
use crate::model::{Dataset, DesignRow, KSparsePrior, Signal};
use crate::rng::{stream_rng, PREDICTIVE_STREAM_OFFSET};
use crate::stats::{binary_entropy, Estimate};

/// Below this fraction of surviving atoms the candidate bitmap is repacked
/// into an index list.
const REPACK_DENSITY: usize = 8;

/// Slack when comparing a squared distance against a threshold δ, so that
/// thresholds computed as `2(k − ℓ)/k` land on their level.
const DELTA_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Candidates {
    Dense { bits: Vec<u64>, count: usize },
    Sparse(Vec<u32>),
}

/// The set of prior atoms consistent with the observations seen so far.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    atoms: Arc<[Signal]>,
    candidates: Candidates,
    observed: usize,
    truth: Option<Signal>,
}

impl PosteriorState {
    /// Posterior before any observation: every atom of `prior`.
    pub fn new(prior: &KSparsePrior, budget: u64) -> Result<Self> {
        Ok(Self::from_atoms(prior.enumerate(budget)?.into()))
    }

    /// Starts from a shared, already enumerated atom table.
    pub fn from_atoms(atoms: Arc<[Signal]>) -> Self {
        let m = atoms.len();
        let mut bits = vec![u64::MAX; m.div_ceil(64)];
        if !m.is_multiple_of(64) {
            *bits.last_mut().expect("nonempty prior") = (1u64 << (m % 64)) - 1;
        }
        Self {
            atoms,
            candidates: Candidates::Dense { bits, count: m },
            observed: 0,
            truth: None,
        }
    }

    /// Attaches the generating signal for diagnostics. Never used by the
    /// estimators themselves.
    pub fn with_truth(mut self, theta: Signal) -> Self {
        self.truth = Some(theta);
        self
    }

    pub fn truth(&self) -> Option<&Signal> {
        self.truth.as_ref()
    }

    /// `Z_{N,0}`, the number of consistent atoms.
    pub fn z0(&self) -> usize {
        match &self.candidates {
            Candidates::Dense { count, .. } => *count,
            Candidates::Sparse(ids) => ids.len(),
        }
    }

    /// Number of observations applied.
    pub fn observed(&self) -> usize {
        self.observed
    }

    /// Size of the prior.
    pub fn prior_size(&self) -> usize {
        self.atoms.len()
    }

    /// Indices (into the prior enumeration) of the consistent atoms.
    pub fn ids(&self) -> Vec<u32> {
        match &self.candidates {
            Candidates::Sparse(ids) => ids.clone(),
            Candidates::Dense { bits, .. } => dense_ids(bits).collect(),
        }
    }

    /// Consistent atoms in enumeration order.
    pub fn atoms(&self) -> impl Iterator<Item = &Signal> + '_ {
        let ids: Box<dyn Iterator<Item = u32> + '_> = match &self.candidates {
            Candidates::Sparse(ids) => Box::new(ids.iter().copied()),
            Candidates::Dense { bits, .. } => Box::new(dense_ids(bits)),
        };
        ids.map(move |i| &self.atoms[i as usize])
    }

    /// Drops atoms with `g(x, θ') ≠ y`.
    pub fn observe(&mut self, channel: &Channel, x: &DesignRow, y: bool) {
        let atoms = &self.atoms;
        match &mut self.candidates {
            Candidates::Dense { bits, count } => {
                let mut kept = 0usize;
                for (w, word) in bits.iter_mut().enumerate() {
                    let mut live = *word;
                    while live != 0 {
                        let b = live.trailing_zeros() as usize;
                        live &= live - 1;
                        if channel.eval(x, &atoms[w * 64 + b]) != y {
                            *word &= !(1u64 << b);
                        } else {
                            kept += 1;
                        }
                    }
                }
                *count = kept;
                if kept * REPACK_DENSITY < atoms.len() {
                    self.candidates = Candidates::Sparse(dense_ids(bits).collect());
                }
            }
            Candidates::Sparse(ids) => {
                ids.retain(|&i| channel.eval(x, &atoms[i as usize]) == y);
            }
        }
        self.observed += 1;
    }

    /// Applies every observation of `data` in order.
    pub fn observe_all(&mut self, channel: &Channel, data: &Dataset) {
        for (x, y) in data.iter() {
            self.observe(channel, x, y);
        }
    }

    /// Posterior mean vector, as per-coordinate inclusion frequencies
    /// `c_j / Z_0` (multiply by `1/√k` for coordinates).
    pub fn inclusion_frequencies(&self) -> Vec<f64> {
        let mut counts = vec![0u64; self.atoms.first().map_or(0, Signal::dim)];
        for a in self.atoms() {
            for &j in a.support() {
                counts[j as usize] += 1;
            }
        }
        let z0 = self.z0() as f64;
        counts.into_iter().map(|c| c as f64 / z0).collect()
    }

    /// Histogram of shared support sizes with θ, indexed by `ℓ = 0..=k`.
    pub fn overlap_histogram(&self, theta: &Signal) -> Vec<u64> {
        let mut h = vec![0u64; theta.sparsity() + 1];
        for a in self.atoms() {
            h[a.shared(theta)] += 1;
        }
        h
    }
}

fn dense_ids(bits: &[u64]) -> impl Iterator<Item = u32> + '_ {
    bits.iter().enumerate().flat_map(|(w, &word)| {
        let mut live = word;
        std::iter::from_fn(move || {
            if live == 0 {
                None
            } else {
                let b = live.trailing_zeros();
                live &= live - 1;
                Some(w as u32 * 64 + b)
            }
        })
    })
}

/// `{θ' ∈ Θ : g(x_i, θ') = y_i ∀i}`, built by filtering one sample at a time.
pub fn filter_consistent(
    prior: &KSparsePrior,
    channel: &Channel,
    data: &Dataset,
    budget: u64,
) -> Result<PosteriorState> {
    if channel.dim() != prior.dim() || channel.sparsity() != prior.sparsity() {
        return Err(Error::Config(format!(
            "channel is for (N={}, k={}) but prior is (N={}, k={})",
            channel.dim(),
            channel.sparsity(),
            prior.dim(),
            prior.sparsity()
        )));
    }
    for x in &data.xs {
        if x.len() != prior.dim() {
            return Err(Error::LengthMismatch {
                expected: prior.dim(),
                got: x.len(),
            });
        }
    }
    let mut state = PosteriorState::new(prior, budget)?;
    state.observe_all(channel, data);
    Ok(state)
}

/// `Z_{N,δ}`: consistent atoms at squared distance at least δ from θ.
pub fn z_count(state: &PosteriorState, theta: &Signal, delta: f64) -> Result<usize> {
    if !(0.0..=2.0).contains(&delta) {
        return Err(Error::Domain {
            name: "delta",
            value: delta,
            domain: "[0, 2]",
        });
    }
    let k = theta.sparsity() as f64;
    Ok(state
        .atoms()
        .filter(|a| 2.0 * (k - a.shared(theta) as f64) / k >= delta - DELTA_SLACK)
        .count())
}

/// Squared error of the posterior mean, computed two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstanceError {
    /// `‖θ − E[θ' | data]‖²`.
    pub direct: f64,
    /// `½ ∫₀² Z_δ / Z_0 dδ`, i.e. half the mean squared distance of a
    /// posterior draw from θ.
    pub counting: f64,
}

/// Both per-instance error routes for one posterior and truth.
pub fn instance_error(state: &PosteriorState, theta: &Signal) -> InstanceError {
    let k = theta.sparsity() as f64;
    let freq = state.inclusion_frequencies();
    let norm_sq: f64 = freq.iter().map(|f| f * f).sum::<f64>() / k;
    let dot: f64 = theta
        .support()
        .iter()
        .map(|&j| freq[j as usize])
        .sum::<f64>()
        / k;
    let direct = (1.0 - 2.0 * dot + norm_sq).max(0.0);

    InstanceError {
        direct,
        counting: 0.5 * layer_cake(&state.overlap_histogram(theta), state.z0()),
    }
}

/// `∫₀² Z_δ / Z_0 dδ` from the histogram of shared support sizes.
///
/// `Z_δ` is a step function that only changes at the distances
/// `d_ℓ = 2(k − ℓ)/k`, so the integral is the finite sum
/// `Σ (d_ℓ − d_{ℓ+1}) · #{atoms with distance ≥ d_ℓ}` taken from `ℓ = k`
/// (distance 0) down to `ℓ = 0` (distance 2).
fn layer_cake(hist: &[u64], z0: usize) -> f64 {
    let k = hist.len() - 1;
    let dist = |l: usize| 2.0 * (k - l) as f64 / k as f64;
    let mut at_least = z0 as u64; // Z at δ just above the previous level
    let mut integral = 0.0;
    let mut prev = 0.0;
    for l in (0..=k).rev() {
        let d = dist(l);
        integral += (d - prev) * at_least as f64;
        at_least -= hist[l];
        prev = d;
    }
    integral / z0 as f64
}

/// `H(θ | data) = ln Z_0` in nats.
pub fn posterior_entropy(state: &PosteriorState) -> f64 {
    (state.z0() as f64).ln()
}

/// `E_x[h(p̂(x))]` over fresh design rows, where `p̂(x)` is the fraction of
/// consistent atoms answering 1 on `x`.
pub fn predictive_entropy(
    state: &PosteriorState,
    channel: &Channel,
    mc_draws: usize,
    seed: u64,
) -> Result<f64> {
    if mc_draws == 0 {
        return Err(Error::Config("mc_draws must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let rows: Vec<DesignRow> = (0..mc_draws)
        .map(|_| channel.sample_row(&mut rng))
        .collect();
    Ok(mean_predictive_entropy(state, channel, &rows))
}

fn mean_predictive_entropy(state: &PosteriorState, channel: &Channel, rows: &[DesignRow]) -> f64 {
    let z0 = state.z0() as f64;
    let total: f64 = rows
        .iter()
        .map(|x| {
            let ones = state.atoms().filter(|a| channel.eval(x, a)).count() as f64;
            binary_entropy(ones / z0)
        })
        .sum();
    total / rows.len() as f64
}

/// Everything measured on one trial after `n` observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialPoint {
    pub n: usize,
    pub z0: usize,
    pub ln_z0: f64,
    pub direct: f64,
    pub counting: f64,
    /// `‖E[θ' | data]‖²`.
    pub mean_norm_sq: f64,
    /// `⟨E[θ' | data], θ⟩`.
    pub mean_dot_truth: f64,
    /// Largest squared distance from θ among consistent atoms; `Z_δ > 0`
    /// exactly when `δ` is at most this value.
    pub max_sq_distance: f64,
    /// `E_x[h(p̂(x))]` on this posterior, or NaN when not requested.
    pub pred_entropy: f64,
}

/// Runs one trial: draws θ and then observations one at a time from stream
/// `trial` of `seed`, recording a [`TrialPoint`] at every `n = 0..=n_max`.
///
/// Fresh rows for the predictive entropy come from a separate stream and are
/// the same at every `n`.
pub fn trial_trajectory(
    channel: &Channel,
    atoms: &Arc<[Signal]>,
    n_max: usize,
    seed: u64,
    trial: u64,
    mc_draws: usize,
) -> Vec<TrialPoint> {
    let prior = channel.prior();
    let mut rng = stream_rng(seed, trial);
    let theta = prior.sample(&mut rng);
    let fresh: Vec<DesignRow> = {
        let mut prng = stream_rng(seed, PREDICTIVE_STREAM_OFFSET + trial);
        (0..mc_draws)
            .map(|_| channel.sample_row(&mut prng))
            .collect()
    };
    let mut state = PosteriorState::from_atoms(Arc::clone(atoms));
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            let x = channel.sample_row(&mut rng);
            let y = channel.eval(&x, &theta);
            state.observe(channel, &x, y);
        }
        out.push(measure(&state, channel, &theta, &fresh, n));
    }
    out
}

fn measure(
    state: &PosteriorState,
    channel: &Channel,
    theta: &Signal,
    fresh: &[DesignRow],
    n: usize,
) -> TrialPoint {
    let k = theta.sparsity() as f64;
    let freq = state.inclusion_frequencies();
    let mean_norm_sq = freq.iter().map(|f| f * f).sum::<f64>() / k;
    let mean_dot_truth = theta
        .support()
        .iter()
        .map(|&j| freq[j as usize])
        .sum::<f64>()
        / k;
    let hist = state.overlap_histogram(theta);
    let min_shared = hist.iter().position(|&c| c > 0).unwrap_or(theta.sparsity());
    let err = instance_error(state, theta);
    TrialPoint {
        n,
        z0: state.z0(),
        ln_z0: posterior_entropy(state),
        direct: err.direct,
        counting: err.counting,
        mean_norm_sq,
        mean_dot_truth,
        max_sq_distance: 2.0 * (k - min_shared as f64) / k,
        pred_entropy: if fresh.is_empty() {
            f64::NAN
        } else {
            mean_predictive_entropy(state, channel, fresh)
        },
    }
}

/// Runs `trials` independent trajectories in parallel; result is indexed by
/// trial, so it does not depend on scheduling.
pub fn run_trials(
    channel: &Channel,
    n_max: usize,
    trials: usize,
    seed: u64,
    mc_draws: usize,
    budget: u64,
) -> Result<Vec<Vec<TrialPoint>>> {
    let atoms: Arc<[Signal]> = channel.prior().enumerate(budget)?.into();
    Ok((0..trials as u64)
        .into_par_iter()
        .map(|t| trial_trajectory(channel, &atoms, n_max, seed, t, mc_draws))
        .collect())
}

/// Monte Carlo MMSE at sample size `n`: mean of the direct instance error
/// over `trials` draws of θ and data.
pub fn mmse_mc(
    channel: &Channel,
    n: usize,
    trials: usize,
    seed: u64,
    budget: u64,
) -> Result<Estimate> {
    if trials < 2 {
        return Err(Error::Config("mmse_mc needs at least 2 trials".into()));
    }
    let prior = channel.prior();
    prior.check_budget(budget)?;
    if n == 0 {
        // posterior = prior for every θ
        return Ok(Estimate::exact(
            1.0 - prior.sparsity() as f64 / prior.dim() as f64,
        ));
    }
    let runs = run_trials(channel, n, trials, seed, 0, budget)?;
    let errs: Vec<f64> = runs.iter().map(|r| r[n].direct).collect();
    Ok(Estimate::from_samples(&errs))
}

/// Draws θ from the prior and a dataset of size `n`, both from `seed`.
pub fn sample_instance<R: Rng + ?Sized>(
    channel: &Channel,
    n: usize,
    rng: &mut R,
) -> (Signal, Dataset) {
    let theta = channel.prior().sample(rng);
    let data = crate::model::draw_dataset(channel, &theta, n, rng);
    (theta, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::BalancedSet;
    use crate::model::{generate_dataset, DEFAULT_BUDGET};

    fn bgt(n: usize, k: usize) -> Channel {
        Channel::bgt(n, k, 0.5).unwrap()
    }

    #[test]
    fn empty_data_keeps_every_atom() {
        let ch = bgt(10, 3);
        let prior = ch.prior();
        let data = generate_dataset(&ch, &Signal::new(10, vec![0, 1, 2]).unwrap(), 0, 1).unwrap();
        let st = filter_consistent(&prior, &ch, &data, DEFAULT_BUDGET).unwrap();
        assert_eq!(st.z0(), 120);
        assert!((posterior_entropy(&st) - 120f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn matches_naive_double_loop() {
        let ch = Channel::bgt(12, 2, 0.5).unwrap();
        let prior = ch.prior();
        let theta = Signal::new(12, vec![3, 8]).unwrap();
        let data = generate_dataset(&ch, &theta, 20, 2024).unwrap();
        let st = filter_consistent(&prior, &ch, &data, DEFAULT_BUDGET).unwrap();
        // naive oracle: all 66 pairs, every sample, direct bit tests
        let mut expect = Vec::new();
        let mut id = 0u32;
        for a in 0..12u32 {
            for b in a + 1..12 {
                let ok = data.iter().all(|(x, y)| {
                    let DesignRow::Bits(row) = x else {
                        unreachable!()
                    };
                    (row.get(a as usize) || row.get(b as usize)) == y
                });
                if ok {
                    expect.push(id);
                }
                id += 1;
            }
        }
        assert_eq!(id, 66);
        assert_eq!(st.ids(), expect);
        assert!(st.atoms().any(|a| *a == theta));
    }

    #[test]
    fn filtering_is_nested_and_repacks() {
        let ch = bgt(16, 3);
        let theta = Signal::new(16, vec![1, 5, 9]).unwrap();
        let data = generate_dataset(&ch, &theta, 30, 5).unwrap();
        let mut st = PosteriorState::new(&ch.prior(), DEFAULT_BUDGET).unwrap();
        let mut prev: Vec<u32> = st.ids();
        let mut saw_sparse = false;
        for (x, y) in data.iter() {
            st.observe(&ch, x, y);
            let now = st.ids();
            assert!(now.iter().all(|i| prev.binary_search(i).is_ok()));
            assert!(!now.is_empty());
            saw_sparse |= matches!(st.candidates, Candidates::Sparse(_));
            prev = now;
        }
        assert!(saw_sparse);
        assert!(st.atoms().any(|a| *a == theta));
    }

    #[test]
    fn sbg_filter_contains_truth() {
        let ch = Channel::sbg(10, 2, BalancedSet::symmetric()).unwrap();
        for seed in 0..20 {
            let mut rng = stream_rng(seed, 0);
            let (theta, data) = sample_instance(&ch, 15, &mut rng);
            let st = filter_consistent(&ch.prior(), &ch, &data, DEFAULT_BUDGET).unwrap();
            assert!(st.atoms().any(|a| *a == theta));
        }
    }

    #[test]
    fn z_count_behaviour() {
        let ch = bgt(12, 3);
        let theta = Signal::new(12, vec![0, 4, 7]).unwrap();
        let data = generate_dataset(&ch, &theta, 6, 8).unwrap();
        let st = filter_consistent(&ch.prior(), &ch, &data, DEFAULT_BUDGET).unwrap();
        assert_eq!(z_count(&st, &theta, 0.0).unwrap(), st.z0());
        assert!(z_count(&st, &theta, 2.0 + 1e-9).is_err());
        assert!(z_count(&st, &theta, -0.1).is_err());
        let disjoint = st.atoms().filter(|a| a.shared(&theta) == 0).count();
        assert_eq!(z_count(&st, &theta, 2.0).unwrap(), disjoint);
        // recount oracle at every level and in between
        let mut prev = usize::MAX;
        for i in 0..=200 {
            let d = i as f64 / 100.0;
            let z = z_count(&st, &theta, d).unwrap();
            let recount = st
                .atoms()
                .filter(|a| {
                    let sq: f64 = a
                        .to_dense()
                        .iter()
                        .zip(theta.to_dense())
                        .map(|(u, v)| (u - v) * (u - v))
                        .sum();
                    sq >= d - 1e-9
                })
                .count();
            assert_eq!(z, recount, "delta = {d}");
            assert!(z <= prev);
            prev = z;
        }
    }

    #[test]
    fn point_posterior_has_zero_error() {
        let ch = bgt(8, 2);
        let theta = Signal::new(8, vec![2, 6]).unwrap();
        let data = generate_dataset(&ch, &theta, 200, 1).unwrap();
        let st = filter_consistent(&ch.prior(), &ch, &data, DEFAULT_BUDGET).unwrap();
        assert_eq!(st.z0(), 1);
        let e = instance_error(&st, &theta);
        assert_eq!((e.direct, e.counting), (0.0, 0.0));
        assert_eq!(posterior_entropy(&st), 0.0);
        assert_eq!(predictive_entropy(&st, &ch, 50, 3).unwrap(), 0.0);
    }

    #[test]
    fn counting_equals_half_mean_distance() {
        let ch = bgt(14, 3);
        for seed in 0..10 {
            let mut rng = stream_rng(seed, 1);
            let (theta, data) = sample_instance(&ch, 4, &mut rng);
            let st = filter_consistent(&ch.prior(), &ch, &data, DEFAULT_BUDGET).unwrap();
            let mean_dist: f64 = st
                .atoms()
                .map(|a| 2.0 * (1.0 - a.shared(&theta) as f64 / 3.0))
                .sum::<f64>()
                / st.z0() as f64;
            let e = instance_error(&st, &theta);
            assert!((e.counting - 0.5 * mean_dist).abs() < 1e-14);
            // dense posterior mean oracle for the direct route
            let mut mean = [0.0; 14];
            for a in st.atoms() {
                for (m, v) in mean.iter_mut().zip(a.to_dense()) {
                    *m += v / st.z0() as f64;
                }
            }
            let direct: f64 = mean
                .iter()
                .zip(theta.to_dense())
                .map(|(m, t)| (m - t) * (m - t))
                .sum();
            assert!((e.direct - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn prior_error_is_one_minus_density() {
        let ch = bgt(9, 4);
        let st = PosteriorState::new(&ch.prior(), DEFAULT_BUDGET).unwrap();
        for theta in ch.prior().enumerate(DEFAULT_BUDGET).unwrap() {
            let e = instance_error(&st, &theta);
            assert!((e.direct - (1.0 - 4.0 / 9.0)).abs() < 1e-12);
        }
        assert_eq!(
            mmse_mc(&ch, 0, 2, 0, DEFAULT_BUDGET).unwrap(),
            Estimate::exact(1.0 - 4.0 / 9.0)
        );
        assert!(mmse_mc(&ch, 3, 1, 0, DEFAULT_BUDGET).is_err());
    }

    #[test]
    fn posterior_entropy_weakly_decreases() {
        let ch = Channel::sbg(10, 2, BalancedSet::half_space()).unwrap();
        let theta = Signal::new(10, vec![4, 5]).unwrap();
        let data = generate_dataset(&ch, &theta, 12, 77).unwrap();
        let mut st = PosteriorState::new(&ch.prior(), DEFAULT_BUDGET).unwrap();
        let mut h = posterior_entropy(&st);
        assert!((h - 45f64.ln()).abs() < 1e-15);
        for (x, y) in data.iter() {
            st.observe(&ch, x, y);
            let next = posterior_entropy(&st);
            assert!(next <= h);
            h = next;
        }
    }

    #[test]
    fn prior_predictive_entropy() {
        let sbg = Channel::sbg(10, 2, BalancedSet::half_space()).unwrap();
        let st = PosteriorState::new(&sbg.prior(), DEFAULT_BUDGET).unwrap();
        let h = predictive_entropy(&st, &sbg, 4000, 1).unwrap();
        assert!(h <= std::f64::consts::LN_2 + 1e-15);
        // Each p̂(x) averages 45 atoms, so h(p̂) sits a little below ln 2.
        assert!(h > 0.6);
        assert!(predictive_entropy(&st, &sbg, 0, 1).is_err());
    }

    #[test]
    fn trajectory_prefix_matches_generate() {
        let ch = bgt(12, 2);
        let atoms: Arc<[Signal]> = ch.prior().enumerate(DEFAULT_BUDGET).unwrap().into();
        let traj = trial_trajectory(&ch, &atoms, 10, 99, 4, 0);
        // same stream, drawn by hand
        let mut rng = stream_rng(99, 4);
        let (theta, data) = sample_instance(&ch, 10, &mut rng);
        for (n, point) in traj.iter().enumerate() {
            let st = filter_consistent(&ch.prior(), &ch, &data.prefix(n), DEFAULT_BUDGET).unwrap();
            assert_eq!(point.z0, st.z0());
            assert_eq!(point.direct, instance_error(&st, &theta).direct);
            assert!(point.pred_entropy.is_nan());
        }
    }
}
