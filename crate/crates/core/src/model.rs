//! Prior, signals and datasets.
//!
//! The prior is uniform on k-sparse vectors of the unit sphere whose nonzero
//! coordinates all equal `1/√k`. A [`Signal`] stores only its support; inner
//! products between two signals are `ℓ/k` where `ℓ` is the size of the
//! support intersection.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use serde::Serialize;

use crate::channels::Channel;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Default cap on the number of prior atoms a caller may enumerate.
pub const DEFAULT_BUDGET: u64 = 2_000_000;

/// Exact binomial coefficient.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::ZERO;
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    // acc * (n - i) is always divisible by (i + 1) after the multiplication
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Natural log of a big unsigned integer.
pub(crate) fn ln_big(x: &BigUint) -> f64 {
    match x.to_f64() {
        Some(v) if v.is_finite() => v.ln(),
        _ => {
            // shift down to f64 range, then add back the dropped bits
            let bits = x.bits();
            let shift = bits.saturating_sub(1000);
            let top = (x >> shift).to_f64().expect("shifted value fits f64");
            top.ln() + shift as f64 * std::f64::consts::LN_2
        }
    }
}

/// Uniform prior on k-sparse binary vectors of the unit sphere in dimension N.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KSparsePrior {
    dim: usize,
    sparsity: usize,
    cardinality: BigUint,
}

impl KSparsePrior {
    pub fn new(dim: usize, sparsity: usize) -> Result<Self> {
        if sparsity == 0 || sparsity > dim || dim > u32::MAX as usize {
            return Err(Error::InvalidPrior {
                n: dim,
                k: sparsity,
            });
        }
        Ok(Self {
            dim,
            sparsity,
            cardinality: binomial(dim, sparsity),
        })
    }

    /// Population dimension N.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sparsity k.
    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    /// Number of atoms M = C(N, k), exact.
    pub fn cardinality(&self) -> &BigUint {
        &self.cardinality
    }

    /// `ln M`.
    pub fn ln_cardinality(&self) -> f64 {
        ln_big(&self.cardinality)
    }

    /// `k = N`: the prior has a single atom and every entropy ratio is 0/0.
    pub fn is_degenerate(&self) -> bool {
        self.sparsity == self.dim
    }

    /// Fails unless M fits under `cap`.
    pub fn check_budget(&self, cap: u64) -> Result<usize> {
        match self.cardinality.to_u64() {
            Some(m) if m <= cap => Ok(m as usize),
            _ => Err(Error::BudgetExceeded {
                atoms: self.cardinality.to_string(),
                cap,
            }),
        }
    }

    /// All supports in lexicographic order.
    pub fn enumerate(&self, cap: u64) -> Result<Vec<Signal>> {
        let m = self.check_budget(cap)?;
        let mut out = Vec::with_capacity(m);
        let mut idx: Vec<u32> = (0..self.sparsity as u32).collect();
        let n = self.dim as u32;
        let k = self.sparsity;
        loop {
            out.push(Signal::from_sorted(self.dim, idx.clone()));
            // rightmost index that can still move
            let mut i = k;
            while i > 0 && idx[i - 1] == n - (k - i + 1) as u32 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
        debug_assert_eq!(out.len(), m);
        Ok(out)
    }

    /// One draw from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Signal {
        let mut support: Vec<u32> = rand::seq::index::sample(rng, self.dim, self.sparsity)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        support.sort_unstable();
        Signal::from_sorted(self.dim, support)
    }
}

/// A point of the prior: support indices, each carrying value `1/√k`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Signal {
    dim: usize,
    support: Vec<u32>,
    mask: Option<u64>,
}

impl Signal {
    /// Builds a signal from any list of distinct indices below `dim`.
    pub fn new(dim: usize, mut support: Vec<u32>) -> Result<Self> {
        support.sort_unstable();
        let before = support.len();
        support.dedup();
        if support.is_empty() || support.len() != before {
            return Err(Error::InvalidSet(
                "support must be a nonempty set of distinct indices".into(),
            ));
        }
        if let Some(&last) = support.last() {
            if last as usize >= dim {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    got: last as usize + 1,
                });
            }
        }
        Ok(Self::from_sorted(dim, support))
    }

    pub(crate) fn from_sorted(dim: usize, support: Vec<u32>) -> Self {
        let mask = (dim <= 64).then(|| support.iter().fold(0u64, |m, &i| m | (1u64 << i)));
        Self { dim, support, mask }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sorted support indices.
    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    /// Packed support when N ≤ 64.
    pub fn mask(&self) -> Option<u64> {
        self.mask
    }

    /// Value of each nonzero coordinate, `1/√k`.
    pub fn amplitude(&self) -> f64 {
        (self.support.len() as f64).sqrt().recip()
    }

    pub fn contains(&self, index: usize) -> bool {
        match self.mask {
            Some(m) => index < 64 && (m >> index) & 1 == 1,
            None => self.support.binary_search(&(index as u32)).is_ok(),
        }
    }

    /// `|support(self) ∩ support(other)|`.
    pub fn shared(&self, other: &Signal) -> usize {
        if let (Some(a), Some(b)) = (self.mask, other.mask) {
            return (a & b).count_ones() as usize;
        }
        let (mut i, mut j, mut c) = (0, 0, 0);
        let (a, b) = (&self.support, &other.support);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    c += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        c
    }

    /// Dense coordinates.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let a = self.amplitude();
        for &i in &self.support {
            v[i as usize] = a;
        }
        v
    }
}

impl fmt::Debug for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signal{:?}", self.support)
    }
}

/// Overlap `⟨a, b⟩ = shared / k`, kept as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Overlap {
    pub shared: usize,
    pub sparsity: usize,
}

impl Overlap {
    pub fn value(self) -> f64 {
        self.shared as f64 / self.sparsity as f64
    }

    /// `‖a − b‖² = 2(1 − ⟨a, b⟩)`.
    pub fn squared_distance(self) -> f64 {
        2.0 * (self.sparsity - self.shared) as f64 / self.sparsity as f64
    }
}

/// Overlap of two signals drawn from the same prior.
pub fn overlap(a: &Signal, b: &Signal) -> Result<Overlap> {
    if a.sparsity() != b.sparsity() {
        return Err(Error::MismatchedSparsity {
            left: a.sparsity(),
            right: b.sparsity(),
        });
    }
    Ok(Overlap {
        shared: a.shared(b),
        sparsity: a.sparsity(),
    })
}

/// A boolean design row of length N, packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitRow {
    len: usize,
    words: Vec<u64>,
}

impl BitRow {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut row = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                row.set(i);
            }
        }
        row
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Number of set bits.
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// One design row of either channel family.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignRow {
    Bits(BitRow),
    Real(Vec<f64>),
}

impl DesignRow {
    pub fn len(&self) -> usize {
        match self {
            DesignRow::Bits(b) => b.len(),
            DesignRow::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `n` observations `y_i = g(x_i, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub xs: Vec<DesignRow>,
    pub ys: Vec<bool>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    /// The first `n` observations.
    pub fn prefix(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            xs: self.xs[..n].to_vec(),
            ys: self.ys[..n].to_vec(),
        }
    }

    /// Iterates over `(x_i, y_i)`.
    pub fn iter(&self) -> impl Iterator<Item = (&DesignRow, bool)> {
        self.xs.iter().zip(self.ys.iter().copied())
    }
}

/// Draws `n` design rows from the channel's design law and labels them with θ.
///
/// Rows are drawn in order from a single stream, so the dataset for `n` is a
/// prefix of the dataset for any `n' > n` under the same seed.
pub fn generate_dataset(channel: &Channel, theta: &Signal, n: usize, seed: u64) -> Result<Dataset> {
    channel.check_signal(theta)?;
    let mut rng = stream_rng(seed, 0);
    Ok(draw_dataset(channel, theta, n, &mut rng))
}

pub(crate) fn draw_dataset<R: Rng + ?Sized>(
    channel: &Channel,
    theta: &Signal,
    n: usize,
    rng: &mut R,
) -> Dataset {
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = channel.sample_row(rng);
        ys.push(channel.eval(&x, theta));
        xs.push(x);
    }
    Dataset { xs, ys }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(dim: usize, s: &[u32]) -> Signal {
        Signal::new(dim, s.to_vec()).unwrap()
    }

    #[test]
    fn enumerate_small_cases() {
        let p = KSparsePrior::new(3, 1).unwrap();
        let atoms = p.enumerate(DEFAULT_BUDGET).unwrap();
        let supports: Vec<_> = atoms.iter().map(|s| s.support().to_vec()).collect();
        assert_eq!(supports, vec![vec![0], vec![1], vec![2]]);

        let atoms = KSparsePrior::new(4, 2)
            .unwrap()
            .enumerate(DEFAULT_BUDGET)
            .unwrap();
        assert_eq!(atoms.len(), 6);
        assert_eq!(atoms[0].support(), &[0, 1]);
        assert_eq!(atoms[5].support(), &[2, 3]);

        // C(20,3) = 20*19*18/6
        let atoms = KSparsePrior::new(20, 3)
            .unwrap()
            .enumerate(DEFAULT_BUDGET)
            .unwrap();
        assert_eq!(atoms.len(), 1140);
    }

    #[test]
    fn enumeration_count_is_exhaustive() {
        for n in 1..=12usize {
            for k in 1..=n {
                let p = KSparsePrior::new(n, k).unwrap();
                let atoms = p.enumerate(DEFAULT_BUDGET).unwrap();
                // Pascal-triangle oracle, independent of `binomial`
                let mut row = vec![1u64];
                for _ in 0..n {
                    let mut next = vec![1u64; row.len() + 1];
                    for i in 1..row.len() {
                        next[i] = row[i - 1] + row[i];
                    }
                    row = next;
                }
                assert_eq!(atoms.len() as u64, row[k], "N={n} k={k}");
                assert!(atoms.windows(2).all(|w| w[0].support() < w[1].support()));
                assert!(atoms
                    .iter()
                    .all(|s| s.sparsity() == k && s.support().iter().all(|&i| (i as usize) < n)));
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let p = KSparsePrior::new(40, 20).unwrap();
        let err = p.enumerate(DEFAULT_BUDGET).unwrap_err();
        match err {
            Error::BudgetExceeded { atoms, cap } => {
                assert_eq!(atoms, "137846528820");
                assert_eq!(cap, DEFAULT_BUDGET);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_priors() {
        assert!(KSparsePrior::new(5, 0).is_err());
        assert!(KSparsePrior::new(5, 6).is_err());
        let full = KSparsePrior::new(5, 5).unwrap();
        assert!(full.is_degenerate());
        assert_eq!(full.cardinality(), &BigUint::one());
    }

    #[test]
    fn large_binomials_are_exact() {
        assert_eq!(
            binomial(100, 50).to_string(),
            "100891344545564193334812497256"
        );
        assert!((ln_big(&binomial(2000, 1000)) - 1_382.267_993_537_48).abs() < 1e-6);
    }

    #[test]
    fn overlap_examples() {
        let a = sig(10, &[1, 2, 3]);
        assert_eq!(overlap(&a, &a).unwrap().value(), 1.0);
        assert_eq!(overlap(&a, &sig(10, &[4, 5, 6])).unwrap().value(), 0.0);
        let o = overlap(&a, &sig(10, &[1, 2, 4])).unwrap();
        assert_eq!((o.shared, o.sparsity), (2, 3));
        assert!(overlap(&a, &sig(10, &[1, 2])).is_err());
    }

    #[test]
    fn wide_signals_use_sorted_merge() {
        let a = sig(100, &[3, 70, 99]);
        let b = sig(100, &[3, 71, 99]);
        assert!(a.mask().is_none());
        assert_eq!(a.shared(&b), 2);
        assert!(a.contains(70) && !a.contains(71));
    }

    #[test]
    fn signal_validation() {
        assert!(Signal::new(4, vec![]).is_err());
        assert!(Signal::new(4, vec![1, 1]).is_err());
        assert!(Signal::new(4, vec![4]).is_err());
        let s = Signal::new(4, vec![3, 0]).unwrap();
        assert_eq!(s.support(), &[0, 3]);
        let norm: f64 = s.to_dense().iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-15);
    }

    fn signal_pair() -> impl Strategy<Value = (Signal, Signal)> {
        (1usize..=70).prop_flat_map(|dim| {
            (1..=dim).prop_flat_map(move |k| {
                let idx = proptest::sample::subsequence((0..dim as u32).collect::<Vec<_>>(), k);
                (idx.clone(), idx).prop_map(move |(a, b)| {
                    (Signal::from_sorted(dim, a), Signal::from_sorted(dim, b))
                })
            })
        })
    }

    proptest! {
        #[test]
        fn overlap_symmetric_and_rational((a, b) in signal_pair()) {
            let ab = overlap(&a, &b).unwrap();
            let ba = overlap(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab.shared <= ab.sparsity);
            prop_assert_eq!(ab.shared == ab.sparsity, a == b);
            // dense inner product agrees with ℓ/k
            let dot: f64 = a.to_dense().iter().zip(b.to_dense()).map(|(x, y)| x * y).sum();
            prop_assert!((dot - ab.value()).abs() < 1e-12);
            prop_assert!(ab.value() >= 0.0);
        }
    }
}
