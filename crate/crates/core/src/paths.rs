//! Brownian paths on dyadic grids.
//!
//! A [`BrownianLattice`] of level `L` holds the `2^L` increments of a
//! `d`-dimensional Brownian motion over the uniform grid on `[0, 1]`.
//! Coarser lattices are obtained by summing fine increments in ascending
//! index order, never by drawing new numbers, so every resolution derived
//! from one lattice sees the same path.
//!
//! Generated and refined increments are rounded to multiples of
//! [`INCREMENT_QUANTUM`]. Sums of such numbers below `2^5` in magnitude are
//! exact in `f64`, so block sums do not depend on grouping and a bridge
//! split always adds back to the original increment bit for bit.

use crate::error::{invalid, Error, Result};
use crate::rng::{CounterRng, SeedLineage, BRIDGE_STREAM, INCREMENT_STREAM};

/// Default cap on `2^L * d` stored increments (512 MiB of f64).
pub const DEFAULT_ENTRY_BUDGET: usize = 1 << 26;

/// Largest level accepted regardless of budget.
pub const MAX_LEVEL: u32 = 40;

/// Fixed-point resolution of generated increments, `2^-48`.
pub const INCREMENT_QUANTUM: f64 = 1.0 / (1u64 << 48) as f64;

/// Nearest multiple of the quantum, ties to even.
#[inline]
fn quantize(x: f64) -> f64 {
    // adding and removing 1.5 * 2^52 rounds to an integer below 2^51
    // without a libm call
    const SHIFT: f64 = 6755399441055744.0;
    let y = x / INCREMENT_QUANTUM;
    let r = if y.abs() < 2251799813685248.0 { (y + SHIFT) - SHIFT } else { y.round_ties_even() };
    r * INCREMENT_QUANTUM
}

/// Ascending-order sum of `len` consecutive d-vectors starting at
/// vector `start` of `data`, accumulated into `out`.
///
/// Every coarse increment in the crate goes through this function so that
/// coarsening and the scheme agree bit for bit.
#[inline]
pub(crate) fn sum_block(data: &[f64], dim: usize, start: usize, len: usize, out: &mut [f64]) {
    out.fill(0.0);
    for k in start..start + len {
        let row = &data[k * dim..(k + 1) * dim];
        for (o, v) in out.iter_mut().zip(row) {
            *o += *v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianLattice {
    dim: usize,
    level: u32,
    increments: Vec<f64>,
    lineage: SeedLineage,
}

impl BrownianLattice {
    /// Draws `2^level` i.i.d. `N(0, 2^-level I_d)` increments.
    pub fn generate(dim: usize, level: u32, lineage: SeedLineage) -> Result<Self> {
        Self::generate_with_budget(dim, level, lineage, DEFAULT_ENTRY_BUDGET)
    }

    pub fn generate_with_budget(dim: usize, level: u32, lineage: SeedLineage, budget: usize) -> Result<Self> {
        let entries = check_budget(dim, level, budget)?;
        let lineage = lineage.with_stream(INCREMENT_STREAM);
        let mut increments = vec![0.0; entries];
        let scale = (0.5f64).powi(level as i32).sqrt();
        CounterRng::at(lineage, 0).fill_normals(scale, &mut increments);
        for v in increments.iter_mut() {
            *v = quantize(*v);
        }
        Ok(Self { dim, level, increments, lineage })
    }

    /// Builds a lattice from explicit increments (row-major, `dim` per step).
    pub fn from_increments(dim: usize, level: u32, increments: Vec<f64>, lineage: SeedLineage) -> Result<Self> {
        let entries = check_budget(dim, level, usize::MAX)?;
        if increments.len() != entries {
            return Err(invalid!(
                "expected {entries} increment entries for d={dim}, L={level}, got {}",
                increments.len()
            ));
        }
        Ok(Self { dim, level, increments, lineage })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Number of grid steps, `2^level`.
    pub fn steps(&self) -> usize {
        1usize << self.level
    }

    /// Fine step size `2^-level`.
    pub fn step_size(&self) -> f64 {
        (0.5f64).powi(self.level as i32)
    }

    pub fn lineage(&self) -> SeedLineage {
        self.lineage
    }

    /// Flat row-major increments.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    /// Path value `W_{k 2^-L}` as the prefix sum of the first `k` increments.
    pub fn value_at(&self, k: usize) -> Result<Vec<f64>> {
        if k > self.steps() {
            return Err(Error::OutOfRange { index: k, max: self.steps() });
        }
        let mut out = vec![0.0; self.dim];
        sum_block(&self.increments, self.dim, 0, k, &mut out);
        Ok(out)
    }

    /// All `2^L + 1` path values, row-major; `W_0 = 0`.
    pub fn path_values(&self) -> Vec<f64> {
        self.path_from(&vec![0.0; self.dim]).expect("dimension matches")
    }

    /// `x0 + W` at every node, accumulated left to right starting from `x0`.
    pub fn path_from(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        if x0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
        }
        let mut out = vec![0.0; (self.steps() + 1) * d];
        out[..d].copy_from_slice(x0);
        for k in 0..self.steps() {
            for i in 0..d {
                out[(k + 1) * d + i] = out[k * d + i] + self.increments[k * d + i];
            }
        }
        Ok(out)
    }

    /// Sums fine increments down to `target` level.
    pub fn coarsen(&self, target: u32) -> Result<Self> {
        if target > self.level {
            return Err(invalid!("cannot coarsen level {} to finer level {target}", self.level));
        }
        if target == self.level {
            return Ok(self.clone());
        }
        let d = self.dim;
        let coarse_steps = 1usize << target;
        let block = 1usize << (self.level - target);
        let mut increments = vec![0.0; coarse_steps * d];
        for (k, chunk) in increments.chunks_mut(d).enumerate() {
            sum_block(&self.increments, d, k * block, block, chunk);
        }
        Ok(Self { dim: d, level: target, increments, lineage: self.lineage })
    }

    /// Adds one dyadic level by Brownian-bridge midpoint sampling.
    ///
    /// Midpoints are drawn from the bridge stream of the lineage at a counter
    /// offset that depends only on the level being refined, so repeated
    /// refinement from level 0 is reproducible.
    pub fn refine(&self) -> Result<Self> {
        self.refine_with_budget(DEFAULT_ENTRY_BUDGET)
    }

    pub fn refine_with_budget(&self, budget: usize) -> Result<Self> {
        let d = self.dim;
        let entries = check_budget(d, self.level + 1, budget)?;
        // midpoints drawn by refinements of levels 0..L-1
        let offset = ((1u64 << self.level) - 1) * d as u64;
        let mut rng = CounterRng::at(self.lineage.with_stream(BRIDGE_STREAM), offset);
        let half_sd = 0.5 * self.step_size().sqrt();
        let mut increments = vec![0.0; entries];
        for k in 0..self.steps() {
            for i in 0..d {
                let whole = self.increments[k * d + i];
                let (left, right) = split_exactly(whole, 0.5 * whole + half_sd * rng.next_normal());
                increments[2 * k * d + i] = left;
                increments[(2 * k + 1) * d + i] = right;
            }
        }
        Ok(Self { dim: d, level: self.level + 1, increments, lineage: self.lineage })
    }
}

/// Splits `whole` into `(left', right)` with `left' ≈ left` and
/// `left' + right == whole` in floating point.
///
/// For increments on the quantum grid, rounding `left` to the grid is
/// exact. Arbitrary inputs get the same treatment on the grid of the
/// lowest set bit of `whole`, which fails only when both halves are much
/// larger than `whole`; the split then falls back to halving.
fn split_exactly(whole: f64, left: f64) -> (f64, f64) {
    let exact = |q: f64| {
        let r = whole - q;
        (q.is_finite() && q + r == whole && whole - r == q).then_some((q, r))
    };
    if whole == 0.0 || !whole.is_finite() {
        return exact(left).unwrap_or((0.5 * whole, 0.5 * whole));
    }
    let lowest = 2f64.powi(lowest_bit_exponent(whole));
    let grid = lowest.min(INCREMENT_QUANTUM);
    let candidates = [(left / grid).round() * grid, left, whole - (whole - left)];
    candidates.into_iter().find_map(exact).unwrap_or((0.5 * whole, whole - 0.5 * whole))
}

/// Exponent of the lowest set mantissa bit of a finite nonzero `x`.
fn lowest_bit_exponent(x: f64) -> i32 {
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let (mantissa, exp) = if biased == 0 {
        (bits & ((1 << 52) - 1), -1074)
    } else {
        ((bits & ((1 << 52) - 1)) | (1 << 52), biased - 1075)
    };
    exp + mantissa.trailing_zeros() as i32
}

/// Grid map between an EM grid of `n` steps and a lattice of level `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridMap {
    n: usize,
    level: u32,
}

impl GridMap {
    pub fn new(n: usize, level: u32) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() || n.trailing_zeros() > level {
            return Err(Error::NotNested { n, level });
        }
        Ok(Self { n, level })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Fine lattice nodes per EM step.
    pub fn stride(&self) -> usize {
        (1usize << self.level) / self.n
    }

    /// `kappa_n(t) = floor(n t) / n`.
    pub fn kappa(&self, t: f64) -> f64 {
        (self.n as f64 * t).floor() / self.n as f64
    }

    /// Coarse anchor index of fine node `node`.
    pub fn anchor(&self, node: usize) -> usize {
        node / self.stride()
    }
}

fn check_budget(dim: usize, level: u32, budget: usize) -> Result<usize> {
    if dim == 0 {
        return Err(invalid!("dimension must be at least 1"));
    }
    if level > MAX_LEVEL {
        return Err(Error::Budget(format!("lattice level {level} exceeds maximum {MAX_LEVEL}")));
    }
    let entries =
        (1usize << level).checked_mul(dim).ok_or_else(|| Error::Budget(format!("2^{level} x {dim} overflows")))?;
    if entries > budget {
        return Err(Error::Budget(format!("2^{level} x {dim} = {entries} increment entries exceeds budget {budget}")));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lineage(i: u64) -> SeedLineage {
        SeedLineage::new(0xDEC0DE, i)
    }

    #[test]
    fn shapes() {
        let l = BrownianLattice::generate(2, 3, lineage(0)).unwrap();
        assert_eq!(l.steps(), 8);
        assert_eq!(l.increments().len(), 16);
        assert_eq!(l.increment(7).len(), 2);
        let l0 = BrownianLattice::generate(1, 0, lineage(0)).unwrap();
        assert_eq!(l0.increments().len(), 1);
    }

    #[test]
    fn quantize_matches_round_ties_even() {
        let q = INCREMENT_QUANTUM;
        for x in [0.0, -0.0, 1.5 * q, 2.5 * q, -2.5 * q, 0.3, -7.25, 1e-20, 9.0, -1e6, 3e300] {
            let want = (x / q).round_ties_even() * q;
            // -0.0 comes back as +0.0
            assert_eq!(quantize(x), want, "{x}");
        }
        let mut rng = CounterRng::at(lineage(3), 0);
        for _ in 0..10_000 {
            let x = rng.next_normal() * 16.0;
            assert_eq!(quantize(x), (x / q).round_ties_even() * q);
        }
    }

    #[test]
    fn budget_rejected() {
        let err = BrownianLattice::generate_with_budget(3, 10, lineage(0), 1000).unwrap_err();
        assert!(matches!(err, Error::Budget(_)));
        assert!(matches!(BrownianLattice::generate(1, 64, lineage(0)).unwrap_err(), Error::Budget(_)));
        let l = BrownianLattice::generate(2, 9, lineage(0)).unwrap();
        assert!(matches!(l.refine_with_budget(1024).unwrap_err(), Error::Budget(_)));
    }

    #[test]
    fn unit_increment_variance() {
        let m = 100_000;
        let xs: Vec<f64> =
            (0..m).map(|i| BrownianLattice::generate(1, 0, lineage(i)).unwrap().increment(0)[0]).collect();
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!((0.98..=1.02).contains(&var), "var = {var}");
    }

    #[test]
    fn increment_variance_and_decorrelation() {
        // 10^4 paths at L=4: 16 increments each of variance 1/16.
        let m = 10_000u64;
        let mut w1 = Vec::new();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..m {
            let l = BrownianLattice::generate(1, 4, lineage(i)).unwrap();
            w1.push(l.value_at(16).unwrap()[0]);
            a.push(l.increment(3)[0]);
            b.push(l.increment(11)[0]);
        }
        let n = m as f64;
        let var = w1.iter().map(|x| x * x).sum::<f64>() / n;
        // stderr of the variance of a N(0,1) sample is sqrt(2/n)
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "var {var}");
        let cov = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n;
        let rho = cov / (1.0 / 16.0);
        assert!(rho.abs() < 0.04, "rho {rho}");
    }

    #[test]
    fn coarsen_examples() {
        let l = BrownianLattice::from_increments(1, 1, vec![0.25, -1.5], lineage(0)).unwrap();
        assert_eq!(l.coarsen(1).unwrap(), l);
        assert_eq!(l.coarsen(0).unwrap().increments(), &[0.25 + -1.5]);
        assert!(l.coarsen(2).is_err());
    }

    #[test]
    fn value_at_examples() {
        let l = BrownianLattice::generate(2, 5, lineage(9)).unwrap();
        assert_eq!(l.value_at(0).unwrap(), vec![0.0, 0.0]);
        let total = l.coarsen(0).unwrap().increments().to_vec();
        assert_eq!(l.value_at(32).unwrap(), total);
        for k in 0..32 {
            let a = l.value_at(k).unwrap();
            let b = l.value_at(k + 1).unwrap();
            for i in 0..2 {
                assert!((b[i] - a[i] - l.increment(k)[i]).abs() < 1e-15);
            }
        }
        assert!(matches!(l.value_at(33), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn refine_conserves_endpoints() {
        let l = BrownianLattice::generate(3, 6, lineage(1)).unwrap();
        let r = l.refine().unwrap();
        assert_eq!(r.level(), 7);
        assert_eq!(r.coarsen(6).unwrap().increments(), l.increments());
    }

    #[test]
    fn bridge_midpoint_moments() {
        let fixed = BrownianLattice::generate(1, 0, lineage(u64::MAX)).unwrap();
        let w = fixed.increment(0)[0];
        let m = 100_000u64;
        let mut devs = Vec::with_capacity(m as usize);
        for i in 0..m {
            let l = BrownianLattice::from_increments(1, 0, vec![w], lineage(i)).unwrap();
            let r = l.refine().unwrap();
            devs.push(r.value_at(1).unwrap()[0] - w / 2.0);
        }
        let mean = devs.iter().sum::<f64>() / m as f64;
        let var = devs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!(mean.abs() < 4.0 * (0.25 / m as f64).sqrt(), "mean {mean}");
        assert!((0.245..=0.255).contains(&var), "var {var}");
    }

    #[test]
    fn repeated_refinement_is_deterministic() {
        let base = BrownianLattice::generate(1, 0, lineage(5)).unwrap();
        let a = base.refine().unwrap().refine().unwrap().refine().unwrap();
        let b = base.refine().unwrap().refine().unwrap().refine().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.coarsen(0).unwrap(), base);
        assert_eq!(a.coarsen(2).unwrap().coarsen(1).unwrap().coarsen(0).unwrap(), base);
    }

    #[test]
    fn grid_map() {
        let g = GridMap::new(4, 6).unwrap();
        assert_eq!(g.stride(), 16);
        assert_eq!(g.kappa(0.3), 0.25);
        assert_eq!(g.anchor(17), 1);
        for node in 0..64 {
            let t = node as f64 / 64.0;
            let k = g.kappa(t);
            assert!(k <= t && t < k + 0.25);
            assert_eq!(g.anchor(node) as f64 / 4.0, k);
        }
        assert!(GridMap::new(3, 6).is_err());
        assert!(GridMap::new(128, 6).is_err());
    }

    #[test]
    fn split_handles_cancellation() {
        // representable splits stay close to the requested left half
        for &(whole, left) in &[(0.0, 0.3), (1.0, 0.5), (0.8, 0.3), (0.8, -0.44), (-3.0, 1.25)] {
            let (q, r) = split_exactly(whole, left);
            assert_eq!(q + r, whole, "{whole} {left}");
            assert!((q - left).abs() <= 1e-15 * (whole.abs() + left.abs()), "{q} {left}");
        }
        // halves of very different size than the total cannot be exact
        for &(whole, left) in &[(1e-20, 1.0), (1e300, -1e300), (-3.0, 7.1e10)] {
            let (q, r) = split_exactly(whole, left);
            assert_eq!(q + r, whole);
        }
        // on the quantum grid any split of a moderate increment is exact
        let whole = quantize(0.8);
        for left in [-7.3, -0.44, 0.1, 3.9] {
            let (q, r) = split_exactly(whole, left);
            assert_eq!(0.0 + q + r, whole);
            assert!((q - left).abs() <= INCREMENT_QUANTUM);
        }
    }

    proptest! {
        #[test]
        fn coarsen_refine_identity(seed in any::<u64>(), level in 0u32..8, dim in 1usize..4) {
            let l = BrownianLattice::generate(dim, level, SeedLineage::new(seed, 3)).unwrap();
            let r = l.refine().unwrap();
            let back = r.coarsen(level).unwrap();
            prop_assert_eq!(back.increments(), l.increments());
        }

        #[test]
        fn split_exact(whole in -1e6f64..1e6, left in -1e6f64..1e6) {
            let (q, r) = split_exactly(whole, left);
            prop_assert_eq!(q + r, whole);
        }

        #[test]
        fn coarsening_composes(seed in any::<u64>(), level in 2u32..9) {
            // grid increments sum exactly, so grouping does not matter
            let l = BrownianLattice::generate(2, level, SeedLineage::new(seed, 0)).unwrap();
            let direct = l.coarsen(0).unwrap();
            let stepwise = l.coarsen(level - 1).unwrap().coarsen(0).unwrap();
            prop_assert_eq!(direct.increments(), stepwise.increments());
            prop_assert_eq!(l.coarsen(1).unwrap(), l.coarsen(1).unwrap());
        }
    }
}
