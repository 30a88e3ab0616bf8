//! Kernel SHAP: Shapley values as the solution of a weighted linear regression over
//! coalitions.
//!
//! The empty and full coalitions carry infinite kernel weight. They are not rows of the
//! regression; instead `φ0 = v(∅)` is fixed and `Σφ = v(full) − v(∅)` is imposed by
//! eliminating one coefficient (the last feature, or the last selected feature when a
//! lasso picks a support) before solving.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coalition::{full_mask, Coalition};
use crate::error::{Result, ShapError};
use crate::explanation::{Explanation, Method};
use crate::game::GameOracle;
use crate::wls::{self, Design};

/// Kernel weight of a coalition size; the two trivial sizes are infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelWeight {
    Finite(f64),
    Infinite,
}

impl KernelWeight {
    pub fn finite(self) -> Option<f64> {
        match self {
            KernelWeight::Finite(w) => Some(w),
            KernelWeight::Infinite => None,
        }
    }
}

/// `(M − 1) / (C(M, s) · s · (M − s))`.
pub fn shapley_kernel_weight(m: usize, s: usize) -> Result<KernelWeight> {
    if m == 0 || s > m {
        return Err(ShapError::Domain(format!("coalition size {s} outside 0..={m}")));
    }
    if s == 0 || s == m {
        return Ok(KernelWeight::Infinite);
    }
    let denom = binomial_f64(m, s) * s as f64 * (m - s) as f64;
    Ok(KernelWeight::Finite((m - 1) as f64 / denom))
}

/// Total kernel mass of all coalitions of size `s`: `(M − 1) / (s (M − s))`.
fn stratum_mass(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (s * (m - s)) as f64
}

pub(crate) fn binomial_f64(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn binomial_u128(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    None,
    /// Lasso for support selection followed by an unpenalized refit on the support.
    /// `lambda: None` picks the penalty by cross-validation.
    DebiasedLasso { lambda: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    /// Design rows (non-trivial coalitions) to evaluate.
    pub budget: usize,
    pub regularization: Regularization,
    pub seed: u64,
    pub paired_sampling: bool,
}

impl KernelConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        KernelConfig {
            budget,
            regularization: Regularization::None,
            seed,
            paired_sampling: true,
        }
    }

    /// Every non-trivial coalition of an `m`-player game.
    pub fn full(m: usize) -> Self {
        KernelConfig::new(nontrivial_count(m).min(usize::MAX as u128) as usize, 0)
    }

    pub fn with_lasso(mut self, lambda: Option<f64>) -> Self {
        self.regularization = Regularization::DebiasedLasso { lambda };
        self
    }

    /// Smallest budget that leaves the reduced system identifiable.
    pub fn min_budget(m: usize) -> usize {
        if m < 2 {
            0
        } else {
            (nontrivial_count(m).min(m as u128)) as usize
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if m == 0 || m > 64 {
            return Err(ShapError::Capacity(format!("M = {m} outside 1..=64")));
        }
        let min = KernelConfig::min_budget(m);
        if self.budget < min {
            return Err(ShapError::Config(format!(
                "budget {} below the minimum {min} for M = {m}",
                self.budget
            )));
        }
        if let Regularization::DebiasedLasso { lambda: Some(l) } = self.regularization {
            if !(l.is_finite() && l >= 0.0) {
                return Err(ShapError::Config(format!("lasso penalty {l} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

fn nontrivial_count(m: usize) -> u128 {
    (1u128 << m) - 2
}

/// Coalitions chosen for the regression with their (coverage-corrected) kernel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionSample {
    pub n_features: usize,
    pub rows: Vec<(Coalition, f64)>,
    /// Sizes whose every coalition is present.
    pub complete_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub coalition: Coalition,
    pub weight: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDesign {
    n_features: usize,
    rows: Vec<DesignRow>,
}

impl WeightedDesign {
    pub fn new(n_features: usize, rows: Vec<DesignRow>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for row in &rows {
            if row.coalition.n_features() != n_features {
                return Err(ShapError::Shape {
                    expected: n_features,
                    actual: row.coalition.n_features(),
                });
            }
            if row.coalition.is_empty() || row.coalition.is_full() {
                return Err(ShapError::Domain(
                    "empty and full coalitions are handled by constraints, not rows".into(),
                ));
            }
            if !(row.weight.is_finite() && row.weight > 0.0) {
                return Err(ShapError::Numeric(format!("row weight {} must be finite and positive", row.weight)));
            }
            if !row.value.is_finite() {
                return Err(ShapError::Numeric(format!("row value for {:?} is not finite", row.coalition)));
            }
            if !seen.insert(row.coalition.mask()) {
                return Err(ShapError::Domain(format!("duplicate coalition {:?}", row.coalition)));
            }
        }
        Ok(WeightedDesign { n_features, rows })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn rows(&self) -> &[DesignRow] {
        &self.rows
    }

    fn missing_sizes(&self) -> Vec<usize> {
        let mut present = vec![false; self.n_features + 1];
        for r in &self.rows {
            present[r.coalition.size()] = true;
        }
        (1..self.n_features).filter(|&s| !present[s]).collect()
    }
}

/// Groups of coalition sizes sampled together, extreme sizes first.
fn size_groups(m: usize, paired: bool) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    for s in 1..=m / 2 {
        let t = m - s;
        if t == s {
            groups.push(vec![s]);
        } else if paired {
            groups.push(vec![s, t]);
        } else {
            groups.push(vec![s]);
            groups.push(vec![t]);
        }
    }
    groups
}

/// Draws distinct uniformly random coalitions of one size.
struct StratumSampler {
    m: usize,
    size: usize,
    /// Pre-shuffled stratum when small enough to list.
    listed: Option<Vec<u64>>,
    drawn: HashSet<u64>,
}

const LISTABLE_STRATUM: u128 = 1 << 16;

impl StratumSampler {
    fn new(m: usize, size: usize, rng: &mut ChaCha8Rng) -> Self {
        let listed = (binomial_u128(m, size) <= LISTABLE_STRATUM).then(|| {
            let mut all = masks_of_size(m, size);
            all.shuffle(rng);
            all.reverse();
            all
        });
        StratumSampler {
            m,
            size,
            listed,
            drawn: HashSet::new(),
        }
    }

    /// Next coalition not previously drawn or marked taken.
    fn draw(&mut self, rng: &mut ChaCha8Rng) -> Option<u64> {
        loop {
            let mask = match &mut self.listed {
                Some(list) => list.pop()?,
                None => rand::seq::index::sample(rng, self.m, self.size)
                    .iter()
                    .fold(0u64, |acc, i| acc | 1 << i),
            };
            if self.drawn.insert(mask) {
                return Some(mask);
            }
        }
    }

    fn mark_taken(&mut self, mask: u64) -> bool {
        self.drawn.insert(mask)
    }
}

/// All masks with `size` bits among `m`, ascending (Gosper's hack).
fn masks_of_size(m: usize, size: usize) -> Vec<u64> {
    if size == 0 {
        return vec![0];
    }
    let limit = full_mask(m);
    let mut out = Vec::new();
    let mut v: u64 = (1u64 << size) - 1;
    loop {
        out.push(v);
        let c = v & v.wrapping_neg();
        let r = v.wrapping_add(c);
        if r == 0 {
            break;
        }
        let next = (((r ^ v) >> 2) / c) | r;
        if next > limit || next < v {
            break;
        }
        v = next;
    }
    out
}

const IDENTIFIABILITY_ATTEMPTS: usize = 16;

/// Rank of the coalition rows after eliminating the last feature.
fn reduced_rank(m: usize, rows: &[(Coalition, f64)]) -> usize {
    let mut d = Design::new(m - 1);
    let mut buf = vec![0.0; m - 1];
    for (c, _) in rows {
        let z_last = f64::from(u8::from(c.contains(m - 1)));
        for (i, b) in buf.iter_mut().enumerate() {
            *b = f64::from(u8::from(c.contains(i))) - z_last;
        }
        d.push(&buf, 0.0, 1.0);
    }
    wls::rank(&d)
}

/// Choose the coalitions to evaluate.
///
/// With `budget ≥ 2^M − 2` every non-trivial coalition is returned with its exact kernel
/// weight. Otherwise sizes are visited from the extremes inward: a size group whose
/// proportional share of the remaining budget covers it is enumerated completely; the
/// remaining budget is split across the other groups in proportion to kernel mass and
/// filled with uniform draws without replacement (complements drawn together when
/// `paired_sampling`). Each sampled row of size `s` carries
/// `π(M, s) · C(M, s) / rows_s`, so every stratum keeps its total kernel mass.
pub fn sample_coalitions(m: usize, config: &KernelConfig) -> Result<CoalitionSample> {
    config.validate(m)?;
    if m == 1 {
        return Ok(CoalitionSample {
            n_features: 1,
            rows: Vec::new(),
            complete_sizes: Vec::new(),
        });
    }
    let weight = |s: usize| -> f64 {
        shapley_kernel_weight(m, s)
            .ok()
            .and_then(KernelWeight::finite)
            .expect("non-trivial size")
    };

    if nontrivial_count(m) <= config.budget as u128 {
        let rows = (1..full_mask(m))
            .map(|mask| {
                let c = Coalition::new(mask, m).expect("mask in range");
                (c, weight(c.size()))
            })
            .collect();
        return Ok(CoalitionSample {
            n_features: m,
            rows,
            complete_sizes: (1..m).collect(),
        });
    }

    let groups = size_groups(m, config.paired_sampling);
    let mass: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&s| stratum_mass(m, s)).sum())
        .collect();
    let capacity: Vec<u128> = groups
        .iter()
        .map(|g| g.iter().map(|&s| binomial_u128(m, s)).sum())
        .collect();

    let mut remaining_budget = config.budget as f64;
    let mut remaining_mass: f64 = mass.iter().sum();
    let mut n_complete = 0;
    for g in 0..groups.len() {
        let share = remaining_budget * mass[g] / remaining_mass;
        if share + 1e-9 >= capacity[g] as f64 {
            remaining_budget -= capacity[g] as f64;
            remaining_mass -= mass[g];
            n_complete += 1;
        } else {
            break;
        }
    }

    // Split what is left over the partial groups, largest remainder first, capped at
    // each group's capacity.
    let partial = n_complete..groups.len();
    let mut alloc = vec![0usize; groups.len()];
    let mut left = remaining_budget.round() as usize;
    let mut open: Vec<usize> = partial.clone().collect();
    while left > 0 && !open.is_empty() {
        let open_mass: f64 = open.iter().map(|&g| mass[g]).sum();
        let shares: Vec<f64> = open.iter().map(|&g| left as f64 * mass[g] / open_mass).collect();
        let mut given = 0;
        let mut order: Vec<usize> = (0..open.len()).collect();
        order.sort_by(|&a, &b| {
            (shares[b] - shares[b].floor())
                .total_cmp(&(shares[a] - shares[a].floor()))
                .then(a.cmp(&b))
        });
        let mut extra = vec![0usize; open.len()];
        let floor_total: usize = shares.iter().map(|s| s.floor() as usize).sum();
        for &k in order.iter().take(left - floor_total) {
            extra[k] = 1;
        }
        for (k, &g) in open.iter().enumerate() {
            let want = shares[k].floor() as usize + extra[k];
            let room = (capacity[g] - alloc[g] as u128).min(usize::MAX as u128) as usize;
            let take = want.min(room);
            alloc[g] += take;
            given += take;
        }
        left -= given;
        open.retain(|&g| (alloc[g] as u128) < capacity[g]);
        if given == 0 {
            break;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let mut rows: Vec<(Coalition, f64)> = Vec::with_capacity(config.budget);
        let mut complete_sizes = Vec::new();
        for (g, sizes) in groups.iter().enumerate() {
            let mut masks: Vec<u64> = Vec::new();
            if g < n_complete {
                for &s in sizes {
                    masks.extend(masks_of_size(m, s));
                    complete_sizes.push(s);
                }
            } else {
                let want = alloc[g];
                let mut sampler = StratumSampler::new(m, sizes[0], rng);
                while masks.len() < want {
                    let Some(mask) = sampler.draw(rng) else { break };
                    masks.push(mask);
                    if config.paired_sampling && masks.len() < want {
                        // Two-size groups pair a size-s draw with its size-(M-s) complement;
                        // the middle stratum pairs within itself.
                        let comp = !mask & full_mask(m);
                        if sizes.len() == 2 || sampler.mark_taken(comp) {
                            masks.push(comp);
                        }
                    }
                }
            }
            for &s in sizes {
                let count = masks.iter().filter(|mk| mk.count_ones() as usize == s).count();
                if count == 0 {
                    continue;
                }
                let w = weight(s) * binomial_f64(m, s) / count as f64;
                if g >= n_complete && count as u128 == binomial_u128(m, s) {
                    complete_sizes.push(s);
                }
                rows.extend(
                    masks
                        .iter()
                        .filter(|mk| mk.count_ones() as usize == s)
                        .map(|&mk| (Coalition::new(mk, m).expect("mask in range"), w)),
                );
            }
        }
        (rows, complete_sizes)
    };
    // A draw whose rows leave some feature indistinguishable from the eliminated one is
    // redrawn from the same stream; the solver reports the deficiency if all attempts fail.
    let (mut rows, mut complete_sizes) = draw(&mut rng);
    for _ in 1..IDENTIFIABILITY_ATTEMPTS {
        if reduced_rank(m, &rows) + 1 >= m {
            break;
        }
        (rows, complete_sizes) = draw(&mut rng);
    }
    complete_sizes.sort_unstable();
    Ok(CoalitionSample {
        n_features: m,
        rows,
        complete_sizes,
    })
}

/// Solve the kernel regression with `φ0 = v(∅)` and `Σφ = v(full) − v(∅)` imposed by
/// eliminating the last feature.
pub fn solve_constrained_wls(design: &WeightedDesign, v_empty: f64, v_full: f64) -> Result<Explanation> {
    let support: Vec<usize> = (0..design.n_features).collect();
    let phi = solve_on_support(design, v_empty, v_full, &support)?;
    Ok(Explanation {
        base_value: v_empty,
        attributions: phi,
        fx_full: v_full,
        method: Method::Kernel,
        evaluations_used: 0,
    })
}

/// Constrained WLS with every feature outside `support` fixed at zero. The last support
/// member is eliminated through the sum constraint.
fn solve_on_support(design: &WeightedDesign, v_empty: f64, v_full: f64, support: &[usize]) -> Result<Vec<f64>> {
    let m = design.n_features;
    let delta = v_full - v_empty;
    let mut phi = vec![0.0; m];
    let Some((&last, free)) = support.split_last() else {
        if delta.abs() > 0.0 {
            return Err(ShapError::Singular("empty support cannot carry a non-zero total".into()));
        }
        return Ok(phi);
    };
    let mut reduced = Design::new(free.len());
    let mut buf = vec![0.0; free.len()];
    for row in &design.rows {
        let z_last = f64::from(u8::from(row.coalition.contains(last)));
        for (b, &i) in buf.iter_mut().zip(free) {
            *b = f64::from(u8::from(row.coalition.contains(i))) - z_last;
        }
        reduced.push(&buf, row.value - v_empty - z_last * delta, row.weight);
    }
    let beta = wls::weighted_lstsq(&reduced).map_err(|e| {
        ShapError::Singular(format!(
            "reduced system has rank {} but needs {}; sizes without rows: {:?}",
            e.rank,
            e.needed,
            design.missing_sizes()
        ))
    })?;
    let mut rest = delta;
    for (&i, b) in free.iter().zip(&beta) {
        phi[i] = *b;
        rest -= b;
    }
    phi[last] = rest;
    Ok(phi)
}

/// Augmented unconstrained form used for lasso selection: each row appears once as
/// `z·φ ≈ v(S) − v(∅)` with weight `π·(M − |S|)` and once as
/// `(z − 1)·φ ≈ v(S) − v(full)` with weight `π·|S|`, so no feature is singled out by
/// the sum constraint.
fn augmented_design(design: &WeightedDesign, rows: &[usize], v_empty: f64, v_full: f64) -> Design {
    let m = design.n_features;
    let mut d = Design::new(m);
    let mut on = vec![0.0; m];
    let mut off = vec![0.0; m];
    for &r in rows {
        let row = &design.rows[r];
        let s = row.coalition.size() as f64;
        for i in 0..m {
            let z = f64::from(u8::from(row.coalition.contains(i)));
            on[i] = z;
            off[i] = z - 1.0;
        }
        d.push(&on, row.value - v_empty, row.weight * (m as f64 - s));
        d.push(&off, row.value - v_full, row.weight * s);
    }
    d
}

/// Lasso support at `lambda`; an empty selection falls back to the first feature that
/// would enter the path.
fn lasso_support(aug: &Design, lambda: f64, warm: Option<&[f64]>) -> (Vec<usize>, Vec<f64>) {
    let beta = wls::weighted_lasso(aug, lambda, warm);
    let mut support: Vec<usize> = (0..aug.n_cols).filter(|&j| beta[j] != 0.0).collect();
    if support.is_empty() {
        let total: f64 = aug.w.iter().sum();
        let best = (0..aug.n_cols)
            .map(|j| {
                let c: f64 = (0..aug.n_rows)
                    .map(|r| aug.w[r] / total * aug.x[r * aug.n_cols + j] * aug.y[r])
                    .sum();
                (j, c.abs())
            })
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
            .0;
        support.push(best);
    }
    (support, beta)
}

pub const CV_FOLDS: usize = 5;
pub const CV_GRID: usize = 20;
/// Smallest grid penalty as a fraction of `λ_max`.
const CV_GRID_RATIO: f64 = 1e-3;

fn penalty_grid(lmax: f64) -> Vec<f64> {
    (0..CV_GRID)
        .map(|k| lmax * CV_GRID_RATIO.powf(k as f64 / (CV_GRID - 1) as f64))
        .collect()
}

/// Penalty chosen by weighted K-fold cross-validation of the lasso-then-refit estimator.
pub fn cross_validate_lambda(design: &WeightedDesign, v_empty: f64, v_full: f64, seed: u64) -> f64 {
    let n = design.rows.len();
    let all: Vec<usize> = (0..n).collect();
    let lmax = wls::lambda_max(&augmented_design(design, &all, v_empty, v_full));
    if lmax <= 0.0 || n < CV_FOLDS {
        return 0.0;
    }
    let grid = penalty_grid(lmax);
    let mut order = all.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cf01_d5ea_u64);
    order.shuffle(&mut rng);
    let mut fold_of = vec![0usize; n];
    for (pos, &r) in order.iter().enumerate() {
        fold_of[r] = pos % CV_FOLDS;
    }

    let mut errors = vec![0.0f64; grid.len()];
    for fold in 0..CV_FOLDS {
        let train: Vec<usize> = all.iter().copied().filter(|&r| fold_of[r] != fold).collect();
        let test: Vec<usize> = all.iter().copied().filter(|&r| fold_of[r] == fold).collect();
        let train_design = WeightedDesign {
            n_features: design.n_features,
            rows: train.iter().map(|&r| design.rows[r].clone()).collect(),
        };
        let train_rows: Vec<usize> = (0..train.len()).collect();
        let aug = augmented_design(&train_design, &train_rows, v_empty, v_full);
        let test_weight: f64 = test.iter().map(|&r| design.rows[r].weight).sum();
        let mut warm: Option<Vec<f64>> = None;
        for (k, &lambda) in grid.iter().enumerate() {
            let (support, beta) = lasso_support(&aug, lambda, warm.as_deref());
            warm = Some(beta);
            let err = match solve_on_support(&train_design, v_empty, v_full, &support) {
                Ok(phi) => {
                    test.iter()
                        .map(|&r| {
                            let row = &design.rows[r];
                            let pred = v_empty
                                + row.coalition.members().map(|i| phi[i]).sum::<f64>();
                            row.weight * (row.value - pred).powi(2)
                        })
                        .sum::<f64>()
                        / test_weight.max(f64::MIN_POSITIVE)
                }
                Err(_) => f64::INFINITY,
            };
            errors[k] += err / CV_FOLDS as f64;
        }
    }
    let best = errors
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |a, (k, &e)| if e < a.1 { (k, e) } else { a })
        .0;
    grid[best]
}

/// Lasso selection at `lambda` followed by the constrained refit on the selected support.
pub fn solve_debiased_lasso(design: &WeightedDesign, v_empty: f64, v_full: f64, lambda: f64) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..design.rows.len()).collect();
    let aug = augmented_design(design, &all, v_empty, v_full);
    let (support, _) = lasso_support(&aug, lambda, None);
    solve_on_support(design, v_empty, v_full, &support)
}

/// Kernel SHAP over `game` with the given evaluation budget.
pub fn kernel_shap<G: GameOracle + ?Sized>(game: &G, config: &KernelConfig) -> Result<Explanation> {
    let m = game.n_features();
    config.validate(m)?;
    let start = game.evaluations();
    let v_empty = game.value(Coalition::empty(m))?;
    let v_full = game.value(Coalition::full(m))?;
    let sample = sample_coalitions(m, config)?;
    let values = sample
        .rows
        .par_iter()
        .map(|(c, _)| game.value(*c))
        .collect::<Result<Vec<f64>>>()?;
    let rows = sample
        .rows
        .iter()
        .zip(values)
        .map(|(&(coalition, weight), value)| DesignRow {
            coalition,
            weight,
            value,
        })
        .collect();
    let design = WeightedDesign::new(m, rows)?;
    let phi = match config.regularization {
        Regularization::None => solve_constrained_wls(&design, v_empty, v_full)?.attributions,
        Regularization::DebiasedLasso { lambda } => {
            let lambda = lambda.unwrap_or_else(|| cross_validate_lambda(&design, v_empty, v_full, config.seed));
            solve_debiased_lasso(&design, v_empty, v_full, lambda)?
        }
    };
    Ok(Explanation {
        base_value: v_empty,
        attributions: phi,
        fx_full: v_full,
        method: Method::Kernel,
        evaluations_used: game.evaluations() - start,
    })
}
