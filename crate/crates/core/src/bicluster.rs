//! Sequential sparse biclustering of the regulation matrix into regulatory modules.
//!
//! Each iteration splits the regulators (rows of the residual matrix `U`) into two
//! clusters with gene (column) weights, tests the weights against a permutation
//! null with a two-sample Kolmogorov–Smirnov test, keeps the genes with the
//! largest weight gap, and removes the module's contrast from `U` before the
//! next iteration.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{structural, Error, Result};
use crate::io::{format_f64, CsvTable};
use crate::par::{map_range, Execution};
use crate::regulation::RegulationMatrix;
use crate::seed::{rng_from, Rng, SeedStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegulatoryModule {
    /// The smaller regulator cluster, ascending.
    pub regulators: Vec<usize>,
    /// Selected gene expressions, ascending.
    pub genes: Vec<usize>,
    /// Gene weights at extraction time.
    pub weights: Vec<f64>,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
}

impl RegulatoryModule {
    /// A module known only by its index sets (planted truth, user input).
    pub fn from_sets(mut regulators: Vec<usize>, mut genes: Vec<usize>) -> Self {
        regulators.sort_unstable();
        regulators.dedup();
        genes.sort_unstable();
        genes.dedup();
        Self {
            regulators,
            genes,
            weights: Vec::new(),
            ks_statistic: f64::NAN,
            ks_pvalue: f64::NAN,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Scale each nonzero column of Θ̂ to unit L2 norm.
    UnitColumns,
    #[default]
    None,
}

/// How the permutation null destroys cluster structure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullScheme {
    /// Shuffle each row's entries across the gene columns independently.
    WithinRows,
    /// Shuffle each column's entries across the regulators independently.
    #[default]
    WithinColumns,
}

/// Reference distribution for the KS statistic between ŵ and w⁰.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsCalibration {
    /// Rank of the observed statistic among the replicates' own distances to w⁰.
    #[default]
    Permutation,
    /// Kolmogorov limit with effective size p/2.
    Asymptotic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiclusterConfig {
    pub permutations: usize,
    pub alpha: f64,
    pub max_modules: usize,
    pub seed: u64,
    pub normalization: Normalization,
    pub null_scheme: NullScheme,
    /// Optional L1 bound on the gene weights; `None` means √p, which never binds.
    pub l1_bound: Option<f64>,
    /// Re-run the 2-means on every permuted copy instead of holding the
    /// observed partition fixed.
    pub refit_null: bool,
    pub calibration: KsCalibration,
    /// Test only for observed weights exceeding the null.
    pub one_sided: bool,
    pub restarts: usize,
    pub max_rounds: usize,
    pub kmeans_max_iter: usize,
}

impl Default for BiclusterConfig {
    fn default() -> Self {
        Self {
            permutations: 100,
            alpha: 0.05,
            max_modules: 50,
            seed: 0,
            normalization: Normalization::None,
            null_scheme: NullScheme::WithinColumns,
            l1_bound: None,
            refit_null: true,
            calibration: KsCalibration::Permutation,
            one_sided: true,
            restarts: 10,
            max_rounds: 50,
            kmeans_max_iter: 100,
        }
    }
}

/// Residual regulation matrix and the modules peeled off it so far.
#[derive(Clone, Debug)]
pub struct BiclusterState {
    pub u: DMatrix<f64>,
    pub iteration: usize,
    pub modules_found: Vec<RegulatoryModule>,
}

pub fn normalize(theta: &DMatrix<f64>, how: Normalization) -> DMatrix<f64> {
    let mut u = theta.clone();
    if how == Normalization::UnitColumns {
        for mut col in u.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
    }
    u
}

/// Per-gene between-cluster term of the weighted objective:
/// `(1/q)ΣΣ d − (1/q₁)ΣΣ_C d − (1/q₂)ΣΣ_C̄ d`, which equals twice the
/// between-cluster sum of squares of the column.
pub fn between_terms(u: &DMatrix<f64>, in_small: &[bool]) -> Vec<f64> {
    let q1 = in_small.iter().filter(|b| **b).count() as f64;
    let q2 = in_small.len() as f64 - q1;
    let q = in_small.len() as f64;
    u.column_iter()
        .map(|col| {
            let (mut s1, mut s2) = (0.0, 0.0);
            for (l, v) in col.iter().enumerate() {
                if in_small[l] {
                    s1 += v;
                } else {
                    s2 += v;
                }
            }
            if q1 == 0.0 || q2 == 0.0 {
                return 0.0;
            }
            let (m1, m2) = (s1 / q1, s2 / q2);
            let m = (s1 + s2) / q;
            2.0 * (q1 * (m1 - m).powi(2) + q2 * (m2 - m).powi(2))
        })
        .collect()
}

/// Maximizer of Σ w_j b_j over ‖w‖₂ ≤ 1, w ≥ 0 and the optional L1 bound.
pub fn weights_from_between(b: &[f64], l1_bound: Option<f64>) -> Result<Vec<f64>> {
    let pos: Vec<f64> = b.iter().map(|v| v.max(0.0)).collect();
    let norm = pos.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let w: Vec<f64> = pos.iter().map(|v| v / norm).collect();
    let Some(bound) = l1_bound else {
        return Ok(w);
    };
    if w.iter().sum::<f64>() <= bound || bound <= 0.0 {
        return Ok(w);
    }
    // Soft-threshold b₊ by Δ and renormalize; the L1 norm decreases in Δ.
    let shrink = |delta: f64| -> Vec<f64> {
        let s: Vec<f64> = pos.iter().map(|v| (v - delta).max(0.0)).collect();
        let n = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        s.iter().map(|v| v / n).collect()
    };
    let (mut lo, mut hi) = (0.0, pos.iter().cloned().fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shrink(mid).iter().sum::<f64>() > bound {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(shrink(hi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoMeans {
    pub small: Vec<usize>,
    pub large: Vec<usize>,
    pub weights: Vec<f64>,
    /// Weighted between-cluster objective after each alternation round.
    pub objective_trace: Vec<f64>,
}

impl TwoMeans {
    pub fn membership(&self, q: usize) -> Vec<bool> {
        let mut m = vec![false; q];
        for &l in &self.small {
            m[l] = true;
        }
        m
    }
}

/// Relabels a 2-partition so `true` marks the smaller cluster (the one holding
/// the lowest index on an even split).
fn canonical(labels: &[bool]) -> Vec<bool> {
    let ones = labels.iter().filter(|b| **b).count();
    let zeros = labels.len() - ones;
    let flip = if ones != zeros { ones > zeros } else { !labels[0] };
    if flip {
        labels.iter().map(|b| !b).collect()
    } else {
        labels.to_vec()
    }
}

/// Rows of `u` restricted to weighted columns, scaled by √w, row-major.
fn weighted_points(u: &DMatrix<f64>, w: &[f64]) -> (Vec<f64>, usize) {
    let active: Vec<(usize, f64)> = w
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(j, v)| (j, v.sqrt()))
        .collect();
    let dim = active.len();
    let mut pts = vec![0.0; u.nrows() * dim];
    for (k, &(j, s)) in active.iter().enumerate() {
        for (l, v) in u.column(j).iter().enumerate() {
            pts[l * dim + k] = v * s;
        }
    }
    (pts, dim)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations for k = 2 from an initial labeling; returns the final labels.
fn lloyd(pts: &[f64], dim: usize, mut labels: Vec<bool>, max_iter: usize) -> Vec<bool> {
    let q = labels.len();
    if dim == 0 {
        return labels;
    }
    let point = |l: usize| &pts[l * dim..(l + 1) * dim];
    for _ in 0..max_iter {
        let mut c = [vec![0.0; dim], vec![0.0; dim]];
        let mut counts = [0usize; 2];
        for l in 0..q {
            let k = labels[l] as usize;
            counts[k] += 1;
            for (acc, v) in c[k].iter_mut().zip(point(l)) {
                *acc += v;
            }
        }
        // Empty-cluster repair: move the point farthest from the other centroid.
        if counts[0] == 0 || counts[1] == 0 {
            let full = if counts[0] == 0 { 1 } else { 0 };
            let centroid: Vec<f64> = c[full].iter().map(|v| v / counts[full] as f64).collect();
            let far = (0..q)
                .max_by(|&a, &b| {
                    sq_dist(point(a), &centroid)
                        .partial_cmp(&sq_dist(point(b), &centroid))
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .unwrap();
            labels[far] = full == 0;
            continue;
        }
        for k in 0..2 {
            c[k].iter_mut().for_each(|v| *v /= counts[k] as f64);
        }
        let mut changed = false;
        for l in 0..q {
            let d0 = sq_dist(point(l), &c[0]);
            let d1 = sq_dist(point(l), &c[1]);
            let new = d1 < d0;
            if new != labels[l] {
                labels[l] = new;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if labels.iter().all(|b| *b) || labels.iter().all(|b| !*b) {
        labels[0] = !labels[0];
    }
    labels
}

/// k-means++ seeding for two centers followed by Lloyd iterations.
fn kmeans_pp(pts: &[f64], dim: usize, q: usize, rng: &mut Rng, max_iter: usize) -> Vec<bool> {
    let point = |l: usize| &pts[l * dim..(l + 1) * dim];
    let first = rng.random_range(0..q);
    let d: Vec<f64> = (0..q).map(|l| sq_dist(point(l), point(first))).collect();
    let total: f64 = d.iter().sum();
    let second = if total > 0.0 {
        let mut target = rng.random::<f64>() * total;
        let mut pick = q - 1;
        for (l, v) in d.iter().enumerate() {
            if target < *v {
                pick = l;
                break;
            }
            target -= v;
        }
        pick
    } else {
        (first + 1 + rng.random_range(0..q - 1)) % q
    };
    let mut labels: Vec<bool> = (0..q)
        .map(|l| {
            let a = sq_dist(point(l), point(first));
            let b = sq_dist(point(l), point(second));
            b < a || l == second
        })
        .collect();
    labels[first] = false;
    lloyd(pts, dim, labels, max_iter)
}

fn weighted_objective(b: &[f64], w: &[f64]) -> f64 {
    b.iter().zip(w).map(|(x, y)| x * y).sum()
}

/// Alternating maximization of the weighted between-cluster objective over a
/// 2-partition of the rows of `u` and nonnegative gene weights.
pub fn sparse_two_means(u: &DMatrix<f64>, seed: u64, config: &BiclusterConfig) -> Result<TwoMeans> {
    let (q, p) = u.shape();
    if q < 2 {
        return Err(structural(format!("sparse 2-means needs at least 2 rows, got {q}")));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in regulation residual".into()));
    }
    let mut rng = rng_from(seed);
    let mut w = vec![1.0 / (p as f64).sqrt(); p];
    let mut labels: Option<Vec<bool>> = None;
    let mut trace = Vec::new();
    for _round in 0..config.max_rounds.max(1) {
        let (pts, dim) = weighted_points(u, &w);
        let mut best: Option<(f64, Vec<bool>)> = None;
        let mut consider = |cand: Vec<bool>| {
            let cand = canonical(&cand);
            let obj = weighted_objective(&between_terms(u, &cand), &w);
            if best.as_ref().is_none_or(|(b, _)| obj > *b) {
                best = Some((obj, cand));
            }
        };
        if let Some(prev) = &labels {
            consider(lloyd(&pts, dim, prev.clone(), config.kmeans_max_iter));
            consider(prev.clone());
        }
        for _ in 0..config.restarts.max(1) {
            consider(kmeans_pp(&pts, dim, q, &mut rng, config.kmeans_max_iter));
        }
        let (_, new_labels) = best.expect("at least one candidate");
        let b = between_terms(u, &new_labels);
        w = weights_from_between(&b, config.l1_bound)?;
        trace.push(weighted_objective(&b, &w));
        let unchanged = labels.as_ref() == Some(&new_labels);
        labels = Some(new_labels);
        if unchanged {
            break;
        }
    }
    let labels = labels.expect("ran at least one round");
    let small = (0..q).filter(|&l| labels[l]).collect();
    let large = (0..q).filter(|&l| !labels[l]).collect();
    Ok(TwoMeans {
        small,
        large,
        weights: w,
        objective_trace: trace,
    })
}

fn permute(u: &DMatrix<f64>, scheme: NullScheme, rng: &mut Rng) -> DMatrix<f64> {
    let (q, p) = u.shape();
    let mut out = u.clone();
    match scheme {
        NullScheme::WithinRows => {
            let mut row = vec![0.0; p];
            for l in 0..q {
                for j in 0..p {
                    row[j] = u[(l, j)];
                }
                row.shuffle(rng);
                for j in 0..p {
                    out[(l, j)] = row[j];
                }
            }
        }
        NullScheme::WithinColumns => {
            for mut col in out.column_iter_mut() {
                col.as_mut_slice().shuffle(rng);
            }
        }
    }
    out
}

/// Sorted gene weights from `permutations` shuffled copies of `u`. Replicate
/// `k` draws from the stream seeded with `seed + k`; with `refit_null` unset
/// the partition `in_small` is held fixed.
pub fn permutation_replicates(
    u: &DMatrix<f64>,
    in_small: &[bool],
    permutations: usize,
    seed: u64,
    config: &BiclusterConfig,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    if permutations == 0 {
        return Err(structural("permutation count must be at least 1"));
    }
    map_range(exec, permutations, |k| -> Result<Vec<f64>> {
        let mut rng = rng_from(seed.wrapping_add(k as u64));
        let shuffled = permute(u, config.null_scheme, &mut rng);
        let mut w = if config.refit_null {
            sparse_two_means(&shuffled, rng.random(), config)?.weights
        } else {
            weights_from_between(&between_terms(&shuffled, in_small), config.l1_bound)?
        };
        w.sort_by(f64::total_cmp);
        Ok(w)
    })
    .into_iter()
    .collect()
}

/// Mean of the j-th order statistic across replicates.
pub fn average_order_statistics(reps: &[Vec<f64>]) -> Vec<f64> {
    let p = reps.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; p];
    for rep in reps {
        for (acc, v) in mean.iter_mut().zip(rep) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= reps.len() as f64);
    mean
}

/// Null gene weights w⁰: the averaged order statistics of the permutation
/// replicates, each re-clustered from scratch when `refit_null` is set.
pub fn permutation_null_weights(
    u: &DMatrix<f64>,
    in_small: &[bool],
    permutations: usize,
    seed: u64,
    config: &BiclusterConfig,
    exec: Execution,
) -> Result<Vec<f64>> {
    let reps = permutation_replicates(u, in_small, permutations, seed, config, exec)?;
    Ok(average_order_statistics(&reps))
}

/// KS statistic between `w` and `w0` with a p-value from `calibration`.
/// Under [`KsCalibration::Permutation`] the p-value is
/// `(1 + #{k : D(rep_k, w0) ≥ D(w, w0)}) / (B + 1)`.
pub fn ks_against_null(w: &[f64], w0: &[f64], reps: &[Vec<f64>], config: &BiclusterConfig) -> Result<(f64, f64)> {
    let test = |a: &[f64]| if config.one_sided { ks_test_greater(a, w0) } else { ks_test_two_sample(a, w0) };
    let (d, asymptotic) = test(w)?;
    match config.calibration {
        KsCalibration::Asymptotic => Ok((d, asymptotic)),
        KsCalibration::Permutation => {
            let mut exceed = 0usize;
            for rep in reps {
                if test(rep)?.0 >= d - 1e-12 {
                    exceed += 1;
                }
            }
            Ok((d, (1 + exceed) as f64 / (reps.len() + 1) as f64))
        }
    }
}

/// Survival function of the Kolmogorov distribution, P(K > x).
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // Jacobi-theta form converges fast for small x.
        let mut cdf = 0.0;
        let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        for k in 1..200 {
            let m = (2 * k - 1) as f64;
            let term = (-m * m * c).exp();
            cdf += term;
            if term < 1e-12 {
                break;
            }
        }
        let cdf = cdf * (2.0 * std::f64::consts::PI).sqrt() / x;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Largest gaps `(sup(F_b − F_a), sup(F_a − F_b))` between the empirical CDFs.
fn ks_gaps(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let (mut up, mut down): (f64, f64) = (0.0, 0.0);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        let diff = j as f64 / nb as f64 - i as f64 / na as f64;
        up = up.max(diff);
        down = down.max(-diff);
    }
    (up, down)
}

fn effective_size(na: usize, nb: usize) -> f64 {
    (na * nb) as f64 / (na + nb) as f64
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
/// Inputs need not be sorted.
pub fn ks_test_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(structural("KS test needs two nonempty samples"));
    }
    let (up, down) = ks_gaps(a, b);
    let d = up.max(down);
    Ok((d, kolmogorov_sf(d * effective_size(a.len(), b.len()).sqrt())))
}

/// One-sided two-sample KS test of `a` stochastically larger than `b`:
/// statistic `sup(F_b − F_a)`, asymptotic p-value `exp(−2 nₑ D²)`.
pub fn ks_test_greater(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(structural("KS test needs two nonempty samples"));
    }
    let (d, _) = ks_gaps(a, b);
    Ok((d, (-2.0 * effective_size(a.len(), b.len()) * d * d).exp().min(1.0)))
}

/// Genes with the largest weights, cut at the largest jump of the weight–null gap.
pub fn select_gene_set(w: &[f64], w0: &[f64]) -> Result<Vec<usize>> {
    let p = w.len();
    if p < 2 || w0.len() != p {
        return Err(structural(format!(
            "gene-set selection needs two length-p vectors with p ≥ 2 (got {p} and {})",
            w0.len()
        )));
    }
    // Indices by descending weight, ties by ascending index.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut sorted_w: Vec<f64> = w.to_vec();
    sorted_w.sort_by(f64::total_cmp);
    let mut sorted_w0 = w0.to_vec();
    sorted_w0.sort_by(f64::total_cmp);
    // One-based ascending order statistic k sits at sorted[k-1].
    let gap = |k: usize| sorted_w[k - 1] - sorted_w0[k - 1];
    let mut best_j = 1;
    let mut best = f64::NEG_INFINITY;
    for j in 1..p {
        let v = gap(p - j + 1) - gap(p - j);
        if v > best {
            best = v;
            best_j = j;
        }
    }
    let mut genes: Vec<usize> = order[..best_j].to_vec();
    genes.sort_unstable();
    Ok(genes)
}

/// Removes the module's regulator-cluster contrast on its genes.
pub fn subtract_module(u: &DMatrix<f64>, module: &RegulatoryModule) -> Result<DMatrix<f64>> {
    let (q, p) = u.shape();
    let mut in_c = vec![false; q];
    for &l in &module.regulators {
        if l >= q {
            return Err(structural(format!("regulator index {l} out of range {q}")));
        }
        in_c[l] = true;
    }
    if module.genes.iter().any(|&j| j >= p) {
        return Err(structural(format!("gene index out of range {p}")));
    }
    let q1 = in_c.iter().filter(|b| **b).count();
    let q2 = q - q1;
    if q1 == 0 || q2 == 0 {
        return Err(structural("module subtraction needs two nonempty regulator clusters"));
    }
    let mut out = u.clone();
    for &j in &module.genes {
        let col = u.column(j);
        let (mut s1, mut s2) = (0.0, 0.0);
        for l in 0..q {
            if in_c[l] {
                s1 += col[l];
            } else {
                s2 += col[l];
            }
        }
        let shift = s1 / q1 as f64 - s2 / q2 as f64;
        for l in 0..q {
            if in_c[l] {
                out[(l, j)] = u[(l, j)] - shift;
            }
        }
    }
    Ok(out)
}

/// Outcome of one extraction iteration (exposed for diagnostics).
#[derive(Clone, Debug)]
pub enum Step {
    Module(RegulatoryModule),
    NotSignificant { ks_pvalue: f64 },
    Degenerate,
}

impl BiclusterState {
    pub fn new(theta: &DMatrix<f64>, normalization: Normalization) -> Self {
        Self {
            u: normalize(theta, normalization),
            iteration: 0,
            modules_found: Vec::new(),
        }
    }

    /// Runs one iteration; on a significant module, records it and updates `u`.
    pub fn step(&mut self, config: &BiclusterConfig, exec: Execution) -> Result<Step> {
        let streams = SeedStream::new(config.seed);
        let s = self.iteration as u64;
        self.iteration += 1;
        let two = match sparse_two_means(&self.u, streams.derive("two_means", s), config) {
            Ok(t) => t,
            Err(Error::DegenerateWeights) => return Ok(Step::Degenerate),
            Err(e) => return Err(e),
        };
        let membership = two.membership(self.u.nrows());
        let reps = match permutation_replicates(
            &self.u,
            &membership,
            config.permutations,
            streams.derive("null", s),
            config,
            exec,
        ) {
            Ok(r) => r,
            Err(Error::DegenerateWeights) => return Ok(Step::Degenerate),
            Err(e) => return Err(e),
        };
        let w0 = average_order_statistics(&reps);
        let (stat, pvalue) = ks_against_null(&two.weights, &w0, &reps, config)?;
        if !(pvalue < config.alpha) {
            return Ok(Step::NotSignificant { ks_pvalue: pvalue });
        }
        let genes = select_gene_set(&two.weights, &w0)?;
        let module = RegulatoryModule {
            regulators: two.small,
            genes,
            weights: two.weights,
            ks_statistic: stat,
            ks_pvalue: pvalue,
        };
        self.u = subtract_module(&self.u, &module)?;
        self.modules_found.push(module.clone());
        Ok(Step::Module(module))
    }
}

/// Extracts regulatory modules until the KS test stops rejecting.
pub fn extract_modules(
    theta: &RegulationMatrix,
    config: &BiclusterConfig,
    exec: Execution,
) -> Result<Vec<RegulatoryModule>> {
    extract_modules_from(&theta.theta, config, exec)
}

pub fn extract_modules_from(
    theta: &DMatrix<f64>,
    config: &BiclusterConfig,
    exec: Execution,
) -> Result<Vec<RegulatoryModule>> {
    if theta.nrows() < 2 || theta.ncols() < 2 {
        return Ok(Vec::new());
    }
    let mut state = BiclusterState::new(theta, config.normalization);
    while state.modules_found.len() < config.max_modules {
        match state.step(config, exec)? {
            Step::Module(_) => {}
            Step::NotSignificant { .. } | Step::Degenerate => break,
        }
    }
    Ok(state.modules_found)
}

pub fn modules_table(modules: &[RegulatoryModule], ds: Option<&Dataset>) -> CsvTable {
    let mut t = CsvTable::new(&["module_id", "entity_type", "entity_index", "entity_name"]);
    for (s, m) in modules.iter().enumerate() {
        let id = (s + 1).to_string();
        for &j in &m.genes {
            let name = ds.map(|d| d.gene_names[j].clone()).unwrap_or_else(|| format!("g{}", j + 1));
            t.push(vec![id.clone(), "gene".into(), j.to_string(), name]);
        }
        for &l in &m.regulators {
            let name = ds
                .map(|d| d.regulator_names[l].clone())
                .unwrap_or_else(|| format!("r{}", l + 1));
            t.push(vec![id.clone(), "regulator".into(), l.to_string(), name]);
        }
    }
    t
}

/// Companion export: per-module KS results and gene weights.
pub fn module_stats_table(modules: &[RegulatoryModule]) -> CsvTable {
    let mut t = CsvTable::new(&["module_id", "ks_statistic", "ks_pvalue", "gene_index", "weight"]);
    for (s, m) in modules.iter().enumerate() {
        for (j, w) in m.weights.iter().enumerate() {
            if *w > 0.0 {
                t.push(vec![
                    (s + 1).to_string(),
                    format_f64(m.ks_statistic),
                    format_f64(m.ks_pvalue),
                    j.to_string(),
                    format_f64(*w),
                ]);
            }
        }
    }
    t
}

pub fn write_modules(modules: &[RegulatoryModule], ds: Option<&Dataset>, dir: &Path) -> Result<()> {
    modules_table(modules, ds).write(&dir.join("modules.csv"))?;
    module_stats_table(modules).write(&dir.join("module_stats.csv"))
}
