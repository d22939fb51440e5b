//! Simulated multidimensional data with planted regulatory modules and
//! hierarchical M-E effects, plus identification and prediction metrics and
//! the replicate benchmark runner.

mod bench;
mod metrics;

pub use bench::{rows_table, run_benchmark, summary_table, variant_means, BenchConfig, BenchRow, Scenario};
pub use metrics::{
    concordance_ipcw, evaluate_resampling, module_recovery, pmse, rv_coefficient, score_identification,
    PredictionMetric, ResamplingReport,
};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bicluster::RegulatoryModule;
use crate::data::{BlockKind, BlockMeta, Dataset, Entity, FeatureSet};
use crate::error::{structural, Error, Result};
use crate::integration::{leftover_entities, module_members, module_pca, DEFAULT_VARIANCE_THRESHOLD};
use crate::interact::{predict, FittedModel, Identified};
use crate::io::{format_f64, CsvTable};
use crate::seed::{Rng, SeedStream};

macro_rules! named_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text, alias = $text)] $variant,)+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $text,)+ })
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.to_string().eq_ignore_ascii_case(s))
                    .ok_or_else(|| {
                        let allowed: Vec<String> = $name::ALL.iter().map(|v| v.to_string()).collect();
                        structural(format!(
                            "invalid {} '{}' (allowed: {})",
                            stringify!($name),
                            s,
                            allowed.join(", ")
                        ))
                    })
            }
        }
    };
}

named_enum!(ThetaPattern { Theta1 => "theta1", Theta2 => "theta2" });
named_enum!(CorrStructure { R1 => "R1", R2 => "R2", R3 => "R3" });
named_enum!(Placement { P1 => "P1", P2 => "P2" });
named_enum!(Signal { B1 => "B1", B2 => "B2" });

impl ThetaPattern {
    /// Module count at full scale.
    pub fn modules(self) -> usize {
        match self {
            ThetaPattern::Theta1 => 15,
            ThetaPattern::Theta2 => 20,
        }
    }

    /// Inclusive ranges for gene and regulator counts of unpinned modules.
    fn size_ranges(self) -> ((usize, usize), (usize, usize)) {
        match self {
            ThetaPattern::Theta1 => ((8, 17), (12, 21)),
            ThetaPattern::Theta2 => ((4, 8), (6, 10)),
        }
    }

    /// (module index, genes, regulators) of the modules that carry effects.
    /// Under Theta2 the second effect module skips the overlapping module so
    /// the two effect modules have disjoint members.
    fn pinned_sizes(self) -> &'static [(usize, usize, usize)] {
        match self {
            ThetaPattern::Theta1 => &[(0, 10, 20)],
            ThetaPattern::Theta2 => &[(0, 8, 9), (2, 6, 10)],
        }
    }

    fn min_modules(self) -> usize {
        self.pinned_sizes().iter().map(|p| p.0 + 1).max().unwrap_or(0).max(2)
    }
}

impl Signal {
    pub fn range(self) -> (f64, f64) {
        match self {
            Signal::B1 => (0.5, 0.8),
            Signal::B2 => (0.8, 1.2),
        }
    }
}

/// Entries shared by the single overlapping module pair (modules 1 and 2).
pub const OVERLAP_GENES: usize = 2;
pub const OVERLAP_REGULATORS: usize = 2;
const THETA_SD: f64 = 0.1;
const EIGEN_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub m: usize,
    pub theta_pattern: ThetaPattern,
    pub corr: CorrStructure,
    pub placement: Placement,
    pub signal: Signal,
    pub seed: u64,
    /// Shrinks p, q and the module count; effect placement counts are kept.
    pub scale_factor: f64,
    /// Target censoring fraction; `None` simulates a continuous outcome.
    pub censoring: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 250,
            p: 500,
            q: 500,
            m: 5,
            theta_pattern: ThetaPattern::Theta1,
            corr: CorrStructure::R1,
            placement: Placement::P1,
            signal: Signal::B1,
            seed: 1,
            scale_factor: 1.0,
            censoring: None,
        }
    }
}

/// Dimensions after applying the scale factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaledDims {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub m: usize,
    pub modules: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(structural(format!("invalid config field '{field}': {msg}")));
        if self.n < 4 {
            return bad("n", "need at least 4 subjects");
        }
        if self.m == 0 {
            return bad("m", "need at least one environmental factor");
        }
        if !(self.scale_factor > 0.0 && self.scale_factor.is_finite()) {
            return bad("scale_factor", "must be a positive finite number");
        }
        if let Some(c) = self.censoring {
            if !(0.0..1.0).contains(&c) {
                return bad("censoring", "must lie in [0, 1)");
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> ScaledDims {
        let scale = |v: usize| ((v as f64) * self.scale_factor).round() as usize;
        ScaledDims {
            n: self.n,
            p: scale(self.p).max(1),
            q: scale(self.q).max(1),
            m: self.m,
            modules: scale(self.theta_pattern.modules()).max(self.theta_pattern.min_modules()),
        }
    }
}

/// Effects carried by one module (all members) or one individual entity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectUnit {
    pub unit: Unit,
    /// Environmental factors the unit interacts with.
    pub interacts_with: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    /// 0-based planted module index.
    Module(usize),
    Individual(Entity),
}

#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub theta: DMatrix<f64>,
    pub modules: Vec<RegulatoryModule>,
    pub effects: Vec<EffectUnit>,
    pub important: Identified,
    /// True coefficients on `features`.
    pub model: FittedModel,
    /// Design built from the planted modules on standardized data.
    pub features: FeatureSet,
    pub dims: ScaledDims,
    pub diagnostics: Vec<String>,
}

impl GroundTruth {
    pub fn important_main(&self) -> &BTreeSet<Entity> {
        &self.important.mains
    }

    pub fn important_inter(&self) -> &BTreeSet<(Entity, usize)> {
        &self.important.interactions
    }

    /// `entity_type,entity_index,term` rows; `term` is `main` or the E index.
    pub fn effects_table(&self, ds: &Dataset) -> CsvTable {
        let mut t = CsvTable::new(&["entity_type", "entity_index", "entity_name", "term"]);
        for e in &self.important.mains {
            t.push(vec![e.kind().into(), e.index().to_string(), ds.entity_name(*e).into(), "main".into()]);
        }
        for (e, m) in &self.important.interactions {
            t.push(vec![e.kind().into(), e.index().to_string(), ds.entity_name(*e).into(), ds.env_names[*m].clone()]);
        }
        t
    }

    pub fn theta_triplets(&self) -> CsvTable {
        let mut t = CsvTable::new(&["row", "col", "value"]);
        for j in 0..self.theta.ncols() {
            for l in 0..self.theta.nrows() {
                let v = self.theta[(l, j)];
                if v != 0.0 {
                    t.push(vec![l.to_string(), j.to_string(), format_f64(v)]);
                }
            }
        }
        t
    }
}

/// Module sizes and contiguous placement; returns (genes, regulators) per module.
fn layout(pattern: ThetaPattern, dims: &ScaledDims, rng: &mut Rng) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let ((glo, ghi), (rlo, rhi)) = pattern.size_ranges();
    let pinned = pattern.pinned_sizes();
    let sizes: Vec<(usize, usize)> = (0..dims.modules)
        .map(|s| {
            let drawn = (rng.random_range(glo..=ghi), rng.random_range(rlo..=rhi));
            pinned.iter().find(|p| p.0 == s).map(|p| (p.1, p.2)).unwrap_or(drawn)
        })
        .collect();
    let mut out = Vec::with_capacity(sizes.len());
    let (mut g0, mut r0) = (0usize, 0usize);
    for (s, &(ng, nr)) in sizes.iter().enumerate() {
        if s == 1 {
            g0 -= OVERLAP_GENES.min(sizes[0].0);
            r0 -= OVERLAP_REGULATORS.min(sizes[0].1);
        }
        out.push(((g0..g0 + ng).collect::<Vec<_>>(), (r0..r0 + nr).collect::<Vec<_>>()));
        g0 += ng;
        r0 += nr;
    }
    if g0 > dims.p || r0 > dims.q {
        return Err(structural(format!(
            "planted modules need {g0} genes and {r0} regulators but the scaled dimensions are p={} q={}",
            dims.p, dims.q
        )));
    }
    Ok(out)
}

/// Planted regulation matrix (q×p) and its modules.
pub fn generate_theta(pattern: ThetaPattern, dims: &ScaledDims, seeds: &SeedStream) -> Result<(DMatrix<f64>, Vec<RegulatoryModule>)> {
    let mut rng = seeds.rng("theta", 0);
    let placed = layout(pattern, dims, &mut rng)?;
    let s_count = placed.len();
    let mut theta = DMatrix::zeros(dims.q, dims.p);
    for (s, (genes, regs)) in placed.iter().enumerate() {
        let mean = if s_count > 1 { -0.7 + s as f64 * 2.2 / (s_count - 1) as f64 } else { 0.4 };
        for &j in genes {
            for &l in regs {
                let z: f64 = StandardNormal.sample(&mut rng);
                theta[(l, j)] = mean + THETA_SD * z;
            }
        }
    }
    let modules = placed
        .into_iter()
        .map(|(genes, regs)| RegulatoryModule::from_sets(regs, genes))
        .collect();
    Ok((theta, modules))
}

/// Correlation matrix of a module's regulators.
pub fn module_correlation(corr: CorrStructure, k: usize, module_size: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |j, l| {
        if j == l {
            return 1.0;
        }
        let lag = j.abs_diff(l);
        match corr {
            CorrStructure::R1 => (-0.5f64).powi(lag as i32),
            CorrStructure::R2 => {
                if lag == 1 {
                    -0.5
                } else {
                    0.0
                }
            }
            CorrStructure::R3 => {
                let sign = if lag % 2 == 0 { 1.0 } else { -1.0 };
                sign / module_size as f64
            }
        }
    })
}

/// Cholesky factor, repairing a non-positive-definite input by flooring its
/// eigenvalues.
fn robust_cholesky(mat: &DMatrix<f64>, diagnostics: &mut Vec<String>) -> DMatrix<f64> {
    if let Some(c) = mat.clone().cholesky() {
        return c.l();
    }
    let eig = mat.clone().symmetric_eigen();
    let floored = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let fixed = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    diagnostics.push(format!("correlation matrix of size {} repaired with eigenvalue floor {EIGEN_FLOOR:e}", mat.nrows()));
    let sym = (&fixed + fixed.transpose()) * 0.5;
    sym.cholesky().map(|c| c.l()).unwrap_or_else(|| DMatrix::identity(mat.nrows(), mat.ncols()))
}

fn normal_matrix(n: usize, k: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(rng))
}

/// Regulator matrix: module blocks are multivariate normal, modules are
/// independent, regulators shared with an earlier module are held fixed and
/// the rest drawn from the conditional distribution.
pub fn generate_regulators(
    corr: CorrStructure,
    modules: &[RegulatoryModule],
    n: usize,
    q: usize,
    seeds: &SeedStream,
    diagnostics: &mut Vec<String>,
) -> Result<DMatrix<f64>> {
    let mut r = normal_matrix(n, q, &mut seeds.rng("regulators", 0));
    let mut drawn = vec![false; q];
    for (s, module) in modules.iter().enumerate() {
        let regs = &module.regulators;
        if regs.iter().any(|&l| l >= q) {
            return Err(structural(format!("module {} indexes regulators beyond q={q}", s + 1)));
        }
        let size = regs.len() + module.genes.len();
        let sigma = module_correlation(corr, regs.len(), size);
        let fixed: Vec<usize> = (0..regs.len()).filter(|&k| drawn[regs[k]]).collect();
        let free: Vec<usize> = (0..regs.len()).filter(|&k| !drawn[regs[k]]).collect();
        if free.is_empty() {
            continue;
        }
        let mut rng = seeds.rng("module_regulators", s as u64);
        let noise = normal_matrix(n, free.len(), &mut rng);
        let sub = |a: &[usize], b: &[usize]| DMatrix::from_fn(a.len(), b.len(), |i, j| sigma[(a[i], b[j])]);
        let s_ff = sub(&free, &free);
        let (cov, mean_map) = if fixed.is_empty() {
            (s_ff, None)
        } else {
            let s_xx = sub(&fixed, &fixed);
            let s_fx = sub(&free, &fixed);
            let inv = s_xx
                .clone()
                .cholesky()
                .map(|c| c.inverse())
                .ok_or_else(|| Error::Numeric(format!("shared-regulator covariance of module {} is singular", s + 1)))?;
            let map = &s_fx * inv;
            let cond = &s_ff - &map * s_fx.transpose();
            (cond, Some(map))
        };
        let l = robust_cholesky(&cov, diagnostics);
        let mut block = noise * l.transpose();
        if let Some(map) = mean_map {
            let given = DMatrix::from_fn(n, fixed.len(), |i, j| r[(i, regs[fixed[j]])]);
            block += given * map.transpose();
        }
        for (c, &k) in free.iter().enumerate() {
            r.set_column(regs[k], &block.column(c));
            drawn[regs[k]] = true;
        }
    }
    Ok(r)
}

/// Effect layout per placement: (module index, interaction count) pairs and
/// the interaction counts of the individual genes and regulators.
type PlacementPlan = (Vec<(usize, usize)>, Vec<usize>, Vec<usize>);

fn placement_plan(pattern: ThetaPattern, placement: Placement, m: usize) -> PlacementPlan {
    let (mods, genes, regs): PlacementPlan = match (pattern, placement) {
        (ThetaPattern::Theta1, Placement::P1) => (vec![(0, 2)], vec![1; 5], vec![]),
        (ThetaPattern::Theta1, Placement::P2) => (vec![(0, 1)], vec![1; 5], vec![]),
        (ThetaPattern::Theta2, Placement::P1) => {
            let mut genes = vec![3, 3];
            genes.extend([2; 7]);
            genes.extend([0; 2]);
            (vec![(0, 2), (2, 0)], genes, vec![0, 0])
        }
        (ThetaPattern::Theta2, Placement::P2) => (vec![(0, 1), (2, 0)], vec![4; 3], vec![3, 0]),
    };
    (
        mods.into_iter().map(|(s, k)| (s, k.min(m))).collect(),
        genes.into_iter().map(|k| k.min(m)).collect(),
        regs.into_iter().map(|k| k.min(m)).collect(),
    )
}

/// Environmental factors for the `k`-th effect unit with `count` interactions.
fn factors(k: usize, count: usize, m: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..count).map(|i| (k + i) % m).collect();
    out.sort_unstable();
    out
}

/// Effect units for the configuration, with individual units taken from the
/// lowest-indexed entities outside every planted module.
pub fn plan_effects(
    pattern: ThetaPattern,
    placement: Placement,
    dims: &ScaledDims,
    modules: &[RegulatoryModule],
) -> Result<Vec<EffectUnit>> {
    let (mods, gene_counts, reg_counts) = placement_plan(pattern, placement, dims.m);
    let leftover = leftover_entities(dims.p, dims.q, modules);
    let genes: Vec<Entity> = leftover.iter().copied().filter(|e| matches!(e, Entity::Gene(_))).collect();
    let regs: Vec<Entity> = leftover.iter().copied().filter(|e| matches!(e, Entity::Regulator(_))).collect();
    if genes.len() < gene_counts.len() || regs.len() < reg_counts.len() {
        return Err(structural(format!(
            "placement needs {} individual genes and {} individual regulators outside modules, only {} and {} available",
            gene_counts.len(),
            reg_counts.len(),
            genes.len(),
            regs.len()
        )));
    }
    let mut out = Vec::new();
    let mut k = 0;
    for (s, count) in mods {
        if s >= modules.len() {
            return Err(structural(format!("placement needs module {} but only {} were planted", s + 1, modules.len())));
        }
        out.push(EffectUnit { unit: Unit::Module(s), interacts_with: factors(k, count, dims.m) });
        k += count;
    }
    for (i, count) in gene_counts.into_iter().enumerate() {
        out.push(EffectUnit { unit: Unit::Individual(genes[i]), interacts_with: factors(k, count, dims.m) });
        k += count.max(1);
    }
    for (i, count) in reg_counts.into_iter().enumerate() {
        out.push(EffectUnit { unit: Unit::Individual(regs[i]), interacts_with: factors(k, count, dims.m) });
        k += count.max(1);
    }
    Ok(out)
}

/// Entity-level truth implied by a set of effect units.
pub fn important_sets(effects: &[EffectUnit], modules: &[RegulatoryModule]) -> Identified {
    let mut out = Identified::default();
    for eff in effects {
        let members = match eff.unit {
            Unit::Module(s) => module_members(&modules[s]),
            Unit::Individual(e) => vec![e],
        };
        for e in members {
            out.mains.insert(e);
            for &m in &eff.interacts_with {
                out.interactions.insert((e, m));
            }
        }
    }
    out
}

/// Design from planted modules: PCA blocks on standardized members plus the
/// remaining entities as individual columns.
pub fn truth_features(std: &Dataset, modules: &[RegulatoryModule], threshold: f64) -> Result<FeatureSet> {
    let mut x_blocks = Vec::new();
    let mut block_meta = Vec::new();
    for (s, module) in modules.iter().enumerate() {
        let members = module_members(module);
        let pca = module_pca(&crate::data::stack_entities(std, &members), threshold)?;
        x_blocks.push(pca.scores);
        block_meta.push(BlockMeta {
            module_id: s + 1,
            kind: BlockKind::Pca,
            members,
            center: pca.center,
            loadings: pca.loadings,
            explained: pca.explained,
        });
    }
    let z_meta = leftover_entities(std.p(), std.q(), modules);
    Ok(FeatureSet {
        z: crate::data::stack_entities(std, &z_meta),
        x_blocks,
        block_meta,
        z_meta,
    })
}

/// Full data-generating process; bit-deterministic in `config.seed`.
pub fn generate_dataset(config: &SimConfig) -> Result<(Dataset, GroundTruth)> {
    config.validate()?;
    let dims = config.dims();
    let seeds = SeedStream::new(config.seed);
    let mut diagnostics = Vec::new();
    let (theta, modules) = generate_theta(config.theta_pattern, &dims, &seeds)?;
    let r = generate_regulators(config.corr, &modules, dims.n, dims.q, &seeds, &mut diagnostics)?;
    let g = &r * &theta + normal_matrix(dims.n, dims.p, &mut seeds.rng("gene_noise", 0));
    let e = normal_matrix(dims.n, dims.m, &mut seeds.rng("environment", 0));

    let effects = plan_effects(config.theta_pattern, config.placement, &dims, &modules)?;
    let important = important_sets(&effects, &modules);

    let provisional = Dataset::new(g, r, e, DVector::zeros(dims.n), None)?;
    let (std, _) = provisional.standardize()?;
    let features = truth_features(&std, &modules, DEFAULT_VARIANCE_THRESHOLD)?;

    let (lo, hi) = config.signal.range();
    let mut rng = seeds.rng("coefficients", 0);
    let mut draw = || rng.random_range(lo..hi);
    let mut model = FittedModel::zeros(dims.m, &features.block_widths(), features.p_z(), true);
    for a in model.alpha.iter_mut() {
        *a = draw();
    }
    for eff in &effects {
        match eff.unit {
            Unit::Module(s) => {
                for j in 0..model.beta[s].len() {
                    model.beta[s][j] = draw();
                }
                for &m in &eff.interacts_with {
                    for j in 0..model.beta[s].len() {
                        model.eta[m][s][j] = draw() / model.beta[s][j];
                    }
                }
            }
            Unit::Individual(ent) => {
                let d = features
                    .z_meta
                    .iter()
                    .position(|&z| z == ent)
                    .ok_or_else(|| structural(format!("effect entity {ent} is not an individual feature")))?;
                model.gamma[d] = draw();
                for &m in &eff.interacts_with {
                    model.tau[(m, d)] = draw() / model.gamma[d];
                }
            }
        }
    }

    let signal = predict(&model, &features, &provisional.e)?;
    let noise = normal_matrix(dims.n, 1, &mut seeds.rng("outcome_noise", 0)).column(0).into_owned();
    let log_t = signal + noise;
    let (y, delta) = match config.censoring {
        None => (log_t, None),
        Some(frac) => {
            let (y, d) = censor(&log_t, frac, &mut seeds.rng("censoring", 0));
            (y, Some(d))
        }
    };
    let mut ds = provisional;
    ds.y = y;
    ds.delta = delta;
    ds.validate()?;
    Ok((
        ds,
        GroundTruth {
            theta,
            modules,
            effects,
            important,
            model,
            features,
            dims,
            diagnostics,
        },
    ))
}

/// Independent normal censoring times with the location tuned so that the
/// observed censoring fraction is as close as possible to `frac`.
fn censor(log_t: &DVector<f64>, frac: f64, rng: &mut Rng) -> (DVector<f64>, Vec<bool>) {
    let n = log_t.len();
    let sd = log_t.variance().sqrt().max(1e-8);
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let censored_at = |mu: f64| (0..n).filter(|&i| mu + sd * z[i] < log_t[i]).count() as f64 / n as f64;
    let (mut lo, mut hi) = (log_t.min() - 10.0 * sd, log_t.max() + 10.0 * sd);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if censored_at(mid) > frac {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = hi;
    let mut y = log_t.clone();
    let mut delta = vec![true; n];
    for i in 0..n {
        let c = mu + sd * z[i];
        if c < log_t[i] {
            y[i] = c;
            delta[i] = false;
        }
    }
    (y, delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(pattern: ThetaPattern, placement: Placement, scale: f64) -> SimConfig {
        SimConfig {
            theta_pattern: pattern,
            placement,
            scale_factor: scale,
            n: 60,
            ..SimConfig::default()
        }
    }

    #[test]
    fn placement_totals_match_tables() {
        let expect = [
            (ThetaPattern::Theta1, Placement::P1, 35, 65),
            (ThetaPattern::Theta1, Placement::P2, 35, 35),
            (ThetaPattern::Theta2, Placement::P1, 46, 54),
            (ThetaPattern::Theta2, Placement::P2, 38, 32),
        ];
        for (pat, pl, mains, inter) in expect {
            let (_, truth) = generate_dataset(&config(pat, pl, 0.4)).unwrap();
            assert_eq!(truth.important_main().len(), mains, "{pat} {pl}");
            assert_eq!(truth.important_inter().len(), inter, "{pat} {pl}");
            for (e, _) in truth.important_inter() {
                assert!(truth.important_main().contains(e));
            }
        }
    }

    #[test]
    fn entity_type_split_matches_tables() {
        let count = |set: &BTreeSet<Entity>, gene: bool| set.iter().filter(|e| matches!(e, Entity::Gene(_)) == gene).count();
        let count_i = |set: &BTreeSet<(Entity, usize)>, gene: bool| {
            set.iter().filter(|(e, _)| matches!(e, Entity::Gene(_)) == gene).count()
        };
        let expect = [
            (ThetaPattern::Theta1, Placement::P1, (15, 20), (25, 40)),
            (ThetaPattern::Theta1, Placement::P2, (15, 20), (15, 20)),
            (ThetaPattern::Theta2, Placement::P1, (25, 21), (36, 18)),
            (ThetaPattern::Theta2, Placement::P2, (17, 21), (20, 12)),
        ];
        for (pat, pl, mains, inter) in expect {
            let (_, t) = generate_dataset(&config(pat, pl, 0.4)).unwrap();
            assert_eq!((count(t.important_main(), true), count(t.important_main(), false)), mains, "{pat} {pl}");
            assert_eq!(
                (count_i(t.important_inter(), true), count_i(t.important_inter(), false)),
                inter,
                "{pat} {pl}"
            );
        }
    }

    #[test]
    fn theta_structure_and_sizes() {
        let dims = SimConfig::default().dims();
        let (mut g_sum, mut r_sum, mut count) = (0.0, 0.0, 0.0);
        for seed in 0..50 {
            let (theta, modules) = generate_theta(ThetaPattern::Theta1, &dims, &SeedStream::new(seed)).unwrap();
            assert_eq!(modules.len(), 15);
            let shared: Vec<_> = modules[0].genes.iter().filter(|g| modules[1].genes.contains(g)).collect();
            assert_eq!(shared.len(), OVERLAP_GENES);
            for m in &modules {
                g_sum += m.genes.len() as f64;
                r_sum += m.regulators.len() as f64;
                count += 1.0;
            }
            let in_module = |l: usize, j: usize| modules.iter().any(|m| m.genes.contains(&j) && m.regulators.contains(&l));
            for j in 0..dims.p {
                for l in 0..dims.q {
                    if !in_module(l, j) {
                        assert_eq!(theta[(l, j)], 0.0);
                    }
                }
            }
        }
        assert!((g_sum / count - 12.3).abs() < 0.2 * 12.3);
        assert!((r_sum / count - 16.6).abs() < 0.2 * 16.6);

    }

    #[test]
    fn theta2_mean_sizes() {
        let dims = SimConfig { theta_pattern: ThetaPattern::Theta2, ..SimConfig::default() }.dims();
        let (mut g, mut r, mut c) = (0.0, 0.0, 0.0);
        for seed in 0..50 {
            let (_, modules) = generate_theta(ThetaPattern::Theta2, &dims, &SeedStream::new(seed)).unwrap();
            for m in &modules {
                g += m.genes.len() as f64;
                r += m.regulators.len() as f64;
                c += 1.0;
            }
        }
        assert_eq!(c, 50.0 * 20.0);
        assert!((g / c - 6.0).abs() < 0.2 * 6.0);
        assert!((r / c - 8.1).abs() < 0.2 * 8.1);
    }

    fn sample_corr(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
        let (ca, cb) = (x.column(a), x.column(b));
        let (ma, mb) = (ca.mean(), cb.mean());
        let cov: f64 = ca.iter().zip(cb.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum();
        cov / (ca.variance().sqrt() * cb.variance().sqrt() * x.nrows() as f64)
    }

    #[test]
    fn regulator_correlation_moments() {
        let module = RegulatoryModule::from_sets(vec![0, 1, 2], vec![0, 1]);
        let seeds = SeedStream::new(9);
        let mut diag = Vec::new();
        let r1 = generate_regulators(CorrStructure::R1, &[module.clone()], 10_000, 5, &seeds, &mut diag).unwrap();
        assert!((sample_corr(&r1, 0, 1) + 0.5).abs() < 0.05);
        assert!((sample_corr(&r1, 0, 2) - 0.25).abs() < 0.05);
        assert!(sample_corr(&r1, 3, 4).abs() < 0.05);
        assert!(sample_corr(&r1, 0, 4).abs() < 0.05);
        let r2 = generate_regulators(CorrStructure::R2, &[module.clone()], 10_000, 5, &seeds, &mut diag).unwrap();
        assert!((sample_corr(&r2, 1, 2) + 0.5).abs() < 0.05);
        assert!(sample_corr(&r2, 0, 2).abs() < 0.05);
        let r3 = generate_regulators(CorrStructure::R3, &[module], 10_000, 5, &seeds, &mut diag).unwrap();
        assert!((sample_corr(&r3, 0, 1) + 0.2).abs() < 0.05);
        assert!((sample_corr(&r3, 0, 2) - 0.2).abs() < 0.05);
        assert!(diag.is_empty());
    }

    #[test]
    fn overlapping_module_keeps_its_correlation() {
        let a = RegulatoryModule::from_sets(vec![0, 1, 2, 3], vec![0]);
        let b = RegulatoryModule::from_sets(vec![2, 3, 4, 5], vec![1]);
        let mut diag = Vec::new();
        let r = generate_regulators(CorrStructure::R1, &[a, b], 20_000, 6, &SeedStream::new(4), &mut diag).unwrap();
        assert!((sample_corr(&r, 3, 4) + 0.5).abs() < 0.05);
        assert!((sample_corr(&r, 2, 4) - 0.25).abs() < 0.05);
        assert!((sample_corr(&r, 2, 3) + 0.5).abs() < 0.05);
        assert!((r.column(5).variance() - 1.0).abs() < 0.05);
    }

    #[test]
    fn repair_handles_indefinite_matrix() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let mut diag = Vec::new();
        let l = robust_cholesky(&bad, &mut diag);
        assert_eq!(diag.len(), 1);
        assert!(l.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn generation_is_deterministic_and_signal_in_range() {
        let cfg = config(ThetaPattern::Theta1, Placement::P1, 0.2);
        let (a, ta) = generate_dataset(&cfg).unwrap();
        let (b, _) = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        let (lo, hi) = Signal::B1.range();
        for s in 0..ta.model.beta.len() {
            for &v in ta.model.beta[s].iter() {
                assert!(v == 0.0 || (lo..hi).contains(&v));
            }
            for m in 0..cfg.m {
                for &v in ta.model.module_interaction(m, s).iter() {
                    assert!(v == 0.0 || (lo - 1e-12..hi + 1e-12).contains(&v));
                }
            }
        }
        assert_eq!(ta.dims.modules, 3);
        assert_eq!((ta.dims.p, ta.dims.q), (100, 100));
    }

    #[test]
    fn censoring_fraction_is_close_to_target() {
        let cfg = SimConfig { censoring: Some(0.3), ..config(ThetaPattern::Theta1, Placement::P1, 0.2) };
        let (ds, _) = generate_dataset(&cfg).unwrap();
        let d = ds.delta.unwrap();
        let frac = d.iter().filter(|x| !**x).count() as f64 / d.len() as f64;
        assert!((frac - 0.3).abs() < 0.05);
    }

    #[test]
    fn infeasible_dimensions_are_reported() {
        let cfg = SimConfig { p: 20, q: 20, ..SimConfig::default() };
        let err = generate_dataset(&cfg).unwrap_err().to_string();
        assert!(err.contains("planted modules need"), "{err}");
    }

    #[test]
    fn parse_names() {
        assert_eq!("r3".parse::<CorrStructure>().unwrap(), CorrStructure::R3);
        let err = "R9".parse::<CorrStructure>().unwrap_err().to_string();
        assert!(err.contains("R1, R2, R3"));
    }
}
