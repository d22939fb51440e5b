//! Dataset containers, standardization and the integrated feature design.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{structural, Error, Result};
use crate::io::{read_matrix_csv, write_matrix_csv, write_text};

/// A molecular measurement: a gene expression column of `G` or a regulator column of `R`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Entity {
    Gene(usize),
    Regulator(usize),
}

impl Entity {
    pub fn kind(&self) -> &'static str {
        match self {
            Entity::Gene(_) => "gene",
            Entity::Regulator(_) => "regulator",
        }
    }

    pub fn index(&self) -> usize {
        match *self {
            Entity::Gene(j) | Entity::Regulator(j) => j,
        }
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind(), self.index())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    Genes,
    Regulators,
    Environment,
}

/// The universal input: gene expressions `G` (n×p), regulators `R` (n×q),
/// environmental factors `E` (n×M), outcome `Y`, and optional event indicators.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub g: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Event indicators; present exactly in survival mode.
    pub delta: Option<Vec<bool>>,
    pub gene_names: Vec<String>,
    pub regulator_names: Vec<String>,
    pub env_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with generated column names, validating shapes.
    pub fn new(
        g: DMatrix<f64>,
        r: DMatrix<f64>,
        e: DMatrix<f64>,
        y: DVector<f64>,
        delta: Option<Vec<bool>>,
    ) -> Result<Self> {
        let gene_names = (0..g.ncols()).map(|j| format!("g{}", j + 1)).collect();
        let regulator_names = (0..r.ncols()).map(|j| format!("r{}", j + 1)).collect();
        let env_names = (0..e.ncols()).map(|j| format!("e{}", j + 1)).collect();
        let ds = Self {
            g,
            r,
            e,
            y,
            delta,
            gene_names,
            regulator_names,
            env_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn p(&self) -> usize {
        self.g.ncols()
    }
    pub fn q(&self) -> usize {
        self.r.ncols()
    }
    pub fn m(&self) -> usize {
        self.e.ncols()
    }

    pub fn is_survival(&self) -> bool {
        self.delta.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        for (name, rows) in [("G", self.g.nrows()), ("R", self.r.nrows()), ("E", self.e.nrows())] {
            if rows != n {
                return Err(structural(format!(
                    "row count mismatch: {name} has {rows} rows, Y has {n}"
                )));
            }
        }
        if n < 2 {
            return Err(structural(format!("need at least 2 subjects, got {n}")));
        }
        if self.p() == 0 || self.q() == 0 || self.m() == 0 {
            return Err(structural(format!(
                "empty block: p={}, q={}, M={}",
                self.p(),
                self.q(),
                self.m()
            )));
        }
        if let Some(d) = &self.delta {
            if d.len() != n {
                return Err(structural(format!(
                    "event indicator has {} entries, Y has {n}",
                    d.len()
                )));
            }
        }
        if self.gene_names.len() != self.p()
            || self.regulator_names.len() != self.q()
            || self.env_names.len() != self.m()
        {
            return Err(structural("column name count does not match matrix width"));
        }
        let finite = self.g.iter().chain(self.r.iter()).chain(self.e.iter()).chain(self.y.iter());
        if finite.clone().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dataset contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn entity_name(&self, entity: Entity) -> &str {
        match entity {
            Entity::Gene(j) => &self.gene_names[j],
            Entity::Regulator(l) => &self.regulator_names[l],
        }
    }

    /// Column of `G` or `R` for an entity.
    pub fn entity_column(&self, entity: Entity) -> nalgebra::DVectorView<'_, f64> {
        match entity {
            Entity::Gene(j) => self.g.column(j),
            Entity::Regulator(l) => self.r.column(l),
        }
    }

    /// Subset of subjects, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)]);
        Dataset {
            g: pick(&self.g),
            r: pick(&self.r),
            e: pick(&self.e),
            y: DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]),
            delta: self.delta.as_ref().map(|d| rows.iter().map(|&i| d[i]).collect()),
            gene_names: self.gene_names.clone(),
            regulator_names: self.regulator_names.clone(),
            env_names: self.env_names.clone(),
        }
    }

    /// Column-standardizes `G`, `R` and `E` (mean 0, sd 1 with denominator n−1).
    pub fn standardize(&self) -> Result<(Dataset, Standardization)> {
        self.validate()?;
        let st = Standardization::fit(self);
        let out = st.apply(self)?;
        Ok((out, st))
    }

    /// Subtracts the mean of `Y`; returns the mean removed.
    pub fn center_outcome(&self) -> (Dataset, f64) {
        let mean = self.y.mean();
        let mut out = self.clone();
        out.y.add_scalar_mut(-mean);
        (out, mean)
    }
}

/// Column location/scale estimates, reusable on held-out subjects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub g: ColumnScaling,
    pub r: ColumnScaling,
    pub e: ColumnScaling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Columns with (numerically) zero variance; standardized to all zeros.
    pub zero_variance: Vec<usize>,
}

impl ColumnScaling {
    pub fn fit(m: &DMatrix<f64>) -> Self {
        let n = m.nrows() as f64;
        let mut means = Vec::with_capacity(m.ncols());
        let mut sds = Vec::with_capacity(m.ncols());
        let mut zero_variance = Vec::new();
        for (j, col) in m.column_iter().enumerate() {
            let mean = col.sum() / n;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            let sd = (ss / (n - 1.0)).sqrt();
            if !(sd > 1e-12 * mean.abs().max(1.0)) {
                zero_variance.push(j);
            }
            means.push(mean);
            sds.push(sd);
        }
        Self {
            means,
            sds,
            zero_variance,
        }
    }

    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.ncols() != self.means.len() {
            return Err(structural(format!(
                "scaling fitted on {} columns applied to {}",
                self.means.len(),
                m.ncols()
            )));
        }
        let mut out = m.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            if self.zero_variance.binary_search(&j).is_ok() {
                col.fill(0.0);
            } else {
                let (mu, sd) = (self.means[j], self.sds[j]);
                col.iter_mut().for_each(|v| *v = (*v - mu) / sd);
            }
        }
        Ok(out)
    }
}

impl Standardization {
    pub fn fit(ds: &Dataset) -> Self {
        Self {
            g: ColumnScaling::fit(&ds.g),
            r: ColumnScaling::fit(&ds.r),
            e: ColumnScaling::fit(&ds.e),
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let mut out = ds.clone();
        out.g = self.g.apply(&ds.g)?;
        out.r = self.r.apply(&ds.r)?;
        out.e = self.e.apply(&ds.e)?;
        Ok(out)
    }

    pub fn zero_variance(&self) -> Vec<(Block, usize)> {
        let tag = |b: Block, s: &ColumnScaling| s.zero_variance.iter().map(move |&j| (b, j)).collect::<Vec<_>>();
        let mut all = tag(Block::Genes, &self.g);
        all.extend(tag(Block::Regulators, &self.r));
        all.extend(tag(Block::Environment, &self.e));
        all
    }
}

/// Paths named by a dataset manifest, relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub genes: PathBuf,
    pub regulators: PathBuf,
    pub environment: PathBuf,
    pub outcome: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_indicator: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(1),
            message: e.message().to_string(),
        })
    }
}

/// Reads a manifest and the matrices it names.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| base.join(p);

    let genes_path = resolve(&manifest.genes);
    let g = read_matrix_csv(&genes_path)?;
    let r = read_matrix_csv(&resolve(&manifest.regulators))?;
    let e = read_matrix_csv(&resolve(&manifest.environment))?;
    let outcome_path = resolve(&manifest.outcome);
    let y = read_matrix_csv(&outcome_path)?;
    if y.values.ncols() != 1 {
        return Err(structural(format!(
            "{}: outcome file must have exactly one column, found {}",
            outcome_path.display(),
            y.values.ncols()
        )));
    }
    let n = y.values.nrows();
    let check_rows = |path: &Path, rows: usize| -> Result<()> {
        if rows != n {
            return Err(structural(format!(
                "row-count mismatch: {} has {rows} rows but {} has {n}",
                path.display(),
                outcome_path.display()
            )));
        }
        Ok(())
    };
    check_rows(&genes_path, g.values.nrows())?;
    check_rows(&resolve(&manifest.regulators), r.values.nrows())?;
    check_rows(&resolve(&manifest.environment), e.values.nrows())?;

    let delta = match &manifest.event_indicator {
        None => None,
        Some(rel) => {
            let path = resolve(rel);
            let d = read_matrix_csv(&path)?;
            check_rows(&path, d.values.nrows())?;
            if d.values.ncols() != 1 {
                return Err(structural(format!(
                    "{}: event indicator must have one column",
                    path.display()
                )));
            }
            let mut flags = Vec::with_capacity(n);
            for (i, &v) in d.values.iter().enumerate() {
                flags.push(match v {
                    x if x == 0.0 => false,
                    x if x == 1.0 => true,
                    other => {
                        return Err(Error::Parse {
                            file: path.clone(),
                            line: i + 2,
                            message: format!("event indicator must be 0 or 1, found {other}"),
                        })
                    }
                });
            }
            Some(flags)
        }
    };

    let ds = Dataset {
        g: g.values,
        r: r.values,
        e: e.values,
        y: DVector::from_column_slice(y.values.as_slice()),
        delta,
        gene_names: g.names,
        regulator_names: r.names,
        env_names: e.names,
    };
    ds.validate().map_err(|err| err.context(manifest_path.display().to_string()))?;
    Ok(ds)
}

/// Writes the dataset as CSV files plus a manifest named `manifest.toml` in `dir`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix_csv(&dir.join("genes.csv"), &ds.gene_names, &ds.g)?;
    write_matrix_csv(&dir.join("regulators.csv"), &ds.regulator_names, &ds.r)?;
    write_matrix_csv(&dir.join("environment.csv"), &ds.env_names, &ds.e)?;
    write_matrix_csv(
        &dir.join("outcome.csv"),
        &["Y".to_string()],
        &DMatrix::from_column_slice(ds.n(), 1, ds.y.as_slice()),
    )?;
    let mut manifest = DatasetManifest {
        genes: "genes.csv".into(),
        regulators: "regulators.csv".into(),
        environment: "environment.csv".into(),
        outcome: "outcome.csv".into(),
        event_indicator: None,
    };
    if let Some(d) = &ds.delta {
        let col: Vec<f64> = d.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        write_matrix_csv(
            &dir.join("event.csv"),
            &["delta".to_string()],
            &DMatrix::from_column_slice(ds.n(), 1, &col),
        )?;
        manifest.event_indicator = Some("event.csv".into());
    }
    let path = dir.join("manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| structural(e.to_string()))?;
    write_text(&path, &text)?;
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    /// Principal-component scores of the stacked members.
    Pca,
    /// The member columns themselves.
    Raw,
}

/// Provenance of one module block of the integrated design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockMeta {
    pub module_id: usize,
    pub kind: BlockKind,
    /// Stacked source columns: the module's genes followed by its regulators.
    pub members: Vec<Entity>,
    /// Column means of the stacked matrix removed before projection.
    pub center: Vec<f64>,
    /// `members.len() × p_s` projection; identity columns for raw (non-PCA) blocks.
    pub loadings: DMatrix<f64>,
    /// Fraction of variance explained by each retained component.
    pub explained: Vec<f64>,
}

impl BlockMeta {
    pub fn width(&self) -> usize {
        self.loadings.ncols()
    }

    /// Block scores for `ds`: centered stacked members times loadings.
    pub fn scores(&self, ds: &Dataset) -> DMatrix<f64> {
        let stacked = stack_entities(ds, &self.members);
        let mut centered = stacked;
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.center[j]);
        }
        centered * &self.loadings
    }
}

/// Integrated input for interaction fitting: module blocks `X_s` and the
/// leftover individual features `Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub x_blocks: Vec<DMatrix<f64>>,
    pub z: DMatrix<f64>,
    pub block_meta: Vec<BlockMeta>,
    pub z_meta: Vec<Entity>,
}

impl FeatureSet {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn num_modules(&self) -> usize {
        self.x_blocks.len()
    }

    pub fn block_widths(&self) -> Vec<usize> {
        self.x_blocks.iter().map(|b| b.ncols()).collect()
    }

    pub fn p_z(&self) -> usize {
        self.z.ncols()
    }

    /// Re-derives the design for other subjects (e.g. a held-out split) using
    /// the stored provenance and projections.
    pub fn transform(&self, ds: &Dataset) -> FeatureSet {
        FeatureSet {
            x_blocks: self.block_meta.iter().map(|b| b.scores(ds)).collect(),
            z: stack_entities(ds, &self.z_meta),
            block_meta: self.block_meta.clone(),
            z_meta: self.z_meta.clone(),
        }
    }

    /// A design with no modules and the given entities as individual features.
    pub fn individual(ds: &Dataset, entities: Vec<Entity>) -> FeatureSet {
        FeatureSet {
            x_blocks: Vec::new(),
            z: stack_entities(ds, &entities),
            block_meta: Vec::new(),
            z_meta: entities,
        }
    }
}

/// Columns of `G`/`R` for the given entities, side by side.
pub fn stack_entities(ds: &Dataset, entities: &[Entity]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(ds.n(), entities.len());
    for (k, &e) in entities.iter().enumerate() {
        out.set_column(k, &ds.entity_column(e));
    }
    out
}

/// Every gene followed by every regulator.
pub fn all_entities(p: usize, q: usize) -> Vec<Entity> {
    (0..p).map(Entity::Gene).chain((0..q).map(Entity::Regulator)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small(n: usize) -> Dataset {
        let mut rng = crate::seed::rng_from(3);
        let mut draw = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * 4.0 - 1.0);
        let g = draw(n, 4);
        let r = draw(n, 3);
        let e = draw(n, 2);
        let y = DVector::from_fn(n, |i, _| i as f64);
        Dataset::new(g, r, e, y, None).unwrap()
    }

    #[test]
    fn standardizes_simple_column() {
        let g = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 5.0, 5.0, 5.0]);
        let r = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let e = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let ds = Dataset::new(g, r, e, DVector::from_vec(vec![1.0, 2.0, 3.0]), None).unwrap();
        let (out, st) = ds.standardize().unwrap();
        assert_eq!(out.g.column(0).as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(out.g.column(1).as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(st.zero_variance(), vec![(Block::Genes, 1)]);
    }

    #[test]
    fn standardized_moments_and_idempotence() {
        let ds = small(50);
        let (a, _) = ds.standardize().unwrap();
        for m in [&a.g, &a.r, &a.e] {
            for col in m.column_iter() {
                let mean = col.mean();
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
                assert!(mean.abs() < 1e-10);
                assert!((sd - 1.0).abs() < 1e-10);
            }
        }
        let (b, _) = a.standardize().unwrap();
        assert!((&b.g - &a.g).amax() < 1e-10);
        assert!((&b.e - &a.e).amax() < 1e-10);
    }

    #[test]
    fn centering_outcome() {
        let (c, mean) = small(10).center_outcome();
        assert!((mean - 4.5).abs() < 1e-12);
        assert!(c.y.mean().abs() < 1e-10);
    }

    #[test]
    fn rejects_row_mismatch() {
        let err = Dataset::new(
            DMatrix::zeros(3, 1),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(3, 1),
            DVector::zeros(3),
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("R has 2 rows"));
    }

    #[test]
    fn transform_reproduces_individual_design() {
        let ds = small(8);
        let fs = FeatureSet::individual(&ds, vec![Entity::Regulator(2), Entity::Gene(0)]);
        assert_eq!(fs.z.column(0), ds.r.column(2));
        assert_eq!(fs.transform(&ds), fs);
    }
}
