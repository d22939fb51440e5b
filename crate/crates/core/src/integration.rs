//! Integration of module members into principal-component blocks and assembly
//! of the leftover individual-feature matrix.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;

use crate::bicluster::RegulatoryModule;
use crate::data::{stack_entities, BlockKind, BlockMeta, Dataset, Entity, FeatureSet};
use crate::error::{structural, Result};
use crate::io::{format_f64, CsvTable};
use crate::par::{map_range, Execution};

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.80;

#[derive(Clone, Debug, PartialEq)]
pub struct ModulePca {
    /// n×p_s component scores.
    pub scores: DMatrix<f64>,
    /// k×p_s orthonormal loading vectors.
    pub loadings: DMatrix<f64>,
    pub explained: Vec<f64>,
    /// Column means removed before the decomposition.
    pub center: Vec<f64>,
}

/// PCA of a stacked module matrix keeping the fewest components whose
/// cumulative variance share reaches `threshold`.
pub fn module_pca(stacked: &DMatrix<f64>, threshold: f64) -> Result<ModulePca> {
    let (n, k) = stacked.shape();
    if n < 2 || k == 0 {
        return Err(structural(format!("module PCA needs n ≥ 2 and at least one column (got {n}×{k})")));
    }
    let center: Vec<f64> = stacked.column_iter().map(|c| c.mean()).collect();
    let mut centered = stacked.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-center[j]);
    }
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let var: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].powi(2)).collect();
    let total: f64 = var.iter().sum();
    if !(total > 1e-24 * stacked.norm_squared()) {
        return Err(structural("module PCA input has rank 0"));
    }
    let mut keep = 0;
    let mut cum = 0.0;
    for v in &var {
        keep += 1;
        cum += v;
        if cum / total >= threshold - 1e-12 {
            break;
        }
    }
    let mut loadings = DMatrix::zeros(k, keep);
    for (c, &i) in order.iter().take(keep).enumerate() {
        let mut v = v_t.row(i).transpose();
        // Largest-magnitude loading positive (first index on ties).
        let mut arg = 0;
        for r in 1..k {
            if v[r].abs() > v[arg].abs() {
                arg = r;
            }
        }
        if v[arg] < 0.0 {
            v.neg_mut();
        }
        loadings.set_column(c, &v);
    }
    let scores = &centered * &loadings;
    let explained = var.iter().take(keep).map(|v| v / total).collect();
    Ok(ModulePca {
        scores,
        loadings,
        explained,
        center,
    })
}

/// Module members in stacking order: genes then regulators.
pub fn module_members(module: &RegulatoryModule) -> Vec<Entity> {
    module
        .genes
        .iter()
        .map(|&j| Entity::Gene(j))
        .chain(module.regulators.iter().map(|&l| Entity::Regulator(l)))
        .collect()
}

/// Genes and regulators that belong to no module, genes first.
pub fn leftover_entities(p: usize, q: usize, modules: &[RegulatoryModule]) -> Vec<Entity> {
    let genes: BTreeSet<usize> = modules.iter().flat_map(|m| m.genes.iter().copied()).collect();
    let regs: BTreeSet<usize> = modules.iter().flat_map(|m| m.regulators.iter().copied()).collect();
    (0..p)
        .filter(|j| !genes.contains(j))
        .map(Entity::Gene)
        .chain((0..q).filter(|l| !regs.contains(l)).map(Entity::Regulator))
        .collect()
}

fn check_bounds(ds: &Dataset, modules: &[RegulatoryModule]) -> Result<()> {
    for (s, m) in modules.iter().enumerate() {
        if m.genes.is_empty() && m.regulators.is_empty() {
            return Err(structural(format!("module {s} is empty")));
        }
        if m.genes.iter().any(|&j| j >= ds.p()) || m.regulators.iter().any(|&l| l >= ds.q()) {
            return Err(structural(format!("module {s} indexes outside the dataset")));
        }
    }
    Ok(())
}

/// PCA blocks for every module plus the leftover individual features.
pub fn assemble_features(
    ds: &Dataset,
    modules: &[RegulatoryModule],
    threshold: f64,
    exec: Execution,
) -> Result<FeatureSet> {
    check_bounds(ds, modules)?;
    let blocks = map_range(exec, modules.len(), |s| -> Result<(DMatrix<f64>, BlockMeta)> {
        let members = module_members(&modules[s]);
        let pca = module_pca(&stack_entities(ds, &members), threshold)
            .map_err(|e| e.context(format!("module {}", s + 1)))?;
        let meta = BlockMeta {
            module_id: s + 1,
            kind: BlockKind::Pca,
            members,
            center: pca.center,
            loadings: pca.loadings,
            explained: pca.explained,
        };
        Ok((pca.scores, meta))
    });
    let mut x_blocks = Vec::with_capacity(modules.len());
    let mut block_meta = Vec::with_capacity(modules.len());
    for b in blocks {
        let (x, meta) = b?;
        x_blocks.push(x);
        block_meta.push(meta);
    }
    let z_meta = leftover_entities(ds.p(), ds.q(), modules);
    Ok(FeatureSet {
        x_blocks,
        z: stack_entities(ds, &z_meta),
        block_meta,
        z_meta,
    })
}

/// Module members used directly as grouped columns, without PCA.
pub fn assemble_raw_groups(ds: &Dataset, modules: &[RegulatoryModule]) -> Result<FeatureSet> {
    check_bounds(ds, modules)?;
    let mut x_blocks = Vec::new();
    let mut block_meta = Vec::new();
    for (s, m) in modules.iter().enumerate() {
        let members = module_members(m);
        let k = members.len();
        x_blocks.push(stack_entities(ds, &members));
        block_meta.push(BlockMeta {
            module_id: s + 1,
            kind: BlockKind::Raw,
            members,
            center: vec![0.0; k],
            loadings: DMatrix::identity(k, k),
            explained: Vec::new(),
        });
    }
    let z_meta = leftover_entities(ds.p(), ds.q(), modules);
    Ok(FeatureSet {
        x_blocks,
        z: stack_entities(ds, &z_meta),
        block_meta,
        z_meta,
    })
}

/// Long-format loadings export: `module_id,component,entity_type,entity_index,loading`.
pub fn loadings_table(fs: &FeatureSet) -> CsvTable {
    let mut t = CsvTable::new(&["module_id", "component", "entity_type", "entity_index", "loading"]);
    for b in &fs.block_meta {
        for c in 0..b.width() {
            for (k, e) in b.members.iter().enumerate() {
                t.push(vec![
                    b.module_id.to_string(),
                    (c + 1).to_string(),
                    e.kind().to_string(),
                    e.index().to_string(),
                    format_f64(b.loadings[(k, c)]),
                ]);
            }
        }
    }
    t
}

pub fn write_scores(fs: &FeatureSet, path: &Path) -> Result<()> {
    let mut names = Vec::new();
    let widths: usize = fs.block_widths().iter().sum();
    let mut all = DMatrix::zeros(fs.n(), widths);
    let mut col = 0;
    for (b, x) in fs.block_meta.iter().zip(&fs.x_blocks) {
        for c in 0..x.ncols() {
            names.push(format!("module{}_pc{}", b.module_id, c + 1));
            all.set_column(col, &x.column(c));
            col += 1;
        }
    }
    crate::io::write_matrix_csv(path, &names, &all)
}
