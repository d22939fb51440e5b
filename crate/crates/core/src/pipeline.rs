//! The three-step analysis (regulation, modules, interaction model) and the
//! four comparison variants, wired end to end.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bicluster::{extract_modules, BiclusterConfig, RegulatoryModule};
use crate::data::{all_entities, BlockMeta, Dataset, Entity, FeatureSet, Standardization};
use crate::error::{structural, Error, Result};
use crate::integration::{assemble_features, assemble_raw_groups, DEFAULT_VARIANCE_THRESHOLD};
use crate::interact::{
    default_grid, ebic_select, km_weights, predict, CdOptions, EbicResult, FittedModel, GridSpec, Identified,
    SurvivalWeights,
};
use crate::par::Execution;
use crate::regulation::{estimate_regulation, LambdaRule, RegulationMatrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Regulation, module PCA integration and the hierarchical model.
    #[default]
    Proposed,
    /// Module members grouped directly, without PCA.
    Alt1,
    /// PCA modules with interactions penalized independently of mains.
    Alt2,
    /// Hierarchical model on the stacked raw measurements.
    Alt3,
    /// Plain lasso on the stacked raw measurements and all interactions.
    Alt4,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Proposed, Variant::Alt1, Variant::Alt2, Variant::Alt3, Variant::Alt4];

    pub fn uses_modules(self) -> bool {
        matches!(self, Variant::Proposed | Variant::Alt1 | Variant::Alt2)
    }

    pub fn hierarchical(self) -> bool {
        matches!(self, Variant::Proposed | Variant::Alt1 | Variant::Alt3)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Proposed => "proposed",
            Variant::Alt1 => "alt1",
            Variant::Alt2 => "alt2",
            Variant::Alt3 => "alt3",
            Variant::Alt4 => "alt4",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| structural(format!("unknown variant '{s}' (expected proposed, alt1, alt2, alt3 or alt4)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub lambda_rule: LambdaRule,
    pub bicluster: BiclusterConfig,
    pub variance_threshold: f64,
    pub grid: GridSpec,
    pub gamma_ebic: f64,
    pub cd: CdOptions,
    /// Fixed penalties; both must be set to bypass EBIC tuning.
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lambda_rule: LambdaRule::default(),
            bicluster: BiclusterConfig::default(),
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            grid: GridSpec::default(),
            gamma_ebic: 1.0,
            cd: CdOptions::default(),
            lambda1: None,
            lambda2: None,
        }
    }
}

/// Everything needed to score new subjects with a fitted pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub variant: Variant,
    pub standardization: Standardization,
    pub block_meta: Vec<BlockMeta>,
    pub z_meta: Vec<Entity>,
    pub model: FittedModel,
    pub gene_names: Vec<String>,
    pub regulator_names: Vec<String>,
    pub env_names: Vec<String>,
}

impl SavedModel {
    pub fn predict(&self, ds: &Dataset) -> Result<DVector<f64>> {
        if ds.p() != self.gene_names.len() || ds.q() != self.regulator_names.len() || ds.m() != self.env_names.len() {
            return Err(structural(format!(
                "dataset has {}/{}/{} gene/regulator/environment columns, model expects {}/{}/{}",
                ds.p(),
                ds.q(),
                ds.m(),
                self.gene_names.len(),
                self.regulator_names.len(),
                self.env_names.len()
            )));
        }
        let std = self.standardization.apply(ds)?;
        let template = FeatureSet {
            x_blocks: Vec::new(),
            z: nalgebra::DMatrix::zeros(0, 0),
            block_meta: self.block_meta.clone(),
            z_meta: self.z_meta.clone(),
        };
        let fs = template.transform(&std);
        predict(&self.model, &fs, &std.e)
    }
}

#[derive(Clone, Debug)]
pub struct PipelineFit {
    pub variant: Variant,
    pub standardization: Standardization,
    pub regulation: Option<RegulationMatrix>,
    pub modules: Vec<RegulatoryModule>,
    pub features: FeatureSet,
    pub weights: Option<SurvivalWeights>,
    pub ebic: Option<EbicResult>,
    pub model: FittedModel,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
}

impl PipelineFit {
    pub fn selection(&self) -> Identified {
        self.model.identify(&self.features)
    }

    pub fn saved(&self, ds: &Dataset) -> SavedModel {
        SavedModel {
            variant: self.variant,
            standardization: self.standardization.clone(),
            block_meta: self.features.block_meta.clone(),
            z_meta: self.features.z_meta.clone(),
            model: self.model.clone(),
            gene_names: ds.gene_names.clone(),
            regulator_names: ds.regulator_names.clone(),
            env_names: ds.env_names.clone(),
        }
    }

    pub fn total_seconds(&self) -> f64 {
        self.timings.iter().map(|(_, s)| s).sum()
    }
}

fn timed<T>(timings: &mut Vec<(String, f64)>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.context(stage.to_string()))?;
    timings.push((stage.to_string(), start.elapsed().as_secs_f64()));
    Ok(out)
}

/// Runs the selected variant on `ds`. Survival mode is used when `ds` carries
/// event indicators, with `ds.y` holding log observed times.
pub fn run_pipeline(ds: &Dataset, variant: Variant, cfg: &PipelineConfig, exec: Execution) -> Result<PipelineFit> {
    let tag = |e: Error| e.context(format!("variant {variant}"));
    run_inner(ds, variant, cfg, exec).map_err(tag)
}

fn run_inner(ds: &Dataset, variant: Variant, cfg: &PipelineConfig, exec: Execution) -> Result<PipelineFit> {
    let mut timings = Vec::new();
    let (std, standardization) = timed(&mut timings, "standardize", || ds.standardize())?;
    let weights = match &std.delta {
        Some(delta) => Some(km_weights(std.y.as_slice(), delta)),
        None => None,
    };

    let mut regulation = None;
    let mut modules = Vec::new();
    if variant.uses_modules() {
        let fit = timed(&mut timings, "regulation", || estimate_regulation(&std, cfg.lambda_rule, exec))?;
        modules = timed(&mut timings, "modules", || extract_modules(&fit, &cfg.bicluster, exec))?;
        regulation = Some(fit);
    }
    let features = timed(&mut timings, "integration", || match variant {
        Variant::Proposed | Variant::Alt2 => assemble_features(&std, &modules, cfg.variance_threshold, exec),
        Variant::Alt1 => assemble_raw_groups(&std, &modules),
        Variant::Alt3 | Variant::Alt4 => Ok(FeatureSet::individual(&std, all_entities(std.p(), std.q()))),
    })?;

    let cd = CdOptions {
        hierarchical: variant.hierarchical(),
        ..cfg.cd.clone()
    };
    let w = weights.as_ref();
    let (model, ebic) = timed(&mut timings, "interaction", || match (cfg.lambda1, cfg.lambda2) {
        (Some(l1), Some(l2)) => Ok((crate::interact::cd_fit(&features, &std.e, &std.y, l1, l2, w, &cd, None)?, None)),
        _ => {
            let (g1, g2) = default_grid(&features, &std.e, &std.y, w, cd.hierarchical, &cfg.grid)?;
            let res = ebic_select(&features, &std.e, &std.y, &g1, &g2, cfg.gamma_ebic, w, &cd, exec)?;
            Ok((res.model.clone(), Some(res)))
        }
    })?;

    Ok(PipelineFit {
        variant,
        standardization,
        regulation,
        modules,
        features,
        weights,
        ebic,
        model,
        timings,
    })
}
