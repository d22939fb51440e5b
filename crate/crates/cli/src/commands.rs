use std::fs;
use std::path::{Path, PathBuf};

use meint::bicluster::{module_stats_table, modules_table};
use meint::data::{load_dataset, save_dataset, Dataset, Entity};
use meint::integration::loadings_table;
use meint::interact::{coefficient_table, environment_table, Identified};
use meint::io::{format_f64, CsvTable};
use meint::par::Execution;
use meint::pipeline::{run_pipeline, SavedModel};
use meint::simbench::{
    concordance_ipcw, evaluate_resampling, generate_dataset, pmse, rows_table, run_benchmark, summary_table,
    BenchConfig, PredictionMetric,
};

use crate::audit::audit_hierarchy;
use crate::config::RunConfig;
use crate::output::Output;
use crate::prescreen::prescreen;
use crate::CliError;

const EXEC: Execution = Execution::Parallel;

fn kv_table(rows: &[(&str, String)]) -> CsvTable {
    let mut t = CsvTable::new(&["key", "value"]);
    for (k, v) in rows {
        t.push(vec![k.to_string(), v.clone()]);
    }
    t
}

fn selection_table(sel: &Identified, ds: &Dataset) -> CsvTable {
    let mut t = CsvTable::new(&["entity_type", "entity_name", "term"]);
    for e in &sel.mains {
        t.push(vec![e.kind().into(), ds.entity_name(*e).into(), "main".into()]);
    }
    for (e, m) in &sel.interactions {
        t.push(vec![e.kind().into(), ds.entity_name(*e).into(), ds.env_names[*m].clone()]);
    }
    t
}

fn entity_namer(ds: &Dataset) -> impl Fn(Entity) -> String + '_ {
    move |e| ds.entity_name(e).to_string()
}

fn load(manifest: &Path) -> Result<Dataset, CliError> {
    load_dataset(manifest).map_err(CliError::stage("load"))
}

/// Every file named by a dataset manifest, plus the manifest itself.
fn dataset_inputs(manifest: &Path) -> Vec<PathBuf> {
    let mut out = vec![manifest.to_path_buf()];
    if let Ok(m) = meint::data::DatasetManifest::read(manifest) {
        let base = manifest.parent().unwrap_or(Path::new("."));
        out.extend([&m.genes, &m.regulators, &m.environment, &m.outcome].map(|p| base.join(p)));
        out.extend(m.event_indicator.map(|p| base.join(p)));
    }
    out
}

pub fn simulate(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let sim = &cfg.simulate;
    let (ds, truth) = generate_dataset(sim).map_err(CliError::stage("simulate"))?;
    let mut out = Output::create(out_dir)?;

    let manifest = save_dataset(&ds, &out.path("data")).map_err(|e| CliError::Io(e.to_string()))?;
    let data_dir = manifest.parent().expect("manifest lives in a directory").to_path_buf();
    for name in ["genes.csv", "regulators.csv", "environment.csv", "outcome.csv", "event.csv"] {
        let p = data_dir.join(name);
        if p.exists() {
            out.record(p);
        }
    }
    out.record(manifest);

    out.table("truth/effects.csv", &truth.effects_table(&ds))?;
    out.table("truth/theta.csv", &truth.theta_triplets())?;
    out.table("truth/modules.csv", &modules_table(&truth.modules, Some(&ds)))?;
    out.table(
        "truth/coefficients.csv",
        &coefficient_table(&truth.model, &truth.features, &entity_namer(&ds), &ds.env_names),
    )?;

    let d = truth.dims;
    let censored = ds.delta.as_ref().map(|dl| dl.iter().filter(|x| !**x).count() as f64 / dl.len() as f64);
    let report = [
        ("n", d.n.to_string()),
        ("p", d.p.to_string()),
        ("q", d.q.to_string()),
        ("m", d.m.to_string()),
        ("modules", d.modules.to_string()),
        ("theta_pattern", sim.theta_pattern.to_string()),
        ("corr", sim.corr.to_string()),
        ("placement", sim.placement.to_string()),
        ("signal", sim.signal.to_string()),
        ("scale_factor", format_f64(sim.scale_factor)),
        ("seed", sim.seed.to_string()),
        ("effect_units", truth.effects.len().to_string()),
        ("important_main", truth.important_main().len().to_string()),
        ("important_interactions", truth.important_inter().len().to_string()),
        ("important_total", (truth.important_main().len() + truth.important_inter().len()).to_string()),
        ("censored_fraction", censored.map(format_f64).unwrap_or_else(|| "NA".into())),
    ];
    out.table("simulation.csv", &kv_table(&report))?;
    for note in &truth.diagnostics {
        eprintln!("note: {note}");
    }
    println!(
        "simulated n={} p={} q={} m={} modules={}; {} main effects, {} interactions",
        d.n,
        d.p,
        d.q,
        d.m,
        d.modules,
        truth.important_main().len(),
        truth.important_inter().len()
    );
    out.finish("simulate", cfg, &[])?;
    Ok(())
}

pub fn fit(cfg: &RunConfig, out_dir: &Path, manifest: &Path) -> Result<(), CliError> {
    let variant = cfg.variant;
    let mut ds = load(manifest)?;
    let mut out = Output::create(out_dir)?;
    if let Some(k) = cfg.prescreen {
        let (reduced, table) = prescreen(&ds, k)?;
        out.table("prescreen.csv", &table)?;
        ds = reduced;
    }
    let fit = run_pipeline(&ds, variant, &cfg.pipeline, EXEC).map_err(CliError::stage("fit"))?;

    if let Some(reg) = &fit.regulation {
        out.table("regulation.csv", &reg.to_triplets())?;
    }
    if variant.uses_modules() {
        out.table("modules.csv", &modules_table(&fit.modules, Some(&ds)))?;
        out.table("module_stats.csv", &module_stats_table(&fit.modules))?;
        out.table("loadings.csv", &loadings_table(&fit.features))?;
    }
    out.table(
        "coefficients.csv",
        &coefficient_table(&fit.model, &fit.features, &entity_namer(&ds), &ds.env_names),
    )?;
    out.table("environment.csv", &environment_table(&fit.model, &ds.env_names))?;
    out.table("selected.csv", &selection_table(&fit.selection(), &ds))?;

    let mut trace = CsvTable::new(&["iteration", "objective"]);
    for (i, v) in fit.model.objective_trace.iter().enumerate() {
        trace.push(vec![i.to_string(), format_f64(*v)]);
    }
    out.table("objective_trace.csv", &trace)?;
    if let Some(ebic) = &fit.ebic {
        out.table("ebic.csv", &ebic.table())?;
    }
    let mut timing = CsvTable::new(&["stage", "seconds"]);
    for (stage, s) in &fit.timings {
        timing.push(vec![stage.clone(), format!("{s:.6}")]);
    }
    out.table("timing.csv", &timing)?;
    if let Some(w) = &fit.weights {
        let mut t = CsvTable::new(&["subject", "weight"]);
        for (i, v) in w.by_subject().iter().enumerate() {
            t.push(vec![(i + 1).to_string(), format_f64(*v)]);
        }
        out.table("weights.csv", &t)?;
    }
    let saved = fit.saved(&ds);
    let json = serde_json::to_string_pretty(&saved).map_err(|e| CliError::Io(format!("model.json: {e}")))?;
    out.text("model.json", &json)?;

    for note in &fit.model.diagnostics {
        eprintln!("note: {note}");
    }
    let sel = fit.selection();
    println!(
        "{variant}: {} modules, lambda1={} lambda2={}, {} main effects and {} interactions selected",
        fit.modules.len(),
        format_f64(fit.model.lambda1),
        format_f64(fit.model.lambda2),
        sel.mains.len(),
        sel.interactions.len()
    );

    // The audit reads the table back from disk, independent of the fit.
    let audit = if variant.hierarchical() {
        let report = audit_hierarchy(&out.path("coefficients.csv"))?;
        let status = if report.passed() { "pass" } else { "fail" };
        out.table(
            "audit.csv",
            &kv_table(&[
                ("check", "hierarchy".into()),
                ("groups", report.groups.to_string()),
                ("violations", report.violations.join(" ")),
                ("status", status.into()),
            ]),
        )?;
        Some(report)
    } else {
        None
    };
    out.finish("fit", cfg, &dataset_inputs(manifest))?;
    match audit {
        Some(r) if !r.passed() => Err(CliError::Audit(format!(
            "interactions without a main effect in groups {}",
            r.violations.join(", ")
        ))),
        _ => Ok(()),
    }
}

/// Restricts `ds` to the molecular columns the model was fitted on, matched by
/// name, so models fitted after prescreening score unscreened data.
fn align_columns(ds: Dataset, model: &SavedModel) -> Result<Dataset, CliError> {
    if ds.gene_names == model.gene_names && ds.regulator_names == model.regulator_names {
        return Ok(ds);
    }
    let pick = |have: &[String], want: &[String], what: &str| -> Result<Vec<usize>, CliError> {
        want.iter()
            .map(|w| {
                have.iter()
                    .position(|h| h == w)
                    .ok_or_else(|| CliError::Usage(format!("dataset has no {what} column '{w}' required by the model")))
            })
            .collect()
    };
    let gi = pick(&ds.gene_names, &model.gene_names, "gene")?;
    let ri = pick(&ds.regulator_names, &model.regulator_names, "regulator")?;
    Ok(Dataset {
        g: ds.g.select_columns(&gi),
        r: ds.r.select_columns(&ri),
        gene_names: model.gene_names.clone(),
        regulator_names: model.regulator_names.clone(),
        ..ds
    })
}

pub fn predict(cfg: &RunConfig, out_dir: &Path, model_path: &Path, manifest: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(model_path).map_err(|e| CliError::Io(format!("{}: {e}", model_path.display())))?;
    let model: SavedModel =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", model_path.display())))?;
    let ds = align_columns(load(manifest)?, &model)?;
    let pred = model.predict(&ds).map_err(CliError::stage("predict"))?;

    let mut out = Output::create(out_dir)?;
    let mut t = CsvTable::new(&["subject", "prediction"]);
    for (i, v) in pred.iter().enumerate() {
        t.push(vec![(i + 1).to_string(), format_f64(*v)]);
    }
    out.table("predictions.csv", &t)?;

    // Survival concordance uses the scored data's own censoring distribution.
    let metric = match &ds.delta {
        None => ("pmse", Some(pmse(&ds.y, &pred))),
        Some(d) => ("c_statistic", concordance_ipcw(ds.y.as_slice(), d, ds.y.as_slice(), d, pred.as_slice())),
    };
    let value = metric.1.map(format_f64).unwrap_or_else(|| "NA".into());
    out.table("metrics.csv", &kv_table(&[(metric.0, value.clone())]))?;
    println!("{} subjects scored; {} = {value}", pred.len(), metric.0);

    let mut inputs = dataset_inputs(manifest);
    inputs.push(model_path.to_path_buf());
    out.finish("predict", cfg, &inputs)?;
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, out_dir: &Path, manifest: &Path) -> Result<(), CliError> {
    let ds = load(manifest)?;
    let ev = &cfg.evaluate;
    let report = evaluate_resampling(&ds, cfg.variant, &cfg.pipeline, ev.splits, ev.ratio, cfg.seed, EXEC)
        .map_err(CliError::stage("evaluate"))?;
    let mut out = Output::create(out_dir)?;
    let metric = match report.metric {
        PredictionMetric::Pmse => "pmse",
        PredictionMetric::CStatistic => "c_statistic",
    };
    let valid = report.per_split.iter().filter(|v| v.is_some()).count();
    out.table(
        "evaluation.csv",
        &kv_table(&[
            ("variant", cfg.variant.to_string()),
            ("metric", metric.into()),
            ("value", format_f64(report.value)),
            ("splits", ev.splits.to_string()),
            ("valid_splits", valid.to_string()),
            ("ratio", format_f64(ev.ratio)),
        ]),
    )?;
    out.table("splits.csv", &report.splits_table())?;
    out.table("ooi.csv", &report.ooi_table(&ds))?;
    for note in &report.diagnostics {
        eprintln!("note: {note}");
    }
    println!("{}: mean {metric} {} over {valid} splits", cfg.variant, format_f64(report.value));
    out.finish("evaluate", cfg, &dataset_inputs(manifest))?;
    Ok(())
}

pub fn benchmark(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let bench = BenchConfig {
        sim: cfg.simulate.clone(),
        scenarios: cfg.benchmark.scenarios.clone(),
        replicates: cfg.benchmark.replicates,
        variants: cfg.benchmark.variants.clone(),
        pipeline: cfg.pipeline.clone(),
    };
    let rows = run_benchmark(&bench, EXEC);
    let mut out = Output::create(out_dir)?;
    out.table("benchmark.csv", &rows_table(&rows))?;
    out.table("summary.csv", &summary_table(&rows))?;

    let mut failures = CsvTable::new(&["pattern", "corr", "placement", "signal", "variant", "replicate", "error"]);
    for r in rows.iter().filter(|r| r.error.is_some()) {
        let msg = r.error.clone().unwrap_or_default();
        eprintln!("replicate {} ({}) failed: {msg}", r.replicate, r.variant);
        failures.push(vec![
            r.scenario.theta_pattern.to_string(),
            r.scenario.corr.to_string(),
            r.scenario.placement.to_string(),
            r.scenario.signal.to_string(),
            r.variant.to_string(),
            r.replicate.to_string(),
            msg,
        ]);
    }
    out.table("failures.csv", &failures)?;
    println!("{} runs, {} failed", rows.len(), failures.len());
    out.finish("benchmark", cfg, &[])?;
    Ok(())
}
