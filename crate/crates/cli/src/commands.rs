use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use freqsched::matcher::{build_knowledge_base, default_k, KnowledgeBase};
use freqsched::predict::{
    cross_validate, evaluate_dataset, load_model, save_model, train_model, EvalReport,
    LearnerRegistry, ModelKind, Target, TrainOptions,
};
use freqsched::rng::derive_seed;
use freqsched::scheduler::{
    CandidatePredictor, DataDriven, FrequencyPolicy, LearnedPredictor, OraclePredictor,
    PolicyRegistry,
};
use freqsched::simulator::{
    compare_policies, generate_workload, write_csv, write_json, Aggregates, Comparison, SimOptions,
};
use freqsched::trace::{
    generate_synthetic, load_dataset, load_oracle, oracle_path_for, save_oracle, split,
    write_dataset, Dataset,
};
use serde::Serialize;

use crate::config::{config_err, model_file, require, PredictorChoice, RunConfig};

const TARGETS: [Target; 2] = [Target::Energy, Target::Time];

fn create_dir(p: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(p).with_context(|| format!("cannot create {}", p.display()))
}

fn write_json_file<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_inputs(cfg: &RunConfig) -> anyhow::Result<Dataset> {
    let device = cfg.device_spec()?;
    let path = cfg.dataset_path();
    require(&path, "dataset")?;
    Ok(load_dataset(&path, &device)?)
}

fn train_options(cfg: &RunConfig) -> TrainOptions {
    TrainOptions {
        normalize_inputs: cfg.train.normalize_inputs,
        relative_target: cfg.train.relative_target,
        record_timestamp: cfg.train.record_timestamp,
    }
}

fn resolve_kinds(cfg: &RunConfig) -> anyhow::Result<Vec<ModelKind>> {
    let registry = LearnerRegistry::default();
    let kinds = cfg
        .train
        .kinds
        .iter()
        .map(|k| k.resolve(&registry))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut seen = BTreeSet::new();
    for k in &kinds {
        if !seen.insert(k.name()) {
            return Err(config_err(format!(
                "model kind `{}` listed twice",
                k.name()
            )));
        }
    }
    Ok(kinds)
}

pub fn synth(cfg: &RunConfig) -> anyhow::Result<()> {
    let seed = cfg.seed()?;
    let device = cfg.device_spec()?;
    let (ds, specs) = generate_synthetic(
        cfg.synth.n_apps,
        &device,
        &cfg.synth.ranges,
        derive_seed(seed, "dataset"),
    )
    .map_err(|e| config_err(e.to_string()))?;
    let path = cfg.dataset_path();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    create_dir(&cfg.out_dir)?;
    write_dataset(&ds, &path)?;
    save_oracle(&specs, oracle_path_for(&path))?;
    device.save(cfg.out_dir.join("device.json"))?;
    println!(
        "wrote {} records ({} apps x {} configs) to {}",
        ds.records.len(),
        cfg.synth.n_apps,
        device.supported_configs.len(),
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ReportRow {
    kind: ModelKind,
    target: Target,
    report: EvalReport,
}

#[derive(Serialize)]
struct TrainReport {
    seed: u64,
    train_apps: Vec<String>,
    test_apps: Vec<String>,
    results: Vec<ReportRow>,
}

fn print_table(title: &str, rows: &[ReportRow]) {
    println!("{title}");
    println!(
        "{:<8} {:<7} {:>12} {:>12} {:>9}",
        "model", "target", "rmse", "mae", "rel_rmse"
    );
    for r in rows {
        println!(
            "{:<8} {:<7} {:>12.4} {:>12.4} {:>9.4}",
            r.kind.name(),
            r.target.as_str(),
            r.report.rmse,
            r.report.mae,
            r.report.relative_rmse
        );
    }
}

pub fn train(cfg: &RunConfig) -> anyhow::Result<()> {
    let seed = cfg.seed()?;
    let ds = load_inputs(cfg)?;
    let kinds = resolve_kinds(cfg)?;
    let opts = train_options(cfg);
    let model_seed = derive_seed(seed, "model");
    let (tr, te) = split(&ds, cfg.train.test_fraction, derive_seed(seed, "split"))?;
    let dir = cfg.models_path();
    create_dir(&dir)?;

    let mut rows = Vec::new();
    for kind in &kinds {
        for target in TARGETS {
            let held_out = train_model(kind, &tr, target, model_seed, opts)?;
            rows.push(ReportRow {
                kind: kind.clone(),
                target,
                report: evaluate_dataset(&held_out, &te)?,
            });
            let full = train_model(kind, &ds, target, model_seed, opts)?;
            save_model(&full, model_file(&dir, target.as_str(), kind.name()))?;
        }
    }
    let k = cfg
        .train
        .clusters
        .unwrap_or_else(|| default_k(ds.app_ids().len()));
    let kb = build_knowledge_base(&ds, k, model_seed)?;
    kb.save(dir.join("kb.json"))?;

    let reports = cfg.out_dir.join("reports");
    create_dir(&reports)?;
    let report = TrainReport {
        seed,
        train_apps: tr.app_ids(),
        test_apps: te.app_ids(),
        results: rows,
    };
    write_json_file(&report, &reports.join("train.json"))?;
    print_table(
        &format!("held-out error ({} test apps)", report.test_apps.len()),
        &report.results,
    );
    println!("models written to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct EvaluateRow {
    kind: ModelKind,
    target: Target,
    /// Saved model on the configured dataset.
    dataset: EvalReport,
    /// Grouped k-fold, one report per fold.
    cross_validation: Vec<EvalReport>,
    cv_mean_relative_rmse: Option<f64>,
}

pub fn evaluate(cfg: &RunConfig) -> anyhow::Result<()> {
    let seed = cfg.seed()?;
    let ds = load_inputs(cfg)?;
    let kinds = resolve_kinds(cfg)?;
    let dir = cfg.models_path();
    let opts = train_options(cfg);
    let mut rows = Vec::new();
    for kind in &kinds {
        for target in TARGETS {
            let path = model_file(&dir, target.as_str(), kind.name());
            require(&path, "model file")?;
            let m = load_model(&path)?;
            let folds = if cfg.train.cv_folds > 0 {
                cross_validate(
                    kind,
                    &ds,
                    target,
                    cfg.train.cv_folds,
                    derive_seed(seed, "split"),
                    opts,
                )?
            } else {
                Vec::new()
            };
            let mean = (!folds.is_empty())
                .then(|| folds.iter().map(|f| f.relative_rmse).sum::<f64>() / folds.len() as f64);
            rows.push(EvaluateRow {
                kind: kind.clone(),
                target,
                dataset: evaluate_dataset(&m, &ds)?,
                cross_validation: folds,
                cv_mean_relative_rmse: mean,
            });
        }
    }
    let reports = cfg.out_dir.join("reports");
    create_dir(&reports)?;
    write_json_file(&rows, &reports.join("evaluate.json"))?;
    println!(
        "{:<8} {:<7} {:>12} {:>12} {:>12}",
        "model", "target", "rmse", "rel_rmse", "cv_rel_rmse"
    );
    for r in &rows {
        let cv = r
            .cv_mean_relative_rmse
            .map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:<8} {:<7} {:>12.4} {:>12.4} {:>12}",
            r.kind.name(),
            r.target.as_str(),
            r.dataset.rmse,
            r.dataset.relative_rmse,
            cv
        );
    }
    Ok(())
}

fn learned_predictor(cfg: &RunConfig, kind: &str) -> anyhow::Result<LearnedPredictor> {
    let dir = cfg.models_path();
    let kb_path = dir.join("kb.json");
    let energy = model_file(&dir, "energy", kind);
    let time = model_file(&dir, "time", kind);
    for (p, what) in [
        (&kb_path, "knowledge base"),
        (&energy, "energy model"),
        (&time, "time model"),
    ] {
        require(p, what)?;
    }
    Ok(LearnedPredictor::new(
        KnowledgeBase::load(&kb_path)?,
        load_model(&energy)?,
        load_model(&time)?,
    )?)
}

#[derive(Serialize)]
struct ComparisonSummary<'a> {
    seed: u64,
    predictor: &'a str,
    horizon: f64,
    aggregates: BTreeMap<&'a str, &'a Aggregates>,
    savings_pct: &'a BTreeMap<String, BTreeMap<String, f64>>,
    job_savings_pct: &'a BTreeMap<String, BTreeMap<String, f64>>,
}

fn summary_table(c: &Comparison) -> String {
    let mut s = format!(
        "{:<14} {:>14} {:>14} {:>12} {:>10} {:>10} {:>10}\n",
        "policy", "total_J", "job_J", "idle_J", "viol_rate", "mean_nc", "max_nc"
    );
    for r in &c.results {
        let a = &r.aggregates;
        s += &format!(
            "{:<14} {:>14.1} {:>14.1} {:>12.1} {:>10.4} {:>10.4} {:>10.4}\n",
            r.policy,
            a.total_energy,
            a.job_energy,
            a.idle_energy,
            a.violation_rate,
            a.mean_normalized_completion,
            a.max_normalized_completion
        );
    }
    for (title, m) in [
        ("total energy", &c.savings_pct),
        ("job energy", &c.job_savings_pct),
    ] {
        s += &format!("\nsavings % (row vs column, {title})\n{:<14}", "");
        for r in &c.results {
            s += &format!(" {:>14}", r.policy);
        }
        s.push('\n');
        for a in &c.results {
            s += &format!("{:<14}", a.policy);
            for b in &c.results {
                s += &format!(" {:>14.2}", m[&a.policy][&b.policy]);
            }
            s.push('\n');
        }
    }
    s
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<()> {
    let seed = cfg.seed()?;
    let device = cfg.device_spec()?;
    let ds_path = cfg.dataset_path();
    let oracle_path = oracle_path_for(&ds_path);
    require(&oracle_path, "ground-truth oracle")?;
    let specs = load_oracle(&oracle_path)?;

    let sc = &cfg.simulate;
    let predictor: Box<dyn CandidatePredictor> = match sc.predictor {
        PredictorChoice::Learned => Box::new(learned_predictor(cfg, &sc.model_kind)?),
        PredictorChoice::Oracle => Box::new(OraclePredictor::new(&specs)),
    };
    let mut registry = PolicyRegistry::default();
    registry.register(Arc::new(
        DataDriven::with_margin(sc.time_margin).map_err(|e| config_err(e.to_string()))?,
    ));
    let policies = sc
        .policies
        .iter()
        .map(|p| registry.get(p).map_err(|e| config_err(e.to_string())))
        .collect::<anyhow::Result<Vec<Arc<dyn FrequencyPolicy>>>>()?;

    let w = generate_workload(
        &specs,
        &device,
        &cfg.workload,
        derive_seed(seed, "workload"),
    )
    .map_err(|e| config_err(e.to_string()))?;
    let devices = vec![device; sc.n_devices];
    let opts = SimOptions {
        queue: sc.queue,
        switch_overhead_ms: sc.switch_overhead_ms,
    };
    let cmp = compare_policies(&w, &devices, &policies, predictor.as_ref(), &specs, opts)?;

    let dir = cfg.out_dir.join("sim");
    create_dir(&dir)?;
    w.save(dir.join("workload.json"))?;
    for r in &cmp.results {
        write_json(r, dir.join(format!("{}.json", r.policy)))?;
        write_csv(r, dir.join(format!("{}.csv", r.policy)))?;
    }
    let summary = ComparisonSummary {
        seed,
        predictor: predictor.name(),
        horizon: cmp.horizon,
        aggregates: cmp
            .results
            .iter()
            .map(|r| (r.policy.as_str(), &r.aggregates))
            .collect(),
        savings_pct: &cmp.savings_pct,
        job_savings_pct: &cmp.job_savings_pct,
    };
    write_json_file(&summary, &dir.join("comparison.json"))?;
    let table = summary_table(&cmp);
    fs::write(dir.join("summary.txt"), &table)
        .with_context(|| format!("cannot write {}", dir.display()))?;
    println!(
        "{} jobs on {} device(s), predictor {}, horizon {:.1} s\n",
        w.jobs.len(),
        devices.len(),
        predictor.name(),
        cmp.horizon
    );
    print!("{table}");
    Ok(())
}

pub fn serve(cfg: &RunConfig) -> anyhow::Result<()> {
    let dir = cfg.models_path();
    let kind = &cfg.serve.model_kind;
    let mut models = Vec::new();
    for target in TARGETS {
        let path = model_file(&dir, target.as_str(), kind);
        require(&path, "model file")?;
        models.push(load_model(&path)?);
    }
    let set = freqsched_server::ModelSet::new(models)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(cfg.serve.addr)
            .await
            .with_context(|| format!("cannot bind {}", cfg.serve.addr))?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        use std::io::Write as _;
        std::io::stdout().flush()?;
        freqsched_server::serve_on(listener, set, shutdown_signal()).await?;
        tracing::info!("shut down");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
