use std::path::Path;

use serde::{Deserialize, Serialize};

use klfilter::data::{apply_standardizer, fit_standardizer, load_dataset, split_nominal, write_dataset};
use klfilter::eval::{run_baseline_experiment, run_multilevel_experiment, ExperimentRun, ReportRow};
use klfilter::multilevel::{build_block_tree, build_multilevel_basis, feature_matrix, BasisDocument};
use klfilter::spectral::fit_eigenmodel;
use klfilter::svm::train_svm;
use klfilter::synth::generate;
use klfilter::{
    EigenModel, ExperimentConfig, LabelTokens, LabeledDataset, Metrics, MultilevelBasis, Preprocessing, Report,
    StandardizationStats, SvmParams, SynthSpec, TrainingSet, Truncation,
};

use crate::output::{read_json, write_atomic, write_json, CliError, CliResult};
use crate::{BasisArgs, Command, EvalArgs, FitArgs, LabelArgs, MapArgs, PipelineArgs, SynthArgs, TrainArgs, TruncationArgs};

pub const BASELINE: &str = "Linear SVM";
pub const MULTILEVEL: &str = "Multilevel linear SVM";

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Fit(a) => fit(a),
        Command::Basis(a) => basis(a),
        Command::Map(a) => map(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn tokens(l: &LabelArgs) -> LabelTokens {
    LabelTokens::new(&l.class_a, &l.class_b)
}

fn truncation(t: &TruncationArgs) -> Truncation {
    match (t.m, t.energy_fraction) {
        (Some(m), _) => Truncation::Order(m),
        (None, Some(f)) => Truncation::EnergyFraction(f),
        (None, None) => Truncation::default(),
    }
}

fn write_csv(path: &Path, ds: &LabeledDataset, tokens: &LabelTokens) -> CliResult<()> {
    write_atomic(path, |w| Ok(write_dataset(w, ds, tokens)?))
}

fn fit(a: FitArgs) -> CliResult<()> {
    let ds = load_dataset(&a.data, &tokens(&a.labels))?;
    let split = split_nominal(&ds, a.nfilter, a.seed)?;
    let mut filter = split.filter_set;
    if a.standardize {
        let stats = fit_standardizer(&filter)?;
        filter = apply_standardizer(&filter, &stats)?;
        if let Some(path) = &a.standardizer_out {
            write_json(path, &stats)?;
        }
    }
    let model = fit_eigenmodel(&filter, truncation(&a.truncation))?;
    write_json(&a.out, &model)?;
    println!(
        "fitted eigenmodel: p = {}, N_T = {}, rank = {}, M = {}, tail energy = {:.6e}",
        model.dim(),
        a.nfilter,
        model.rank(),
        model.order(),
        model.tail_energy()
    );
    Ok(())
}

fn basis(a: BasisArgs) -> CliResult<()> {
    let model: EigenModel = read_json(&a.model)?;
    let basis = build_multilevel_basis(&model, &build_block_tree(model.dim()), a.rank_tol)?;
    write_json(&a.out, &basis.to_document(a.explicit_psi))?;
    println!(
        "multilevel basis: p = {}, M = {}, level dimensions {:?} (sum {})",
        basis.width(),
        basis.eigen_order(),
        basis.level_dims(),
        basis.total_dim()
    );
    Ok(())
}

fn map(a: MapArgs) -> CliResult<()> {
    let model: EigenModel = read_json(&a.model)?;
    let doc: BasisDocument = read_json(&a.basis)?;
    let basis = MultilevelBasis::from_document(&doc, &model)?;
    let tokens = tokens(&a.labels);
    let ds = load_dataset(&a.data, &tokens)?;
    let signals = match &a.standardizer {
        Some(path) => {
            let stats: StandardizationStats = read_json(path)?;
            apply_standardizer(&ds.signals, &stats)?
        }
        None => ds.signals,
    };
    let features = feature_matrix(&signals, &basis, &model, a.mode.into())?;
    let out = LabeledDataset::new(features, ds.labels)?;
    write_csv(&a.out, &out, &tokens)?;
    println!(
        "mapped {} signals to {} coefficients",
        out.signals.sample_count(),
        out.signals.feature_count()
    );
    Ok(())
}

fn train(a: TrainArgs) -> CliResult<()> {
    let ds = load_dataset(&a.features, &tokens(&a.labels))?;
    let data = TrainingSet::new(ds.signals, ds.labels)?;
    let params = SvmParams {
        lambda: a.lambda,
        tol: a.tol,
        max_iter: a.max_iter,
    };
    let model = train_svm(&data, &params)?;
    write_json(&a.out, &model)?;
    let d = &model.diagnostics;
    println!(
        "trained linear SVM: lambda = {:.6e}, objective = {:.9e}, iterations = {}, max KKT violation = {:.3e}{}",
        model.lambda,
        d.objective,
        d.iterations,
        d.max_kkt_violation,
        if d.converged { "" } else { " (iteration limit reached)" }
    );
    Ok(())
}

fn report_rows(cfg: &ExperimentConfig, run: &ExperimentRun, baseline: Option<&Metrics>) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    if let Some(b) = baseline {
        rows.push(ReportRow {
            method: BASELINE.into(),
            preprocessing: cfg.standardize,
            metrics: b.clone(),
        });
    }
    rows.push(ReportRow {
        method: MULTILEVEL.into(),
        preprocessing: cfg.standardize,
        metrics: run.metrics.clone(),
    });
    rows
}

/// Everything an evaluation produced, as written to `--out`.
#[derive(Debug, Serialize, Deserialize)]
pub struct EvalDocument {
    pub config: ExperimentConfig,
    pub multilevel: ExperimentRun,
    pub baseline: Option<Metrics>,
    pub report: Report,
}

fn print_report(report: &Report) {
    print!("{}", report.to_table());
    println!("(positive class: B)");
}

fn run_and_write(ds: &LabeledDataset, cfg: ExperimentConfig, with_baseline: bool, out: &Path) -> CliResult<()> {
    cfg.validate()?;
    let run = run_multilevel_experiment(ds, &cfg)?;
    let baseline = if with_baseline {
        Some(run_baseline_experiment(ds, &cfg)?)
    } else {
        None
    };
    let report = Report::new(report_rows(&cfg, &run, baseline.as_ref()))?;
    print_report(&report);
    println!(
        "M = {}, feature dimension = {}, cases = {}, unconverged folds = {}",
        run.order, run.feature_dim, run.metrics.n_cases, run.metrics.unconverged_folds
    );
    write_json(
        out,
        &EvalDocument {
            config: cfg,
            multilevel: run,
            baseline,
            report,
        },
    )
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let cfg: ExperimentConfig = read_json(&a.config)?;
    let ds = load_dataset(&a.data, &tokens(&a.labels))?;
    run_and_write(&ds, cfg, a.baseline, &a.out)
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let spec: SynthSpec = read_json(&a.spec)?;
    let (ds, truth) = generate(&spec)?;
    write_csv(&a.out, &ds, &tokens(&a.labels))?;
    if let Some(path) = &a.truth {
        write_json(path, &truth)?;
    }
    println!(
        "generated {} A + {} B samples, p = {}, |w|^2 = {}",
        spec.n_a, spec.n_b, spec.p, spec.anomaly_energy
    );
    Ok(())
}

fn pipeline(a: PipelineArgs) -> CliResult<()> {
    let mut cfg = match &a.config {
        Some(path) => read_json::<ExperimentConfig>(path)?,
        None => ExperimentConfig::new(0, Preprocessing::Raw),
    };
    if let Some(n) = a.nfilter {
        cfg.n_filter = n;
    }
    if a.truncation.m.is_some() || a.truncation.energy_fraction.is_some() {
        cfg.m = a.truncation.m;
        cfg.energy_fraction = a.truncation.energy_fraction;
    }
    if a.standardize {
        cfg.standardize = Preprocessing::Standardized;
    }
    if let Some(m) = a.mode {
        cfg.mode = Some(m.into());
    }
    if a.lambda.is_some() {
        cfg.lambda = a.lambda;
    }
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    if let Some(v) = a.loocv {
        cfg.loocv_variant = v.into();
    }
    if cfg.n_filter == 0 {
        return Err(CliError::Invalid("--nfilter must be positive".into()));
    }
    let ds = load_dataset(&a.data, &tokens(&a.labels))?;
    run_and_write(&ds, cfg, true, &a.out)
}
