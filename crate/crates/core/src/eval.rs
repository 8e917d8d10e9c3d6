//! Evaluation protocol: fit the multilevel filter once on `N_T` nominal
//! samples, map every remaining sample to detail coefficients and score a
//! linear SVM on them by leave-one-out cross-validation. The baseline runs
//! the same cross-validation directly on the signals.
//!
//! Class `B` is the positive class for precision.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{apply_standardizer, fit_standardizer, split_nominal, ClassLabel, LabeledDataset, SignalMatrix};
use crate::error::{Error, Result};
use crate::multilevel::{build_block_tree, build_multilevel_basis, feature_matrix, FeatureMode, DEFAULT_RANK_TOL};
use crate::spectral::{fit_eigenmodel, Truncation};
use crate::svm::{label_of, solve_dual, Gram, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    Raw,
    Standardized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoocvVariant {
    /// One sample left out per fold.
    #[default]
    Standard,
    /// One `A` and one `B` sample left out per fold, over all `A x B` pairs.
    Paired,
}

fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}

fn default_svm_tol() -> f64 {
    SvmParams::default().tol
}

fn default_max_iter() -> usize {
    SvmParams::default().max_iter
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `N_T`, class-A samples used to fit the filter.
    pub n_filter: usize,
    /// Fixed truncation order; exclusive with `energy_fraction`.
    #[serde(rename = "M", default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub energy_fraction: Option<f64>,
    /// `None` picks `S0_only` for raw and `all_levels` for standardized data.
    #[serde(default)]
    pub mode: Option<FeatureMode>,
    pub standardize: Preprocessing,
    /// SVM regularization; `None` means `1/(2n)` per fold.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Shuffle seed for choosing the filter samples; `None` takes the first
    /// `n_filter` class-A rows.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub loocv_variant: LoocvVariant,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "default_svm_tol")]
    pub svm_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl ExperimentConfig {
    pub fn new(n_filter: usize, standardize: Preprocessing) -> Self {
        Self {
            n_filter,
            m: None,
            energy_fraction: None,
            mode: None,
            standardize,
            lambda: None,
            seed: None,
            loocv_variant: LoocvVariant::Standard,
            rank_tol: DEFAULT_RANK_TOL,
            svm_tol: default_svm_tol(),
            max_iter: default_max_iter(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.m.is_some() && self.energy_fraction.is_some() {
            return bad("M and energy_fraction are mutually exclusive".into());
        }
        if let Some(f) = self.energy_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("energy_fraction must lie in (0, 1], got {f}"));
            }
        }
        if self.n_filter < 2 {
            return bad(format!("n_filter must be at least 2, got {}", self.n_filter));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("lambda must be positive, got {l}"));
            }
        }
        if !(self.svm_tol > 0.0) {
            return bad(format!("svm_tol must be positive, got {}", self.svm_tol));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return bad(format!("rank_tol must lie in (0, 1), got {}", self.rank_tol));
        }
        Ok(())
    }

    pub fn truncation(&self) -> Truncation {
        match (self.m, self.energy_fraction) {
            (Some(m), _) => Truncation::Order(m),
            (None, Some(f)) => Truncation::EnergyFraction(f),
            (None, None) => Truncation::default(),
        }
    }

    /// The explicit mode, or `S0_only` for raw and `all_levels` for
    /// standardized signals.
    pub fn resolved_mode(&self) -> FeatureMode {
        self.mode.unwrap_or(match self.standardize {
            Preprocessing::Raw => FeatureMode::S0Only,
            Preprocessing::Standardized => FeatureMode::AllLevels,
        })
    }

    pub fn svm_params(&self) -> SvmParams {
        SvmParams {
            lambda: self.lambda,
            tol: self.svm_tol,
            max_iter: self.max_iter,
        }
    }
}

/// Cross-validated classification metrics, `B` positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Percentage of correct predictions.
    pub accuracy: f64,
    /// `100 TP / (TP + FP)`; `None` when nothing was predicted positive.
    pub precision: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Number of cross-validation folds.
    pub n_cases: usize,
    pub n_predictions: usize,
    /// Folds whose SVM stopped at `max_iter` before reaching the tolerance.
    #[serde(default)]
    pub unconverged_folds: usize,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize, n_cases: usize) -> Self {
        let total = tp + fp + tn + fn_;
        Self {
            accuracy: if total == 0 { 0.0 } else { 100.0 * (tp + tn) as f64 / total as f64 },
            precision: (tp + fp > 0).then(|| 100.0 * tp as f64 / (tp + fp) as f64),
            tp,
            fp,
            tn,
            fn_,
            n_cases,
            n_predictions: total,
            unconverged_folds: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
    unconverged: usize,
}

impl Counts {
    fn record(&mut self, truth: ClassLabel, predicted: ClassLabel) {
        match (truth, predicted) {
            (ClassLabel::B, ClassLabel::B) => self.tp += 1,
            (ClassLabel::A, ClassLabel::B) => self.fp += 1,
            (ClassLabel::A, ClassLabel::A) => self.tn += 1,
            (ClassLabel::B, ClassLabel::A) => self.fn_ += 1,
        }
    }

    fn merge(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
            unconverged: self.unconverged + o.unconverged,
        }
    }
}

/// Leave-one-out cross-validation of the linear SVM.
///
/// Every fold trains on the remaining samples (with `λ = 1/(2n)` for the
/// fold's training size when `params.lambda` is `None`) and predicts the
/// held-out sample(s). The Gram matrix is computed once and shared.
pub fn loocv(features: &SignalMatrix, labels: &[ClassLabel], variant: LoocvVariant, params: &SvmParams) -> Result<Metrics> {
    let n = features.sample_count();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: labels.len() });
    }
    let a: Vec<usize> = (0..n).filter(|&i| labels[i] == ClassLabel::A).collect();
    let b: Vec<usize> = (0..n).filter(|&i| labels[i] == ClassLabel::B).collect();
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidSplit(format!(
            "leave-one-out needs at least two samples per class, got {} A and {} B",
            a.len(),
            b.len()
        )));
    }
    let folds: Vec<Vec<usize>> = match variant {
        LoocvVariant::Standard => (0..n).map(|i| vec![i]).collect(),
        LoocvVariant::Paired => a.iter().flat_map(|&i| b.iter().map(move |&j| vec![i, j])).collect(),
    };
    let gram = Gram::linear(features);
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    // every fold starts from the solution on all samples, which is close to
    // each fold's optimum and cuts the solver work by an order of magnitude
    let all: Vec<usize> = (0..n).collect();
    let full = solve_dual(&gram, &all, &y, params.resolve_lambda(n)?, params, None)?;

    let per_fold = folds
        .par_iter()
        .map(|held| {
            let train: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
            let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let lambda = params.resolve_lambda(train.len())?;
            let warm: Vec<f64> = train.iter().map(|&i| full.alpha[i]).collect();
            let sol = solve_dual(&gram, &train, &ty, lambda, params, Some(&warm))?;
            let mut c = Counts::default();
            for &t in held {
                c.record(labels[t], label_of(sol.margin(&gram, &train, &ty, t)));
            }
            c.unconverged = usize::from(!sol.diagnostics.converged);
            Ok(c)
        })
        .collect::<Result<Vec<Counts>>>()?;
    // integer counts: the reduction does not depend on fold order
    let total = per_fold.into_iter().fold(Counts::default(), Counts::merge);
    let mut m = Metrics::from_counts(total.tp, total.fp, total.tn, total.fn_, folds.len());
    m.unconverged_folds = total.unconverged;
    Ok(m)
}

/// SHA-256 of the shape and values of a sample matrix.
pub fn matrix_fingerprint(m: &SignalMatrix) -> String {
    let mut h = Sha256::new();
    h.update((m.sample_count() as u64).to_le_bytes());
    h.update((m.feature_count() as u64).to_le_bytes());
    for v in m.as_slice() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Outcome of the multilevel protocol, with what is needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub metrics: Metrics,
    pub mode: FeatureMode,
    #[serde(rename = "M")]
    pub order: usize,
    pub tail_energy: f64,
    pub level_dims: Vec<usize>,
    pub feature_dim: usize,
    /// Dataset rows that fitted the filter (and standardizer).
    pub filter_rows: Vec<usize>,
    /// Dataset rows in the cross-validation pool, in pool order.
    pub pool_rows: Vec<usize>,
    pub filter_fingerprint: String,
    pub eigen_fingerprint: String,
}

/// Split, optionally standardize with filter-set statistics, fit the
/// eigenmodel and basis on the filter set, map the held-out `A` and all `B`
/// samples, and cross-validate.
pub fn run_multilevel_experiment(dataset: &LabeledDataset, cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let split = split_nominal(dataset, cfg.n_filter, cfg.seed)?;
    if split.heldout_rows.len() < 2 || split.class_b_rows.len() < 2 {
        return Err(Error::InvalidSplit(format!(
            "need at least two held-out A and two B samples, got {} and {}",
            split.heldout_rows.len(),
            split.class_b_rows.len()
        )));
    }
    let (filter, heldout, class_b) = match cfg.standardize {
        Preprocessing::Raw => (split.filter_set.clone(), split.heldout_a, split.class_b),
        Preprocessing::Standardized => {
            let stats = fit_standardizer(&split.filter_set)?;
            (
                apply_standardizer(&split.filter_set, &stats)?,
                apply_standardizer(&split.heldout_a, &stats)?,
                apply_standardizer(&split.class_b, &stats)?,
            )
        }
    };
    let model = fit_eigenmodel(&filter, cfg.truncation())?;
    let basis = build_multilevel_basis(&model, &build_block_tree(model.dim()), cfg.rank_tol)?;
    let mode = cfg.resolved_mode();
    let pool = heldout.vstack(&class_b)?;
    let labels: Vec<ClassLabel> = std::iter::repeat_n(ClassLabel::A, heldout.sample_count())
        .chain(std::iter::repeat_n(ClassLabel::B, class_b.sample_count()))
        .collect();
    let features = feature_matrix(&pool, &basis, &model, mode)?;
    let metrics = loocv(&features, &labels, cfg.loocv_variant, &cfg.svm_params())?;
    Ok(ExperimentRun {
        metrics,
        mode,
        order: model.order(),
        tail_energy: model.tail_energy(),
        level_dims: basis.level_dims(),
        feature_dim: features.feature_count(),
        pool_rows: split.heldout_rows.iter().chain(&split.class_b_rows).copied().collect(),
        filter_fingerprint: matrix_fingerprint(&split.filter_set),
        filter_rows: split.filter_rows,
        eigen_fingerprint: model.fingerprint(),
    })
}

/// Cross-validation of the SVM directly on the (optionally standardized)
/// signals of the whole dataset. Standardization statistics come from the
/// same filter samples the multilevel protocol uses, so both methods see
/// identically scaled data.
pub fn run_baseline_experiment(dataset: &LabeledDataset, cfg: &ExperimentConfig) -> Result<Metrics> {
    cfg.validate()?;
    let signals = match cfg.standardize {
        Preprocessing::Raw => dataset.signals.clone(),
        Preprocessing::Standardized => {
            let split = split_nominal(dataset, cfg.n_filter, cfg.seed)?;
            apply_standardizer(&dataset.signals, &fit_standardizer(&split.filter_set)?)?
        }
    };
    loocv(&signals, &dataset.labels, cfg.loocv_variant, &cfg.svm_params())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub preprocessing: Preprocessing,
    pub metrics: Metrics,
}

/// Accuracy and precision per method, raw vs standardized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn new(rows: Vec<ReportRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("report needs at least one row".into()));
        }
        Ok(Self { rows })
    }

    fn methods(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method.as_str()) {
                out.push(&r.method);
            }
        }
        out
    }

    fn lookup(&self, method: &str, pre: Preprocessing) -> Option<&Metrics> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.preprocessing == pre)
            .map(|r| &r.metrics)
    }

    /// One header line plus one line per method; columns are accuracy and
    /// precision for raw and standardized signals (`-` where not run, `NA`
    /// where precision is undefined).
    pub fn to_table(&self) -> String {
        let header = ["Method", "Raw Acc. (%)", "Raw Prec. (%)", "Std Acc. (%)", "Std Prec. (%)"];
        let mut cells: Vec<[String; 5]> = Vec::new();
        cells.push(header.map(String::from));
        for method in self.methods() {
            let mut line: [String; 5] = Default::default();
            line[0] = method.to_string();
            for (k, pre) in [Preprocessing::Raw, Preprocessing::Standardized].into_iter().enumerate() {
                let (acc, prec) = match self.lookup(method, pre) {
                    Some(m) => (
                        format!("{:.2}", m.accuracy),
                        m.precision.map_or_else(|| "NA".to_string(), |p| format!("{p:.2}")),
                    ),
                    None => ("-".into(), "-".into()),
                };
                line[1 + 2 * k] = acc;
                line[2 + 2 * k] = prec;
            }
            cells.push(line);
        }
        let widths: Vec<usize> = (0..5).map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &cells {
            let mut line = format!("{:<w$}", row[0], w = widths[0]);
            for c in 1..5 {
                let _ = write!(line, "  {:>w$}", row[c], w = widths[c]);
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Report = serde_json::from_str(text)?;
        Report::new(r.rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn toy(rows: &[[f64; 2]], labels: &[ClassLabel]) -> (SignalMatrix, Vec<ClassLabel>) {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        (SignalMatrix::from_rows(&rows).unwrap(), labels.to_vec())
    }

    #[test]
    fn separable_toy_is_perfect() {
        use ClassLabel::{A, B};
        let (x, y) = toy(
            &[[-2.0, 0.1], [-1.5, -0.3], [-2.5, 0.4], [2.0, 0.0], [1.7, 0.5], [2.4, -0.2]],
            &[A, A, A, B, B, B],
        );
        let m = loocv(&x, &y, LoocvVariant::Standard, &SvmParams::default()).unwrap();
        assert_eq!((m.accuracy, m.precision), (100.0, Some(100.0)));
        assert_eq!((m.n_cases, m.n_predictions), (6, 6));
        let m = loocv(&x, &y, LoocvVariant::Paired, &SvmParams::default()).unwrap();
        assert_eq!((m.n_cases, m.n_predictions, m.accuracy), (9, 18, 100.0));
    }

    #[test]
    fn fold_counts() {
        use ClassLabel::{A, B};
        let (x, y) = toy(&[[0.0, 1.0], [1.0, 0.0], [3.0, 1.0], [4.0, 0.0]], &[A, A, B, B]);
        let m = loocv(&x, &y, LoocvVariant::Standard, &SvmParams::default()).unwrap();
        assert_eq!(m.n_cases, 4);
        // 90 + 90 samples, paired: every A x B pair is one fold
        let rows: Vec<Vec<f64>> = (0..180).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let labels: Vec<ClassLabel> = (0..180).map(|i| if i < 90 { A } else { B }).collect();
        let m = loocv(&SignalMatrix::from_rows(&rows).unwrap(), &labels, LoocvVariant::Paired, &SvmParams::default()).unwrap();
        assert_eq!((m.n_cases, m.n_predictions), (8100, 16200));
    }

    #[test]
    fn loocv_needs_two_per_class() {
        use ClassLabel::{A, B};
        let (x, y) = toy(&[[0.0, 1.0], [1.0, 0.0], [3.0, 1.0]], &[A, A, B]);
        for v in [LoocvVariant::Standard, LoocvVariant::Paired] {
            assert!(matches!(loocv(&x, &y, v, &SvmParams::default()), Err(Error::InvalidSplit(_))));
        }
    }

    #[test]
    fn metrics_algebra() {
        let m = Metrics::from_counts(3, 1, 4, 2, 10);
        assert_abs_diff_eq!(m.accuracy, 70.0);
        assert_abs_diff_eq!(m.precision.unwrap(), 75.0);
        let m = Metrics::from_counts(0, 0, 5, 5, 10);
        assert_eq!(m.precision, None);
        assert!(serde_json::to_string(&m).unwrap().contains("\"precision\":null"));
    }

    proptest! {
        #[test]
        fn percentages_match_counts(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
            prop_assume!(tp + fp + tn + fn_ > 0);
            let m = Metrics::from_counts(tp, fp, tn, fn_, 1);
            let acc = 100.0 * (tp + tn) as f64 / (tp + fp + tn + fn_) as f64;
            prop_assert!((m.accuracy - acc).abs() < 0.01);
            if tp + fp > 0 {
                prop_assert!((m.precision.unwrap() - 100.0 * tp as f64 / (tp + fp) as f64).abs() < 0.01);
            }
            let back: Metrics = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn report_layout_and_round_trip() {
        let one = Report::new(vec![ReportRow {
            method: "Linear SVM".into(),
            preprocessing: Preprocessing::Raw,
            metrics: Metrics::from_counts(1, 1, 1, 1, 4),
        }])
        .unwrap();
        assert_eq!(one.to_table().lines().count(), 2);
        let mut rows = Vec::new();
        for method in ["Linear SVM", "Multilevel linear SVM"] {
            for pre in [Preprocessing::Raw, Preprocessing::Standardized] {
                rows.push(ReportRow { method: method.into(), preprocessing: pre, metrics: Metrics::from_counts(5, 0, 3, 2, 10) });
            }
        }
        let report = Report::new(rows).unwrap();
        let table = report.to_table();
        assert_eq!(table.lines().count(), 3);
        assert!(table.lines().next().unwrap().contains("Std Prec. (%)"));
        assert_eq!(Report::from_json(&report.to_json().unwrap()).unwrap(), report);
        assert!(Report::new(vec![]).is_err());
    }

    #[test]
    fn config_rules() {
        let mut cfg = ExperimentConfig::new(10, Preprocessing::Raw);
        assert_eq!(cfg.resolved_mode(), FeatureMode::S0Only);
        cfg.standardize = Preprocessing::Standardized;
        assert_eq!(cfg.resolved_mode(), FeatureMode::AllLevels);
        cfg.mode = Some(FeatureMode::S0Only);
        assert_eq!(cfg.resolved_mode(), FeatureMode::S0Only);
        cfg.m = Some(3);
        cfg.energy_fraction = Some(0.9);
        assert!(cfg.validate().is_err());
        let parsed: ExperimentConfig =
            serde_json::from_str(r#"{"n_filter":5,"M":2,"standardize":"standardized","loocv_variant":"paired"}"#).unwrap();
        assert_eq!(parsed.loocv_variant, LoocvVariant::Paired);
        assert_eq!(parsed.truncation(), Truncation::Order(2));
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"n_filter":5,"standardize":"raw","typo":1}"#).is_err());
    }

    fn synth(n_a: usize, n_b: usize, energy: f64, coherence: f64, seed: u64) -> LabeledDataset {
        let spec = SynthSpec {
            p: 32,
            m_true: 4,
            spectrum: vec![8.0, 4.0, 2.0, 1.0],
            tail: vec![],
            anomaly_energy: energy,
            n_a,
            n_b,
            noise_std: 0.01,
            seed,
            normalize_spectrum: true,
            mean_scale: 1.0,
            anomaly_coherence: coherence,
            anomaly_profile: Default::default(),
        };
        generate(&spec).unwrap().0
    }

    #[test]
    fn filter_never_sees_the_pool() {
        let ds = synth(40, 20, 1.0, 1.0, 3);
        let mut cfg = ExperimentConfig::new(15, Preprocessing::Standardized);
        cfg.m = Some(4);
        cfg.seed = Some(9);
        let run = run_multilevel_experiment(&ds, &cfg).unwrap();
        assert!(run.filter_rows.iter().all(|r| !run.pool_rows.contains(r)));
        assert_eq!(run.filter_rows.len() + run.pool_rows.len(), 60);
        assert_eq!(run.filter_fingerprint, matrix_fingerprint(&ds.signals.select_rows(&run.filter_rows)));
        // the eigenmodel depends on the filter rows only: perturbing pool rows changes nothing
        let mut values = ds.signals.as_slice().to_vec();
        for &r in &run.pool_rows {
            values[r * 32] += 100.0;
        }
        let moved = LabeledDataset::new(SignalMatrix::from_row_major(values, 60, 32).unwrap(), ds.labels.clone()).unwrap();
        let again = run_multilevel_experiment(&moved, &cfg).unwrap();
        assert_eq!(again.eigen_fingerprint, run.eigen_fingerprint);
        assert_eq!(again.filter_fingerprint, run.filter_fingerprint);
    }

    #[test]
    fn coherent_anomalies_are_found() {
        let ds = synth(40, 20, 1.0, 1.0, 5);
        let mut cfg = ExperimentConfig::new(20, Preprocessing::Raw);
        cfg.m = Some(4);
        cfg.mode = Some(FeatureMode::AllLevels);
        let run = run_multilevel_experiment(&ds, &cfg).unwrap();
        assert_eq!(run.metrics.accuracy, 100.0);
        assert_eq!(run.metrics.n_cases, 40);
        assert_eq!(run.feature_dim, 28);
        assert_eq!(run, run_multilevel_experiment(&ds, &cfg).unwrap());
    }

    #[test]
    fn identical_classes_score_near_chance() {
        let ds = synth(100, 100, 0.0, 0.0, 17);
        let mut cfg = ExperimentConfig::new(10, Preprocessing::Raw);
        cfg.m = Some(4);
        let m = run_baseline_experiment(&ds, &cfg).unwrap();
        // 99% binomial interval around 50% for 200 predictions: 50 +- 9.1
        assert!((m.accuracy - 50.0).abs() <= 9.1, "{}", m.accuracy);
        assert_eq!(m.n_cases, 200);
    }

    #[test]
    fn insufficient_pool_is_rejected() {
        let ds = synth(12, 5, 1.0, 1.0, 1);
        let mut cfg = ExperimentConfig::new(11, Preprocessing::Raw);
        cfg.m = Some(2);
        assert!(matches!(run_multilevel_experiment(&ds, &cfg), Err(Error::InvalidSplit(_))));
    }
}
