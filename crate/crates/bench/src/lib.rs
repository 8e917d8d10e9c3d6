//! Shared inputs for the benchmarks.

use klfilter::multilevel::{build_block_tree, build_multilevel_basis, DEFAULT_RANK_TOL};
use klfilter::spectral::fit_eigenmodel;
use klfilter::synth::generate;
use klfilter::{ClassLabel, EigenModel, LabeledDataset, MultilevelBasis, SignalMatrix, SynthSpec, Truncation};

/// A synthetic dataset with `n` samples per class and `m` nominal modes.
pub fn dataset(p: usize, m: usize, n: usize) -> LabeledDataset {
    let spec = SynthSpec {
        p,
        m_true: m,
        spectrum: (0..m).map(|k| 0.9f64.powi(k as i32)).collect(),
        tail: vec![],
        anomaly_energy: 0.5,
        n_a: n,
        n_b: n,
        noise_std: 0.05,
        seed: 1,
        normalize_spectrum: false,
        mean_scale: 1.0,
        anomaly_coherence: 0.5,
        anomaly_profile: Default::default(),
    };
    generate(&spec).expect("valid benchmark spec").0
}

pub fn nominal(ds: &LabeledDataset) -> SignalMatrix {
    ds.signals.select_rows(&ds.indices_of(ClassLabel::A))
}

/// Fitted model and basis of the nominal half of `ds`.
pub fn filter(ds: &LabeledDataset, m: usize) -> (EigenModel, MultilevelBasis) {
    let model = fit_eigenmodel(&nominal(ds), Truncation::Order(m)).expect("fit");
    let basis = build_multilevel_basis(&model, &build_block_tree(model.dim()), DEFAULT_RANK_TOL).expect("basis");
    (model, basis)
}
