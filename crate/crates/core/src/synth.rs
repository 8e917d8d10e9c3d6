//! Semi-synthetic data from a known KL model.
//!
//! Nominal samples are drawn as `v = mean + Σ_k sqrt(λ_k) φ_k Y_k + noise`
//! with independent standard normal `Y_k` over a random orthonormal frame.
//! Anomalous samples add a vector `w` orthogonal to the leading `M_true`
//! modes with `|w|² = anomaly_energy` exactly. The same sampler, pointed at a
//! fitted [`EigenModel`], is a KL bootstrap.
//!
//! Randomness is counter based: the frame uses stream 0 of a ChaCha8
//! generator seeded with `seed`, sample `i` uses stream `i + 1`, so
//! generation order (and thread count) does not affect the output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, LabeledDataset, SignalMatrix};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};
use crate::multilevel::{anomaly_energy, feature_map, FeatureMode, MultilevelBasis};
use crate::spectral::EigenModel;

/// Parameters of a synthetic two-class dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub p: usize,
    /// Number of nominal modes the anomaly is kept orthogonal to.
    #[serde(rename = "M_true")]
    pub m_true: usize,
    /// `λ_1 >= .. >= λ_{M_true}`.
    pub spectrum: Vec<f64>,
    /// Optional further modes `λ_{M_true+1}, ..` that the truncated model
    /// misses (these give `t_M > 0`).
    #[serde(default)]
    pub tail: Vec<f64>,
    pub anomaly_energy: f64,
    pub n_a: usize,
    pub n_b: usize,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    /// Rescale head and tail together so that they sum to one.
    #[serde(default = "default_true")]
    pub normalize_spectrum: bool,
    /// Standard deviation of the entries of the random nominal mean.
    #[serde(default)]
    pub mean_scale: f64,
    /// Fraction of `|w|²` along one fixed complement direction shared by all
    /// anomalies; the rest points in a fresh random complement direction per
    /// sample. Zero gives fully isotropic anomalies.
    #[serde(default)]
    pub anomaly_coherence: f64,
    /// Shape of the shared direction.
    #[serde(default)]
    pub anomaly_profile: AnomalyProfile,
}

/// How the shared anomaly direction is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyProfile {
    /// A random unit vector of the complement.
    #[default]
    Random,
    /// The constant signal with its nominal-mode components removed: a
    /// broad level shift, the smoothest complement direction.
    Level,
}

fn default_true() -> bool {
    true
}

impl SynthSpec {
    /// Head and tail, normalized if requested.
    pub fn modes(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.spectrum.iter().chain(&self.tail).copied().collect();
        if self.normalize_spectrum {
            let total: f64 = all.iter().sum();
            if total > 0.0 {
                all.iter_mut().for_each(|l| *l /= total);
            }
        }
        all
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.p == 0 {
            return bad("p must be positive".into());
        }
        if self.spectrum.len() != self.m_true {
            return bad(format!("spectrum has {} entries for M_true = {}", self.spectrum.len(), self.m_true));
        }
        if self.m_true + self.tail.len() > self.p {
            return bad(format!(
                "{} modes do not fit into p = {}",
                self.m_true + self.tail.len(),
                self.p
            ));
        }
        let all: Vec<f64> = self.spectrum.iter().chain(&self.tail).copied().collect();
        if all.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return bad("spectrum entries must be positive".into());
        }
        if all.windows(2).any(|w| w[1] > w[0]) {
            return bad("spectrum must be non-increasing".into());
        }
        if !(self.anomaly_energy >= 0.0 && self.anomaly_energy.is_finite()) {
            return bad(format!("anomaly_energy must be non-negative, got {}", self.anomaly_energy));
        }
        if self.anomaly_energy > 0.0 && self.m_true == self.p {
            return bad("anomaly_energy > 0 needs a non-empty complement (M_true < p)".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be non-negative, got {}", self.noise_std));
        }
        if !(self.mean_scale >= 0.0 && self.mean_scale.is_finite()) {
            return bad(format!("mean_scale must be non-negative, got {}", self.mean_scale));
        }
        if !(0.0..=1.0).contains(&self.anomaly_coherence) {
            return bad(format!("anomaly_coherence must lie in [0, 1], got {}", self.anomaly_coherence));
        }
        if self.anomaly_coherence > 0.0 && self.anomaly_coherence < 1.0 && self.p - self.m_true < 2 {
            return bad("a partially coherent anomaly needs a complement of dimension >= 2".into());
        }
        Ok(())
    }
}

/// What the generator actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mean: Vec<f64>,
    /// Head followed by tail, after normalization.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    #[serde(rename = "M_true")]
    pub m_true: usize,
    /// Shared anomaly direction, when `anomaly_coherence > 0`.
    pub anomaly_direction: Option<Vec<f64>>,
    /// One anomaly vector per `B` sample, in row order.
    pub anomalies: Vec<Vec<f64>>,
    /// Realized `|w|²` per `B` sample.
    pub anomaly_energies: Vec<f64>,
}

impl GroundTruth {
    /// The true model truncated at `order` modes.
    pub fn eigenmodel(&self, order: usize) -> Result<EigenModel> {
        EigenModel::from_parts(self.mean.clone(), self.eigenvalues.clone(), self.eigenvectors.clone(), order)
    }

    pub fn mean_anomaly_energy(&self) -> f64 {
        if self.anomaly_energies.is_empty() {
            0.0
        } else {
            self.anomaly_energies.iter().sum::<f64>() / self.anomaly_energies.len() as f64
        }
    }
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

fn gaussian(rng: &mut impl Rng, p: usize) -> Vec<f64> {
    (0..p).map(|_| rng.sample(StandardNormal)).collect()
}

/// Removes the components of `x` along the orthonormal `frame`, twice.
fn deflate(x: &mut [f64], frame: &[Vec<f64>]) {
    for _ in 0..2 {
        for f in frame {
            let c = dot(x, f);
            axpy(-c, f, x);
        }
    }
}

/// `count` orthonormal vectors in `R^p` orthogonal to `against`.
fn random_frame(rng: &mut impl Rng, p: usize, count: usize, against: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(count);
    while frame.len() < count {
        let mut v = gaussian(rng, p);
        deflate(&mut v, against);
        deflate(&mut v, &frame);
        let n = norm(&v);
        // a Gaussian draw only collapses with probability zero; redraw if it does
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            frame.push(v);
        }
    }
    frame
}

/// Draws a synthetic dataset: `n_a` rows of class `A` followed by `n_b` rows
/// of class `B`.
pub fn generate(spec: &SynthSpec) -> Result<(LabeledDataset, GroundTruth)> {
    spec.validate()?;
    let p = spec.p;
    let lambdas = spec.modes();
    let mut rng = stream(spec.seed, 0);
    let frame = random_frame(&mut rng, p, lambdas.len(), &[]);
    let mean: Vec<f64> = if spec.mean_scale > 0.0 {
        gaussian(&mut rng, p).into_iter().map(|x| x * spec.mean_scale).collect()
    } else {
        vec![0.0; p]
    };
    let head = &frame[..spec.m_true];
    let direction = if spec.anomaly_coherence > 0.0 && spec.anomaly_energy > 0.0 {
        Some(match spec.anomaly_profile {
            AnomalyProfile::Random => random_frame(&mut rng, p, 1, head).remove(0),
            AnomalyProfile::Level => level_direction(p, head)?,
        })
    } else {
        None
    };

    let n = spec.n_a + spec.n_b;
    let sqrt_l: Vec<f64> = lambdas.iter().map(|l| l.sqrt()).collect();
    let draws: Vec<(Vec<f64>, Option<Vec<f64>>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(spec.seed, i as u64 + 1);
            let mut x = mean.clone();
            for (phi, s) in frame.iter().zip(&sqrt_l) {
                let y: f64 = rng.sample(StandardNormal);
                axpy(s * y, phi, &mut x);
            }
            if spec.noise_std > 0.0 {
                for v in x.iter_mut() {
                    *v += spec.noise_std * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let w = (i >= spec.n_a).then(|| anomaly(&mut rng, spec, head, direction.as_deref()));
            if let Some(w) = &w {
                axpy(1.0, w, &mut x);
            }
            (x, w)
        })
        .collect();

    let mut values = Vec::with_capacity(n * p);
    let mut anomalies = Vec::with_capacity(spec.n_b);
    for (x, w) in draws {
        values.extend_from_slice(&x);
        anomalies.extend(w);
    }
    let labels = (0..n).map(|i| if i < spec.n_a { ClassLabel::A } else { ClassLabel::B }).collect();
    let dataset = LabeledDataset::new(SignalMatrix::from_row_major(values, n, p)?, labels)?;
    let truth = GroundTruth {
        mean,
        eigenvalues: lambdas,
        eigenvectors: frame,
        m_true: spec.m_true,
        anomaly_direction: direction,
        anomaly_energies: anomalies.iter().map(|w| dot(w, w)).collect(),
        anomalies,
    };
    Ok((dataset, truth))
}

fn level_direction(p: usize, head: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut u = vec![1.0; p];
    deflate(&mut u, head);
    let n = norm(&u);
    if n <= 1e-8 * (p as f64).sqrt() {
        return Err(Error::InvalidParameter(
            "the constant signal lies in the nominal eigenspace; no level anomaly exists".into(),
        ));
    }
    u.iter_mut().for_each(|x| *x /= n);
    Ok(u)
}

fn anomaly(rng: &mut ChaCha8Rng, spec: &SynthSpec, head: &[Vec<f64>], direction: Option<&[f64]>) -> Vec<f64> {
    let p = spec.p;
    let e = spec.anomaly_energy;
    if e == 0.0 {
        return vec![0.0; p];
    }
    let coh = spec.anomaly_coherence;
    let mut w = vec![0.0; p];
    if coh < 1.0 {
        let mut against: Vec<Vec<f64>> = head.to_vec();
        if let Some(u) = direction {
            against.push(u.to_vec());
        }
        let g = random_frame(rng, p, 1, &against).remove(0);
        axpy((e * (1.0 - coh)).sqrt(), &g, &mut w);
    }
    if let Some(u) = direction {
        axpy((e * coh).sqrt(), u, &mut w);
    }
    w
}

/// KL bootstrap: `n` fresh realizations `mean + Σ sqrt(λ_k) φ_k Y_k` over every
/// retained eigenpair of `model`.
pub fn kl_bootstrap(model: &EigenModel, n: usize, seed: u64) -> Result<SignalMatrix> {
    let p = model.dim();
    let sqrt_l: Vec<f64> = model.eigenvalues().iter().map(|l| l.sqrt()).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64 + 1);
            let mut x = model.mean().to_vec();
            for (phi, s) in model.eigenvectors().iter().zip(&sqrt_l) {
                let y: f64 = rng.sample(StandardNormal);
                axpy(s * y, phi, &mut x);
            }
            x
        })
        .collect();
    let values: Vec<f64> = rows.into_iter().flatten().collect();
    SignalMatrix::from_row_major(values, n, p)
}

/// The interval `[|w|² (1 - 2t) + t, |w|² (1 + 2t) + t]` for the expected
/// coefficient energy of an anomalous sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyInterval {
    pub lower: f64,
    pub upper: f64,
    /// `false` when `1 - 2t <= 0`, in which case the lower end is vacuous.
    pub valid: bool,
}

pub fn energy_interval(w_energy: f64, tail_energy: f64) -> EnergyInterval {
    let t = tail_energy;
    EnergyInterval {
        lower: w_energy * (1.0 - 2.0 * t) + t,
        upper: w_energy * (1.0 + 2.0 * t) + t,
        valid: 1.0 - 2.0 * t > 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub samples: usize,
    pub mean_energy: f64,
    pub standard_error: f64,
    pub w_energy: f64,
    pub tail_energy: f64,
    pub interval: EnergyInterval,
    /// Mean within the interval widened by three standard errors, and the
    /// interval valid.
    pub pass: bool,
}

impl std::fmt::Display for BoundReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if !self.interval.valid {
            return write!(f, "interval invalid (1 - 2 t_M <= 0 with t_M = {})", self.tail_energy);
        }
        write!(
            f,
            "mean {:.6} +- {:.6} (n = {}) vs [{:.6}, {:.6}]: {}",
            self.mean_energy,
            self.standard_error,
            self.samples,
            self.interval.lower,
            self.interval.upper,
            if self.pass { "pass" } else { "fail" }
        )
    }
}

/// Compares the empirical mean coefficient energy of anomalous samples with
/// the interval implied by the model's tail energy and the true `|w|²`.
pub fn check_energy_bound(
    model: &EigenModel,
    basis: &MultilevelBasis,
    b_samples: &SignalMatrix,
    truth: &GroundTruth,
) -> Result<BoundReport> {
    let n = b_samples.sample_count();
    if n == 0 {
        return Err(Error::Empty("no anomalous samples".into()));
    }
    if truth.anomaly_energies.len() != n {
        return Err(Error::DimensionMismatch {
            expected: truth.anomaly_energies.len(),
            found: n,
        });
    }
    let energies = b_samples
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| anomaly_energy(&feature_map(row, basis, model, FeatureMode::AllLevels)?))
        .collect::<Result<Vec<f64>>>()?;
    let mean = energies.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let se = (var / n as f64).sqrt();
    let w_energy = truth.mean_anomaly_energy();
    let interval = energy_interval(w_energy, model.tail_energy());
    // roundoff allowance for collapsed intervals with zero spread
    let slack = 3.0 * se + 1e-9 * interval.upper.abs().max(1.0);
    let pass = interval.valid && mean >= interval.lower - slack && mean <= interval.upper + slack;
    Ok(BoundReport {
        samples: n,
        mean_energy: mean,
        standard_error: se,
        w_energy,
        tail_energy: model.tail_energy(),
        interval,
        pass,
    })
}
