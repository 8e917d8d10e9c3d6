//! Reference implementations shared by the integration tests.

pub mod qp_oracle;

use klfilter::ClassLabel;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `n` samples in `d` dimensions from two overlapping clouds, both classes
/// present.
pub fn svm_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<ClassLabel>) {
    loop {
        let labels: Vec<ClassLabel> = (0..n).map(|_| if rng.random_bool(0.5) { ClassLabel::B } else { ClassLabel::A }).collect();
        if !labels.contains(&ClassLabel::A) || !labels.contains(&ClassLabel::B) {
            continue;
        }
        // overlapping clouds, shifted by class
        let x = labels
            .iter()
            .map(|l| (0..d).map(|k| rng.random_range(-1.0..1.0) + if k == 0 { 0.6 * l.sign() } else { 0.0 }).collect())
            .collect();
        return (x, labels);
    }
}
