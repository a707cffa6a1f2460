//! Central finite-difference checks of the analytic LSTM gradient.

use crate::error::Result;
use crate::seed::SplitMix64;

use super::lstm::{loss_and_grad, LstmModel, Sample, SampleRef};

/// Central-difference step.
pub const DELTA: f64 = 1e-5;
/// Denominator floor, so entries with both gradients near zero compare absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Random model with nonzero biases, plus a random batch.
pub fn random_problem(
    seed: u64,
    input: usize,
    hidden: usize,
    static_size: usize,
    steps: usize,
    batch: usize,
) -> Result<(LstmModel, Vec<Sample>)> {
    let mut model = LstmModel::init(input, hidden, static_size, seed)?;
    let mut rng = SplitMix64::keyed(seed, "gradcheck", &[]);
    let mut u = move || 2.0 * rng.next_f64() - 1.0;
    for layer in &mut model.layers {
        layer.b.iter_mut().for_each(|b| *b += 0.5 * u());
    }
    model.head_b = 0.3 * u();
    let samples = (0..batch)
        .map(|k| Sample {
            seq: (0..steps * input).map(|_| u()).collect(),
            static_features: (0..static_size).map(|_| u()).collect(),
            label: (k % 2) as f64,
        })
        .collect();
    Ok((model, samples))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: (String, usize),
    pub checked: usize,
}

/// Compares every parameter's analytic gradient to a central difference.
pub fn check_model(model: &LstmModel, batch: &[SampleRef<'_>]) -> Result<GradCheck> {
    let (_, grad) = loss_and_grad(model, batch)?;
    let analytic: Vec<(String, Vec<f64>)> = grad
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.to_vec()))
        .collect();
    let mut probe = model.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        checked: 0,
    };
    for (k, (name, a)) in analytic.iter().enumerate() {
        for (i, &ai) in a.iter().enumerate() {
            let orig = probe.tensors_mut()[k][i];
            probe.tensors_mut()[k][i] = orig + DELTA;
            let plus = loss_and_grad(&probe, batch)?.0;
            probe.tensors_mut()[k][i] = orig - DELTA;
            let minus = loss_and_grad(&probe, batch)?.0;
            probe.tensors_mut()[k][i] = orig;
            let numeric = (plus - minus) / (2.0 * DELTA);
            let err = relative_error(ai, numeric);
            if err > out.max_rel_error {
                out.max_rel_error = err;
                out.worst = (name.clone(), i);
            }
            out.checked += 1;
        }
    }
    Ok(out)
}

/// One random instance of the standard check.
pub fn check_random(seed: u64, hidden: usize, steps: usize, batch: usize) -> Result<GradCheck> {
    let (model, samples) = random_problem(seed, 3, hidden, 2, steps, batch)?;
    let refs: Vec<SampleRef<'_>> = samples.iter().map(Sample::as_ref).collect();
    check_model(&model, &refs)
}
