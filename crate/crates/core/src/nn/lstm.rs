//! Three stacked LSTM layers with a dense sigmoid head, forward and exact
//! backward (BPTT) over minibatches.
//!
//! Gate rows are laid out `[input, forget, cell, output]`, each `H` wide:
//!
//! ```text
//! i = σ(a_i)   f = σ(a_f)   g = tanh(a_g)   o = σ(a_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```
//!
//! The head sees the top layer's final hidden state concatenated with the
//! static features: `p = σ(w · [h_T; s] + b)`.

use crate::error::{Error, Result};
use crate::seed::SplitMix64;

use super::matrix::{matmul_acc, matmul_nt_acc, matmul_tn_acc, sigmoid, Matrix};

pub const N_LAYERS: usize = 3;
pub const DEFAULT_HIDDEN: usize = 64;
/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` inside the loss.
pub const P_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// 4H×D input weights.
    pub w_x: Matrix,
    /// 4H×H recurrent weights.
    pub w_h: Matrix,
    /// 4H biases.
    pub b: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_x: Matrix::zeros(4 * hidden, input),
            w_h: Matrix::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols()
    }

    pub fn input(&self) -> usize {
        self.w_x.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub hidden: usize,
    pub input_size: usize,
    pub static_size: usize,
    pub layers: Vec<LstmLayerParams>,
    /// H + static_size weights.
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl LstmModel {
    /// All-zero parameters; also the shape of a gradient.
    pub fn zeros(input_size: usize, hidden: usize, static_size: usize) -> Self {
        let layers = (0..N_LAYERS)
            .map(|l| LstmLayerParams::zeros(if l == 0 { input_size } else { hidden }, hidden))
            .collect();
        Self {
            hidden,
            input_size,
            static_size,
            layers,
            head_w: vec![0.0; hidden + static_size],
            head_b: 0.0,
        }
    }

    pub fn zeros_like(other: &LstmModel) -> Self {
        Self::zeros(other.input_size, other.hidden, other.static_size)
    }

    /// Weights uniform in (−1/√H, 1/√H), biases zero except forget-gate biases at 1.
    pub fn init(input_size: usize, hidden: usize, static_size: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Config("hidden size must be at least 1".into()));
        }
        let mut model = Self::zeros(input_size, hidden, static_size);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut rng = SplitMix64::keyed(seed, "init", &[]);
        let mut draw = move || {
            // Open interval: resample the (measure-zero) lower endpoint.
            loop {
                let u = rng.next_f64();
                if u > 0.0 {
                    return bound * (2.0 * u - 1.0);
                }
            }
        };
        for layer in &mut model.layers {
            layer
                .w_x
                .as_mut_slice()
                .iter_mut()
                .for_each(|w| *w = draw());
            layer
                .w_h
                .as_mut_slice()
                .iter_mut()
                .for_each(|w| *w = draw());
            layer.b[hidden..2 * hidden].fill(1.0);
        }
        model.head_w.iter_mut().for_each(|w| *w = draw());
        Ok(model)
    }

    /// Parameter tensors with their names, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(3 * N_LAYERS + 2);
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w_x"), layer.w_x.as_slice()));
            out.push((format!("layer{l}.w_h"), layer.w_h.as_slice()));
            out.push((format!("layer{l}.b"), layer.b.as_slice()));
        }
        out.push(("head.w".into(), self.head_w.as_slice()));
        out.push(("head.b".into(), std::slice::from_ref(&self.head_b)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(3 * N_LAYERS + 2);
        for layer in &mut self.layers {
            out.push(layer.w_x.as_mut_slice());
            out.push(layer.w_h.as_mut_slice());
            out.push(layer.b.as_mut_slice());
        }
        out.push(self.head_w.as_mut_slice());
        out.push(std::slice::from_mut(&mut self.head_b));
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn check_shapes(&self) -> Result<()> {
        let h = self.hidden;
        let bad = |detail: String| {
            Err(Error::Dimension {
                op: "LstmModel",
                detail,
            })
        };
        if self.layers.len() != N_LAYERS {
            return bad(format!("{} layers, expected {N_LAYERS}", self.layers.len()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let d = if l == 0 { self.input_size } else { h };
            if layer.w_x.shape() != (4 * h, d)
                || layer.w_h.shape() != (4 * h, h)
                || layer.b.len() != 4 * h
            {
                return bad(format!("layer {l} parameters do not match D={d}, H={h}"));
            }
        }
        if self.head_w.len() != h + self.static_size {
            return bad(format!(
                "head has {} weights, expected H + static = {}",
                self.head_w.len(),
                h + self.static_size
            ));
        }
        Ok(())
    }
}

/// Borrowed view of one training example: `steps × input` row-major sequence.
#[derive(Debug, Clone, Copy)]
pub struct SampleRef<'a> {
    pub seq: &'a [f64],
    pub static_features: &'a [f64],
    pub label: f64,
}

/// Owned example, mostly for tests and small experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub seq: Vec<f64>,
    pub static_features: Vec<f64>,
    pub label: f64,
}

impl Sample {
    pub fn as_ref(&self) -> SampleRef<'_> {
        SampleRef {
            seq: &self.seq,
            static_features: &self.static_features,
            label: self.label,
        }
    }
}

/// Everything one cell step needs for its backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates `[i, f, g, o]`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One LSTM step for a single sample.
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &LstmLayerParams,
) -> Result<(Vec<f64>, Vec<f64>, CellCache)> {
    let h = params.hidden();
    if x.len() != params.input() || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::Dimension {
            op: "lstm_cell",
            detail: format!(
                "x has {} (W_x expects {}), h_prev has {}, c_prev has {} (H = {h})",
                x.len(),
                params.input(),
                h_prev.len(),
                c_prev.len()
            ),
        });
    }
    let mut gates: Vec<f64> = (0..4 * h)
        .map(|r| {
            params.b[r]
                + super::matrix::dot(params.w_x.row(r), x)
                + super::matrix::dot(params.w_h.row(r), h_prev)
        })
        .collect();
    activate(&mut gates, h);
    let mut c = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    let mut h_out = vec![0.0; h];
    for j in 0..h {
        let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h_out[j] = o * tanh_c[j];
    }
    let cache = CellCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        c: c.clone(),
        tanh_c,
    };
    Ok((h_out, c, cache))
}

#[inline]
fn activate(gates: &mut [f64], h: usize) {
    for (k, a) in gates.iter_mut().enumerate() {
        *a = if (2 * h..3 * h).contains(&k) {
            a.tanh()
        } else {
            sigmoid(*a)
        };
    }
}

struct LayerCache {
    /// Activated gates per step, B×4H.
    gates: Vec<Matrix>,
    c: Vec<Matrix>,
    tanh_c: Vec<Matrix>,
    h: Vec<Matrix>,
}

/// Forward state kept for [`backward`].
pub struct ForwardCache {
    steps: usize,
    batch: usize,
    /// Layer-0 inputs per step, B×D.
    inputs: Vec<Matrix>,
    layers: Vec<LayerCache>,
    /// B×(H+S) head inputs.
    head_in: Matrix,
    pub probs: Vec<f64>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn validate_batch(model: &LstmModel, batch: &[SampleRef<'_>]) -> Result<usize> {
    model.check_shapes()?;
    let first = batch
        .first()
        .ok_or_else(|| Error::Input("empty batch".into()))?;
    if model.input_size == 0 || first.seq.len() % model.input_size != 0 {
        return Err(Error::Dimension {
            op: "forward",
            detail: format!(
                "sequence of {} values is not a multiple of input size {}",
                first.seq.len(),
                model.input_size
            ),
        });
    }
    let steps = first.seq.len() / model.input_size;
    if steps == 0 {
        return Err(Error::Input("sequence has no steps".into()));
    }
    for (i, s) in batch.iter().enumerate() {
        if s.seq.len() != first.seq.len() || s.static_features.len() != model.static_size {
            return Err(Error::Dimension {
                op: "forward",
                detail: format!(
                    "sample {i}: sequence {} (expected {}), static {} (expected {})",
                    s.seq.len(),
                    first.seq.len(),
                    s.static_features.len(),
                    model.static_size
                ),
            });
        }
        if !s.seq.iter().chain(s.static_features).all(|v| v.is_finite()) {
            return Err(Error::Input(format!("sample {i} has non-finite inputs")));
        }
    }
    Ok(steps)
}

/// Runs the batch through the network from zero initial states.
pub fn forward_batch(model: &LstmModel, batch: &[SampleRef<'_>]) -> Result<ForwardCache> {
    let steps = validate_batch(model, batch)?;
    let bsz = batch.len();
    let h = model.hidden;
    let d = model.input_size;

    let inputs: Vec<Matrix> = (0..steps)
        .map(|t| Matrix::from_fn(bsz, d, |b, k| batch[b].seq[t * d + k]))
        .collect();

    let mut layers: Vec<LayerCache> = Vec::with_capacity(N_LAYERS);
    for (l, params) in model.layers.iter().enumerate() {
        let w_xt = params.w_x.transpose();
        let w_ht = params.w_h.transpose();
        let mut cache = LayerCache {
            gates: Vec::with_capacity(steps),
            c: Vec::with_capacity(steps),
            tanh_c: Vec::with_capacity(steps),
            h: Vec::with_capacity(steps),
        };
        let zero = Matrix::zeros(bsz, h);
        for t in 0..steps {
            let x = if l == 0 {
                &inputs[t]
            } else {
                &layers[l - 1].h[t]
            };
            let (h_prev, c_prev) = if t == 0 {
                (&zero, &zero)
            } else {
                (&cache.h[t - 1], &cache.c[t - 1])
            };
            let mut gates = Matrix::zeros(bsz, 4 * h);
            for b in 0..bsz {
                gates.row_mut(b).copy_from_slice(&params.b);
            }
            matmul_acc(x, &w_xt, &mut gates);
            matmul_acc(h_prev, &w_ht, &mut gates);
            let mut c = Matrix::zeros(bsz, h);
            let mut tanh_c = Matrix::zeros(bsz, h);
            let mut h_new = Matrix::zeros(bsz, h);
            for b in 0..bsz {
                let g = gates.row_mut(b);
                activate(g, h);
                let cp = c_prev.row(b);
                let (cr, tr, hr) = (c.row_mut(b), tanh_c.row_mut(b), h_new.row_mut(b));
                for j in 0..h {
                    cr[j] = g[h + j] * cp[j] + g[j] * g[2 * h + j];
                    tr[j] = cr[j].tanh();
                    hr[j] = g[3 * h + j] * tr[j];
                }
            }
            cache.gates.push(gates);
            cache.c.push(c);
            cache.tanh_c.push(tanh_c);
            cache.h.push(h_new);
        }
        layers.push(cache);
    }

    let top = &layers[N_LAYERS - 1].h[steps - 1];
    let mut head_in = Matrix::zeros(bsz, h + model.static_size);
    let mut probs = Vec::with_capacity(bsz);
    for b in 0..bsz {
        let row = head_in.row_mut(b);
        row[..h].copy_from_slice(top.row(b));
        row[h..].copy_from_slice(batch[b].static_features);
        let z = model.head_b + super::matrix::dot(&model.head_w, row);
        probs.push(sigmoid(z));
    }
    Ok(ForwardCache {
        steps,
        batch: bsz,
        inputs,
        layers,
        head_in,
        probs,
    })
}

/// Probability for a single sequence.
pub fn forward(model: &LstmModel, sample: SampleRef<'_>) -> Result<f64> {
    Ok(forward_batch(model, &[sample])?.probs[0])
}

/// Binary cross-entropy with the probability clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

pub fn mean_bce(probs: &[f64], labels: &[f64]) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| bce_loss(p, y))
        .sum();
    total / probs.len() as f64
}

/// d(loss)/d(logit) for one sample; zero where the clamp is active.
#[inline]
fn dlogit(p: f64, y: f64) -> f64 {
    if (P_CLAMP..=1.0 - P_CLAMP).contains(&p) {
        p - y
    } else {
        0.0
    }
}

/// Exact gradient of the mean clamped BCE over the cached batch.
pub fn backward(model: &LstmModel, cache: &ForwardCache, labels: &[f64]) -> Result<LstmModel> {
    if labels.len() != cache.batch {
        return Err(Error::Dimension {
            op: "backward",
            detail: format!("{} labels for a batch of {}", labels.len(), cache.batch),
        });
    }
    let bsz = cache.batch;
    let h = model.hidden;
    let steps = cache.steps;
    let mut grad = LstmModel::zeros_like(model);

    // Head.
    let mut dh_top = Matrix::zeros(bsz, h);
    for b in 0..bsz {
        let dz = dlogit(cache.probs[b], labels[b]) / bsz as f64;
        if dz == 0.0 {
            continue;
        }
        grad.head_b += dz;
        super::matrix::axpy(dz, cache.head_in.row(b), &mut grad.head_w);
        super::matrix::axpy(dz, &model.head_w[..h], dh_top.row_mut(b));
    }

    // Gradient arriving at each step's h from the layer above (or the head).
    let mut dh_ext: Vec<Matrix> = (0..steps).map(|_| Matrix::zeros(bsz, h)).collect();
    dh_ext[steps - 1] = dh_top;

    let zero = Matrix::zeros(bsz, h);
    for l in (0..N_LAYERS).rev() {
        let params = &model.layers[l];
        let lc = &cache.layers[l];
        let d_in = if l == 0 { model.input_size } else { h };
        let w_xt = params.w_x.transpose();
        let w_ht = params.w_h.transpose();
        let mut g_wxt = Matrix::zeros(d_in, 4 * h);
        let mut g_wht = Matrix::zeros(h, 4 * h);
        let mut g_b = vec![0.0; 4 * h];
        let mut dh_next = Matrix::zeros(bsz, h);
        let mut dc_next = Matrix::zeros(bsz, h);
        let mut dx_all: Vec<Matrix> = Vec::with_capacity(if l > 0 { steps } else { 0 });

        for t in (0..steps).rev() {
            let c_prev = if t == 0 { &zero } else { &lc.c[t - 1] };
            let h_prev = if t == 0 { &zero } else { &lc.h[t - 1] };
            let x = if l == 0 {
                &cache.inputs[t]
            } else {
                &cache.layers[l - 1].h[t]
            };
            let mut da = Matrix::zeros(bsz, 4 * h);
            for b in 0..bsz {
                let g = lc.gates[t].row(b);
                let tc = lc.tanh_c[t].row(b);
                let cp = c_prev.row(b);
                let dhe = dh_ext[t].row(b);
                let dhn = dh_next.row(b);
                let dcn = dc_next.row_mut(b);
                let dar = da.row_mut(b);
                for j in 0..h {
                    let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let dh = dhe[j] + dhn[j];
                    let d_o = dh * tc[j];
                    let dc = dcn[j] + dh * o * (1.0 - tc[j] * tc[j]);
                    dar[j] = dc * gg * i * (1.0 - i);
                    dar[h + j] = dc * cp[j] * f * (1.0 - f);
                    dar[2 * h + j] = dc * i * (1.0 - gg * gg);
                    dar[3 * h + j] = d_o * o * (1.0 - o);
                    dcn[j] = dc * f;
                }
                super::matrix::axpy(1.0, dar, &mut g_b);
            }
            matmul_tn_acc(x, &da, &mut g_wxt);
            matmul_tn_acc(h_prev, &da, &mut g_wht);
            dh_next.fill(0.0);
            matmul_nt_acc(&da, &w_ht, &mut dh_next);
            if l > 0 {
                let mut dx = Matrix::zeros(bsz, d_in);
                matmul_nt_acc(&da, &w_xt, &mut dx);
                dx_all.push(dx);
            }
        }
        let gl = &mut grad.layers[l];
        gl.w_x.add_transposed(&g_wxt);
        gl.w_h.add_transposed(&g_wht);
        gl.b = g_b;
        if l > 0 {
            dx_all.reverse();
            dh_ext = dx_all;
        }
    }
    Ok(grad)
}

/// Mean loss and its gradient over a batch.
pub fn loss_and_grad(model: &LstmModel, batch: &[SampleRef<'_>]) -> Result<(f64, LstmModel)> {
    let cache = forward_batch(model, batch)?;
    let labels: Vec<f64> = batch.iter().map(|s| s.label).collect();
    let loss = mean_bce(&cache.probs, &labels);
    let grad = backward(model, &cache, &labels)?;
    Ok((loss, grad))
}

/// Probabilities for many samples, evaluated in chunks. No state changes.
pub fn predict(model: &LstmModel, samples: &[SampleRef<'_>]) -> Result<Vec<f64>> {
    const CHUNK: usize = 256;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(CHUNK) {
        out.extend(forward_batch(model, chunk)?.probs);
    }
    Ok(out)
}
