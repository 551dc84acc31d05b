//! The plausibility scorer.
//!
//! One shared parameter set scores any reconstruction (both members of a
//! minimal pair pass through identical weights): token embeddings are scaled
//! by per-role indicator coefficients, encoded by a bidirectional recurrent
//! layer, contextualized by multi-head self-attention, pooled by a learned
//! attention vector, and mapped to a scalar through selu. Ablation switches
//! bypass the coefficients or replace attention pooling with the
//! concatenation of the two final recurrent states.
//!
//! All computation is f64 and fully deterministic. Backpropagation is
//! implemented by hand in this module tree; gradient correctness is enforced
//! against central finite differences.

mod attention;
mod grad;
mod lstm;

pub use attention::{
    attention_backward, attention_forward, masked_softmax, masked_softmax_backward, pool_backward,
    pool_forward, AttentionCache, HeadGrads, HeadParams, PoolCache,
};
pub use grad::{finite_difference_errors, FdReport};
pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmGrads, LstmParams};

use crate::embed::TokenEmbeddingSequence;
use crate::reconstruct::SpanTag;
use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SELU_LAMBDA: f64 = 1.0507009873554804934193349852946;
pub const SELU_ALPHA: f64 = 1.6732632423543772848170429916717;

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
    }
}

pub fn selu_prime(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cannot score an empty sequence")]
    EmptySequence,
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

/// Architecture switches and sizes. `hidden` is the width of each recurrent
/// direction, so the model width is `2 * hidden`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub use_coefficients: bool,
    pub use_attention: bool,
    pub d_input: usize,
    pub hidden: usize,
    pub n_heads: usize,
    pub seed: u64,
}

impl EncoderConfig {
    /// Reference sizes: 256 per direction, 4 heads.
    pub fn reference(d_input: usize, seed: u64) -> Self {
        EncoderConfig {
            use_coefficients: true,
            use_attention: true,
            d_input,
            hidden: 256,
            n_heads: 4,
            seed,
        }
    }

    /// Small sizes for desk-scale training and tests.
    pub fn small(d_input: usize, seed: u64) -> Self {
        EncoderConfig {
            use_coefficients: true,
            use_attention: true,
            d_input,
            hidden: 32,
            n_heads: 4,
            seed,
        }
    }

    pub fn d_model(&self) -> usize {
        2 * self.hidden
    }

    pub fn d_k(&self) -> usize {
        self.d_model() / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_input == 0 || self.hidden == 0 || self.n_heads == 0 {
            return Err(ModelError::BadConfig("zero-sized dimension".into()));
        }
        if self.d_model() % self.n_heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "model width {} not divisible by {} heads",
                self.d_model(),
                self.n_heads
            )));
        }
        Ok(())
    }
}

/// Every trainable tensor. Coefficient vectors start at all-ones; positivity
/// is an initialization property, not an enforced constraint, so training may
/// move them freely.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub c_target: Array1<f64>,
    pub c_connector: Array1<f64>,
    pub c_source: Array1<f64>,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub heads: Vec<HeadParams>,
    pub w_o: Array2<f64>,
    pub w_a: Array1<f64>,
    pub w_out: Array1<f64>,
}

impl ModelParams {
    /// Seeded initialization: coefficients all-ones, biases zero, weights
    /// uniform in ±1/sqrt(fan_in). Tensor order is fixed, so a seed fully
    /// determines every value.
    pub fn init(config: &EncoderConfig) -> Result<ModelParams, ModelError> {
        config.validate()?;
        let d = config.d_input;
        let h = config.hidden;
        let d_model = config.d_model();
        let d_k = config.d_k();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| -> Array2<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };
        let fwd = LstmParams {
            w_ih: uniform(4 * h, d, d),
            w_hh: uniform(4 * h, h, h),
            b: Array1::zeros(4 * h),
        };
        let bwd = LstmParams {
            w_ih: uniform(4 * h, d, d),
            w_hh: uniform(4 * h, h, h),
            b: Array1::zeros(4 * h),
        };
        let heads = (0..config.n_heads)
            .map(|_| HeadParams {
                w_q: uniform(d_model, d_k, d_model),
                w_k: uniform(d_model, d_k, d_model),
                w_v: uniform(d_model, d_k, d_model),
            })
            .collect();
        let w_o = uniform(d_model, d_model, d_model);
        let w_a = uniform(d_model, 1, d_model).column(0).to_owned();
        let w_out = uniform(d_model, 1, d_model).column(0).to_owned();
        Ok(ModelParams {
            c_target: Array1::ones(d),
            c_connector: Array1::ones(d),
            c_source: Array1::ones(d),
            fwd,
            bwd,
            heads,
            w_o,
            w_a,
            w_out,
        })
    }

    pub fn coefficient_for(&self, tag: SpanTag) -> &Array1<f64> {
        match tag {
            SpanTag::Target => &self.c_target,
            SpanTag::Connector => &self.c_connector,
            SpanTag::Source => &self.c_source,
        }
    }

    /// Named shapes in canonical order; the same order governs `flatten`,
    /// `assign_from_flat` and the checkpoint tensor container.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = vec![
            ("c_target".to_string(), vec![self.c_target.len()]),
            ("c_connector".to_string(), vec![self.c_connector.len()]),
            ("c_source".to_string(), vec![self.c_source.len()]),
            ("fwd.w_ih".to_string(), self.fwd.w_ih.shape().to_vec()),
            ("fwd.w_hh".to_string(), self.fwd.w_hh.shape().to_vec()),
            ("fwd.b".to_string(), vec![self.fwd.b.len()]),
            ("bwd.w_ih".to_string(), self.bwd.w_ih.shape().to_vec()),
            ("bwd.w_hh".to_string(), self.bwd.w_hh.shape().to_vec()),
            ("bwd.b".to_string(), vec![self.bwd.b.len()]),
        ];
        for (i, head) in self.heads.iter().enumerate() {
            specs.push((format!("head{i}.w_q"), head.w_q.shape().to_vec()));
            specs.push((format!("head{i}.w_k"), head.w_k.shape().to_vec()));
            specs.push((format!("head{i}.w_v"), head.w_v.shape().to_vec()));
        }
        specs.push(("w_o".to_string(), self.w_o.shape().to_vec()));
        specs.push(("w_a".to_string(), vec![self.w_a.len()]));
        specs.push(("w_out".to_string(), vec![self.w_out.len()]));
        specs
    }

    fn tensor_views(&self) -> Vec<&dyn Flat> {
        let mut v: Vec<&dyn Flat> = vec![
            &self.c_target,
            &self.c_connector,
            &self.c_source,
            &self.fwd.w_ih,
            &self.fwd.w_hh,
            &self.fwd.b,
            &self.bwd.w_ih,
            &self.bwd.w_hh,
            &self.bwd.b,
        ];
        for head in &self.heads {
            v.push(&head.w_q);
            v.push(&head.w_k);
            v.push(&head.w_v);
        }
        v.push(&self.w_o);
        v.push(&self.w_a);
        v.push(&self.w_out);
        v
    }

    fn tensor_views_mut(&mut self) -> Vec<&mut dyn Flat> {
        let mut v: Vec<&mut dyn Flat> = vec![
            &mut self.c_target,
            &mut self.c_connector,
            &mut self.c_source,
            &mut self.fwd.w_ih,
            &mut self.fwd.w_hh,
            &mut self.fwd.b,
            &mut self.bwd.w_ih,
            &mut self.bwd.w_hh,
            &mut self.bwd.b,
        ];
        for head in &mut self.heads {
            v.push(&mut head.w_q);
            v.push(&mut head.w_k);
            v.push(&mut head.w_v);
        }
        v.push(&mut self.w_o);
        v.push(&mut self.w_a);
        v.push(&mut self.w_out);
        v
    }

    pub fn n_params(&self) -> usize {
        self.tensor_views().iter().map(|t| t.len_flat()).sum()
    }

    /// All values in canonical tensor order, row-major within each tensor.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for t in self.tensor_views() {
            t.extend_into(&mut out);
        }
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensor_views_mut() {
            offset = t.assign_from(flat, offset);
        }
        assert_eq!(offset, flat.len(), "flat vector length mismatch");
    }
}

/// Row-major flattening shared by vectors and matrices.
trait Flat {
    fn len_flat(&self) -> usize;
    fn extend_into(&self, out: &mut Vec<f64>);
    fn assign_from(&mut self, flat: &[f64], offset: usize) -> usize;
}

impl Flat for Array1<f64> {
    fn len_flat(&self) -> usize {
        self.len()
    }
    fn extend_into(&self, out: &mut Vec<f64>) {
        out.extend(self.iter());
    }
    fn assign_from(&mut self, flat: &[f64], offset: usize) -> usize {
        for (i, v) in self.iter_mut().enumerate() {
            *v = flat[offset + i];
        }
        offset + self.len()
    }
}

impl Flat for Array2<f64> {
    fn len_flat(&self) -> usize {
        self.len()
    }
    fn extend_into(&self, out: &mut Vec<f64>) {
        out.extend(self.iter());
    }
    fn assign_from(&mut self, flat: &[f64], offset: usize) -> usize {
        let n = self.len();
        for (i, v) in self.iter_mut().enumerate() {
            *v = flat[offset + i];
        }
        offset + n
    }
}

/// Gradients, one tensor per parameter tensor, same canonical order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub c_target: Array1<f64>,
    pub c_connector: Array1<f64>,
    pub c_source: Array1<f64>,
    pub fwd: LstmGrads,
    pub bwd: LstmGrads,
    pub heads: Vec<HeadGrads>,
    pub w_o: Array2<f64>,
    pub w_a: Array1<f64>,
    pub w_out: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &ModelParams) -> Gradients {
        Gradients {
            c_target: Array1::zeros(p.c_target.len()),
            c_connector: Array1::zeros(p.c_connector.len()),
            c_source: Array1::zeros(p.c_source.len()),
            fwd: LstmGrads::zeros_like(&p.fwd),
            bwd: LstmGrads::zeros_like(&p.bwd),
            heads: p.heads.iter().map(HeadGrads::zeros_like).collect(),
            w_o: Array2::zeros(p.w_o.raw_dim()),
            w_a: Array1::zeros(p.w_a.len()),
            w_out: Array1::zeros(p.w_out.len()),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.c_target += &other.c_target;
        self.c_connector += &other.c_connector;
        self.c_source += &other.c_source;
        self.fwd.w_ih += &other.fwd.w_ih;
        self.fwd.w_hh += &other.fwd.w_hh;
        self.fwd.b += &other.fwd.b;
        self.bwd.w_ih += &other.bwd.w_ih;
        self.bwd.w_hh += &other.bwd.w_hh;
        self.bwd.b += &other.bwd.b;
        for (a, b) in self.heads.iter_mut().zip(&other.heads) {
            a.w_q += &b.w_q;
            a.w_k += &b.w_k;
            a.w_v += &b.w_v;
        }
        self.w_o += &other.w_o;
        self.w_a += &other.w_a;
        self.w_out += &other.w_out;
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensor_views_mut() {
            t.scale_flat(factor);
        }
    }

    /// Same canonical order as `ModelParams::flatten`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in self.tensor_views() {
            t.extend_into(&mut out);
        }
        out
    }

    fn tensor_views(&self) -> Vec<&dyn Flat> {
        let mut v: Vec<&dyn Flat> = vec![
            &self.c_target,
            &self.c_connector,
            &self.c_source,
            &self.fwd.w_ih,
            &self.fwd.w_hh,
            &self.fwd.b,
            &self.bwd.w_ih,
            &self.bwd.w_hh,
            &self.bwd.b,
        ];
        for head in &self.heads {
            v.push(&head.w_q);
            v.push(&head.w_k);
            v.push(&head.w_v);
        }
        v.push(&self.w_o);
        v.push(&self.w_a);
        v.push(&self.w_out);
        v
    }

    fn tensor_views_mut(&mut self) -> Vec<&mut dyn FlatMut> {
        let mut v: Vec<&mut dyn FlatMut> = vec![
            &mut self.c_target,
            &mut self.c_connector,
            &mut self.c_source,
            &mut self.fwd.w_ih,
            &mut self.fwd.w_hh,
            &mut self.fwd.b,
            &mut self.bwd.w_ih,
            &mut self.bwd.w_hh,
            &mut self.bwd.b,
        ];
        for head in &mut self.heads {
            v.push(&mut head.w_q);
            v.push(&mut head.w_k);
            v.push(&mut head.w_v);
        }
        v.push(&mut self.w_o);
        v.push(&mut self.w_a);
        v.push(&mut self.w_out);
        v
    }
}

trait FlatMut {
    fn scale_flat(&mut self, factor: f64);
}

impl FlatMut for Array1<f64> {
    fn scale_flat(&mut self, factor: f64) {
        self.mapv_inplace(|v| v * factor);
    }
}

impl FlatMut for Array2<f64> {
    fn scale_flat(&mut self, factor: f64) {
        self.mapv_inplace(|v| v * factor);
    }
}

/// Scale each embedding row by the coefficient vector of its span tag.
pub fn apply_coefficients(
    matrix: &Array2<f64>,
    tags: &[SpanTag],
    params: &ModelParams,
) -> Result<Array2<f64>, ModelError> {
    if tags.len() != matrix.nrows() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} tags for {} rows",
            tags.len(),
            matrix.nrows()
        )));
    }
    if params.c_target.len() != matrix.ncols() {
        return Err(ModelError::ShapeMismatch(format!(
            "coefficient dimension {} for input dimension {}",
            params.c_target.len(),
            matrix.ncols()
        )));
    }
    let mut out = matrix.clone();
    for (t, tag) in tags.iter().enumerate() {
        let mut row = out.row_mut(t);
        row *= &params.coefficient_for(*tag).view();
    }
    Ok(out)
}

/// Scores for the -att path read the forward direction's final state and the
/// backward direction's state at position 0 (its final state in reading
/// order).
pub fn last_states_concat(cache: &ForwardCache, hidden: usize) -> Array1<f64> {
    let mut v = Array1::<f64>::zeros(2 * hidden);
    v.slice_mut(s![0..hidden])
        .assign(&cache.lstm_fwd.h.row(cache.valid - 1));
    v.slice_mut(s![hidden..2 * hidden])
        .assign(&cache.lstm_bwd.h.row(0));
    v
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub e_scaled: Array2<f64>,
    pub lstm_fwd: LstmCache,
    pub lstm_bwd: LstmCache,
    /// Encoder states, n × d_model.
    pub h: Array2<f64>,
    pub att: Option<AttentionCache>,
    pub pool: Option<PoolCache>,
    /// Pooled representation (or last-states concatenation in the -att path).
    pub v: Array1<f64>,
    /// Pre-activation of the output unit.
    pub z: f64,
    pub score: f64,
    pub valid: usize,
}

/// Full forward pass over `matrix[0..valid]`. Rows beyond `valid` are
/// ignored entirely.
pub fn forward(
    matrix: &Array2<f64>,
    tags: &[SpanTag],
    valid: usize,
    params: &ModelParams,
    config: &EncoderConfig,
) -> Result<(f64, ForwardCache), ModelError> {
    if valid == 0 {
        return Err(ModelError::EmptySequence);
    }
    if valid > matrix.nrows() {
        return Err(ModelError::ShapeMismatch(format!(
            "valid length {} exceeds {} rows",
            valid,
            matrix.nrows()
        )));
    }
    let h_size = config.hidden;
    let e_scaled = if config.use_coefficients {
        apply_coefficients(matrix, tags, params)?
    } else {
        if tags.len() != matrix.nrows() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} tags for {} rows",
                tags.len(),
                matrix.nrows()
            )));
        }
        matrix.clone()
    };
    let lstm_fwd = lstm_forward(&e_scaled, valid, &params.fwd, false);
    let lstm_bwd = lstm_forward(&e_scaled, valid, &params.bwd, true);
    let n = matrix.nrows();
    let mut h = Array2::<f64>::zeros((n, 2 * h_size));
    h.slice_mut(s![.., 0..h_size]).assign(&lstm_fwd.h);
    h.slice_mut(s![.., h_size..2 * h_size]).assign(&lstm_bwd.h);

    let (att, pool, v) = if config.use_attention {
        let att = attention_forward(&h, &params.heads, &params.w_o, valid);
        let pool = pool_forward(&att.s, &params.w_a, valid);
        let v = pool.v.clone();
        (Some(att), Some(pool), v)
    } else {
        // Last state of the forward read, first-position state of the
        // backward read (its last in reading order).
        let mut v = Array1::<f64>::zeros(2 * h_size);
        v.slice_mut(s![0..h_size])
            .assign(&lstm_fwd.h.row(valid - 1));
        v.slice_mut(s![h_size..2 * h_size])
            .assign(&lstm_bwd.h.row(0));
        (None, None, v)
    };
    let z = v.dot(&params.w_out);
    let score = selu(z);
    Ok((
        score,
        ForwardCache {
            e_scaled,
            lstm_fwd,
            lstm_bwd,
            h,
            att,
            pool,
            v,
            z,
            score,
            valid,
        },
    ))
}

/// Score an embedded sequence (full length valid).
pub fn score_sequence(
    seq: &TokenEmbeddingSequence,
    params: &ModelParams,
    config: &EncoderConfig,
) -> Result<f64, ModelError> {
    let (score, _) = forward(&seq.matrix, &seq.span_tags, seq.len(), params, config)?;
    Ok(score)
}

/// Backward pass: gradient of `dscore * score` w.r.t. every parameter.
/// `matrix` and `tags` must be the ones given to `forward`.
pub fn backward(
    matrix: &Array2<f64>,
    tags: &[SpanTag],
    cache: &ForwardCache,
    params: &ModelParams,
    config: &EncoderConfig,
    dscore: f64,
) -> Gradients {
    let h_size = config.hidden;
    let valid = cache.valid;
    let mut grads = Gradients::zeros_like(params);

    let dz = dscore * selu_prime(cache.z);
    grads.w_out += &(&cache.v * dz);
    let dv = &params.w_out * dz;

    let mut dh = Array2::<f64>::zeros(cache.h.raw_dim());
    match (&cache.att, &cache.pool) {
        (Some(att), Some(pool)) => {
            let (ds, dw_a) = pool_backward(&att.s, &dv, pool, &params.w_a);
            grads.w_a += &dw_a;
            let (head_grads, dw_o, dh_att) =
                attention_backward(&cache.h, &ds, att, &params.heads, &params.w_o);
            grads.w_o += &dw_o;
            for (g, hg) in grads.heads.iter_mut().zip(head_grads) {
                g.w_q += &hg.w_q;
                g.w_k += &hg.w_k;
                g.w_v += &hg.w_v;
            }
            dh += &dh_att;
        }
        _ => {
            let mut last = dh.row_mut(valid - 1);
            let mut upd = last.slice_mut(s![0..h_size]);
            upd += &dv.slice(s![0..h_size]);
            let mut first = dh.row_mut(0);
            let mut upd = first.slice_mut(s![h_size..2 * h_size]);
            upd += &dv.slice(s![h_size..2 * h_size]);
        }
    }

    let dh_f = dh.slice(s![.., 0..h_size]).to_owned();
    let dh_b = dh.slice(s![.., h_size..2 * h_size]).to_owned();
    let (fwd_grads, dx_f) = lstm_backward(&cache.e_scaled, &dh_f, &cache.lstm_fwd, &params.fwd);
    let (bwd_grads, dx_b) = lstm_backward(&cache.e_scaled, &dh_b, &cache.lstm_bwd, &params.bwd);
    grads.fwd.w_ih += &fwd_grads.w_ih;
    grads.fwd.w_hh += &fwd_grads.w_hh;
    grads.fwd.b += &fwd_grads.b;
    grads.bwd.w_ih += &bwd_grads.w_ih;
    grads.bwd.w_hh += &bwd_grads.w_hh;
    grads.bwd.b += &bwd_grads.b;

    if config.use_coefficients {
        let de_scaled = dx_f + dx_b;
        for t in 0..valid {
            let contrib = &de_scaled.row(t) * &matrix.row(t);
            let target = match tags[t] {
                SpanTag::Target => &mut grads.c_target,
                SpanTag::Connector => &mut grads.c_connector,
                SpanTag::Source => &mut grads.c_source,
            };
            *target += &contrib;
        }
    }
    grads
}

#[cfg(test)]
mod tests;
