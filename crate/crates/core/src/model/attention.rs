//! Scaled dot-product self-attention (multi-head) and attention pooling,
//! forward and backward, with length masking.
//!
//! The sequence attends to itself: queries, keys and values are all linear
//! projections of the encoder states. Softmax rows are computed with the
//! row-max subtracted for stability. Positions at or beyond `valid` receive
//! exactly zero attention weight and zero output.

use ndarray::{s, Array1, Array2};

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct HeadGrads {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
}

impl HeadGrads {
    pub fn zeros_like(p: &HeadParams) -> Self {
        HeadGrads {
            w_q: Array2::zeros(p.w_q.raw_dim()),
            w_k: Array2::zeros(p.w_k.raw_dim()),
            w_v: Array2::zeros(p.w_v.raw_dim()),
        }
    }
}

/// Numerically stable softmax over `x[..valid]`; the tail stays zero.
pub fn masked_softmax(x: &Array1<f64>, valid: usize) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(x.len());
    if valid == 0 {
        return out;
    }
    let head = x.slice(s![0..valid]);
    let max = head.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = head.mapv(|v| (v - max).exp());
    let sum: f64 = exps.sum();
    out.slice_mut(s![0..valid]).assign(&(exps / sum));
    out
}

/// Gradient of `masked_softmax`: given the output `a` and upstream `da`,
/// returns the gradient w.r.t. the logits. Row Jacobian of softmax.
pub fn masked_softmax_backward(a: &Array1<f64>, da: &Array1<f64>, valid: usize) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(a.len());
    let dot: f64 = (0..valid).map(|k| da[k] * a[k]).sum();
    for j in 0..valid {
        out[j] = a[j] * (da[j] - dot);
    }
    out
}

/// Per-head cache plus the concatenation feeding the output projection.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    /// Per head: projections (each n × d_k) and attention weights (n × n).
    pub heads: Vec<HeadCache>,
    /// Concatenated head outputs (n × d_model).
    pub concat: Array2<f64>,
    /// Final output S = concat · w_o (n × d_model).
    pub s: Array2<f64>,
    pub valid: usize,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    pub a: Array2<f64>,
}

/// Multi-head self-attention over `h` (n × d_model).
pub fn attention_forward(
    h: &Array2<f64>,
    heads: &[HeadParams],
    w_o: &Array2<f64>,
    valid: usize,
) -> AttentionCache {
    let n = h.nrows();
    let d_model = h.ncols();
    let d_k = heads[0].w_q.ncols();
    assert_eq!(heads.len() * d_k, d_model, "heads must tile d_model");
    let scale = 1.0 / (d_k as f64).sqrt();

    let mut concat = Array2::<f64>::zeros((n, d_model));
    let mut head_caches = Vec::with_capacity(heads.len());
    for (hi, head) in heads.iter().enumerate() {
        let q = h.dot(&head.w_q);
        let k = h.dot(&head.w_k);
        let v = h.dot(&head.w_v);
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..valid {
            let logits = k.slice(s![0..valid, ..]).dot(&q.row(i)) * scale;
            let mut full = Array1::<f64>::zeros(n);
            full.slice_mut(s![0..valid]).assign(&logits);
            let row = masked_softmax(&full, valid);
            a.row_mut(i).assign(&row);
        }
        let out = a.dot(&v); // rows >= valid are zero because their weights are zero
        concat
            .slice_mut(s![.., hi * d_k..(hi + 1) * d_k])
            .assign(&out);
        head_caches.push(HeadCache { q, k, v, a });
    }
    let s_out = concat.dot(w_o);
    AttentionCache {
        heads: head_caches,
        concat,
        s: s_out,
        valid,
    }
}

/// Backward through multi-head self-attention. `ds` is the gradient w.r.t.
/// the output S. Returns head/projection gradients and the gradient w.r.t.
/// the input states.
pub fn attention_backward(
    h: &Array2<f64>,
    ds: &Array2<f64>,
    cache: &AttentionCache,
    heads: &[HeadParams],
    w_o: &Array2<f64>,
) -> (Vec<HeadGrads>, Array2<f64>, Array2<f64>) {
    let n = h.nrows();
    let d_model = h.ncols();
    let d_k = heads[0].w_q.ncols();
    let valid = cache.valid;
    let scale = 1.0 / (d_k as f64).sqrt();

    let dw_o = cache.concat.t().dot(ds);
    let dconcat = ds.dot(&w_o.t());

    let mut dh = Array2::<f64>::zeros((n, d_model));
    let mut head_grads = Vec::with_capacity(heads.len());
    for (hi, head) in heads.iter().enumerate() {
        let hc = &cache.heads[hi];
        let dout = dconcat.slice(s![.., hi * d_k..(hi + 1) * d_k]);
        // out = A · V
        let da = dout.dot(&hc.v.t());
        let dv = hc.a.t().dot(&dout);
        // Softmax rows back to logits, then logits = scale · Q K^T.
        let mut dq = Array2::<f64>::zeros((n, d_k));
        let mut dk = Array2::<f64>::zeros((n, d_k));
        for i in 0..valid {
            let a_row = hc.a.row(i).to_owned();
            let da_row = da.row(i).to_owned();
            let dlogits = masked_softmax_backward(&a_row, &da_row, valid);
            for j in 0..valid {
                let g = dlogits[j] * scale;
                let mut dq_i = dq.row_mut(i);
                dq_i += &(&hc.k.row(j) * g);
                let mut dk_j = dk.row_mut(j);
                dk_j += &(&hc.q.row(i) * g);
            }
        }
        dh += &dq.dot(&head.w_q.t());
        dh += &dk.dot(&head.w_k.t());
        dh += &dv.dot(&head.w_v.t());
        head_grads.push(HeadGrads {
            w_q: h.t().dot(&dq),
            w_k: h.t().dot(&dk),
            w_v: h.t().dot(&dv),
        });
    }
    (head_grads, dw_o, dh)
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    /// Attention weights over positions (n), zero beyond `valid`.
    pub a: Array1<f64>,
    /// Pooled vector (d_model).
    pub v: Array1<f64>,
    pub valid: usize,
}

/// Attention pooling: e_t = S_t · w_a, a = softmax(e), v = Σ a_t S_t.
pub fn pool_forward(s: &Array2<f64>, w_a: &Array1<f64>, valid: usize) -> PoolCache {
    let e = s.dot(w_a);
    let a = masked_softmax(&e, valid);
    let v = s.t().dot(&a);
    PoolCache { a, v, valid }
}

/// Backward through pooling; returns (ds, dw_a).
pub fn pool_backward(
    s: &Array2<f64>,
    dv: &Array1<f64>,
    cache: &PoolCache,
    w_a: &Array1<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let n = s.nrows();
    let valid = cache.valid;
    let mut ds = Array2::<f64>::zeros(s.raw_dim());
    // v = Σ a_t S_t
    let mut da = Array1::<f64>::zeros(n);
    for t in 0..valid {
        da[t] = dv.dot(&s.row(t));
        let mut row = ds.row_mut(t);
        row += &(dv * cache.a[t]);
    }
    let de = masked_softmax_backward(&cache.a, &da, valid);
    let mut dw_a = Array1::<f64>::zeros(w_a.len());
    for t in 0..valid {
        let mut row = ds.row_mut(t);
        row += &(w_a * de[t]);
        dw_a += &(&s.row(t) * de[t]);
    }
    (ds, dw_a)
}
