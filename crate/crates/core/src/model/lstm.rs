//! Recurrent cell: forward pass with full per-step caching and
//! backpropagation through time.
//!
//! Gate blocks are stacked in the order input, forget, candidate, output;
//! initial hidden and cell states are zero. All math is f64. `valid` marks
//! the true sequence length: rows at or beyond it are left zero in every
//! output and receive no gradient.

use ndarray::{Array1, Array2, Axis};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// (4h × d) input weights, gate blocks stacked.
    pub w_ih: Array2<f64>,
    /// (4h × h) recurrent weights.
    pub w_hh: Array2<f64>,
    /// (4h) bias.
    pub b: Array1<f64>,
}

impl LstmParams {
    pub fn hidden(&self) -> usize {
        self.b.len() / 4
    }

    pub fn zeros(d: usize, h: usize) -> Self {
        LstmParams {
            w_ih: Array2::zeros((4 * h, d)),
            w_hh: Array2::zeros((4 * h, h)),
            b: Array1::zeros(4 * h),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LstmGrads {
    pub w_ih: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmGrads {
    pub fn zeros_like(p: &LstmParams) -> Self {
        LstmGrads {
            w_ih: Array2::zeros(p.w_ih.raw_dim()),
            w_hh: Array2::zeros(p.w_hh.raw_dim()),
            b: Array1::zeros(p.b.raw_dim()),
        }
    }
}

/// Per-step activations of one directional pass, indexed by original
/// sequence position regardless of read direction.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub i: Array2<f64>,
    pub f: Array2<f64>,
    pub g: Array2<f64>,
    pub o: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
    pub reverse: bool,
    pub valid: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One directional pass over `x` (n × d). `reverse` reads the sequence from
/// the end; outputs stay aligned to original positions.
pub fn lstm_forward(
    x: &Array2<f64>,
    valid: usize,
    params: &LstmParams,
    reverse: bool,
) -> LstmCache {
    let n = x.nrows();
    let h = params.hidden();
    assert!(valid <= n, "valid length exceeds sequence length");
    let mut cache = LstmCache {
        i: Array2::zeros((n, h)),
        f: Array2::zeros((n, h)),
        g: Array2::zeros((n, h)),
        o: Array2::zeros((n, h)),
        c: Array2::zeros((n, h)),
        tanh_c: Array2::zeros((n, h)),
        h: Array2::zeros((n, h)),
        reverse,
        valid,
    };
    let mut h_prev = Array1::<f64>::zeros(h);
    let mut c_prev = Array1::<f64>::zeros(h);
    for k in 0..valid {
        let t = if reverse { valid - 1 - k } else { k };
        let x_t = x.row(t);
        let a = params.w_ih.dot(&x_t) + params.w_hh.dot(&h_prev) + &params.b;
        let i_t = a.slice(ndarray::s![0..h]).mapv(sigmoid);
        let f_t = a.slice(ndarray::s![h..2 * h]).mapv(sigmoid);
        let g_t = a.slice(ndarray::s![2 * h..3 * h]).mapv(f64::tanh);
        let o_t = a.slice(ndarray::s![3 * h..4 * h]).mapv(sigmoid);
        let c_t = &f_t * &c_prev + &i_t * &g_t;
        let tanh_c_t = c_t.mapv(f64::tanh);
        let h_t = &o_t * &tanh_c_t;
        cache.i.row_mut(t).assign(&i_t);
        cache.f.row_mut(t).assign(&f_t);
        cache.g.row_mut(t).assign(&g_t);
        cache.o.row_mut(t).assign(&o_t);
        cache.c.row_mut(t).assign(&c_t);
        cache.tanh_c.row_mut(t).assign(&tanh_c_t);
        cache.h.row_mut(t).assign(&h_t);
        h_prev = h_t;
        c_prev = c_t;
    }
    cache
}

/// Backpropagation through time. `dh_out` carries the loss gradient w.r.t.
/// every hidden state (n × h). Returns parameter gradients and the gradient
/// w.r.t. the inputs.
pub fn lstm_backward(
    x: &Array2<f64>,
    dh_out: &Array2<f64>,
    cache: &LstmCache,
    params: &LstmParams,
) -> (LstmGrads, Array2<f64>) {
    let n = x.nrows();
    let h = params.hidden();
    let valid = cache.valid;
    let mut grads = LstmGrads::zeros_like(params);
    let mut dx = Array2::<f64>::zeros((n, x.ncols()));
    let mut dh_next = Array1::<f64>::zeros(h);
    let mut dc_next = Array1::<f64>::zeros(h);
    for k in (0..valid).rev() {
        let t = if cache.reverse { valid - 1 - k } else { k };
        let (h_prev, c_prev) = if k == 0 {
            (Array1::zeros(h), Array1::zeros(h))
        } else {
            let t_prev = if cache.reverse { valid - k } else { k - 1 };
            (
                cache.h.row(t_prev).to_owned(),
                cache.c.row(t_prev).to_owned(),
            )
        };
        let i_t = cache.i.row(t);
        let f_t = cache.f.row(t);
        let g_t = cache.g.row(t);
        let o_t = cache.o.row(t);
        let tanh_c_t = cache.tanh_c.row(t);

        let dh = &dh_out.row(t) + &dh_next;
        let do_t = &dh * &tanh_c_t;
        let dc = &dc_next + &(&dh * &o_t * &tanh_c_t.mapv(|v| 1.0 - v * v));
        let di = &dc * &g_t;
        let dg = &dc * &i_t;
        let df = &dc * &c_prev;
        dc_next = &dc * &f_t;

        // Pre-activation gradients for each gate block.
        let dai = &di * &i_t.mapv(|v| v * (1.0 - v));
        let daf = &df * &f_t.mapv(|v| v * (1.0 - v));
        let dag = &dg * &g_t.mapv(|v| 1.0 - v * v);
        let dao = &do_t * &o_t.mapv(|v| v * (1.0 - v));
        let mut da = Array1::<f64>::zeros(4 * h);
        da.slice_mut(ndarray::s![0..h]).assign(&dai);
        da.slice_mut(ndarray::s![h..2 * h]).assign(&daf);
        da.slice_mut(ndarray::s![2 * h..3 * h]).assign(&dag);
        da.slice_mut(ndarray::s![3 * h..4 * h]).assign(&dao);

        let x_t = x.row(t);
        let da_col = da.view().insert_axis(Axis(1));
        grads.w_ih += &da_col.dot(&x_t.insert_axis(Axis(0)));
        grads.w_hh += &da_col.dot(&h_prev.view().insert_axis(Axis(0)));
        grads.b += &da;
        dx.row_mut(t).assign(&params.w_ih.t().dot(&da));
        dh_next = params.w_hh.t().dot(&da);
    }
    (grads, dx)
}
