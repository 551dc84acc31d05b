use super::*;
use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Independent straight-line oracle: plain vectors, explicit loops, its own
// nonlinearities. Deliberately shares no code with the implementation under
// test.
// ---------------------------------------------------------------------------

fn o_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn o_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn o_selu(x: f64) -> f64 {
    let lambda = 1.0507009873554804934193349852946;
    let alpha = 1.6732632423543772848170429916717;
    if x > 0.0 {
        lambda * x
    } else {
        lambda * alpha * (x.exp() - 1.0)
    }
}

fn o_lstm(
    ex: &[Vec<f64>],
    w_ih: &Array2<f64>,
    w_hh: &Array2<f64>,
    b: &Array1<f64>,
    reverse: bool,
) -> Vec<Vec<f64>> {
    let n = ex.len();
    let h = b.len() / 4;
    let d = ex[0].len();
    let mut states = vec![vec![0.0; h]; n];
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    for &t in &order {
        let mut a = vec![0.0; 4 * h];
        for (r, a_r) in a.iter_mut().enumerate() {
            for j in 0..d {
                *a_r += w_ih[[r, j]] * ex[t][j];
            }
            for j in 0..h {
                *a_r += w_hh[[r, j]] * h_prev[j];
            }
            *a_r += b[r];
        }
        let mut c_t = vec![0.0; h];
        let mut h_t = vec![0.0; h];
        for r in 0..h {
            let i_g = o_sigmoid(a[r]);
            let f_g = o_sigmoid(a[h + r]);
            let g_g = a[2 * h + r].tanh();
            let o_g = o_sigmoid(a[3 * h + r]);
            c_t[r] = f_g * c_prev[r] + i_g * g_g;
            h_t[r] = o_g * c_t[r].tanh();
        }
        states[t] = h_t.clone();
        h_prev = h_t;
        c_prev = c_t;
    }
    states
}

fn oracle_score(
    e: &[Vec<f64>],
    tags: &[crate::reconstruct::SpanTag],
    p: &ModelParams,
    cfg: &EncoderConfig,
) -> f64 {
    use crate::reconstruct::SpanTag;
    let n = e.len();
    let d = cfg.d_input;
    let h = cfg.hidden;
    let dm = 2 * h;
    let dk = cfg.d_k();

    // Indicator coefficients.
    let mut ex = vec![vec![0.0; d]; n];
    for t in 0..n {
        for j in 0..d {
            let c = if cfg.use_coefficients {
                match tags[t] {
                    SpanTag::Target => p.c_target[j],
                    SpanTag::Connector => p.c_connector[j],
                    SpanTag::Source => p.c_source[j],
                }
            } else {
                1.0
            };
            ex[t][j] = e[t][j] * c;
        }
    }

    let hf = o_lstm(&ex, &p.fwd.w_ih, &p.fwd.w_hh, &p.fwd.b, false);
    let hb = o_lstm(&ex, &p.bwd.w_ih, &p.bwd.w_hh, &p.bwd.b, true);
    let mut big_h = vec![vec![0.0; dm]; n];
    for t in 0..n {
        big_h[t][..h].copy_from_slice(&hf[t]);
        big_h[t][h..].copy_from_slice(&hb[t]);
    }

    let v: Vec<f64> = if cfg.use_attention {
        // Multi-head self-attention.
        let mut concat = vec![vec![0.0; dm]; n];
        for (hi, head) in p.heads.iter().enumerate() {
            let project = |w: &Array2<f64>| -> Vec<Vec<f64>> {
                (0..n)
                    .map(|t| {
                        (0..dk)
                            .map(|x| (0..dm).map(|y| big_h[t][y] * w[[y, x]]).sum())
                            .collect()
                    })
                    .collect()
            };
            let q = project(&head.w_q);
            let k = project(&head.w_k);
            let vv = project(&head.w_v);
            for i in 0..n {
                let logits: Vec<f64> = (0..n)
                    .map(|j| (0..dk).map(|x| q[i][x] * k[j][x]).sum::<f64>() / (dk as f64).sqrt())
                    .collect();
                let a = o_softmax(&logits);
                for x in 0..dk {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += a[j] * vv[j][x];
                    }
                    concat[i][hi * dk + x] = acc;
                }
            }
        }
        let mut s = vec![vec![0.0; dm]; n];
        for t in 0..n {
            for y in 0..dm {
                s[t][y] = (0..dm).map(|x| concat[t][x] * p.w_o[[x, y]]).sum();
            }
        }
        // Attention pooling.
        let e_t: Vec<f64> = (0..n)
            .map(|t| (0..dm).map(|y| s[t][y] * p.w_a[y]).sum())
            .collect();
        let a = o_softmax(&e_t);
        (0..dm)
            .map(|y| (0..n).map(|t| a[t] * s[t][y]).sum())
            .collect()
    } else {
        let mut v = vec![0.0; dm];
        v[..h].copy_from_slice(&hf[n - 1]);
        v[h..].copy_from_slice(&hb[0]);
        v
    };

    let z: f64 = (0..dm).map(|y| v[y] * p.w_out[y]).sum();
    o_selu(z)
}

// ---------------------------------------------------------------------------
// Fixtures.
// ---------------------------------------------------------------------------

use crate::reconstruct::SpanTag;

fn tiny_config(seed: u64) -> EncoderConfig {
    EncoderConfig {
        use_coefficients: true,
        use_attention: true,
        d_input: 4,
        hidden: 3,
        n_heads: 2,
        seed,
    }
}

fn random_input(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<SpanTag>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let tags = (0..n)
        .map(|t| {
            if t < n / 3 {
                SpanTag::Target
            } else if t < n / 2 {
                SpanTag::Connector
            } else {
                SpanTag::Source
            }
        })
        .collect();
    (matrix, tags)
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).to_vec()).collect()
}

/// Random coefficients near one, so the coefficient path carries signal.
fn perturb_coefficients(p: &mut ModelParams, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in [&mut p.c_target, &mut p.c_connector, &mut p.c_source] {
        c.mapv_inplace(|v| v + rng.random_range(-0.3..0.3));
    }
}

// ---------------------------------------------------------------------------
// Oracle equivalence.
// ---------------------------------------------------------------------------

#[test]
fn forward_matches_straight_line_oracle() {
    for seed in 0..5u64 {
        let cfg = tiny_config(seed);
        let mut params = ModelParams::init(&cfg).unwrap();
        perturb_coefficients(&mut params, seed + 100);
        let (matrix, tags) = random_input(3, cfg.d_input, seed + 200);
        let (score, _) = forward(&matrix, &tags, 3, &params, &cfg).unwrap();
        let expected = oracle_score(&rows(&matrix), &tags, &params, &cfg);
        assert!(
            (score - expected).abs() < 1e-8,
            "seed {seed}: {score} vs oracle {expected}"
        );
    }
}

#[test]
fn forward_matches_oracle_without_attention() {
    for seed in 0..5u64 {
        let mut cfg = tiny_config(seed);
        cfg.use_attention = false;
        let params = ModelParams::init(&cfg).unwrap();
        let (matrix, tags) = random_input(4, cfg.d_input, seed + 300);
        let (score, _) = forward(&matrix, &tags, 4, &params, &cfg).unwrap();
        let expected = oracle_score(&rows(&matrix), &tags, &params, &cfg);
        assert!((score - expected).abs() < 1e-8);
    }
}

#[test]
fn forward_matches_oracle_without_coefficients() {
    let mut cfg = tiny_config(7);
    cfg.use_coefficients = false;
    let mut params = ModelParams::init(&cfg).unwrap();
    perturb_coefficients(&mut params, 8); // must be ignored by both sides
    let (matrix, tags) = random_input(5, cfg.d_input, 9);
    let (score, _) = forward(&matrix, &tags, 5, &params, &cfg).unwrap();
    let expected = oracle_score(&rows(&matrix), &tags, &params, &cfg);
    assert!((score - expected).abs() < 1e-8);
}

#[test]
fn attention_matches_dense_oracle_closely() {
    // n=3, d_model=4, 2 heads: hand-rolled dense computation, 1e-10.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 3;
    let dm = 4;
    let dk = 2;
    let h = Array2::from_shape_fn((n, dm), |_| rng.random_range(-1.0..1.0));
    let heads: Vec<HeadParams> = (0..2)
        .map(|_| HeadParams {
            w_q: Array2::from_shape_fn((dm, dk), |_| rng.random_range(-0.5..0.5)),
            w_k: Array2::from_shape_fn((dm, dk), |_| rng.random_range(-0.5..0.5)),
            w_v: Array2::from_shape_fn((dm, dk), |_| rng.random_range(-0.5..0.5)),
        })
        .collect();
    let w_o = Array2::from_shape_fn((dm, dm), |_| rng.random_range(-0.5..0.5));

    let cache = attention_forward(&h, &heads, &w_o, n);

    // Dense oracle.
    let mut concat = vec![vec![0.0; dm]; n];
    for (hi, head) in heads.iter().enumerate() {
        let proj = |w: &Array2<f64>| -> Vec<Vec<f64>> {
            (0..n)
                .map(|t| {
                    (0..dk)
                        .map(|x| (0..dm).map(|y| h[[t, y]] * w[[y, x]]).sum())
                        .collect()
                })
                .collect()
        };
        let (q, k, v) = (proj(&head.w_q), proj(&head.w_k), proj(&head.w_v));
        for i in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|j| (0..dk).map(|x| q[i][x] * k[j][x]).sum::<f64>() / (dk as f64).sqrt())
                .collect();
            let a = o_softmax(&logits);
            for x in 0..dk {
                concat[i][hi * dk + x] = (0..n).map(|j| a[j] * v[j][x]).sum();
            }
        }
    }
    for t in 0..n {
        for y in 0..dm {
            let expected: f64 = (0..dm).map(|x| concat[t][x] * w_o[[x, y]]).sum();
            assert!(
                (cache.s[[t, y]] - expected).abs() < 1e-10,
                "position {t} column {y}"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Structural properties.
// ---------------------------------------------------------------------------

#[test]
fn recurrent_reversal_symmetry() {
    let cfg = tiny_config(3);
    let params = ModelParams::init(&cfg).unwrap();
    let (matrix, _) = random_input(5, cfg.d_input, 17);
    let reversed = {
        let mut m = matrix.clone();
        for (i, row) in matrix.outer_iter().enumerate() {
            m.row_mut(matrix.nrows() - 1 - i).assign(&row);
        }
        m
    };
    let back = lstm_forward(&matrix, 5, &params.fwd, true);
    let fwd_on_reversed = lstm_forward(&reversed, 5, &params.fwd, false);
    for t in 0..5 {
        for j in 0..cfg.hidden {
            assert!((back.h[[t, j]] - fwd_on_reversed.h[[4 - t, j]]).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_weights_give_zero_states() {
    let params = LstmParams::zeros(4, 3);
    let (matrix, _) = random_input(4, 4, 2);
    let cache = lstm_forward(&matrix, 4, &params, false);
    assert!(cache.h.iter().all(|&v| v == 0.0));
}

#[test]
fn single_token_shapes_hold() {
    let cfg = tiny_config(5);
    let params = ModelParams::init(&cfg).unwrap();
    let (matrix, _) = random_input(1, cfg.d_input, 3);
    let tags = vec![SpanTag::Connector];
    let (score, cache) = forward(&matrix, &tags, 1, &params, &cfg).unwrap();
    assert!(score.is_finite());
    assert_eq!(cache.h.nrows(), 1);
    assert_eq!(cache.h.ncols(), cfg.d_model());
    // Softmax over a single position is exactly 1.
    let att = cache.att.as_ref().unwrap();
    assert_eq!(att.heads[0].a[[0, 0]], 1.0);
    assert_eq!(cache.pool.as_ref().unwrap().a[0], 1.0);
}

#[test]
fn attention_rows_are_stochastic_on_random_input() {
    let cfg = tiny_config(11);
    let params = ModelParams::init(&cfg).unwrap();
    let (matrix, tags) = random_input(6, cfg.d_input, 23);
    let (_, cache) = forward(&matrix, &tags, 6, &params, &cfg).unwrap();
    let att = cache.att.as_ref().unwrap();
    for head in &att.heads {
        for i in 0..6 {
            let sum: f64 = head.a.row(i).sum();
            assert!((sum - 1.0).abs() < 1e-6, "row {i} sums to {sum}");
        }
    }
    let pool_sum: f64 = cache.pool.as_ref().unwrap().a.sum();
    assert!((pool_sum - 1.0).abs() < 1e-6);
}

#[test]
fn selu_fixed_points_and_asymptote() {
    assert_eq!(selu(0.0), 0.0);
    assert!((selu(1.0) - SELU_LAMBDA).abs() < 1e-9);
    let floor = -SELU_LAMBDA * SELU_ALPHA;
    assert!((selu(-50.0) - floor).abs() < 1e-9);
    assert!(selu(-1e9) > floor - 1e-12, "never crosses the asymptote");
    // Continuity at the joint.
    assert!((selu(1e-12) - selu(-1e-12)).abs() < 1e-11);
    // Derivative matches a difference quotient on both sides.
    for x in [-1.3, -0.2, 0.4, 2.0] {
        let fd = (selu(x + 1e-7) - selu(x - 1e-7)) / 2e-7;
        assert!((selu_prime(x) - fd).abs() < 1e-6);
    }
}

#[test]
fn coefficients_identity_and_scaling() {
    let cfg = tiny_config(1);
    let mut params = ModelParams::init(&cfg).unwrap();
    let (matrix, tags) = random_input(5, cfg.d_input, 4);

    // All-ones coefficients are an exact identity.
    let out = apply_coefficients(&matrix, &tags, &params).unwrap();
    assert_eq!(out, matrix);

    // Doubling the source vector doubles exactly the source-tagged rows.
    params.c_source = Array1::from_elem(cfg.d_input, 2.0);
    let out = apply_coefficients(&matrix, &tags, &params).unwrap();
    for (t, tag) in tags.iter().enumerate() {
        let factor = if *tag == SpanTag::Source { 2.0 } else { 1.0 };
        for j in 0..cfg.d_input {
            assert_eq!(out[[t, j]], factor * matrix[[t, j]]);
        }
    }

    // Tag count must match row count.
    let err = apply_coefficients(&matrix, &tags[..3], &params).unwrap_err();
    assert!(matches!(err, ModelError::ShapeMismatch(_)));
}

#[test]
fn coefficient_ablation_is_identity_at_initialization() {
    let cfg = tiny_config(21);
    let params = ModelParams::init(&cfg).unwrap(); // coefficients at ones
    let (matrix, tags) = random_input(6, cfg.d_input, 22);
    let (with, _) = forward(&matrix, &tags, 6, &params, &cfg).unwrap();
    let mut cfg_no = cfg;
    cfg_no.use_coefficients = false;
    let (without, _) = forward(&matrix, &tags, 6, &params, &cfg_no).unwrap();
    assert_eq!(
        with.to_bits(),
        without.to_bits(),
        "must be bitwise identical"
    );
}

#[test]
fn attention_ablation_changes_scores() {
    let cfg = tiny_config(31);
    let params = ModelParams::init(&cfg).unwrap();
    let (matrix, tags) = random_input(6, cfg.d_input, 32);
    let (with, _) = forward(&matrix, &tags, 6, &params, &cfg).unwrap();
    let mut cfg_no = cfg;
    cfg_no.use_attention = false;
    let (without, _) = forward(&matrix, &tags, 6, &params, &cfg_no).unwrap();
    assert_ne!(with, without);
}

#[test]
fn masked_scoring_equals_truncated_scoring() {
    let cfg = tiny_config(41);
    let params = ModelParams::init(&cfg).unwrap();
    let (mut matrix, tags) = random_input(6, cfg.d_input, 42);
    // Garbage beyond the valid prefix must not leak into the score.
    for t in 4..6 {
        for j in 0..cfg.d_input {
            matrix[[t, j]] = 1e6;
        }
    }
    let (masked, _) = forward(&matrix, &tags, 4, &params, &cfg).unwrap();
    let truncated = matrix.slice(s![0..4, ..]).to_owned();
    let (clean, _) = forward(&truncated, &tags[..4], 4, &params, &cfg).unwrap();
    assert_eq!(masked.to_bits(), clean.to_bits());
}

#[test]
fn scoring_is_deterministic() {
    let cfg = tiny_config(51);
    let params = ModelParams::init(&cfg).unwrap();
    let (matrix, tags) = random_input(5, cfg.d_input, 52);
    let (a, _) = forward(&matrix, &tags, 5, &params, &cfg).unwrap();
    let (b, _) = forward(&matrix, &tags, 5, &params, &cfg).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn initialization_is_seeded() {
    let cfg = tiny_config(61);
    let a = ModelParams::init(&cfg).unwrap();
    let b = ModelParams::init(&cfg).unwrap();
    assert_eq!(a, b);
    let mut cfg2 = cfg;
    cfg2.seed = 62;
    let c = ModelParams::init(&cfg2).unwrap();
    assert_ne!(a.fwd.w_ih, c.fwd.w_ih);
    // Coefficients start at ones, biases at zero, in every seeding.
    assert!(c.c_target.iter().all(|&v| v == 1.0));
    assert!(c.fwd.b.iter().all(|&v| v == 0.0));
}

#[test]
fn empty_sequence_is_rejected() {
    let cfg = tiny_config(71);
    let params = ModelParams::init(&cfg).unwrap();
    let matrix = Array2::<f64>::zeros((0, cfg.d_input));
    let err = forward(&matrix, &[], 0, &params, &cfg).unwrap_err();
    assert!(matches!(err, ModelError::EmptySequence));
}

#[test]
fn config_validation_rejects_indivisible_heads() {
    let mut cfg = tiny_config(81);
    cfg.n_heads = 4; // d_model = 6 does not divide by 4
    assert!(matches!(
        ModelParams::init(&cfg),
        Err(ModelError::BadConfig(_))
    ));
}

#[test]
fn flatten_round_trips() {
    let cfg = tiny_config(91);
    let params = ModelParams::init(&cfg).unwrap();
    let flat = params.flatten();
    assert_eq!(flat.len(), params.n_params());
    let mut other = ModelParams::init(&EncoderConfig { seed: 92, ..cfg }).unwrap();
    other.assign_from_flat(&flat);
    assert_eq!(other, params);
}

#[test]
fn pooling_backward_matches_finite_differences_in_isolation() {
    // Direct check of the pooling gradients at a well-conditioned scale,
    // independent of the full model: perturb w_a and s coordinate-wise.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (n, dm) = (3, 4);
    let s = Array2::from_shape_fn((n, dm), |_| rng.random_range(-2.0..2.0));
    let w_a = Array1::from_shape_fn(dm, |_| rng.random_range(-1.0..1.0));
    let c = Array1::from_shape_fn(dm, |_| rng.random_range(-1.0..1.0));
    let loss = |s: &Array2<f64>, w_a: &Array1<f64>| -> f64 { pool_forward(s, w_a, n).v.dot(&c) };

    let cache = pool_forward(&s, &w_a, n);
    let (ds, dw_a) = pool_backward(&s, &c, &cache, &w_a);

    let eps = 1e-6;
    for y in 0..dm {
        let mut plus = w_a.clone();
        plus[y] += eps;
        let mut minus = w_a.clone();
        minus[y] -= eps;
        let fd = (loss(&s, &plus) - loss(&s, &minus)) / (2.0 * eps);
        assert!(
            (fd - dw_a[y]).abs() / fd.abs().max(dw_a[y].abs()).max(1e-8) < 1e-6,
            "dw_a[{y}]: analytic {} vs fd {fd}",
            dw_a[y]
        );
    }
    for t in 0..n {
        for y in 0..dm {
            let mut plus = s.clone();
            plus[[t, y]] += eps;
            let mut minus = s.clone();
            minus[[t, y]] -= eps;
            let fd = (loss(&plus, &w_a) - loss(&minus, &w_a)) / (2.0 * eps);
            assert!(
                (fd - ds[[t, y]]).abs() / fd.abs().max(ds[[t, y]].abs()).max(1e-8) < 1e-6,
                "ds[{t},{y}]: analytic {} vs fd {fd}",
                ds[[t, y]]
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient checks: analytic backward vs central finite differences of the
// hinged margin ranking loss on one minimal pair.
// ---------------------------------------------------------------------------

struct PairFixture {
    plus: (Array2<f64>, Vec<SpanTag>),
    minus: (Array2<f64>, Vec<SpanTag>),
    margin: f64,
}

fn pair_loss(p: &ModelParams, cfg: &EncoderConfig, fx: &PairFixture) -> f64 {
    let (s_plus, _) = forward(&fx.plus.0, &fx.plus.1, fx.plus.0.nrows(), p, cfg).unwrap();
    let (s_minus, _) = forward(&fx.minus.0, &fx.minus.1, fx.minus.0.nrows(), p, cfg).unwrap();
    (fx.margin - s_plus + s_minus).max(0.0)
}

fn pair_loss_grads(p: &ModelParams, cfg: &EncoderConfig, fx: &PairFixture) -> Gradients {
    let (s_plus, cache_plus) = forward(&fx.plus.0, &fx.plus.1, fx.plus.0.nrows(), p, cfg).unwrap();
    let (s_minus, cache_minus) =
        forward(&fx.minus.0, &fx.minus.1, fx.minus.0.nrows(), p, cfg).unwrap();
    let mut grads = Gradients::zeros_like(p);
    if fx.margin - s_plus + s_minus > 0.0 {
        grads.add_assign(&backward(&fx.plus.0, &fx.plus.1, &cache_plus, p, cfg, -1.0));
        grads.add_assign(&backward(
            &fx.minus.0,
            &fx.minus.1,
            &cache_minus,
            p,
            cfg,
            1.0,
        ));
    }
    grads
}

fn gradient_check(cfg: &EncoderConfig, fixture_seed: u64) {
    let mut params = ModelParams::init(cfg).unwrap();
    // Move off the freshly initialized point: there the attention weights are
    // nearly uniform and some true gradients are structurally close to zero,
    // where finite-difference cancellation noise would dominate the relative
    // error. A generic point exercises every path with well-scaled gradients.
    let mut flat = params.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(fixture_seed + 7);
    for v in &mut flat {
        *v += rng.random_range(-0.4..0.4);
    }
    params.assign_from_flat(&flat);
    // Sharpen the attention maps: with near-uniform attention every output
    // row collapses toward the same mean, the pooling contrasts become
    // structurally tiny, and the difference quotient loses its signal to
    // rounding error long before the tolerance is reached.
    for head in &mut params.heads {
        head.w_q *= 3.0;
        head.w_k *= 3.0;
    }

    let (m_plus, t_plus) = random_input(4, cfg.d_input, fixture_seed + 1);
    let (m_minus, t_minus) = random_input(3, cfg.d_input, fixture_seed + 2);
    let mut fx = PairFixture {
        plus: (m_plus, t_plus),
        minus: (m_minus, t_minus),
        margin: 0.0,
    };
    // Choose the margin so the hinge is active with comfortable slack, far
    // from its kink regardless of where the scores landed.
    let (s_plus, _) = forward(&fx.plus.0, &fx.plus.1, fx.plus.0.nrows(), &params, cfg).unwrap();
    let (s_minus, _) = forward(&fx.minus.0, &fx.minus.1, fx.minus.0.nrows(), &params, cfg).unwrap();
    fx.margin = s_plus - s_minus + 0.5;
    let loss = pair_loss(&params, cfg, &fx);
    assert!(
        loss > 0.1,
        "fixture must activate the hinge (loss = {loss})"
    );

    // The epsilon balances truncation against rounding noise: some attention
    // pooling gradients are structurally small (softmax Jacobian rows are
    // zero-sum contrasts), and with a loss of order one, a smaller step would
    // leave those coordinates dominated by cancellation error.
    let analytic = pair_loss_grads(&params, cfg, &fx);
    let mut loss_fn = |p: &ModelParams| pair_loss(p, cfg, &fx);
    let report = finite_difference_errors(&params, &analytic, &mut loss_fn, 1e-4);
    let (worst_name, worst_err) = report.worst_tensor();
    eprintln!("gradient check worst tensor {worst_name}: relative error {worst_err:.3e}");
    assert!(
        report.max_rel_err < 1e-4,
        "worst tensor {worst_name}: relative error {worst_err}"
    );
}

#[test]
fn gradients_match_finite_differences() {
    gradient_check(&tiny_config(101), 1000);
}

#[test]
fn gradients_match_finite_differences_single_head() {
    let mut cfg = tiny_config(107);
    cfg.n_heads = 1;
    gradient_check(&cfg, 4000);
}

#[test]
fn gradients_match_finite_differences_without_attention() {
    let mut cfg = tiny_config(103);
    cfg.use_attention = false;
    gradient_check(&cfg, 2000);
}

#[test]
fn gradients_match_finite_differences_without_coefficients() {
    let mut cfg = tiny_config(105);
    cfg.use_coefficients = false;
    gradient_check(&cfg, 3000);
}

#[test]
fn score_sequence_consumes_embedded_output() {
    use crate::embed::{EmbeddingProvider, HashEmbedder};
    let provider = HashEmbedder::new(5, 8);
    let seq = provider
        .embed_text(
            "Alpha beta. Moreover, gamma delta.",
            [(0, 11), (11, 21), (21, 34)],
        )
        .unwrap();
    let cfg = EncoderConfig {
        use_coefficients: true,
        use_attention: true,
        d_input: 8,
        hidden: 4,
        n_heads: 2,
        seed: 7,
    };
    let params = ModelParams::init(&cfg).unwrap();
    let score = score_sequence(&seq, &params, &cfg).unwrap();
    assert!(score.is_finite());
    assert!(score > -SELU_LAMBDA * SELU_ALPHA);
}
