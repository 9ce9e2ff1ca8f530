use super::*;
use proptest::prelude::*;
use rand::Rng;

fn tiny_params() -> (EncoderConfig, EncoderParams) {
    let config = EncoderConfig::trainable(2, 2, 2);
    let params = EncoderParams {
        embedding: Matrix::from_vec(4, 2, vec![0.0, 0.0, 0.5, -1.0, 2.0, 0.25, -0.75, 1.5]),
        w1: Matrix::from_vec(2, 2, vec![1.0, 2.0, -0.5, 0.3]).unwrap(),
        b1: vec![0.1, -0.2],
        w2: Matrix::from_vec(2, 2, vec![0.7, -1.1, 0.4, 2.5]).unwrap(),
        b2: vec![0.05, -0.3],
    };
    (config, params)
}

/// Central differences of `f` with respect to every parameter entry.
fn numeric_grad(
    params: &EncoderParams,
    step: f64,
    f: impl Fn(&EncoderParams) -> f64,
) -> Vec<Vec<f64>> {
    let mut probe = params.clone();
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::new();
    for (ti, &len) in shapes.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = probe.tensors()[ti][i];
            probe.tensors_mut()[ti][i] = orig + step;
            let plus = f(&probe);
            probe.tensors_mut()[ti][i] = orig - step;
            let minus = f(&probe);
            probe.tensors_mut()[ti][i] = orig;
            *gi = (plus - minus) / (2.0 * step);
        }
        out.push(g);
    }
    out
}

fn assert_close(analytic: &[&[f64]], numeric: &[Vec<f64>]) {
    for (a_t, n_t) in analytic.iter().zip(numeric) {
        for (a, n) in a_t.iter().zip(n_t) {
            let diff = (a - n).abs();
            let rel = diff / a.abs().max(n.abs());
            assert!(diff < 1e-8 || rel < 1e-4, "analytic {a} vs numeric {n}");
        }
    }
}

#[test]
fn forward_matches_straight_line_oracle() {
    let (config, params) = tiny_params();
    let z = params
        .encode(&config, EncoderInput::Tokens(&[1, 2]))
        .unwrap();
    // m = (1.25, -0.375); pre = (0.6, -0.9375); h = (0.6, 0)
    assert!((z[0] - 0.47).abs() < 1e-15);
    assert!((z[1] - -0.06).abs() < 1e-15);
}

#[test]
fn zero_params_give_zero_output() {
    let config = EncoderConfig::trainable(3, 4, 5);
    let params = EncoderParams::zeros(&config, 6);
    assert_eq!(
        params
            .encode(&config, EncoderInput::Tokens(&[1, 4, 5]))
            .unwrap(),
        vec![0.0; 5]
    );
    let frozen = EncoderConfig::frozen(3, 4, 5);
    let params = EncoderParams::zeros(&frozen, 0);
    assert_eq!(
        params
            .encode(&frozen, EncoderInput::Vector(&[1.0, -2.0, 3.0]))
            .unwrap(),
        vec![0.0; 5]
    );
}

#[test]
fn single_token_pools_to_its_row() {
    let (config, params) = tiny_params();
    let cache = params.forward(&config, EncoderInput::Tokens(&[3])).unwrap();
    assert_eq!(cache.pooled, params.embedding.as_ref().unwrap().row(3));
}

#[test]
fn frozen_mode_checks_dimension() {
    let config = EncoderConfig::frozen(3, 4, 2);
    let params = EncoderParams::init(&config, 0, 1).unwrap();
    assert!(params.embedding.is_none());
    let err = params
        .encode(&config, EncoderInput::Vector(&[1.0, 2.0]))
        .unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch(_)));
    assert!(params.encode(&config, EncoderInput::Tokens(&[0])).is_err());
}

#[test]
fn frozen_identity_init_is_exact() {
    let config = EncoderConfig::frozen(4, 10, 4);
    let params = EncoderParams::init(&config, 0, 9).unwrap();
    let v = [0.3, -1.7, 0.0, 12.5];
    assert_eq!(
        params.encode(&config, EncoderInput::Vector(&v)).unwrap(),
        v.to_vec()
    );
}

#[test]
fn init_is_seeded_and_bounded() {
    let config = EncoderConfig::trainable(4, 9, 3);
    let a = EncoderParams::init(&config, 7, 5).unwrap();
    assert_eq!(a, EncoderParams::init(&config, 7, 5).unwrap());
    assert_ne!(a, EncoderParams::init(&config, 7, 6).unwrap());
    assert!(a
        .embedding
        .as_ref()
        .unwrap()
        .as_slice()
        .iter()
        .all(|v| v.abs() <= 0.1));
    assert!(a.w1.as_slice().iter().all(|v| v.abs() <= 0.5));
    assert!(a.w2.as_slice().iter().all(|v| v.abs() <= 1.0 / 3.0));
    assert!(a.b1.iter().chain(&a.b2).all(|&v| v == 0.0));
    a.check(&config).unwrap();
}

#[test]
fn zero_upstream_leaves_accumulator() {
    let (config, params) = tiny_params();
    let mut grad = EncoderGradient::zeros_like(&params);
    params
        .encode_backward(
            &config,
            EncoderInput::Tokens(&[1, 3]),
            &[1.0, 2.0],
            &mut grad,
        )
        .unwrap();
    let before = grad.clone();
    params
        .encode_backward(
            &config,
            EncoderInput::Tokens(&[2, 2]),
            &[0.0, 0.0],
            &mut grad,
        )
        .unwrap();
    assert_eq!(grad, before);
}

#[test]
fn repeated_token_row_gets_summed_contribution() {
    let (config, params) = tiny_params();
    let upstream = [0.4, -1.3];
    let mut twice = EncoderGradient::zeros_like(&params);
    params
        .encode_backward(
            &config,
            EncoderInput::Tokens(&[2, 2]),
            &upstream,
            &mut twice,
        )
        .unwrap();
    let mut once = EncoderGradient::zeros_like(&params);
    params
        .encode_backward(&config, EncoderInput::Tokens(&[2]), &upstream, &mut once)
        .unwrap();
    // Pooling [2, 2] equals pooling [2]; the row sees two halves of the same gradient.
    let e2 = twice
        .as_params()
        .embedding
        .as_ref()
        .unwrap()
        .row(2)
        .to_vec();
    let e1 = once.as_params().embedding.as_ref().unwrap().row(2).to_vec();
    for (a, b) in e2.iter().zip(&e1) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn backward_rejects_bad_shapes() {
    let (config, params) = tiny_params();
    let mut grad = EncoderGradient::zeros_like(&params);
    assert!(params
        .encode_backward(&config, EncoderInput::Tokens(&[1]), &[1.0], &mut grad)
        .is_err());
    let other = EncoderParams::zeros(&EncoderConfig::trainable(2, 3, 2), 4);
    let mut wrong = EncoderGradient::zeros_like(&other);
    assert!(params
        .encode_backward(&config, EncoderInput::Tokens(&[1]), &[1.0, 1.0], &mut wrong)
        .is_err());
}

#[test]
fn tiny_gradient_matches_finite_differences() {
    let (config, params) = tiny_params();
    let probe = [0.8, -0.35];
    let tokens = [1usize, 2, 3];
    let mut grad = EncoderGradient::zeros_like(&params);
    params
        .encode_backward(&config, EncoderInput::Tokens(&tokens), &probe, &mut grad)
        .unwrap();
    let numeric = numeric_grad(&params, 1e-4, |p| {
        let z = p.encode(&config, EncoderInput::Tokens(&tokens)).unwrap();
        z.iter().zip(&probe).map(|(a, b)| a * b).sum()
    });
    assert_close(&grad.tensors(), &numeric);
}

fn min_abs_pre(params: &EncoderParams, config: &EncoderConfig, input: EncoderInput<'_>) -> f64 {
    let cache = params.forward(config, input).unwrap();
    cache
        .pre_activation
        .iter()
        .fold(f64::INFINITY, |m, a| m.min(a.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_check_random_configs(
        vocab in 2usize..=10,
        d_tok in 1usize..=5,
        hidden in 1usize..=5,
        d_out in 1usize..=5,
        seed in any::<u64>(),
        frozen in any::<bool>(),
    ) {
        let config = if frozen {
            EncoderConfig::frozen(d_tok, hidden, d_out)
        } else {
            EncoderConfig::trainable(d_tok, hidden, d_out)
        };
        let mut params = EncoderParams::init(&config, vocab, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
        // Nonzero biases so the check covers them too.
        params.b1.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
        params.b2.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
        let tokens: Vec<usize> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..vocab)).collect();
        let vector: Vec<f64> = (0..d_tok).map(|_| rng.random_range(-1.0..1.0)).collect();
        let input = if frozen { EncoderInput::Vector(&vector) } else { EncoderInput::Tokens(&tokens) };
        // Finite differences are meaningless across a relu kink.
        prop_assume!(min_abs_pre(&params, &config, input) > 1e-3);

        let probe: Vec<f64> = (0..d_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut grad = EncoderGradient::zeros_like(&params);
        params.encode_backward(&config, input, &probe, &mut grad).unwrap();
        let numeric = numeric_grad(&params, 1e-4, |p| {
            let z = p.encode(&config, input).unwrap();
            z.iter().zip(&probe).map(|(a, b)| a * b).sum()
        });
        assert_close(&grad.tensors(), &numeric);
        if frozen {
            prop_assert!(grad.as_params().embedding.is_none());
        }
    }

    #[test]
    fn encode_is_pure(seed in any::<u64>(), tokens in proptest::collection::vec(0usize..8, 1..6)) {
        let config = EncoderConfig::trainable(3, 4, 3);
        let params = EncoderParams::init(&config, 8, seed).unwrap();
        let a = params.encode(&config, EncoderInput::Tokens(&tokens)).unwrap();
        let b = params.encode(&config, EncoderInput::Tokens(&tokens)).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
