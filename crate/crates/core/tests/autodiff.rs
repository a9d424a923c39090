use costfolio::autodiff::{Graph, Tensor, Var};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t3(shape: [usize; 3], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn causal(x: Tensor, w: Tensor, b: Vec<f64>, dilation: usize) -> Vec<f64> {
    let mut g = Graph::new();
    let (x, w, b) = (g.constant(x), g.constant(w), g.constant(Tensor::vector(b)));
    let y = g.causal_conv(x, w, b, dilation).unwrap();
    g.value(y).data.clone()
}

fn corr(x: Tensor, w: Tensor, b: Vec<f64>) -> Vec<f64> {
    let mut g = Graph::new();
    let (x, w, b) = (g.constant(x), g.constant(w), g.constant(Tensor::vector(b)));
    let y = g.corr_conv(x, w, b).unwrap();
    g.value(y).data.clone()
}

#[test]
fn causal_delta_kernel_copies_input() {
    // The last kernel tap is lag 0.
    let x: Vec<f64> = (0..2 * 6).map(|i| (i as f64 * 0.7).sin()).collect();
    let y = causal(t3([2, 6, 1], x.clone()), t3([1, 1, 3], vec![0.0, 0.0, 1.0]), vec![0.0], 1);
    assert_eq!(y, x);
}

#[test]
fn causal_ones_kernel_on_constant_input() {
    let y = causal(t3([1, 5, 1], vec![1.0; 5]), t3([1, 1, 3], vec![1.0; 3]), vec![0.0], 1);
    assert_eq!(y, vec![1.0, 2.0, 3.0, 3.0, 3.0]);
}

#[test]
fn dilation_four_reaches_lags_zero_four_eight() {
    let mut x = vec![0.0; 12];
    x[0] = 1.0;
    let y = causal(t3([1, 12, 1], x), t3([1, 1, 3], vec![5.0, 3.0, 2.0]), vec![0.0], 4);
    let mut want = vec![0.0; 12];
    want[0] = 2.0;
    want[4] = 3.0;
    want[8] = 5.0;
    assert_eq!(y, want);
}

#[test]
fn corr_conv_single_asset_is_channel_mixing() {
    // m = 1, two channels in, one out: y = 2·x0 − x1 + 0.5.
    let x = t3([1, 3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let y = corr(x, t3([1, 2, 1], vec![2.0, -1.0]), vec![0.5]);
    assert_eq!(y, vec![0.5, 2.5, 4.5]);
}

#[test]
fn corr_conv_averaging_kernel_sees_zero_padding_at_the_edges() {
    let x = t3([3, 2, 1], vec![3.0, 3.0, 6.0, 6.0, 9.0, 9.0]);
    let y = corr(x, t3([1, 1, 3], vec![1.0 / 3.0; 3]), vec![0.0]);
    let want = [3.0, 3.0, 6.0, 6.0, 5.0, 5.0];
    for (a, b) in y.iter().zip(want) {
        assert!((a - b).abs() < 1e-12, "{y:?}");
    }
}

#[test]
fn corr_conv_symmetric_kernel_commutes_with_asset_reversal() {
    let (m, k, c) = (3, 4, 2);
    let x: Vec<f64> = (0..m * k * c).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
    // w[o, c, j] == w[o, c, K-1-j]
    let w = vec![0.3, -0.2, 0.3, 1.1, 0.4, 1.1, -0.5, 0.9, -0.5, 0.2, 0.1, 0.2];
    let reverse = |v: &[f64]| -> Vec<f64> { v.chunks(k * c).rev().flatten().copied().collect() };
    let y = corr(t3([m, k, c], x.clone()), t3([c, c, m], w.clone()), vec![0.1, -0.1]);
    let y_rev = corr(t3([m, k, c], reverse(&x)), t3([c, c, m], w), vec![0.1, -0.1]);
    for (a, b) in reverse(&y).iter().zip(&y_rev) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn lstm_out(x: Tensor, w_ih: Tensor, w_hh: Tensor, b: Vec<f64>) -> Vec<f64> {
    let mut g = Graph::new();
    let (x, wi, wh, b) = (g.constant(x), g.constant(w_ih), g.constant(w_hh), g.constant(Tensor::vector(b)));
    let h = g.lstm(x, wi, wh, b).unwrap();
    g.value(h).data.clone()
}

#[test]
fn lstm_zero_weights_give_zero_output() {
    let h = 16;
    let x = t3([2, 5, 4], (0..40).map(|i| i as f64 / 10.0).collect());
    let out = lstm_out(x, Tensor::zeros(&[4 * h, 4]), Tensor::zeros(&[4 * h, h]), vec![0.0; 4 * h]);
    assert_eq!(out, vec![0.0; 2 * h]);
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[test]
fn lstm_single_step_hand_trace() {
    // One unit, one input feature, gate order i, f, g, o.
    let x = 0.8;
    let w_ih = [0.5, -0.3, 0.9, 0.2];
    let b = [0.1, 0.2, -0.4, 0.3];
    let i = sigmoid(w_ih[0] * x + b[0]);
    let gg = (w_ih[2] * x + b[2]).tanh();
    let o = sigmoid(w_ih[3] * x + b[3]);
    let want = o * (i * gg).tanh();
    let out = lstm_out(t3([1, 1, 1], vec![x]), Tensor::new(vec![4, 1], w_ih.to_vec()).unwrap(), Tensor::zeros(&[4, 1]), b.to_vec());
    assert!((out[0] - want).abs() < 1e-12, "{} vs {want}", out[0]);
}

#[test]
fn lstm_saturated_gates_keep_only_the_last_candidate() {
    let h = 2;
    let xs = [0.3, -1.2, 0.7];
    // w_ih rows: i (2), f (2), g (2), o (2)
    let w_ih = vec![0.0, 0.0, 0.0, 0.0, 0.8, -0.6, 0.0, 0.0];
    let b = vec![50.0, 50.0, -50.0, -50.0, 0.1, 0.2, 50.0, 50.0];
    let out = lstm_out(t3([1, 3, 1], xs.to_vec()), Tensor::new(vec![8, 1], w_ih).unwrap(), Tensor::zeros(&[8, h]), b);
    let last = xs[2];
    let want = [(0.8 * last + 0.1f64).tanh().tanh(), (-0.6 * last + 0.2f64).tanh().tanh()];
    for (a, w) in out.iter().zip(want) {
        assert!((a - w).abs() < 1e-9, "{out:?} vs {want:?}");
    }
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::vector(vec![0.0; 3]));
    let s = g.softmax(z).unwrap();
    assert_eq!(g.value(s).data, vec![1.0 / 3.0; 3]);
}

#[test]
fn softmax_over_empty_axis_is_an_error() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::vector(vec![]));
    assert!(matches!(g.softmax(z), Err(costfolio::Error::Contract(_))));
}

#[test]
fn relu_of_negative_is_zero() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::vector(vec![-2.0, -1e-9, 0.5]));
    let r = g.relu(z);
    assert_eq!(g.value(r).data, vec![0.0, 0.0, 0.5]);
}

#[test]
fn dropout_rate_zero_is_identity_in_both_modes() {
    let mut g = Graph::new();
    let x = g.input(Tensor::vector(vec![1.0, -2.0, 3.0]));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    assert_eq!(g.dropout(x, 0.0, Some(&mut rng)), x);
    assert_eq!(g.dropout::<ChaCha8Rng>(x, 0.0, None), x);
    assert_eq!(g.dropout::<ChaCha8Rng>(x, 0.5, None), x);
}

#[test]
fn dropout_scales_kept_units_and_repeats_with_the_seed() {
    let run = |seed| {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0; 64]));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = g.dropout(x, 0.25, Some(&mut rng));
        g.value(d).data.clone()
    };
    let a = run(9);
    assert_eq!(a, run(9));
    assert!(a.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));
    assert!(a.contains(&0.0));
}

#[test]
fn linear_composition_matches_closed_form() {
    // f = 2 · Σ (X w)  ⇒  ∂f/∂w_j = 2 Σ_i X_ij,  ∂f/∂X_ij = 2 w_j
    let xs = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let ws = vec![0.5, -1.5, 2.0];
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![2, 3], xs.clone()).unwrap());
    let w = g.input(Tensor::vector(ws.clone()));
    let y = g.matvec(x, w).unwrap();
    let y = g.scale(y, 2.0);
    let f = g.sum(y);
    let grads = g.backward(f).unwrap();
    assert_eq!(grads.get(w).unwrap(), &[10.0, 14.0, 18.0]);
    let want_x: Vec<f64> = (0..6).map(|i| 2.0 * ws[i % 3]).collect();
    assert_eq!(grads.get(x).unwrap(), &want_x[..]);
}

#[test]
fn disconnected_parameter_gets_exactly_zero_gradient() {
    let mut g = Graph::new();
    let used = g.param(0, Tensor::vector(vec![1.0, 2.0]));
    let _unused = g.param(1, Tensor::vector(vec![3.0, 4.0, 5.0]));
    let s = g.square(used);
    let f = g.sum(s);
    let grads = g.backward(f).unwrap();
    let per_slot = g.param_gradients(&grads, &[2, 3]);
    assert_eq!(per_slot[0], vec![2.0, 4.0]);
    assert_eq!(per_slot[1], vec![0.0, 0.0, 0.0]);
}

#[test]
fn backward_from_non_scalar_root_is_an_error() {
    let mut g = Graph::new();
    let x = g.input(Tensor::vector(vec![1.0, 2.0]));
    let y = g.square(x);
    assert!(matches!(g.backward(y), Err(costfolio::Error::Contract(_))));
}

#[test]
fn shape_mismatch_is_a_contract_error() {
    let mut g = Graph::new();
    let x = g.constant(t3([2, 5, 3], vec![0.0; 30]));
    let w = g.constant(t3([4, 2, 3], vec![0.0; 24]));
    let b = g.constant(Tensor::vector(vec![0.0; 4]));
    assert!(matches!(g.causal_conv(x, w, b, 1), Err(costfolio::Error::Contract(_))));
    assert!(matches!(g.corr_conv(x, w, b), Err(costfolio::Error::Contract(_))));
}

fn sum_of(g: &mut Graph, v: Var) -> f64 {
    let s = g.sum(v);
    g.value(s).item()
}

proptest! {
    #[test]
    fn causal_conv_ignores_the_future(
        x in prop::collection::vec(-2.0f64..2.0, 2 * 10 * 3),
        w in prop::collection::vec(-1.0f64..1.0, 4 * 3 * 3),
        tau in 0usize..10,
        dilation in 1usize..4,
    ) {
        let b = vec![0.1, 0.2, 0.3, 0.4];
        let full = causal(t3([2, 10, 3], x.clone()), t3([4, 3, 3], w.clone()), b.clone(), dilation);
        let mut cut = x.clone();
        for row in 0..2 {
            for t in tau + 1..10 {
                for c in 0..3 {
                    cut[(row * 10 + t) * 3 + c] = 0.0;
                }
            }
        }
        let trunc = causal(t3([2, 10, 3], cut), t3([4, 3, 3], w), b, dilation);
        for row in 0..2 {
            let at = |v: &[f64]| v[(row * 10 + tau) * 4..(row * 10 + tau + 1) * 4].to_vec();
            prop_assert_eq!(at(&full), at(&trunc));
        }
    }

    #[test]
    fn softmax_lands_on_the_simplex(z in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let mut g = Graph::new();
        let v = g.constant(Tensor::vector(z));
        let s = g.softmax(v).unwrap();
        prop_assert!(g.value(s).data.iter().all(|&p| p >= 0.0));
        let total = sum_of(&mut g, s);
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
