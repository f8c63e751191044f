use super::*;
use rand::Rng;

use crate::util::rng_from_seed;

fn tensor2(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor::matrix(rows, cols, data.to_vec()).unwrap()
}

#[test]
fn matmul_identity() {
    let mut t = Tape::new();
    let a = t.leaf(tensor2(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    let b = t.leaf(tensor2(2, 1, &[3.0, 4.0]));
    let c = t.matmul(a, b).unwrap();
    assert_eq!(t.data(c), &[3.0, 4.0]);
}

#[test]
fn matmul_row_times_column() {
    let mut t = Tape::new();
    let a = t.leaf(tensor2(1, 2, &[1.0, 2.0]));
    let b = t.leaf(tensor2(2, 1, &[3.0, 4.0]));
    let c = t.matmul(a, b).unwrap();
    assert_eq!(t.data(c), &[11.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut t = Tape::new();
    let a = t.leaf(tensor2(2, 3, &[0.0; 6]));
    let b = t.leaf(tensor2(2, 2, &[0.0; 4]));
    let err = t.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    // d sum(A·B) / dA via gradient_check at a random A.
    let mut rng = rng_from_seed(11);
    let b_vals: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a_vals: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b_fixed = tensor2(3, 4, &b_vals);
    let report = gradient_check(
        |tape, a| {
            let b = tape.leaf(b_fixed.clone());
            let c = tape.matmul(a, b)?;
            tape.sum(c)
        },
        &tensor2(2, 3, &a_vals),
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed, "max rel {}", report.max_rel_error);
}

#[test]
fn relu_and_sigmoid_values() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(&[-1.0, 0.0, 2.0]));
    let y = t.relu(x).unwrap();
    assert_eq!(t.data(y), &[0.0, 0.0, 2.0]);

    let z = t.leaf(Tensor::vector(&[0.0]));
    let s = t.sigmoid(z).unwrap();
    assert_eq!(t.data(s), &[0.5]);
}

#[test]
fn tanh_derivative_matches_finite_differences() {
    let report = gradient_check(
        |tape, x| {
            let y = tape.tanh(x)?;
            tape.sum(y)
        },
        &Tensor::vector(&[0.3]),
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed, "max rel {}", report.max_rel_error);
}

#[test]
fn every_unary_primitive_matches_finite_differences() {
    let ops = [
        UnaryOp::Relu,
        UnaryOp::Sigmoid,
        UnaryOp::Tanh,
        UnaryOp::Exp,
        UnaryOp::Log,
        UnaryOp::Square,
        UnaryOp::Abs,
        UnaryOp::Softplus,
    ];
    let mut rng = rng_from_seed(42);
    for op in ops {
        // Strictly positive, away from relu/abs kinks at 0; log needs > 0.
        let vals: Vec<f64> = (0..5).map(|_| rng.gen_range(0.2..1.8)).collect();
        let report = gradient_check(
            |tape, x| {
                let y = tape.unary(op, x)?;
                tape.sum(y)
            },
            &Tensor::vector(&vals),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed, "{op:?}: max rel {}", report.max_rel_error);
        // Negative side for ops defined there.
        if op != UnaryOp::Log {
            let vals: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.8..-0.2)).collect();
            let report = gradient_check(
                |tape, x| {
                    let y = tape.unary(op, x)?;
                    tape.sum(y)
                },
                &Tensor::vector(&vals),
                &GradCheckConfig::default(),
            )
            .unwrap();
            assert!(report.passed, "{op:?} (neg): max rel {}", report.max_rel_error);
        }
    }
}

#[test]
fn binary_primitives_match_finite_differences() {
    let mut rng = rng_from_seed(7);
    let other: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let at: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for op in [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul] {
        // Gradient w.r.t. the left operand.
        let fixed = tensor2(2, 3, &other);
        let report = gradient_check(
            |tape, x| {
                let b = tape.leaf(fixed.clone());
                let y = tape.binary(op, x, b)?;
                tape.sum(y)
            },
            &tensor2(2, 3, &at),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed, "{op:?} lhs: {}", report.max_rel_error);

        // Gradient w.r.t. a broadcast bias on the right.
        let fixed = tensor2(2, 3, &other);
        let report = gradient_check(
            |tape, bias| {
                let a = tape.leaf(fixed.clone());
                let y = tape.binary(op, a, bias)?;
                tape.sum(y)
            },
            &Tensor::vector(&at[..3]),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed, "{op:?} bias: {}", report.max_rel_error);
    }
}

#[test]
fn binary_rejects_incompatible_shapes() {
    let mut t = Tape::new();
    let a = t.leaf(tensor2(2, 3, &[0.0; 6]));
    let b = t.leaf(Tensor::vector(&[0.0, 0.0]));
    let err = t.add(a, b).unwrap_err();
    assert!(matches!(err, AutodiffError::ShapeMismatch { .. }));
}

#[test]
fn softmax_uniform_on_equal_logits() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(&[0.0; 4]));
    let p = t.softmax_logsumexp(x).unwrap();
    for &v in t.data(p) {
        assert!((v - 0.25).abs() < 1e-15);
    }
}

#[test]
fn softmax_is_stable_under_huge_logits() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(&[1000.0, 0.0]));
    let p = t.softmax_logsumexp(x).unwrap();
    let d = t.data(p);
    assert!((d[0] - 1.0).abs() < 1e-12);
    assert!(d[1] >= 0.0 && d[1] < 1e-12);
}

#[test]
fn softmax_matches_direct_evaluation() {
    let logits = [1.0, 2.0, 3.0];
    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(&logits));
    let p = t.softmax_logsumexp(x).unwrap();
    let denom: f64 = logits.iter().map(|&v| v.exp()).sum();
    for (got, &l) in t.data(p).iter().zip(&logits) {
        assert!((got - l.exp() / denom).abs() < 1e-12);
    }
}

#[test]
fn softmax_sums_to_one_within_1e9_for_bounded_logits() {
    let mut rng = rng_from_seed(3);
    for _ in 0..200 {
        let logits: Vec<f64> = (0..10).map(|_| rng.gen_range(-1e4..1e4)).collect();
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(&logits));
        let p = t.softmax_logsumexp(x).unwrap();
        let s: f64 = t.data(p).iter().sum();
        assert!((s - 1.0).abs() < 1e-9, "sum {s}");
        assert!(t.data(p).iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let mut rng = rng_from_seed(19);
    let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let weights: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = Tensor::vector(&weights);
    let report = gradient_check(
        |tape, x| {
            let p = tape.softmax_logsumexp(x)?;
            let wn = tape.leaf(w.clone());
            let wp = tape.mul(p, wn)?;
            tape.sum(wp)
        },
        &Tensor::vector(&logits),
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed, "max rel {}", report.max_rel_error);
}

#[test]
fn log_softmax_gradient_matches_finite_differences() {
    let mut rng = rng_from_seed(23);
    let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let weights: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
    let w = Tensor::vector(&weights);
    let report = gradient_check(
        |tape, x| {
            let lp = tape.log_softmax(x)?;
            let wn = tape.leaf(w.clone());
            let wlp = tape.mul(lp, wn)?;
            tape.sum(wlp)
        },
        &Tensor::vector(&logits),
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed, "max rel {}", report.max_rel_error);
}

#[test]
fn backward_sum_of_squares() {
    let mut t = Tape::new();
    let z = t.leaf(Tensor::vector(&[1.0, 2.0]).with_grad());
    let sq = t.square(z).unwrap();
    let loss = t.sum(sq).unwrap();
    t.backward(loss).unwrap();
    assert_eq!(t.grad(z).unwrap(), &[2.0, 4.0]);
}

#[test]
fn backward_of_constant_leaves_zero_grads() {
    let mut t = Tape::new();
    let z = t.leaf(Tensor::vector(&[1.0, 2.0]).with_grad());
    let c = t.leaf(Tensor::scalar(5.0));
    let zero = t.scale(z, 0.0).unwrap();
    let zsum = t.sum(zero).unwrap();
    let loss = t.add(zsum, c).unwrap();
    t.backward(loss).unwrap();
    assert_eq!(t.grad(z).unwrap(), &[0.0, 0.0]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut t = Tape::new();
    let z = t.leaf(Tensor::vector(&[1.0, 2.0]).with_grad());
    let sq = t.square(z).unwrap();
    let err = t.backward(sq).unwrap_err();
    assert!(matches!(err, AutodiffError::Contract(_)));
}

#[test]
fn backward_through_mlp_composite_matches_finite_differences() {
    // Two stacked dense layers with nonlinearity and a softmax entropy head:
    // the same op mix the full decoder-classifier path uses.
    let mut rng = rng_from_seed(5);
    let w1: Vec<f64> = (0..4 * 8).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let b1: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let w2: Vec<f64> = (0..8 * 5).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (w1t, b1t, w2t) = (
        tensor2(4, 8, &w1),
        Tensor::vector(&b1),
        tensor2(8, 5, &w2),
    );
    let report = gradient_check(
        |tape, x| {
            let w1 = tape.leaf(w1t.clone());
            let b1 = tape.leaf(b1t.clone());
            let w2 = tape.leaf(w2t.clone());
            let h = tape.matmul(x, w1)?;
            let h = tape.add(h, b1)?;
            let h = tape.tanh(h)?;
            let logits = tape.matmul(h, w2)?;
            let p = tape.softmax_logsumexp(logits)?;
            let lp = tape.log_softmax(logits)?;
            let plp = tape.mul(p, lp)?;
            let s = tape.sum(plp)?;
            tape.scale(s, -1.0)
        },
        &Tensor::row(&z),
        &GradCheckConfig {
            tolerance: 1e-3,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(report.passed, "max rel {}", report.max_rel_error);
}

#[test]
fn gradient_check_l1_norm_away_from_kinks() {
    let report = gradient_check(
        |tape, x| {
            let a = tape.abs(x)?;
            tape.sum(a)
        },
        &Tensor::vector(&[0.7, -1.3, 2.0, -0.4]),
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed);
    for c in &report.checks {
        assert!((c.analytic.abs() - 1.0).abs() < 1e-12, "subgradient is sign");
    }
}

#[test]
fn gradient_check_excludes_flagged_kinks() {
    let kink = |_: usize, v: f64| v == 0.0;
    let report = gradient_check(
        |tape, x| {
            let a = tape.abs(x)?;
            tape.sum(a)
        },
        &Tensor::vector(&[0.7, 0.0, -2.0]),
        &GradCheckConfig {
            kink: Some(&kink),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(report.passed);
    assert!(report.checks[1].excluded_kink);
    assert_eq!(report.checks[1].analytic, 0.0);
    assert!(!report.checks[0].excluded_kink && !report.checks[2].excluded_kink);
}

#[test]
fn gradient_check_entropy_of_softmax() {
    let mut rng = rng_from_seed(31);
    let logits: Vec<f64> = (0..10).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let report = gradient_check(
        |tape, x| {
            let p = tape.softmax_logsumexp(x)?;
            let lp = tape.log_softmax(x)?;
            let plp = tape.mul(p, lp)?;
            let s = tape.sum(plp)?;
            tape.scale(s, -1.0)
        },
        &Tensor::vector(&logits),
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed, "max rel {}", report.max_rel_error);
}

#[test]
fn log_rejects_non_positive_input() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(&[1.0, 0.0]));
    let err = t.log(x).unwrap_err();
    assert!(matches!(err, AutodiffError::NumericDomain { op: "log", .. }));
}

#[test]
fn exp_overflow_is_a_domain_error() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(&[1000.0]));
    let err = t.exp(x).unwrap_err();
    assert!(matches!(err, AutodiffError::NumericDomain { op: "exp", .. }));
}

#[test]
fn non_finite_results_are_detected() {
    let mut t = Tape::new();
    let a = t.leaf(Tensor::vector(&[f64::MAX]));
    let b = t.leaf(Tensor::vector(&[f64::MAX]));
    let err = t.add(a, b).unwrap_err();
    assert!(matches!(err, AutodiffError::NonFinite { .. }));
}

#[test]
fn elementwise_dispatch_enforces_arity() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(&[1.0]));
    let err = t
        .elementwise(Some(UnaryOp::Relu), Some(BinaryOp::Add), x, None)
        .unwrap_err();
    assert!(matches!(err, AutodiffError::Contract(_)));
    let y = t.elementwise(Some(UnaryOp::Relu), None, x, None).unwrap();
    assert_eq!(t.data(y), &[1.0]);
}

#[test]
fn tape_replay_is_bitwise_deterministic() {
    let run = || {
        let mut rng = rng_from_seed(77);
        let w: Vec<f64> = (0..60 * 40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut t = Tape::new();
        let xn = t.leaf(Tensor::row(&x).with_grad());
        let wn = t.leaf(tensor2(60, 40, &w));
        let h = t.matmul(xn, wn).unwrap();
        let h = t.sigmoid(h).unwrap();
        let s = t.sum(h).unwrap();
        t.backward(s).unwrap();
        (t.scalar(s), t.take_grad(xn).unwrap())
    };
    let (v1, g1) = run();
    let (v2, g2) = run();
    assert_eq!(v1.to_bits(), v2.to_bits());
    assert_eq!(g1, g2);
}
