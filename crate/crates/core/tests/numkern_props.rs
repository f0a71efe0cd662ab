use gigamil_core::numkern::{grad_check, softmax, Graph, Tensor, Var};
use gigamil_core::seed;
use proptest::prelude::*;
use rand::Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// `sum(c ⊙ f(θ))` with fixed random `c`, so every output element carries gradient.
fn probe<F>(shapes: &[Vec<usize>], build: F, theta: &[f64]) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let sizes: Vec<usize> = shapes.iter().map(|s| s.iter().product()).collect();
    let f = |p: &[f64]| {
        let mut g = Graph::new();
        let mut vars = Vec::new();
        let mut off = 0;
        for (s, n) in shapes.iter().zip(&sizes) {
            vars.push(g.param(Tensor::new(s.clone(), p[off..off + n].to_vec()).unwrap()));
            off += n;
        }
        let y = build(&mut g, &vars);
        let n = g.value(y).numel();
        let mut rng = seed::rng(77, &[n as u64]);
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let yc = g.mul_const(y, c).unwrap();
        let loss = g.sum(yc);
        g.backward(loss).unwrap();
        let grad: Vec<f64> = vars.iter().flat_map(|&v| g.grad(v).unwrap().to_vec()).collect();
        (g.value(loss).item(), grad)
    };
    grad_check(f, theta, EPS)
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn well_separated(xs: &[f64]) -> bool {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).all(|w| w[1] - w[0] > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_gradient(theta in values(3 * 4 + 4 * 2)) {
        let err = probe(&[vec![3, 4], vec![4, 2]], |g, v| g.matmul(v[0], v[1]).unwrap(), &theta);
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn add_row_bias_gradient(theta in values(3 * 4 + 4)) {
        let err = probe(&[vec![3, 4], vec![4]], |g, v| g.add_row_bias(v[0], v[1]).unwrap(), &theta);
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn relu_gradient(theta in values(12).prop_filter("away from the kink", |x| x.iter().all(|v| v.abs() > 1e-3))) {
        let err = probe(&[vec![3, 4]], |g, v| g.relu(v[0]), &theta);
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn pool_concat_gradient(theta in values(5 * 3).prop_filter("distinct column maxima", |x| {
        (0..3).all(|c| well_separated(&(0..5).map(|r| x[r * 3 + c]).collect::<Vec<_>>()))
    })) {
        let err = probe(&[vec![5, 3]], |g, v| g.pool_concat(v[0]).unwrap(), &theta);
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn reshape_and_concat_gradient(theta in values(6 + 3)) {
        let err = probe(&[vec![6], vec![3]], |g, v| {
            let a = g.reshape(v[0], &[2, 3]).unwrap();
            let b = g.reshape(v[1], &[1, 3]).unwrap();
            let ab = g.add_row_bias(a, v[1]).unwrap();
            let flat = g.reshape(ab, &[6]).unwrap();
            let b2 = g.concat_rows(&[b, b]).unwrap();
            let b2 = g.reshape(b2, &[6]).unwrap();
            g.concat_rows(&[flat, b2]).unwrap()
        }, &theta);
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn softmax_gradient(theta in values(2 * 3)) {
        let err = probe(&[vec![2, 3]], |g, v| g.softmax(v[0]), &theta);
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn weighted_cross_entropy_gradient(
        theta in values(4 * 3),
        labels in prop::collection::vec(0usize..3, 4),
        weights in prop::collection::vec(0.2f64..2.0, 3),
    ) {
        let err = probe(&[vec![4, 3]], |g, v| g.weighted_cross_entropy(v[0], &labels, &weights).unwrap(), &theta);
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn global_avg_pool_and_sum_gradient(theta in values(2 * 2 * 2 * 3)) {
        let err = probe(&[vec![2, 2, 2, 3]], |g, v| {
            let p = g.global_avg_pool(v[0]).unwrap();
            let s = g.sum(v[0]);
            let s = g.reshape(s, &[1]).unwrap();
            let p = g.reshape(p, &[1, 2]).unwrap();
            let s = g.reshape(s, &[1, 1]).unwrap();
            let s = g.matmul(s, p).unwrap();
            g.concat_rows(&[p, s]).unwrap()
        }, &theta);
        prop_assert!(err < TOL, "{}", err);
    }

    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(row in values(5), shift in -50.0f64..50.0) {
        let t = Tensor::vector(row.clone()).unwrap();
        let p = softmax(&t);
        prop_assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted = softmax(&Tensor::vector(row.iter().map(|x| x + shift).collect()).unwrap());
        let am = |v: &[f64]| gigamil_core::label::argmax(v);
        prop_assert_eq!(am(p.data()), am(shifted.data()));
        for (a, b) in p.data().iter().zip(shifted.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_is_homogeneous_in_weights(
        logits in values(3 * 3),
        labels in prop::collection::vec(0usize..3, 3),
        weights in prop::collection::vec(0.2f64..2.0, 3),
        scale in 0.1f64..10.0,
    ) {
        let loss = |w: &[f64]| {
            let mut g = Graph::new();
            let x = g.constant(Tensor::matrix(3, 3, logits.clone()).unwrap());
            let l = g.weighted_cross_entropy(x, &labels, w).unwrap();
            g.value(l).item()
        };
        let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let (a, b) = (loss(&scaled), scale * loss(&weights));
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn conv3d_gradient(
        theta in values(2 * 4 * 4 * 4 + 2 * 2 * 27 + 2),
        stride in 1usize..3,
        padding in 0usize..2,
    ) {
        let err = probe(&[vec![2, 4, 4, 4], vec![2, 2, 3, 3, 3], vec![2]], |g, v| {
            g.conv3d(v[0], v[1], v[2], stride, padding).unwrap()
        }, &theta);
        prop_assert!(err < TOL, "{}", err);
    }
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let w = g.param(Tensor::matrix(2, 1, vec![0.5, -0.5]).unwrap());
    let y = g.matmul(x, w).unwrap();
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert!(g.grad(x).is_none());
    assert_eq!(g.grad(w).unwrap(), &[4.0, 6.0]);
}

#[test]
fn identical_seeds_give_identical_tensors() {
    use gigamil_core::milnet::{MilArch, MilModel};
    let arch = MilArch { input_len: 30, hidden: 4, latent: 3, classes: 3, dropout: 0.5 };
    let a = MilModel::init(&arch, 11).unwrap();
    let b = MilModel::init(&arch, 11).unwrap();
    let bits = |m: &MilModel| m.param_vector().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&MilModel::init(&arch, 12).unwrap()));
}
