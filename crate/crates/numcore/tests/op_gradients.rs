use numcore::{grad_check, grad_check_inputs, GradCheckOptions, Graph, Rng, Tensor, Var};
use proptest::prelude::*;

fn rand(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::uniform(shape, -1.0, 1.0, &mut Rng::new(seed))
}

fn positive(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::uniform(shape, 0.5, 2.0, &mut Rng::new(seed))
}

/// Weighted sum: every output element carries a distinct adjoint.
fn probe(g: &mut Graph<f64>, y: Var, seed: u64) -> numcore::Result<Var> {
    let w = rand(g.shape(y), seed ^ 0xABCD);
    let w = g.constant(w)?;
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn check2(
    f: impl Fn(&mut Graph<f64>, Var, Var) -> numcore::Result<Var>,
    a: Tensor<f64>,
    b: Tensor<f64>,
) {
    let opts = GradCheckOptions::default();
    let r = grad_check_inputs(
        |g, v| {
            let y = f(g, v[0], v[1])?;
            probe(g, y, 5)
        },
        &[a, b],
        &opts,
    )
    .unwrap();
    assert!(r.pass, "{r:?}");
}

fn check1(f: impl Fn(&mut Graph<f64>, Var) -> numcore::Result<Var>, x: Tensor<f64>) {
    let r = grad_check(
        |g, v| {
            let y = f(g, v)?;
            if g.value(y).len() == 1 {
                Ok(y)
            } else {
                probe(g, y, 9)
            }
        },
        &x,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn binary_ops() {
    check2(|g, a, b| g.add(a, b), rand(&[3, 4], 1), rand(&[3, 4], 2));
    check2(|g, a, b| g.sub(a, b), rand(&[3, 4], 1), rand(&[3, 4], 2));
    check2(|g, a, b| g.mul(a, b), rand(&[3, 4], 1), rand(&[3, 4], 2));
    check2(|g, a, b| g.add_bias(a, b), rand(&[2, 3, 4], 1), rand(&[4], 2));
    check2(|g, a, b| g.matmul(a, b), rand(&[3, 4], 1), rand(&[4, 2], 2));
    check2(|g, a, b| g.matmul_nt(a, b), rand(&[3, 4], 1), rand(&[5, 4], 2));
    check2(|g, a, b| g.concat(&[a, b], 1), rand(&[3, 2], 1), rand(&[3, 4], 2));
    check2(|g, a, b| g.concat(&[a, b], 0), rand(&[1, 4], 1), rand(&[3, 4], 2));
}

#[test]
fn unary_ops() {
    check1(|g, x| g.sigmoid(x), rand(&[4], 3));
    check1(|g, x| g.tanh(x), rand(&[2, 3], 3));
    check1(|g, x| g.scale(x, -2.5), rand(&[5], 3));
    check1(|g, x| g.log10(x), positive(&[5], 3));
    check1(|g, x| g.sum(x), rand(&[5], 3));
    check1(|g, x| g.mean(x), rand(&[2, 5], 3));
    check1(|g, x| g.variance(x), rand(&[2, 5], 3));
    check1(|g, x| g.reverse_time(x), rand(&[4, 3], 3));
    check1(|g, x| g.slice(x, 1, 1, 3), rand(&[3, 4], 3));
    check1(|g, x| g.slice(x, 0, 2, 3), rand(&[3, 4], 3));
    check1(|g, x| g.transpose01(x), rand(&[2, 3, 4], 3));
    check1(|g, x| g.reshape(x, &[6, 2]), rand(&[3, 4], 3));
    // relu: keep inputs away from the kink
    let x = Tensor::new(&[4], vec![-0.7, 0.3, 1.2, -0.2]).unwrap();
    check1(|g, x| g.relu(x), x);
}

#[test]
fn sigmoid_sum_passes_at_1e4() {
    let r = grad_check(
        |g, x| {
            let s = g.sigmoid(x)?;
            g.sum(s)
        },
        &rand(&[4], 11),
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(r.pass && r.max_rel_err < 1e-4, "{r:?}");
}

#[test]
fn constant_function_has_zero_gradient() {
    let r = grad_check(
        |g, _x| g.constant(Tensor::scalar(3.0)),
        &rand(&[3], 1),
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(r.pass);
    assert_eq!(r.max_rel_err, 0.0);
}

#[test]
fn fault_injection_breaks_sigmoid_check() {
    numcore::set_fault_injection(true);
    let r = grad_check(
        |g, x| {
            let s = g.sigmoid(x)?;
            g.sum(s)
        },
        &rand(&[4], 2),
        1e-5,
        1e-4,
    );
    numcore::set_fault_injection(false);
    assert!(!r.unwrap().pass);
}

#[test]
fn nondeterministic_function_is_rejected() {
    use std::sync::atomic::{AtomicU64, Ordering};
    let calls = AtomicU64::new(0);
    let r = grad_check(
        |g, x| {
            let n = calls.fetch_add(1, Ordering::SeqCst) as f64;
            let s = g.scale(x, 1.0 + n)?;
            g.sum(s)
        },
        &rand(&[2], 1),
        1e-5,
        1e-4,
    );
    assert!(matches!(r, Err(numcore::Error::NonDeterministic { .. })));
}

proptest! {
    #[test]
    fn reverse_time_is_an_involution(k in 1usize..8, n in 1usize..5, seed in 0u64..1000) {
        let x = rand(&[k, n], seed);
        let mut g = Graph::<f64>::new();
        let v = g.constant(x.clone()).unwrap();
        let r = g.reverse_time(v).unwrap();
        let rr = g.reverse_time(r).unwrap();
        prop_assert_eq!(g.value(rr), &x);
    }

    #[test]
    fn complementary_slices_concat_to_identity(k in 2usize..8, n in 1usize..5, cut in 1usize..7, seed in 0u64..1000) {
        let cut = cut.min(k - 1);
        let x = rand(&[k, n], seed);
        let mut g = Graph::<f64>::new();
        let v = g.constant(x.clone()).unwrap();
        let a = g.slice(v, 0, 0, cut).unwrap();
        let b = g.slice(v, 0, cut, k).unwrap();
        let c = g.concat(&[a, b], 0).unwrap();
        prop_assert_eq!(g.value(c), &x);
    }

    #[test]
    fn seeded_tensors_reproduce(seed in 0u64..u64::MAX) {
        prop_assert_eq!(rand(&[3, 3], seed), rand(&[3, 3], seed));
    }
}
