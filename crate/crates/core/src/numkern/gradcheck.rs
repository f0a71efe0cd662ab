use alloc::vec::Vec;

/// Largest relative disagreement between analytic and central-difference gradients.
///
/// `f` maps a parameter vector to `(loss, analytic gradient)`. Each coordinate
/// is compared as `|a − n| / max(1e-8, |a| + |n|)` with
/// `n = (f(θ+ε) − f(θ−ε)) / 2ε`.
pub fn grad_check<F>(mut f: F, params: &[f64], epsilon: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    let mut theta = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + epsilon;
        let (plus, _) = f(&theta);
        theta[i] = orig - epsilon;
        let (minus, _) = f(&theta);
        theta[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn linear_loss_is_exact() {
        let c = vec![0.5, -1.25, 2.0, 3.5];
        let f = |theta: &[f64]| {
            let loss = theta.iter().zip(&c).map(|(t, c)| t * c).sum();
            (loss, c.clone())
        };
        let err = grad_check(f, &[0.1, 0.2, -0.3, 1.0], 1e-5);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = |theta: &[f64]| (theta[0] * theta[0], vec![theta[0]]);
        assert!(grad_check(f, &[1.0], 1e-5) > 0.1);
    }
}
