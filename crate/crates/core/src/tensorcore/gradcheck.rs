use crate::error::Result;
use crate::scalar::Scalar;

use super::{Tape, Tensor, Var};

/// Maximum relative error between the tape gradient of `f` at `x` and a
/// central-difference estimate.
///
/// `f` builds a scalar loss on a fresh tape from the leaf it is handed.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, eps: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let loss = f(&mut tape, leaf)?;
    let analytic = tape.backward(loss)?.get(leaf);
    let value = |p: &Tensor<T>| -> Result<T> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(p.clone());
        let loss = f(&mut tape, leaf)?;
        Ok(tape.value(loss).item())
    };
    grad_check_against(value, &analytic, x, eps)
}

/// Compares a supplied gradient against central differences of `value`.
pub fn grad_check_against<T, F>(value: F, analytic: &Tensor<T>, x: &Tensor<T>, eps: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<T>,
{
    let mut worst = T::zero();
    let two = T::of(2.0);
    let floor = T::of(1e-8);
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = value(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = value(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (two * eps);
        let ga = analytic.data()[i];
        let err = (ga - numeric).abs() / floor.max(ga.abs() + numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::vector(vec![0.3, -1.2, 2.0]).unwrap();
        let w = Tensor::vector(vec![1.5, 0.5, -2.0]).unwrap();
        let err = grad_check(
            |t, v| {
                let c = t.constant(w.clone());
                t.dot(v, c)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let x = Tensor::vector(vec![0.7f64, -0.4]).unwrap();
        let wrong = Tensor::vector(vec![-1.0, 3.0]).unwrap();
        let err = grad_check_against(
            |p| Ok(p.data().iter().map(|v| v * v).sum()),
            &wrong,
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err > 0.5, "{err}");
    }

    #[test]
    fn softmax_cross_entropy_composite() {
        let x = Tensor::vector(vec![0.1, 0.9, -0.3, 0.4]).unwrap();
        let err = grad_check(
            |t, v| {
                let s = t.softmax(v);
                let w = t.constant(Tensor::vector(vec![2.0, -1.0, 0.5, 3.0]).unwrap());
                let z = t.mul(s, w)?;
                t.ce_first(z)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
