//! Finite-difference verification of analytic gradients.

use crate::error::Result;

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Compare the analytic gradient of a scalar-valued composition against
/// central finite differences with step `eps`.
///
/// Returns the worst error over all input elements, where error is relative
/// for magnitudes above 1 and absolute below:
/// `|analytic - fd| / max(1, |analytic|, |fd|)`.
/// Non-finite values anywhere report as infinity.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::<f64>::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let y = f(&mut tape, &vars)?;
        Ok(tape.val(y).item())
    };

    // analytic gradients
    let mut tape = Tape::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let y = f(&mut tape, &vars)?;
    let mut gs = tape.backward(y);
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| gs.take(*v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.shape().numel() {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + eps;
            let fp = eval(&work)?;
            work[i].data_mut()[j] = orig - eps;
            let fm = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let fd = (fp - fm) / (2.0 * eps);
            let a = analytic[i].data()[j];
            if !a.is_finite() || !fd.is_finite() {
                return Ok(f64::INFINITY);
            }
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::super::tensor::{Shape, Tensor};
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(7)
    }

    fn rand_tensor(shape: Shape, rng: &mut impl Rng) -> Tensor<f64> {
        Tensor::new(shape, (0..shape.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn fc_grad_matches_fd() {
        let mut r = rng();
        let x = rand_tensor(Shape::d1(4), &mut r);
        let w = rand_tensor(Shape::d2(4, 4), &mut r);
        let b = rand_tensor(Shape::d1(4), &mut r);
        let err = grad_check(
            |tape, vars| {
                let y = tape.fc(vars[0], vars[1], vars[2])?;
                Ok(tape.mean_all(y))
            },
            &[x, w, b],
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-3, "fc grad error {err}");
    }

    #[test]
    fn sigmoid_chain_grad_matches_fd() {
        let mut r = rng();
        let x = rand_tensor(Shape::d1(8), &mut r);
        let err = grad_check(
            |tape, vars| {
                let a = tape.sigmoid(vars[0]);
                let b = tape.sigmoid(a);
                Ok(tape.sum_all(b))
            },
            &[x],
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-3, "sigmoid chain grad error {err}");
    }

    #[test]
    fn zero_weight_conv_grad_wrt_input_is_zero_and_weight_nonzero() {
        // k=1 conv with zero weights: input gradient must be exactly zero
        // while the weight gradient stays live so training can escape zero.
        let mut r = rng();
        let x = rand_tensor(Shape::d3(1, 2, 6), &mut r);
        let w = Tensor::zeros(Shape::d3(2, 2, 1));
        let b = Tensor::zeros(Shape::d1(2));

        let mut tape = Tape::<f64>::new();
        let xv = tape.leaf(x.clone());
        let wv = tape.leaf(w.clone());
        let bv = tape.leaf(b.clone());
        let y = tape.conv1d(xv, wv, Some(bv), 1, 0).unwrap();
        let s = tape.sum_all(y);
        let mut gs = tape.backward(s);
        let dx = gs.take(xv).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        let dw = gs.take(wv).unwrap();
        assert!(dw.data().iter().any(|&v| v != 0.0));

        let err = grad_check(
            |tape, vars| {
                let y = tape.conv1d(vars[0], vars[1], Some(vars[2]), 1, 0)?;
                Ok(tape.sum_all(y))
            },
            &[x, w, b],
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-3, "zero conv grad error {err}");
    }
}
