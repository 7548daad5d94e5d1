use ndarray::Array2;

use super::cond::ConditioningBundle;
use super::model::FlowModel;
use super::path::{flow_point, flow_target};
use crate::error::{Error, Result};
use crate::infill::Mask;

fn check_mask(mask: &Mask, m: &Array2<f64>) -> Result<()> {
    if mask.length != m.nrows() {
        return Err(Error::FrameMismatch { a: mask.length, b: m.nrows() });
    }
    if mask.span_len() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

/// Mean squared error over the masked rows and its gradient w.r.t. `pred`.
pub fn masked_mse(pred: &Array2<f64>, target: &Array2<f64>, mask: &Mask) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", target.dim()),
            got: format!("{:?}", pred.dim()),
        });
    }
    check_mask(mask, pred)?;
    let n = (mask.span_len() * pred.ncols()) as f64;
    let mut grad = Array2::zeros(pred.raw_dim());
    let mut sum = 0.0;
    for f in mask.start..mask.end {
        for d in 0..pred.ncols() {
            let e = pred[[f, d]] - target[[f, d]];
            sum += e * e;
            grad[[f, d]] = 2.0 * e / n;
        }
    }
    Ok((sum / n, grad))
}

/// Conditional flow-matching loss over the masked cells.
pub fn cfm_loss(
    model: &FlowModel,
    x1: &Array2<f64>,
    cond: &ConditioningBundle,
    mask: &Mask,
    x0: &Array2<f64>,
    t: f64,
) -> Result<f64> {
    let sigma = model.cfg.sigma_min;
    let xt = flow_point(x0, x1, t, sigma)?;
    let u = flow_target(x0, x1, sigma)?;
    let v = model.vf_forward(&xt, t, cond)?;
    Ok(masked_mse(&v, &u, mask)?.0)
}

pub fn prior_loss(prior: &Array2<f64>, x1: &Array2<f64>, mask: &Mask) -> Result<f64> {
    Ok(masked_mse(prior, x1, mask)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn prior_loss_examples() {
        let mask = Mask::new(3, 0, 2).unwrap();
        let x1 = Array2::from_elem((3, 2), 1.5);
        assert_eq!(prior_loss(&x1, &x1, &mask).unwrap(), 0.0);
        let zero = Array2::zeros((3, 2));
        assert!((prior_loss(&zero, &x1, &mask).unwrap() - 2.25).abs() < 1e-15);
    }

    #[test]
    fn only_masked_rows_count() {
        let mask = Mask::new(3, 1, 2).unwrap();
        let pred = array![[9.0], [1.0], [-4.0]];
        let target = array![[0.0], [3.0], [0.0]];
        let (l, g) = masked_mse(&pred, &target, &mask).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g, array![[0.0], [-4.0], [0.0]]);
    }

    #[test]
    fn shape_errors() {
        let mask = Mask::new(3, 1, 2).unwrap();
        let a = Array2::zeros((3, 2));
        assert!(masked_mse(&a, &Array2::zeros((3, 1)), &mask).is_err());
        let other = Mask::new(4, 1, 2).unwrap();
        assert!(matches!(masked_mse(&a, &a, &other), Err(Error::FrameMismatch { .. })));
    }
}
