use ndarray::Array2;

use crate::error::{Error, Result};

/// A sample `x` at flow time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub x: Array2<f64>,
    pub t: f64,
}

fn check_shapes(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.dim()),
            got: format!("{:?}", b.dim()),
        });
    }
    Ok(())
}

/// `(1 - (1 - sigma_min) t) x0 + t x1`.
pub fn flow_point(x0: &Array2<f64>, x1: &Array2<f64>, t: f64, sigma_min: f64) -> Result<Array2<f64>> {
    check_shapes(x0, x1)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("flow time {t} outside [0, 1]")));
    }
    let a = 1.0 - (1.0 - sigma_min) * t;
    let mut out = x0 * a;
    out.scaled_add(t, x1);
    Ok(out)
}

/// `x1 - (1 - sigma_min) x0`, the time derivative of [`flow_point`].
pub fn flow_target(x0: &Array2<f64>, x1: &Array2<f64>, sigma_min: f64) -> Result<Array2<f64>> {
    check_shapes(x0, x1)?;
    let mut out = x1.clone();
    out.scaled_add(-(1.0 - sigma_min), x0);
    Ok(out)
}

/// A time-dependent vector field over `T x D` samples.
pub trait VectorField {
    fn eval(&self, x: &Array2<f64>, t: f64) -> Result<Array2<f64>>;
}

impl<F> VectorField for F
where
    F: Fn(&Array2<f64>, f64) -> Array2<f64>,
{
    fn eval(&self, x: &Array2<f64>, t: f64) -> Result<Array2<f64>> {
        Ok(self(x, t))
    }
}

/// Forward Euler from `t = 0` to `t = 1`.
pub fn euler_integrate(field: &impl VectorField, x0: &Array2<f64>, steps: usize) -> Result<Array2<f64>> {
    if steps == 0 {
        return Err(Error::invalid("euler_integrate needs at least one step"));
    }
    let dt = 1.0 / steps as f64;
    let mut x = x0.clone();
    for k in 0..steps {
        let v = field.eval(&x, k as f64 / steps as f64)?;
        x.scaled_add(dt, &v);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn hand_evaluated_examples() {
        let x0 = array![[2.0]];
        let x1 = array![[4.0]];
        let p = flow_point(&x0, &x1, 0.5, 0.1).unwrap();
        assert!((p[[0, 0]] - 3.1).abs() < 1e-12);
        let u = flow_target(&x0, &x1, 0.1).unwrap();
        assert!((u[[0, 0]] - 2.2).abs() < 1e-12);
        assert_eq!(flow_target(&x0, &x1, 0.0).unwrap(), x1 - x0);
    }

    #[test]
    fn endpoints_exact() {
        let x0 = array![[0.3, -1.7], [2.5, 0.1]];
        let x1 = array![[1.1, 0.2], [-0.4, 3.3]];
        assert_eq!(flow_point(&x0, &x1, 0.0, 1e-4).unwrap(), x0);
        assert_eq!(flow_point(&x0, &x1, 1.0, 0.0).unwrap(), x1);
    }

    #[test]
    fn errors() {
        let a = Array2::zeros((2, 3));
        let b = Array2::zeros((3, 2));
        assert!(matches!(flow_point(&a, &b, 0.5, 0.0), Err(Error::ShapeMismatch { .. })));
        assert!(flow_target(&a, &b, 0.0).is_err());
        assert!(flow_point(&a, &a, 1.5, 0.0).is_err());
        assert!(euler_integrate(&|x: &Array2<f64>, _t: f64| x.clone(), &a, 0).is_err());
    }

    #[test]
    fn euler_constant_field_exact() {
        let x0 = array![[1.0, -2.0]];
        let c = array![[0.25, 0.5]];
        for steps in [1, 3, 8] {
            let out = euler_integrate(&|_x: &Array2<f64>, _t: f64| c.clone(), &x0, steps).unwrap();
            assert!((&out - &(&x0 + &c)).iter().all(|d| d.abs() < 1e-14));
        }
    }

    #[test]
    fn euler_exponential() {
        let x0 = array![[1.0]];
        let out = euler_integrate(&|x: &Array2<f64>, _t: f64| x.clone(), &x0, 1000).unwrap();
        let e = std::f64::consts::E;
        assert!((out[[0, 0]] - e).abs() / e < 0.002);
    }

    #[test]
    fn euler_first_order() {
        let x0 = array![[1.0]];
        let e = std::f64::consts::E;
        let err = |n| (euler_integrate(&|x: &Array2<f64>, _t: f64| x.clone(), &x0, n).unwrap()[[0, 0]] - e).abs();
        for n in [16, 32, 64] {
            let ratio = err(n) / err(2 * n);
            assert!((ratio - 2.0).abs() < 0.3, "{n}: {ratio}");
        }
    }

    proptest! {
        #[test]
        fn path_derivative_is_target(
            vals in proptest::collection::vec(-5.0f64..5.0, 8),
            t in 0.0f64..0.9,
            dt in 0.001f64..0.1,
            sigma in 0.0f64..0.5,
        ) {
            let x0 = Array2::from_shape_vec((2, 2), vals[..4].to_vec()).unwrap();
            let x1 = Array2::from_shape_vec((2, 2), vals[4..].to_vec()).unwrap();
            let a = flow_point(&x0, &x1, t, sigma).unwrap();
            let b = flow_point(&x0, &x1, t + dt, sigma).unwrap();
            let u = flow_target(&x0, &x1, sigma).unwrap();
            for ((pa, pb), pu) in a.iter().zip(b.iter()).zip(u.iter()) {
                prop_assert!(((pb - pa) - pu * dt).abs() < 1e-12);
            }
        }
    }
}
