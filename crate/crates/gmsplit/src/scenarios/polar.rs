//! Cartesian-to-polar transformation with analytic derivatives and the
//! exact transformed truth density.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mixture::Gaussian;
use crate::model::{Model, ModelDerivatives};
use crate::tensor::Tensor3;

/// `[x, y] -> [r, theta]` with `r = sqrt(x^2 + y^2)` and the atan2 angle
/// branch, `theta` in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolarModel;

impl Model for PolarModel {
    fn input_dim(&self) -> usize {
        2
    }

    fn output_dim(&self) -> usize {
        2
    }

    fn value(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (px, py) = (x[0], x[1]);
        let r = px.hypot(py);
        if r == 0.0 {
            return Err(Error::OriginSingularity);
        }
        Ok(DVector::from_vec(vec![r, py.atan2(px)]))
    }

    fn derivatives(&self, x: &DVector<f64>, with_hessian: bool) -> Result<ModelDerivatives> {
        let value = self.value(x)?;
        let (px, py) = (x[0], x[1]);
        let r2 = px * px + py * py;
        let r = r2.sqrt();
        let r3 = r2 * r;
        let r4 = r2 * r2;
        let jacobian = DMatrix::from_row_slice(2, 2, &[px / r, py / r, -py / r2, px / r2]);
        let hessian = with_hessian.then(|| {
            let mut h = Tensor3::zeros(2, 2);
            h.set(0, 0, 0, py * py / r3);
            h.set(0, 0, 1, -px * py / r3);
            h.set(0, 1, 0, -px * py / r3);
            h.set(0, 1, 1, px * px / r3);
            h.set(1, 0, 0, 2.0 * px * py / r4);
            h.set(1, 0, 1, (py * py - px * px) / r4);
            h.set(1, 1, 0, (py * py - px * px) / r4);
            h.set(1, 1, 1, -2.0 * px * py / r4);
            h
        });
        Ok(ModelDerivatives {
            value,
            jacobian,
            hessian,
        })
    }
}

/// Exact density of the polar image of a Gaussian:
/// `p(r, theta) = N([r cos, r sin]; mu, P) * r` on `r > 0`.
#[derive(Debug, Clone)]
pub struct PolarTruth {
    input: Gaussian,
}

impl PolarTruth {
    pub fn new(input: Gaussian) -> Result<Self> {
        if input.dim() != 2 {
            return Err(Error::DimensionMismatch(
                "polar truth needs a planar input".into(),
            ));
        }
        Ok(Self { input })
    }

    pub fn pdf(&self, z: &DVector<f64>) -> f64 {
        let (r, theta) = (z[0], z[1]);
        if r <= 0.0 || !(-std::f64::consts::PI..=std::f64::consts::PI).contains(&theta) {
            return 0.0;
        }
        let cart = DVector::from_vec(vec![r * theta.cos(), r * theta.sin()]);
        self.input.pdf(&cart).unwrap_or(0.0) * r
    }

    /// Support box covering the image of the input's 8-sigma set.
    pub fn support_box(&self) -> (f64, f64, f64, f64) {
        let (vals, _) = crate::linalg::sym_eig_descending(self.input.cov().as_matrix());
        let spread = 8.0 * vals[0].max(0.0).sqrt();
        let r_max = self.input.mean().norm() + spread;
        (0.0, r_max, -std::f64::consts::PI, std::f64::consts::PI)
    }
}
