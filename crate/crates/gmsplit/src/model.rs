//! The differentiable-map abstraction: a nonlinear function together with
//! its Jacobian and (optionally) its second-derivative tensor at a point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Value, Jacobian, and second-derivative tensor of a map at one point.
/// The tensor is optional: first-order heuristics and mixand propagation
/// never need it, and for integrated flows it is by far the dominant cost.
#[derive(Debug, Clone)]
pub struct ModelDerivatives {
    pub value: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub hessian: Option<Tensor3>,
}

impl ModelDerivatives {
    pub fn input_dim(&self) -> usize {
        self.jacobian.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.jacobian.nrows()
    }

    pub fn hessian(&self) -> Result<&Tensor3> {
        self.hessian
            .as_ref()
            .ok_or_else(|| Error::MissingHessian("derivatives carry no second order".into()))
    }
}

/// A nonlinear map with derivatives available at any point. Implementations
/// must be reentrant: mixands are split and propagated concurrently.
pub trait Model: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// Plain function evaluation.
    fn value(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Value plus first (and, when requested, second) derivatives at `x`.
    fn derivatives(&self, x: &DVector<f64>, with_hessian: bool) -> Result<ModelDerivatives>;
}

/// An exact quadratic map
/// `g(x) = value0 + G (x - x0) + 1/2 G2 (x - x0)^2`.
///
/// Its derivatives are available in closed form at every point, which makes
/// it the workhorse for exercising heuristics against synthetic derivative
/// sets and for affine-degeneracy cases (zero tensor).
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    pub x0: DVector<f64>,
    pub value0: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub hessian: Tensor3,
}

impl QuadraticModel {
    pub fn new(
        x0: DVector<f64>,
        value0: DVector<f64>,
        jacobian: DMatrix<f64>,
        hessian: Tensor3,
    ) -> Result<Self> {
        if jacobian.ncols() != x0.len()
            || jacobian.nrows() != value0.len()
            || hessian.in_dim() != x0.len()
            || hessian.out_dim() != value0.len()
        {
            return Err(Error::DimensionMismatch(
                "quadratic model dimensions disagree".into(),
            ));
        }
        Ok(Self {
            x0,
            value0,
            jacobian,
            hessian,
        })
    }

    /// Affine special case (zero second derivatives).
    pub fn affine(jacobian: DMatrix<f64>, offset: DVector<f64>) -> Self {
        let n = jacobian.ncols();
        let m = jacobian.nrows();
        Self {
            x0: DVector::zeros(n),
            value0: offset,
            jacobian,
            hessian: Tensor3::zeros(m, n),
        }
    }
}

impl Model for QuadraticModel {
    fn input_dim(&self) -> usize {
        self.x0.len()
    }

    fn output_dim(&self) -> usize {
        self.value0.len()
    }

    fn value(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let d = x - &self.x0;
        Ok(&self.value0 + &self.jacobian * &d + 0.5 * self.hessian.contract_vv(&d)?)
    }

    fn derivatives(&self, x: &DVector<f64>, with_hessian: bool) -> Result<ModelDerivatives> {
        let d = x - &self.x0;
        Ok(ModelDerivatives {
            value: self.value(x)?,
            jacobian: &self.jacobian + self.hessian.contract_v(&d)?,
            hessian: with_hessian.then(|| self.hessian.clone()),
        })
    }
}
