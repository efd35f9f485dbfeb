//! Dense symmetric-positive-definite primitives shared across the crate:
//! Cholesky square roots, rank-1 downdates, directional reciprocal
//! precision, whitening transforms, and generalized symmetric
//! eigenproblems.
//!
//! Cholesky (lower) is the canonical square root wherever a matrix square
//! root appears; it admits the O(n^2) rank-1 downdate used by the splitter.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative symmetry tolerance accepted by [`SpdMatrix`] constructors.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues of a PSD-flagged matrix may be as low as `-PSD_TOL * trace`;
/// anything in that band is treated as an exact zero. Downdates at the
/// alpha* boundary are legitimately singular.
pub const PSD_TOL: f64 = 1e-12;

/// A dense symmetric positive (semi-)definite matrix.
///
/// Construction symmetrizes the input as `(m + m^T)/2` to guard against
/// asymmetry accumulated by propagation arithmetic, and verifies
/// definiteness. Strictly positive-definite values are built with
/// [`SpdMatrix::new`]; boundary-singular values (e.g. downdates at the
/// alpha* threshold) are built with [`SpdMatrix::new_psd`] and flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
    psd_only: bool,
}

impl SpdMatrix {
    /// Strict SPD constructor. Fails with `NotPositiveDefinite` if a
    /// Cholesky pivot is not strictly positive.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        let mat = symmetrized(mat)?;
        cholesky_factor(&mat)?;
        Ok(Self {
            mat,
            psd_only: false,
        })
    }

    /// PSD constructor: eigenvalues >= `-PSD_TOL * trace` are accepted and
    /// clamped to zero. The result is flagged as PSD-only when any
    /// eigenvalue was clamped.
    pub fn new_psd(mat: DMatrix<f64>) -> Result<Self> {
        Self::new_psd_tol(mat, PSD_TOL)
    }

    /// PSD constructor with a caller-chosen relative clamp tolerance.
    pub fn new_psd_tol(mat: DMatrix<f64>, tol: f64) -> Result<Self> {
        let floor = tol * mat.trace().abs().max(f64::MIN_POSITIVE);
        Self::new_psd_floor(mat, floor)
    }

    /// PSD constructor with an absolute eigenvalue floor, for residual
    /// matrices whose own scale is pure roundoff (e.g. the fit-error
    /// covariance of an exactly affine map).
    pub fn new_psd_floor(mat: DMatrix<f64>, floor: f64) -> Result<Self> {
        let mat = symmetrized(mat)?;
        if cholesky_factor(&mat).is_ok() {
            return Ok(Self {
                mat,
                psd_only: false,
            });
        }
        let eig = nalgebra::SymmetricEigen::new(mat.clone());
        let min = eig.eigenvalues.min();
        if min < -floor {
            return Err(Error::NotPositiveDefinite(format!(
                "eigenvalue {min} below clamp floor {floor}"
            )));
        }
        let clamped = DVector::from_iterator(
            eig.eigenvalues.len(),
            eig.eigenvalues.iter().map(|&l| l.max(0.0)),
        );
        let rebuilt =
            &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        let rebuilt = (&rebuilt + rebuilt.transpose()) * 0.5;
        Ok(Self {
            mat: rebuilt,
            psd_only: true,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: DMatrix::identity(dim, dim),
            psd_only: false,
        }
    }

    /// Diagonal matrix from strictly positive entries.
    pub fn from_diagonal(diag: &DVector<f64>) -> Result<Self> {
        if diag.iter().any(|&d| d <= 0.0) {
            return Err(Error::NotPositiveDefinite(
                "nonpositive diagonal entry".into(),
            ));
        }
        Ok(Self {
            mat: DMatrix::from_diagonal(diag),
            psd_only: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// True when the value was admitted through the PSD clamp and may be
    /// singular.
    pub fn is_psd_only(&self) -> bool {
        self.psd_only
    }

    /// Marginal variance `v^T m v`.
    pub fn quadratic_form(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * &self.mat * v)[(0, 0)]
    }

    /// Lower-triangular Cholesky factor `L` with `m = L L^T`.
    pub fn cholesky(&self) -> Result<MatrixSquareRoot> {
        Ok(MatrixSquareRoot {
            factor: cholesky_factor(&self.mat)?,
        })
    }

    /// Reciprocal of the precision along a direction:
    /// `1 / (dir^T m^{-1} dir)`, the variance scale for splitting along
    /// `dir`. Always bounded above by the marginal variance `dir^T m dir`.
    pub fn directional_reciprocal_precision(&self, dir: &DVector<f64>) -> Result<f64> {
        let dir = normalized(dir)?;
        let chol = self.cholesky()?;
        // dir^T m^{-1} dir = ||L^{-1} dir||^2
        let w = chol.forward_solve(&dir);
        let precision = w.norm_squared();
        Ok(1.0 / precision)
    }

    /// `m - alpha * v̂ v̂^T`, positive semi-definite provided
    /// `alpha <= alpha* = 1 / (v̂^T m^{-1} v̂)` (with a small slack for
    /// boundary cases).
    pub fn rank1_downdate(&self, v: &DVector<f64>, alpha: f64) -> Result<SpdMatrix> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "downdate vector length {} vs matrix dim {}",
                v.len(),
                self.dim()
            )));
        }
        if alpha < 0.0 {
            return Err(Error::DowndateViolation {
                alpha,
                alpha_star: f64::NAN,
            });
        }
        let unit = normalized(v)?;
        let alpha_star = self.directional_reciprocal_precision(&unit)?;
        let slack = 1e-12 * alpha_star.max(1.0);
        if alpha > alpha_star + slack {
            return Err(Error::DowndateViolation { alpha, alpha_star });
        }
        let down = &self.mat - alpha * &unit * unit.transpose();
        SpdMatrix::new_psd(down)
    }

    /// Whitening transform pair mapping this covariance's ellipsoid to the
    /// unit sphere.
    pub fn whiten(&self) -> Result<Whitening> {
        Ok(Whitening {
            root: self.cholesky()?,
        })
    }

    /// Explicit inverse, for use as a metric tensor. Dense solves are
    /// preferred everywhere a vector is available.
    pub fn inverse(&self) -> Result<SpdMatrix> {
        let chol = self.cholesky()?;
        let inv = chol.solve_matrix(&DMatrix::identity(self.dim(), self.dim()));
        SpdMatrix::new(inv)
    }
}

/// Lower-triangular factor `L` of `P = L L^T`.
#[derive(Debug, Clone)]
pub struct MatrixSquareRoot {
    factor: DMatrix<f64>,
}

impl MatrixSquareRoot {
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// `L L^T`, for residual checks.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// Solves `L x = b`.
    pub fn forward_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor
            .solve_lower_triangular(b)
            .expect("triangular factor has positive diagonal")
    }

    /// Solves `L^T x = b`.
    pub fn transpose_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor
            .tr_solve_lower_triangular(b)
            .expect("triangular factor has positive diagonal")
    }

    /// Solves `L L^T x = b`, i.e. applies `P^{-1}`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.transpose_solve(&self.forward_solve(b))
    }

    /// Solves `L L^T X = B` column-wise.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let fwd = self
            .factor
            .solve_lower_triangular(b)
            .expect("triangular factor has positive diagonal");
        self.factor
            .tr_solve_lower_triangular(&fwd)
            .expect("triangular factor has positive diagonal")
    }

    /// Solves `L X = B` column-wise, i.e. applies `P^{-1/2}`.
    pub fn forward_solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor
            .solve_lower_triangular(b)
            .expect("triangular factor has positive diagonal")
    }

    /// `log det P = 2 sum log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Forward/inverse pair of a whitening transformation: `forward` maps the
/// covariance ellipsoid to the unit sphere, `inverse` maps it back.
#[derive(Debug, Clone)]
pub struct Whitening {
    root: MatrixSquareRoot,
}

impl Whitening {
    /// `y = P^{-1/2} x`.
    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.root.forward_solve(x)
    }

    /// `x = P^{1/2} y`.
    pub fn inverse(&self, y: &DVector<f64>) -> DVector<f64> {
        self.root.factor() * y
    }

    pub fn root(&self) -> &MatrixSquareRoot {
        &self.root
    }
}

/// Solution of `A v = lambda B v` for symmetric `A` and SPD `B`.
///
/// Eigenvalues are sorted descending; eigenvectors (columns) are
/// B-orthonormal.
#[derive(Debug, Clone)]
pub struct GeneralizedEigenSolution {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl GeneralizedEigenSolution {
    /// Eigenvector for the largest eigenvalue.
    pub fn principal(&self) -> DVector<f64> {
        self.eigenvectors.column(0).into_owned()
    }
}

/// Solves the generalized symmetric eigenproblem by reduction: with
/// `B = L L^T`, the standard symmetric problem for `L^{-1} A L^{-T}` has the
/// same eigenvalues, and its eigenvectors map back through `L^{-T}`.
pub fn generalized_sym_eig(a: &DMatrix<f64>, b: &SpdMatrix) -> Result<GeneralizedEigenSolution> {
    if a.nrows() != a.ncols() || a.nrows() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "generalized eig: a is {}x{}, b dim {}",
            a.nrows(),
            a.ncols(),
            b.dim()
        )));
    }
    let a = (a + a.transpose()) * 0.5;
    let chol = b.cholesky()?;
    let l = chol.factor();
    // C = L^{-1} A L^{-T}
    let la = l.solve_lower_triangular(&a).expect("positive diagonal");
    let c = l
        .solve_lower_triangular(&la.transpose())
        .expect("positive diagonal");
    let c = (&c + c.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(c);

    let n = b.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let q = eig.eigenvectors.column(i).into_owned();
        let v = chol.transpose_solve(&q); // v = L^{-T} q, so v^T B v = 1
        eigenvectors.set_column(col, &v);
    }
    Ok(GeneralizedEigenSolution {
        eigenvalues,
        eigenvectors,
    })
}

/// Symmetric eigendecomposition with descending eigenvalue order.
pub fn sym_eig_descending(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i).into_owned());
    }
    (values, vectors)
}

/// Flips the sign of `v` so its largest-magnitude entry is positive.
/// Splitting directions are axial, so `v` and `-v` are equivalent; this
/// picks the canonical representative.
pub fn canonicalize_sign(mut v: DVector<f64>) -> DVector<f64> {
    let mut idx = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.neg_mut();
    }
    v
}

fn symmetrized(mat: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if mat.nrows() != mat.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}",
            mat.nrows(),
            mat.ncols()
        )));
    }
    let scale = mat.amax().max(f64::MIN_POSITIVE);
    let asym = (&mat - mat.transpose()).amax();
    if asym > SYMMETRY_TOL * scale.max(1.0) * 2.0 {
        return Err(Error::InvariantViolation(format!(
            "matrix asymmetry {asym} exceeds tolerance at scale {scale}"
        )));
    }
    Ok((&mat + mat.transpose()) * 0.5)
}

fn normalized(v: &DVector<f64>) -> Result<DVector<f64>> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::InvariantViolation(
            "zero or non-finite direction".into(),
        ));
    }
    Ok(v / n)
}

/// Plain lower Cholesky with explicit pivot checks.
fn cholesky_factor(mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = mat.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = mat[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {d} at column {j}"
            )));
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = mat[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}
