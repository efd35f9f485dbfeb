//! Dense order-3 mixed tensors (second-derivative arrays), their
//! contractions, matricization and squaring, and the shifted symmetric
//! higher-order power iteration for Z-eigenpairs of the squared tensor.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{canonicalize_sign, SpdMatrix};

/// Order-3 tensor `G[i][j][k]` with one output index `i < m` and two input
/// indices `j, k < n`, symmetric in `(j, k)` (second partials commute).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    out_dim: usize,
    in_dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            out_dim,
            in_dim,
            data: vec![0.0; out_dim * in_dim * in_dim],
        }
    }

    /// Builds from a function of `(i, j, k)`; entries are symmetrized over
    /// `(j, k)`.
    pub fn from_fn(out_dim: usize, in_dim: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(out_dim, in_dim);
        for i in 0..out_dim {
            for j in 0..in_dim {
                for k in 0..in_dim {
                    t.set(i, j, k, 0.5 * (f(i, j, k) + f(i, k, j)));
                }
            }
        }
        t
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.in_dim + j) * self.in_dim + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.data[(i * self.in_dim + j) * self.in_dim + k] = value;
    }

    /// Symmetric `n x n` slice for output index `i`, as a matrix.
    pub fn output_slice(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.in_dim, self.in_dim, |j, k| self.get(i, j, k))
    }

    /// Verifies trailing-index symmetry to relative tolerance.
    pub fn check_symmetry(&self, tol: f64) -> Result<()> {
        let scale = self
            .data
            .iter()
            .fold(0.0f64, |a, &b| a.max(b.abs()))
            .max(1.0);
        for i in 0..self.out_dim {
            for j in 0..self.in_dim {
                for k in (j + 1)..self.in_dim {
                    let d = (self.get(i, j, k) - self.get(i, k, j)).abs();
                    if d > tol * scale {
                        return Err(Error::InvariantViolation(format!(
                            "tensor slice {i} asymmetric at ({j},{k}): {d}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `(G x^2)^i = G^i_{jk} x^j x^k`; homogeneous of degree 2 in `x`.
    pub fn contract_vv(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::DimensionMismatch(format!(
                "contract_vv: x has length {}, tensor input dim {}",
                x.len(),
                self.in_dim
            )));
        }
        let mut out = DVector::zeros(self.out_dim);
        for i in 0..self.out_dim {
            let mut acc = 0.0;
            for j in 0..self.in_dim {
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                let base = (i * self.in_dim + j) * self.in_dim;
                let mut row = 0.0;
                for k in 0..self.in_dim {
                    row += self.data[base + k] * x[k];
                }
                acc += xj * row;
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// `(G x)^i_j = G^i_{jk} x^k`, the change in the Jacobian for a step
    /// `x` away from the expansion point; linear in `x`.
    pub fn contract_v(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::DimensionMismatch(format!(
                "contract_v: x has length {}, tensor input dim {}",
                x.len(),
                self.in_dim
            )));
        }
        let mut out = DMatrix::zeros(self.out_dim, self.in_dim);
        for i in 0..self.out_dim {
            for j in 0..self.in_dim {
                let base = (i * self.in_dim + j) * self.in_dim;
                let mut acc = 0.0;
                for k in 0..self.in_dim {
                    acc += self.data[base + k] * x[k];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    /// Flattens to the `m*n x n` matrix with row `n*i + j`, column `k`
    /// holding `G[i][j][k]`, so that `||matricize(G) x||_2 = ||G x||_F`.
    pub fn matricize(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.out_dim * self.in_dim, self.in_dim, |row, k| {
            let i = row / self.in_dim;
            let j = row % self.in_dim;
            self.get(i, j, k)
        })
    }

    /// Maps both input slots by `a` and the output slot by nothing:
    /// `H^i_{jk} = G^i_{pq} a_{pj} a_{qk}`. Used to fold whitening
    /// transforms into the tensor.
    pub fn fold_inputs(&self, a: &DMatrix<f64>) -> Result<Tensor3> {
        if a.nrows() != self.in_dim {
            return Err(Error::DimensionMismatch(format!(
                "fold_inputs: transform is {}x{}, tensor input dim {}",
                a.nrows(),
                a.ncols(),
                self.in_dim
            )));
        }
        let n_new = a.ncols();
        let mut out = Tensor3::zeros(self.out_dim, n_new);
        for i in 0..self.out_dim {
            let slice = self.output_slice(i);
            let folded = a.transpose() * slice * a;
            for j in 0..n_new {
                for k in 0..n_new {
                    out.set(i, j, k, folded[(j, k)]);
                }
            }
        }
        Ok(out)
    }

    /// Maps the output slot by `b`: `H^i_{jk} = b_{il} G^l_{jk}`.
    pub fn fold_output(&self, b: &DMatrix<f64>) -> Result<Tensor3> {
        if b.ncols() != self.out_dim {
            return Err(Error::DimensionMismatch(format!(
                "fold_output: transform is {}x{}, tensor output dim {}",
                b.nrows(),
                b.ncols(),
                self.out_dim
            )));
        }
        let m_new = b.nrows();
        let mut out = Tensor3::zeros(m_new, self.in_dim);
        for j in 0..self.in_dim {
            for k in 0..self.in_dim {
                for l in 0..m_new {
                    let mut acc = 0.0;
                    for i in 0..self.out_dim {
                        acc += b[(l, i)] * self.get(i, j, k);
                    }
                    out.set(l, j, k, acc);
                }
            }
        }
        Ok(out)
    }

    /// The "square" of the tensor under a metric on the output space:
    /// `T_{ijkl} = G^p_{ij} metric_{pq} G^q_{kl}`, so that
    /// `T x^4 = ||G x^2||^2` in the metric norm.
    pub fn square(&self, metric: &SpdMatrix) -> Result<Tensor4Sym> {
        if metric.dim() != self.out_dim {
            return Err(Error::DimensionMismatch(format!(
                "square: metric dim {} vs tensor output dim {}",
                metric.dim(),
                self.out_dim
            )));
        }
        let n = self.in_dim;
        let m = self.out_dim;
        let w = metric.as_matrix();
        // D^q_{ij} = metric_{qp} G^p_{ij}
        let mut d = vec![0.0; m * n * n];
        for q in 0..m {
            for j in 0..n {
                for k in 0..n {
                    let mut acc = 0.0;
                    for p in 0..m {
                        acc += w[(q, p)] * self.get(p, j, k);
                    }
                    d[(q * n + j) * n + k] = acc;
                }
            }
        }
        let mut t = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut acc = 0.0;
                        for q in 0..m {
                            acc += d[(q * n + i) * n + j] * self.get(q, k, l);
                        }
                        t[((i * n + j) * n + k) * n + l] = acc;
                    }
                }
            }
        }
        Ok(Tensor4Sym { dim: n, data: t })
    }
}

/// Fourth-order tensor with the partial symmetry produced by squaring an
/// order-3 tensor: invariant under `(i <-> j)`, `(k <-> l)`, and the block
/// swap `(ij) <-> (kl)`. That symmetry is exactly what the power iteration
/// requires; full symmetrization is available on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4Sym {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor4Sym {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.dim;
        self.data[((i * n + j) * n + k) * n + l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, value: f64) {
        let n = self.dim;
        self.data[((i * n + j) * n + k) * n + l] = value;
    }

    /// Average over all 24 index permutations.
    pub fn symmetrize(&self) -> Tensor4Sym {
        let n = self.dim;
        let mut out = Tensor4Sym::zeros(n);
        let perms: [[usize; 4]; 24] = [
            [0, 1, 2, 3],
            [0, 1, 3, 2],
            [0, 2, 1, 3],
            [0, 2, 3, 1],
            [0, 3, 1, 2],
            [0, 3, 2, 1],
            [1, 0, 2, 3],
            [1, 0, 3, 2],
            [1, 2, 0, 3],
            [1, 2, 3, 0],
            [1, 3, 0, 2],
            [1, 3, 2, 0],
            [2, 0, 1, 3],
            [2, 0, 3, 1],
            [2, 1, 0, 3],
            [2, 1, 3, 0],
            [2, 3, 0, 1],
            [2, 3, 1, 0],
            [3, 0, 1, 2],
            [3, 0, 2, 1],
            [3, 1, 0, 2],
            [3, 1, 2, 0],
            [3, 2, 0, 1],
            [3, 2, 1, 0],
        ];
        let mut idx = [0usize; 4];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let src = [i, j, k, l];
                        let mut acc = 0.0;
                        for p in &perms {
                            for (slot, &take) in p.iter().enumerate() {
                                idx[slot] = src[take];
                            }
                            acc += self.get(idx[0], idx[1], idx[2], idx[3]);
                        }
                        out.set(i, j, k, l, acc / 24.0);
                    }
                }
            }
        }
        out
    }

    /// `(T x^3)^i = T_{iqrs} x^q x^r x^s`.
    pub fn contract3(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "contract3: x has length {}, tensor dim {}",
                x.len(),
                self.dim
            )));
        }
        let n = self.dim;
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let mut acc_i = 0.0;
            for q in 0..n {
                let xq = x[q];
                if xq == 0.0 {
                    continue;
                }
                let mut acc_q = 0.0;
                for r in 0..n {
                    let xr = x[r];
                    if xr == 0.0 {
                        continue;
                    }
                    let base = ((i * n + q) * n + r) * n;
                    let mut acc_r = 0.0;
                    for s in 0..n {
                        acc_r += self.data[base + s] * x[s];
                    }
                    acc_q += xr * acc_r;
                }
                acc_i += xq * acc_q;
            }
            out[i] = acc_i;
        }
        Ok(out)
    }

    /// `T x^4`, the quartic form.
    pub fn contract4(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.contract3(x)?.dot(x))
    }

    /// Sum of absolute entries; the conservative convergence shift.
    pub fn abs_sum(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }
}

/// A converged (or best-effort) Z-eigenpair `T x^3 = lambda x`, `||x|| = 1`.
/// At convergence `residual <= tol * max(1, |lambda|)`.
#[derive(Debug, Clone)]
pub struct ZEigenPair {
    pub eigenvalue: f64,
    pub eigenvector: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// False when no starting guess converged within the iteration budget;
    /// the best partial result is still reported.
    pub converged: bool,
}

/// Options for [`sshopm`]. Defaults: tolerance 1e-10, iteration cap 5000.
///
/// Convergence is declared on the fixed-point residual relative to the
/// eigenvalue scale. An iterate-displacement test at the same tolerance is
/// not enough: with the conservative shift the displacement understates
/// the residual by a factor of `lambda + eta`.
#[derive(Debug, Clone, Copy)]
pub struct SshopmOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SshopmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 5000,
        }
    }
}

/// Shifted symmetric higher-order power iteration for the maximal
/// Z-eigenpair of `t`.
///
/// The update is `x <- (T x^3 + eta x) / ||T x^3 + eta x||` with the
/// conservative shift `eta = sum |T_ijkl|`, which guarantees monotone
/// convergence without symmetrizing the tensor. Each starting guess is
/// iterated to a fixed point; the best (largest-eigenvalue) converged pair
/// across all guesses is returned. If no guess converges the best partial
/// pair is returned with `converged = false`.
pub fn sshopm(t: &Tensor4Sym, guesses: &[DVector<f64>], opts: SshopmOptions) -> Result<ZEigenPair> {
    if guesses.is_empty() {
        return Err(Error::InvariantViolation(
            "sshopm requires at least one guess".into(),
        ));
    }
    if opts.tol <= 0.0 {
        return Err(Error::InvariantViolation(
            "sshopm tolerance must be positive".into(),
        ));
    }
    let eta = t.abs_sum();
    if eta == 0.0 {
        // Zero tensor: every unit vector satisfies T x^3 = 0 = 0 * x.
        let x = canonicalize_sign(guesses[0].normalize());
        return Ok(ZEigenPair {
            eigenvalue: 0.0,
            eigenvector: x,
            residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let mut best: Option<ZEigenPair> = None;
    for guess in guesses {
        if guess.len() != t.dim() {
            return Err(Error::DimensionMismatch(format!(
                "sshopm guess length {} vs tensor dim {}",
                guess.len(),
                t.dim()
            )));
        }
        let mut x = guess.normalize();
        let mut iterations = 0;
        let mut converged = false;
        let mut shifted_prev = f64::NEG_INFINITY;
        let mut eigenvalue = 0.0;
        let mut residual = f64::INFINITY;
        while iterations < opts.max_iter {
            let tx3 = t.contract3(&x)?;
            eigenvalue = tx3.dot(&x);
            residual = (&tx3 - eigenvalue * &x).norm();
            let shifted = eigenvalue + eta;
            // Monotone ascent of the shifted objective is the convergence
            // guarantee for this shift; a violation beyond roundoff means
            // the tensor lacks the required symmetry.
            debug_assert!(
                shifted >= shifted_prev - 1e-9 * shifted_prev.abs().max(1.0),
                "shifted objective decreased: {shifted_prev} -> {shifted}"
            );
            shifted_prev = shifted;
            if residual <= opts.tol * eigenvalue.abs().max(1.0) {
                converged = true;
                break;
            }
            x = (&tx3 + eta * &x).normalize();
            iterations += 1;
        }
        let candidate = ZEigenPair {
            eigenvalue,
            eigenvector: canonicalize_sign(x),
            residual,
            iterations,
            converged,
        };
        best = Some(match best.take() {
            None => candidate,
            Some(cur) => pick_better(cur, candidate),
        });
    }
    Ok(best.expect("at least one guess"))
}

fn pick_better(a: ZEigenPair, b: ZEigenPair) -> ZEigenPair {
    match (a.converged, b.converged) {
        (true, false) => a,
        (false, true) => b,
        // Ties resolved by eigenvalue, then by guess order (keep first).
        _ => {
            if b.eigenvalue > a.eigenvalue {
                b
            } else {
                a
            }
        }
    }
}

/// Deterministic uniform-sphere restart guesses for the power iteration.
pub fn sphere_guesses(dim: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    use rand::SeedableRng;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let v = DVector::from_fn(dim, |_, _| r.sample::<f64, _>(StandardNormal));
            let n = v.norm();
            if n > 1e-6 {
                break v / n;
            }
        })
        .collect()
}
