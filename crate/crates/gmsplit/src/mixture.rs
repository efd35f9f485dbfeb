//! Gaussian and Gaussian-mixture value types: density evaluation, moments,
//! closed-form inner products, sampling, and the text serialization used by
//! the CLI to cache split results.
//!
//! Densities are evaluated through Cholesky solves, never explicit
//! inverses; conditioning in the three-body scenario spans ten orders of
//! magnitude across the position/velocity blocks. Mixture densities
//! accumulate in log space so strongly separated components cannot
//! underflow sums such as the expected-likelihood kernel.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{MatrixSquareRoot, SpdMatrix};

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Tolerance on the mixture weight sum.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A multivariate normal with SPD covariance. PSD (singular) covariances
/// arise only from boundary downdates and stay flagged on the
/// [`SpdMatrix`]; densities of such components are undefined.
///
/// The Cholesky factor is computed once at construction: density
/// evaluation sits in the innermost loops of the quadratures and the
/// sample-based metrics.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: SpdMatrix,
    chol: Option<MatrixSquareRoot>,
    log_norm: f64,
}

impl PartialEq for Gaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mean length {} vs covariance dim {}",
                mean.len(),
                cov.dim()
            )));
        }
        let chol = cov.cholesky().ok();
        let log_norm = match &chol {
            Some(c) => -0.5 * (mean.len() as f64 * LN_2PI + c.log_det()),
            None => f64::NAN,
        };
        Ok(Self {
            mean,
            cov,
            chol,
            log_norm,
        })
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), SpdMatrix::identity(dim)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    fn factor(&self) -> Result<&MatrixSquareRoot> {
        self.chol
            .as_ref()
            .ok_or_else(|| Error::NotPositiveDefinite("singular component has no density".into()))
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point length {} vs gaussian dim {}",
                x.len(),
                self.dim()
            )));
        }
        let chol = self.factor()?;
        let n = self.dim();
        if n <= 8 {
            // Allocation-free forward substitution; density evaluation is
            // the innermost loop of the quadratures and sample metrics.
            let l = chol.factor();
            let mut w = [0.0f64; 8];
            for i in 0..n {
                let mut s = x[i] - self.mean[i];
                for (k, wk) in w.iter().enumerate().take(i) {
                    s -= l[(i, k)] * wk;
                }
                w[i] = s / l[(i, i)];
            }
            let q: f64 = w[..n].iter().map(|v| v * v).sum();
            return Ok(self.log_norm - 0.5 * q);
        }
        let delta = x - &self.mean;
        let w = chol.forward_solve(&delta);
        Ok(self.log_norm - 0.5 * w.norm_squared())
    }

    pub fn pdf(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.log_pdf(x)?.exp())
    }

    /// Draws `mean + L z` with `z` standard normal.
    pub fn sample<R: Rng>(&self, r: &mut R) -> Result<DVector<f64>> {
        let chol = self.factor()?;
        let z = DVector::from_fn(self.dim(), |_, _| r.sample::<f64, _>(StandardNormal));
        Ok(&self.mean + chol.factor() * z)
    }
}

/// A finite mixture of weighted Gaussians. Weights are strictly positive
/// and sum to one within [`WEIGHT_SUM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<(f64, Gaussian)>,
}

impl GaussianMixture {
    pub fn new(components: Vec<(f64, Gaussian)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvariantViolation(
                "mixture has no components".into(),
            ));
        }
        let dim = components[0].1.dim();
        let mut sum = 0.0;
        for (w, g) in &components {
            if *w <= 0.0 {
                return Err(Error::InvariantViolation(format!("nonpositive weight {w}")));
            }
            if g.dim() != dim {
                return Err(Error::DimensionMismatch(
                    "mixture components have differing dimensions".into(),
                ));
            }
            sum += *w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL * components.len() as f64 {
            return Err(Error::InvariantViolation(format!(
                "mixture weights sum to {sum}"
            )));
        }
        Ok(Self { components })
    }

    pub fn single(g: Gaussian) -> Self {
        Self {
            components: vec![(1.0, g)],
        }
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[(f64, Gaussian)] {
        &self.components
    }

    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|(w, _)| *w).sum()
    }

    /// Mixture density via log-sum-exp over component log densities.
    pub fn pdf(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.log_pdf(x)?.exp())
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        // Streaming log-sum-exp: rescale the running sum whenever a new
        // maximum appears.
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for (w, g) in &self.components {
            let l = w.ln() + g.log_pdf(x)?;
            if l.is_nan() {
                return Err(Error::InvariantViolation(
                    "NaN component log density".into(),
                ));
            }
            if l == f64::NEG_INFINITY {
                continue;
            }
            if l > max {
                sum = sum * (max - l).exp() + 1.0;
                max = l;
            } else {
                sum += (l - max).exp();
            }
        }
        if max == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(max + sum.ln())
    }

    /// Overall mean and covariance:
    /// `mean = sum w_i mu_i`,
    /// `cov = sum w_i [(mu_i - mean)(mu_i - mean)^T + P_i]`.
    pub fn moments(&self) -> (DVector<f64>, SpdMatrix) {
        let dim = self.dim();
        let mut mean = DVector::zeros(dim);
        for (w, g) in &self.components {
            mean += *w * g.mean();
        }
        let mut cov = DMatrix::zeros(dim, dim);
        for (w, g) in &self.components {
            let d = g.mean() - &mean;
            cov += *w * (&d * d.transpose() + g.cov().as_matrix());
        }
        let cov = SpdMatrix::new_psd(cov).expect("mixture covariance is PSD");
        (mean, cov)
    }

    /// Marginal mixture over a subset of coordinates.
    pub fn marginal(&self, coords: &[usize]) -> Result<GaussianMixture> {
        let comps = self
            .components
            .iter()
            .map(|(w, g)| {
                let mean =
                    DVector::from_iterator(coords.len(), coords.iter().map(|&i| g.mean()[i]));
                let cov = DMatrix::from_fn(coords.len(), coords.len(), |a, b| {
                    g.cov().as_matrix()[(coords[a], coords[b])]
                });
                Ok((*w, Gaussian::new(mean, SpdMatrix::new_psd(cov)?)?))
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(comps)
    }

    /// Draws one sample: component by weight, then the component Gaussian.
    pub fn sample<R: Rng>(&self, r: &mut R) -> Result<DVector<f64>> {
        let u: f64 = r.gen();
        let mut acc = 0.0;
        for (w, g) in &self.components {
            acc += *w;
            if u <= acc {
                return g.sample(r);
            }
        }
        self.components.last().unwrap().1.sample(r)
    }
}

/// Closed-form inner product of two mixtures:
/// `<p, q> = sum_i sum_j w_i v_j N(mu_i; nu_j, P_i + Q_j)`.
///
/// The pairwise terms are accumulated in a canonical (sorted) order so the
/// result is exactly symmetric in its arguments.
pub fn gm_inner_product(p: &GaussianMixture, q: &GaussianMixture) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "inner product of {}-dim and {}-dim mixtures",
            p.dim(),
            q.dim()
        )));
    }
    let mut terms = Vec::with_capacity(p.len() * q.len());
    for (wi, gi) in p.components() {
        for (vj, gj) in q.components() {
            let cov = SpdMatrix::new_psd(gi.cov().as_matrix() + gj.cov().as_matrix())?;
            let overlap = Gaussian::new(gj.mean().clone(), cov)?;
            terms.push(wi * vj * overlap.pdf(gi.mean())?);
        }
    }
    terms.sort_unstable_by(|a, b| a.total_cmp(b));
    Ok(terms.iter().sum())
}

/// Writes a mixture as structured text records (weight, mean, covariance
/// rows), 17 significant digits, bit-exact on round trip.
pub fn write_mixture<W: Write>(out: &mut W, gm: &GaussianMixture) -> Result<()> {
    writeln!(out, "gmsplit mixture v1")?;
    writeln!(out, "dim {}", gm.dim())?;
    writeln!(out, "components {}", gm.len())?;
    for (w, g) in gm.components() {
        writeln!(out, "component")?;
        writeln!(out, "weight {}", fmt_f64(*w))?;
        let mean: Vec<String> = g.mean().iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "mean {}", mean.join(" "))?;
        for row in 0..g.dim() {
            let cells: Vec<String> = (0..g.dim())
                .map(|col| fmt_f64(g.cov().as_matrix()[(row, col)]))
                .collect();
            writeln!(out, "cov {}", cells.join(" "))?;
        }
    }
    Ok(())
}

pub fn read_mixture<R: BufRead>(input: R) -> Result<GaussianMixture> {
    let mut lines = input.lines();
    let header = next_line(&mut lines)?;
    if header.trim() != "gmsplit mixture v1" {
        return Err(Error::ParseError(format!("unexpected header {header:?}")));
    }
    let dim: usize = parse_kv(&next_line(&mut lines)?, "dim")?;
    let count: usize = parse_kv(&next_line(&mut lines)?, "components")?;
    let mut components = Vec::with_capacity(count);
    for _ in 0..count {
        let marker = next_line(&mut lines)?;
        if marker.trim() != "component" {
            return Err(Error::ParseError(format!(
                "expected 'component', got {marker:?}"
            )));
        }
        let weight: f64 = parse_kv(&next_line(&mut lines)?, "weight")?;
        let mean_vals = parse_row(&next_line(&mut lines)?, "mean", dim)?;
        let mut cov = DMatrix::zeros(dim, dim);
        for row in 0..dim {
            let vals = parse_row(&next_line(&mut lines)?, "cov", dim)?;
            for (col, v) in vals.iter().enumerate() {
                cov[(row, col)] = *v;
            }
        }
        let gaussian = Gaussian::new(DVector::from_vec(mean_vals), SpdMatrix::new_psd(cov)?)?;
        components.push((weight, gaussian));
    }
    GaussianMixture::new(components)
}

/// 17 significant digits: enough for f64 round trips.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn next_line<I: Iterator<Item = std::io::Result<String>>>(lines: &mut I) -> Result<String> {
    match lines.next() {
        Some(Ok(line)) => Ok(line),
        Some(Err(e)) => Err(e.into()),
        None => Err(Error::ParseError("unexpected end of file".into())),
    }
}

fn parse_kv<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    let rest = line
        .trim()
        .strip_prefix(key)
        .ok_or_else(|| Error::ParseError(format!("expected '{key} ...', got {line:?}")))?;
    rest.trim()
        .parse()
        .map_err(|_| Error::ParseError(format!("bad value in {line:?}")))
}

fn parse_row(line: &str, key: &str, len: usize) -> Result<Vec<f64>> {
    let rest = line
        .trim()
        .strip_prefix(key)
        .ok_or_else(|| Error::ParseError(format!("expected '{key} ...', got {line:?}")))?;
    let vals: Vec<f64> = rest
        .split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| Error::ParseError(format!("bad float {tok:?}")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != len {
        return Err(Error::ParseError(format!(
            "expected {len} values in {key} row, got {}",
            vals.len()
        )));
    }
    Ok(vals)
}
