//! Approximation-quality metrics between a Gaussian-mixture approximation
//! and a truth density: normalized integral squared error, Cramer-von
//! Mises marginal norm, Mahalanobis distance of the mean error, maximal
//! covariance ratio, and the expected likelihood kernel.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::mixture::{gm_inner_product, Gaussian, GaussianMixture};
use crate::model::Model;
use crate::quad::adaptive_2d;

/// A truth density to compare against: either another mixture (all terms
/// in closed form) or the exact pushforward of a planar Gaussian through a
/// diffeomorphism, integrated by adaptive quadrature.
pub enum Truth<'a> {
    Mixture(&'a GaussianMixture),
    /// `p'(z) = p0(g^{-1}(z)) / |det G|`: the image of `input` under the
    /// model's map. Integrals against it are pulled back to input
    /// coordinates, where the support is a plain Gaussian box; in output
    /// coordinates it can be an arbitrarily thin curved ridge.
    Pushforward {
        model: &'a dyn Model,
        input: &'a Gaussian,
    },
}

/// One row of a results table: the metric values for a (scenario,
/// heuristic) pair.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub scenario: String,
    pub heuristic: String,
    pub nise: Option<f64>,
    pub elk: Option<f64>,
    pub madem: Option<f64>,
    pub mcr: Option<f64>,
    pub cvm_norm: Option<f64>,
    pub sample_count: usize,
}

/// Normalized integral squared error,
/// `NISE = int (p - p')^2 / (int p^2 + int p'^2)`, in [0, 1].
///
/// Mixture-vs-mixture is fully closed-form through Gaussian overlap
/// integrals; analytic truths use adaptive quadrature for the cross and
/// self terms (the approximation's self term stays closed-form).
pub fn nise(p: &GaussianMixture, truth: &Truth) -> Result<f64> {
    let pp = gm_inner_product(p, p)?;
    let (cross, qq) = match truth {
        Truth::Mixture(q) => (gm_inner_product(p, q)?, gm_inner_product(q, q)?),
        Truth::Pushforward { model, input } => {
            if p.dim() != 2 || input.dim() != 2 {
                return Err(Error::DimensionMismatch(
                    "pushforward-truth NISE is implemented for planar densities".into(),
                ));
            }
            // Change of variables z = g(x):
            //   int p'(z)^2 dz     = int p0(x)^2 / |det G(x)| dx
            //   int p(z) p'(z) dz  = int p(g(x)) p0(x) dx
            let support = input_box(input);
            let cross = adaptive_2d(
                &|x, y| {
                    let xv = DVector::from_vec(vec![x, y]);
                    let p0 = input.pdf(&xv).unwrap_or(0.0);
                    if p0 == 0.0 {
                        return 0.0;
                    }
                    match model.value(&xv) {
                        Ok(z) => p.pdf(&z).unwrap_or(0.0) * p0,
                        Err(_) => 0.0,
                    }
                },
                support,
                1e-6,
            )?;
            let qq = adaptive_2d(
                &|x, y| {
                    let xv = DVector::from_vec(vec![x, y]);
                    let p0 = input.pdf(&xv).unwrap_or(0.0);
                    if p0 == 0.0 {
                        return 0.0;
                    }
                    match model.derivatives(&xv, false) {
                        Ok(d) => {
                            let det = d.jacobian.determinant().abs();
                            if det > 0.0 {
                                p0 * p0 / det
                            } else {
                                0.0
                            }
                        }
                        Err(_) => 0.0,
                    }
                },
                support,
                1e-6,
            )?;
            (cross, qq)
        }
    };
    let value = (pp - 2.0 * cross + qq) / (pp + qq);
    Ok(value.clamp(0.0, 1.0))
}

/// 8-sigma marginal box of a planar Gaussian.
fn input_box(g: &Gaussian) -> (f64, f64, f64, f64) {
    let sx = 8.0 * g.cov().as_matrix()[(0, 0)].max(0.0).sqrt();
    let sy = 8.0 * g.cov().as_matrix()[(1, 1)].max(0.0).sqrt();
    (
        g.mean()[0] - sx,
        g.mean()[0] + sx,
        g.mean()[1] - sy,
        g.mean()[1] + sy,
    )
}

/// Standard normal CDF via the complementary error function.
fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Marginal CDF of a mixture along coordinate `j`.
fn marginal_cdf(p: &GaussianMixture, j: usize, z: f64) -> f64 {
    let mut acc = 0.0;
    for (w, g) in p.components() {
        let sigma = g.cov().as_matrix()[(j, j)].max(0.0).sqrt();
        if sigma == 0.0 {
            if z >= g.mean()[j] {
                acc += w;
            }
            continue;
        }
        acc += w * normal_cdf((z - g.mean()[j]) / sigma);
    }
    acc.clamp(0.0, 1.0)
}

/// Cramer-von Mises statistic of sorted samples against a CDF:
/// `omega^2 = 1/(12 N^2) + (1/N) sum ((2i-1)/(2N) - F(z_(i)))^2`.
///
/// The statistic depends on the samples only through their CDF values, so
/// it is invariant under any strictly increasing reparameterization
/// applied to both the CDF and the samples.
pub fn cvm_marginal_statistic(cdf: &dyn Fn(f64) -> f64, sorted: &[f64]) -> f64 {
    let n = sorted.len();
    assert!(n >= 1, "CvM needs at least one sample");
    let nf = n as f64;
    let mut acc = 0.0;
    for (i, z) in sorted.iter().enumerate() {
        let target = (2.0 * (i as f64 + 1.0) - 1.0) / (2.0 * nf);
        let d = target - cdf(*z);
        acc += d * d;
    }
    1.0 / (12.0 * nf * nf) + acc / nf
}

/// Euclidean norm over the per-marginal CvM statistics of `samples`
/// (`N x m`) against the mixture's marginal CDFs.
pub fn cvm_norm(p: &GaussianMixture, samples: &DMatrix<f64>) -> Result<f64> {
    if samples.nrows() == 0 {
        return Err(Error::InvariantViolation(
            "CvM needs at least one sample".into(),
        ));
    }
    if samples.ncols() != p.dim() {
        return Err(Error::DimensionMismatch(format!(
            "samples have {} columns, mixture dim {}",
            samples.ncols(),
            p.dim()
        )));
    }
    let mut acc = 0.0;
    for j in 0..p.dim() {
        let mut col: Vec<f64> = samples.column(j).iter().cloned().collect();
        col.sort_unstable_by(|a, b| a.total_cmp(b));
        let omega2 = cvm_marginal_statistic(&|z| marginal_cdf(p, j, z), &col);
        acc += omega2 * omega2;
    }
    Ok(acc.sqrt())
}

/// Mahalanobis distance of the mean error under `norm_cov`.
pub fn madem(
    p_mean: &DVector<f64>,
    truth_mean: &DVector<f64>,
    norm_cov: &SpdMatrix,
) -> Result<f64> {
    if p_mean.len() != truth_mean.len() || p_mean.len() != norm_cov.dim() {
        return Err(Error::DimensionMismatch("MaDEM inputs disagree".into()));
    }
    let chol = norm_cov.cholesky()?;
    let delta = p_mean - truth_mean;
    Ok(chol.forward_solve(&delta).norm())
}

/// Maximal covariance ratio: with `lambda_i` the squared singular values of
/// `P^{-1/2} (P')^{1/2}`, returns `max(max lambda, 1/min lambda)`. Unity
/// means identical 1-sigma ellipsoids; the value is the worst directional
/// (squared) size ratio and is symmetric under argument swap.
pub fn mcr(p_cov: &SpdMatrix, truth_cov: &SpdMatrix) -> Result<f64> {
    if p_cov.dim() != truth_cov.dim() {
        return Err(Error::DimensionMismatch("MCR covariances disagree".into()));
    }
    let lp = p_cov.cholesky()?;
    let lt = truth_cov.cholesky()?;
    // Forward substitution of the truth factor's columns.
    let m = lp.forward_solve_matrix(lt.factor());
    let svd = m.svd(false, false);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for s in svd.singular_values.iter() {
        let lambda = s * s;
        lo = lo.min(lambda);
        hi = hi.max(lambda);
    }
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite(
            "singular covariance in MCR".into(),
        ));
    }
    Ok(hi.max(1.0 / lo))
}

/// Expected likelihood kernel `E_truth[p(z)] ~ (1/N) sum p(z_i)`.
///
/// Densities are evaluated through log space so separated components
/// cannot underflow intermediate sums; accumulation is chunked compensated
/// summation, independent of threading.
pub fn elk(p: &GaussianMixture, samples: &DMatrix<f64>) -> Result<f64> {
    if samples.nrows() == 0 {
        return Err(Error::InvariantViolation(
            "ELK needs at least one sample".into(),
        ));
    }
    if samples.ncols() != p.dim() {
        return Err(Error::DimensionMismatch(format!(
            "samples have {} columns, mixture dim {}",
            samples.ncols(),
            p.dim()
        )));
    }
    use rayon::prelude::*;
    const CHUNK: usize = 1024;
    let n = samples.nrows();
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n);
            let mut sum = 0.0;
            let mut comp = 0.0;
            for i in lo..hi {
                let z = samples.row(i).transpose();
                let v = p.pdf(&z).unwrap_or(0.0);
                // Kahan step.
                let y = v - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            sum
        })
        .collect();
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in partials {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::Gaussian;
    use crate::testing::{rng, SpdSampler};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn gm1(mean: f64, var: f64) -> GaussianMixture {
        GaussianMixture::single(
            Gaussian::new(
                DVector::from_element(1, mean),
                SpdMatrix::new(DMatrix::from_element(1, 1, var)).unwrap(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn nise_identical_mixtures_is_zero() {
        let p = gm1(0.3, 1.5);
        let q = p.clone();
        assert_eq!(nise(&p, &Truth::Mixture(&q)).unwrap(), 0.0);
    }

    #[test]
    fn nise_separated_supports_is_one() {
        let p = gm1(0.0, 1.0);
        let q = gm1(100.0, 1.0);
        let v = nise(&p, &Truth::Mixture(&q)).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nise_closed_form_matches_quadrature() {
        // N(0,1) vs N(0,2): all three inner products are single Gaussian
        // evaluations N(0; 0, 2), N(0; 0, 3), N(0; 0, 4).
        let p = gm1(0.0, 1.0);
        let q = gm1(0.0, 2.0);
        let closed = nise(&p, &Truth::Mixture(&q)).unwrap();
        let n = 100_000usize;
        let h = 40.0 / n as f64;
        let (mut ise, mut pp, mut qq) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            let x = DVector::from_element(1, -20.0 + h * i as f64);
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let pv = p.pdf(&x).unwrap();
            let qv = q.pdf(&x).unwrap();
            ise += w * (pv - qv) * (pv - qv);
            pp += w * pv * pv;
            qq += w * qv * qv;
        }
        let quad = ise / (pp + qq);
        assert!((closed - quad).abs() < 1e-8, "closed {closed} quad {quad}");
    }

    #[test]
    fn nise_against_pushforward_truth_of_itself() {
        // The exact affine image of the input Gaussian used both as the
        // approximation and (through the pushforward path, with a
        // non-unit Jacobian determinant) as the truth: quadrature must
        // drive NISE to ~0.
        use crate::model::QuadraticModel;
        let mut r = rng(101);
        let cov = SpdSampler::new(2).sample(&mut r);
        let input = Gaussian::new(DVector::from_vec(vec![0.5, -1.0]), cov.clone()).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, -0.3, 1.5]);
        let offset = DVector::from_vec(vec![1.0, -2.0]);
        let model = QuadraticModel::affine(a.clone(), offset.clone());
        let p = GaussianMixture::single(
            Gaussian::new(
                &a * input.mean() + &offset,
                SpdMatrix::new(&a * cov.as_matrix() * a.transpose()).unwrap(),
            )
            .unwrap(),
        );
        let v = nise(
            &p,
            &Truth::Pushforward {
                model: &model,
                input: &input,
            },
        )
        .unwrap();
        assert!(v < 1e-6, "NISE {v}");
    }

    #[test]
    fn nise_bounds_hold_on_random_pairs() {
        let mut r = rng(102);
        for _ in 0..20 {
            let p = gm1(r.gen_range(-2.0..2.0), r.gen_range(0.5..2.0));
            let q = gm1(r.gen_range(-2.0..2.0), r.gen_range(0.5..2.0));
            let v = nise(&p, &Truth::Mixture(&q)).unwrap();
            assert!((0.0..=1.0).contains(&v));
            let w = nise(&q, &Truth::Mixture(&p)).unwrap();
            assert_relative_eq!(v, w, epsilon = 1e-15);
        }
    }

    #[test]
    fn cvm_quantile_samples_reach_minimum() {
        // Samples placed exactly at the (2i-1)/(2N) quantiles achieve the
        // formula's floor 1/(12 N^2).
        let p = gm1(0.0, 1.0);
        let n = 64;
        let quantiles: Vec<f64> = (1..=n)
            .map(|i| {
                let target = (2.0 * i as f64 - 1.0) / (2.0 * n as f64);
                // Bisect the marginal CDF.
                let (mut lo, mut hi) = (-10.0, 10.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if marginal_cdf(&p, 0, mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect();
        let omega2 = cvm_marginal_statistic(&|z| marginal_cdf(&p, 0, z), &quantiles);
        let floor = 1.0 / (12.0 * (n * n) as f64);
        assert_relative_eq!(omega2, floor, max_relative = 1e-8);
    }

    #[test]
    fn cvm_single_median_sample() {
        let p = gm1(0.0, 1.0);
        let omega2 = cvm_marginal_statistic(&|z| marginal_cdf(&p, 0, z), &[0.0]);
        assert_relative_eq!(omega2, 1.0 / 12.0, epsilon = 1e-12);
    }

    #[test]
    fn cvm_own_samples_within_null_band() {
        let p = gm1(0.0, 1.0);
        let mut r = rng(103);
        let n = 100_000;
        let mut samples = DMatrix::zeros(n, 1);
        for i in 0..n {
            samples[(i, 0)] = p.sample(&mut r).unwrap()[0];
        }
        let norm = cvm_norm(&p, &samples).unwrap();
        // One marginal: the norm is the statistic itself. The null 95%
        // quantile of N * omega^2 is about 0.46.
        assert!(norm < 0.46 / n as f64, "omega^2 = {norm}");
    }

    #[test]
    fn cvm_invariant_under_increasing_transform() {
        // Probability integral transform: exp() applied to both the
        // marginal and the samples leaves the statistic unchanged.
        let p = gm1(0.2, 1.3);
        let mut r = rng(104);
        let mut samples: Vec<f64> = (0..500).map(|_| p.sample(&mut r).unwrap()[0]).collect();
        samples.sort_unstable_by(|a, b| a.total_cmp(b));
        let base = cvm_marginal_statistic(&|z| marginal_cdf(&p, 0, z), &samples);
        let transformed: Vec<f64> = samples.iter().map(|z| z.exp()).collect();
        let composed = cvm_marginal_statistic(&|z| marginal_cdf(&p, 0, z.ln()), &transformed);
        assert_relative_eq!(base, composed, max_relative = 1e-12);
    }

    #[test]
    fn madem_basic_cases() {
        let mut r = rng(105);
        let cov = SpdSampler::new(3).sample(&mut r);
        let mean = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(madem(&mean, &mean, &cov).unwrap(), 0.0);
        // One standard deviation along an eigenvector scores exactly 1.
        let (vals, vecs) = crate::linalg::sym_eig_descending(cov.as_matrix());
        let shifted = &mean + vals[1].sqrt() * vecs.column(1);
        assert_relative_eq!(
            madem(&shifted, &mean, &cov).unwrap(),
            1.0,
            max_relative = 1e-10
        );
        // Seeded case vs the explicit quadratic form.
        let other = DVector::from_vec(vec![0.3, -0.5, 2.0]);
        let inv = cov.as_matrix().clone().try_inverse().unwrap();
        let d = &other - &mean;
        let expect = (d.transpose() * inv * &d)[(0, 0)].sqrt();
        assert_relative_eq!(
            madem(&other, &mean, &cov).unwrap(),
            expect,
            max_relative = 1e-10
        );
    }

    #[test]
    fn mcr_identity_and_scaling() {
        let mut r = rng(106);
        let p = SpdSampler::new(3).sample(&mut r);
        assert_relative_eq!(mcr(&p, &p).unwrap(), 1.0, epsilon = 1e-12);
        let scaled = SpdMatrix::new(4.0 * p.as_matrix()).unwrap();
        assert_relative_eq!(mcr(&p, &scaled).unwrap(), 4.0, max_relative = 1e-12);
        assert_relative_eq!(mcr(&scaled, &p).unwrap(), 4.0, max_relative = 1e-12);
    }

    #[test]
    fn mcr_symmetric_and_congruence_invariant() {
        let mut r = rng(107);
        for _ in 0..20 {
            let a = SpdSampler::new(3).sample(&mut r);
            let b = SpdSampler::new(3).sample(&mut r);
            let ab = mcr(&a, &b).unwrap();
            let ba = mcr(&b, &a).unwrap();
            assert_relative_eq!(ab, ba, max_relative = 1e-10);
            assert!(ab >= 1.0);
            // Congruence transform leaves the ratios unchanged.
            let t = crate::testing::well_conditioned_matrix(3, &mut r);
            let ta = SpdMatrix::new(&t * a.as_matrix() * t.transpose()).unwrap();
            let tb = SpdMatrix::new(&t * b.as_matrix() * t.transpose()).unwrap();
            assert_relative_eq!(mcr(&ta, &tb).unwrap(), ab, max_relative = 1e-9);
        }
    }

    #[test]
    fn mcr_agrees_with_covariance_pencil_eigenvalues() {
        // Alternative route: the squared singular values of
        // P^{-1/2} (P')^{1/2} are the eigenvalues of the symmetric pencil
        // (P', P).
        use crate::linalg::generalized_sym_eig;
        let mut r = rng(110);
        for _ in 0..20 {
            let p = SpdSampler::new(4).sample(&mut r);
            let q = SpdSampler::new(4).sample(&mut r);
            let via_svd = mcr(&p, &q).unwrap();
            let sol = generalized_sym_eig(q.as_matrix(), &p).unwrap();
            let hi = sol.eigenvalues.max();
            let lo = sol.eigenvalues.min();
            let via_pencil = hi.max(1.0 / lo);
            assert_relative_eq!(via_svd, via_pencil, max_relative = 1e-10);
        }
    }

    #[test]
    fn elk_far_mixture_vanishes() {
        let p = gm1(1000.0, 1.0);
        let mut samples = DMatrix::zeros(100, 1);
        for i in 0..100 {
            samples[(i, 0)] = i as f64 * 0.01;
        }
        assert!(elk(&p, &samples).unwrap() < 1e-300);
    }

    #[test]
    fn elk_standard_normal_self_expectation() {
        // E_p[p(z)] = int p^2 = 1 / (2 sqrt(pi)) for the standard normal.
        let p = gm1(0.0, 1.0);
        let mut r = rng(108);
        let n = 1_000_000;
        let mut samples = DMatrix::zeros(n, 1);
        for i in 0..n {
            samples[(i, 0)] = p.sample(&mut r).unwrap()[0];
        }
        let value = elk(&p, &samples).unwrap();
        let expect = 0.5 / std::f64::consts::PI.sqrt();
        // 3 standard errors of the sample mean of p(z).
        let mut var = 0.0;
        for i in 0..n {
            let v = p.pdf(&DVector::from_element(1, samples[(i, 0)])).unwrap();
            var += (v - value) * (v - value);
        }
        let se = (var / (n as f64 * (n as f64 - 1.0))).sqrt();
        assert!(
            (value - expect).abs() < 3.0 * se,
            "ELK {value} vs {expect} (3 SE = {})",
            3.0 * se
        );
    }

    #[test]
    fn elk_prefers_matching_sample_set() {
        let p = gm1(0.0, 1.0);
        let mut r = rng(109);
        let n = 20_000;
        let mut own = DMatrix::zeros(n, 1);
        let mut shifted = DMatrix::zeros(n, 1);
        for i in 0..n {
            let z = p.sample(&mut r).unwrap()[0];
            own[(i, 0)] = z;
            shifted[(i, 0)] = z + 5.0;
        }
        assert!(elk(&p, &own).unwrap() > elk(&p, &shifted).unwrap());
    }
}
