//! Moment-preserving multivariate splitting along an arbitrary direction,
//! and the recursive split operator driven by a weighted criterion.
//!
//! A univariate library entry is applied at the scale of the *reciprocal
//! precision* along the splitting direction, `1 / (x^T P^{-1} x)` - not the
//! marginal variance. That is the parameter the positive-definiteness
//! threshold of the rank-1 downdate singles out, so every child covariance
//! is PSD whenever the library entry satisfies `sum w mu^2 < 1`.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heuristics::{split_direction, HeuristicKind, SutConfig};
use crate::linalg::SpdMatrix;
use crate::mixture::{Gaussian, GaussianMixture};
use crate::model::Model;
use crate::splitlib::UnivariateSplit;

/// When to keep splitting a mixand: split while the criterion
/// `c = w^gamma * J^(1-gamma)` exceeds `threshold` (with `J` the
/// heuristic's achieved objective at the mixand mean) and the lineage depth
/// is below `max_depth`.
///
/// `threshold = 0` selects benchmark mode: the criterion is ignored and
/// every mixand is split to the maximum recursion depth, which is the
/// protocol used for method comparison.
#[derive(Debug, Clone, Copy)]
pub struct SplitCriterion {
    pub gamma: f64,
    pub threshold: f64,
    pub max_depth: usize,
}

impl SplitCriterion {
    pub fn new(gamma: f64, threshold: f64, max_depth: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvariantViolation(format!(
                "gamma {gamma} outside [0, 1]"
            )));
        }
        Ok(Self {
            gamma,
            threshold,
            max_depth,
        })
    }

    /// Benchmark mode: unconditional splitting to `max_depth`.
    pub fn benchmark(max_depth: usize) -> Self {
        Self {
            gamma: 0.0,
            threshold: 0.0,
            max_depth,
        }
    }

    pub fn is_benchmark(&self) -> bool {
        self.threshold == 0.0
    }

    fn fires(&self, weight: f64, objective: f64) -> bool {
        if self.is_benchmark() {
            return true;
        }
        let c = weight.powf(self.gamma) * objective.powf(1.0 - self.gamma);
        c > self.threshold
    }
}

/// Splits one Gaussian along `dir` using a univariate library entry.
///
/// Component means are placed along the direction at the reciprocal
/// precision scale; every component covariance is the same rank-1 downdate
/// of the parent scaled by its component's variance ratio, so the mixture
/// reproduces the parent mean and covariance exactly.
pub fn split_gaussian(
    g: &Gaussian,
    dir: &DVector<f64>,
    entry: &UnivariateSplit,
) -> Result<GaussianMixture> {
    if dir.len() != g.dim() {
        return Err(Error::DimensionMismatch(format!(
            "direction length {} vs gaussian dim {}",
            dir.len(),
            g.dim()
        )));
    }
    entry.validate()?;
    let dir = dir / dir.norm();
    let sigma2 = g.cov().directional_reciprocal_precision(&dir)?;
    let sigma = sigma2.sqrt();

    // alpha = sum_i w_i ||mu_i - mu||^2 = sigma^2 sum_i w_i mu~_i^2, below
    // the downdate threshold alpha* = sigma^2 by the library invariant.
    let spread = entry.mean_square_spread();
    let alpha = sigma2 * spread;
    let downdated = g.cov().rank1_downdate(&dir, alpha)?;

    // The common scaled base covariance P-bar divides out the weighted
    // variance sum; per-component covariances are sigma_i^2 * P-bar. The
    // library entries are homoscedastic but the formula accepts general
    // per-component sigmas.
    let scaled_sigmas: Vec<f64> = entry
        .means()
        .iter()
        .map(|_| sigma * entry.sigma())
        .collect();
    let weighted_var: f64 = entry
        .weights()
        .iter()
        .zip(&scaled_sigmas)
        .map(|(w, s)| w * s * s)
        .sum();
    let base = downdated.as_matrix() / weighted_var;

    let components = entry
        .weights()
        .iter()
        .zip(entry.means())
        .zip(&scaled_sigmas)
        .map(|((w, m), s)| {
            let mean = g.mean() + (sigma * m) * &dir;
            let cov = SpdMatrix::new_psd(&base * (s * s))?;
            Ok((*w, Gaussian::new(mean, cov)?))
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::new(components)
}

/// Applies the split operator recursively: every mixand whose criterion
/// fires is replaced by its split, breadth-first, until no mixand fires or
/// the depth cap is reached. Mixands at one depth are processed
/// concurrently; output ordering is deterministic (parent order, then
/// library index).
pub fn recursive_split(
    gm: &GaussianMixture,
    model: &dyn Model,
    kind: HeuristicKind,
    criterion: &SplitCriterion,
    entry: &UnivariateSplit,
    sut: Option<&SutConfig>,
) -> Result<GaussianMixture> {
    struct Node {
        weight: f64,
        gaussian: Gaussian,
        depth: usize,
        // A mixand that once declined to split never changes, so it is
        // never probed again (each probe can be an expensive derivative
        // evaluation).
        settled: bool,
    }

    let mut current: Vec<Node> = gm
        .components()
        .iter()
        .map(|(w, g)| Node { weight: *w, gaussian: g.clone(), depth: 0, settled: false })
        .collect();

    loop {
        let decisions: Vec<Option<GaussianMixture>> = current
            .par_iter()
            .map(|node| {
                if node.settled || node.depth >= criterion.max_depth {
                    return Ok(None);
                }
                let result = split_direction(kind, model, &node.gaussian, sut)?;
                if !criterion.fires(node.weight, result.objective_value) {
                    return Ok(None);
                }
                split_gaussian(&node.gaussian, &result.direction, entry).map(Some)
            })
            .collect::<Result<_>>()?;

        if decisions.iter().all(Option::is_none) {
            break;
        }
        let mut next = Vec::with_capacity(current.len() * entry.len());
        for (node, split) in current.into_iter().zip(decisions) {
            match split {
                Some(children) => {
                    for (cw, cg) in children.components() {
                        next.push(Node {
                            weight: node.weight * cw,
                            gaussian: cg.clone(),
                            depth: node.depth + 1,
                            settled: false,
                        });
                    }
                }
                None => next.push(Node { settled: true, ..node }),
            }
        }
        current = next;
    }

    GaussianMixture::new(current.into_iter().map(|n| (n.weight, n.gaussian)).collect())
}
