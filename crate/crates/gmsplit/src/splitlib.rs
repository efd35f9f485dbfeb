//! The univariate standard-normal split library.
//!
//! Each entry replaces N(0, 1) by an L-component homoscedastic mixture with
//! equally spaced, symmetric means that preserves the first two moments
//! exactly. Entries minimize the closed-form L2 distance to the standard
//! normal plus a regularization `lambda * sigma^2` that rewards smaller
//! mixand variances (without it the degenerate one-component solution is
//! optimal). Libraries are generated offline and referenced at runtime.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mixture::fmt_f64;

const SQRT_2PI: f64 = 2.506628274631000502415765284811;

/// One split of the univariate standard normal: weights, means, common
/// sigma, the regularization it was generated under, and the achieved L2
/// distance.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateSplit {
    weights: Vec<f64>,
    means: Vec<f64>,
    sigma: f64,
    lambda: f64,
    l2_error: f64,
}

impl UnivariateSplit {
    /// Validating constructor; enforces the moment-preservation and
    /// feasibility invariants.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<f64>,
        sigma: f64,
        lambda: f64,
        l2_error: f64,
    ) -> Result<Self> {
        let s = Self {
            weights,
            means,
            sigma,
            lambda,
            l2_error,
        };
        s.validate()?;
        Ok(s)
    }

    /// The identity "split": one component equal to the standard normal.
    pub fn identity() -> Self {
        Self {
            weights: vec![1.0],
            means: vec![0.0],
            sigma: 1.0,
            lambda: 0.0,
            l2_error: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn l2_error(&self) -> f64 {
        self.l2_error
    }

    /// `sum w_i mu_i^2`, the spread of the component means; strictly below
    /// one for a valid entry (this is what keeps mixand variances
    /// positive).
    pub fn mean_square_spread(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .map(|(w, m)| w * m * m)
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.weights.len();
        if l == 0 || self.means.len() != l {
            return Err(Error::InvariantViolation(
                "empty or ragged split entry".into(),
            ));
        }
        let wsum: f64 = self.weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-10 {
            return Err(Error::InvariantViolation(format!(
                "split weights sum to {wsum}"
            )));
        }
        if self.weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvariantViolation("nonpositive split weight".into()));
        }
        let mean: f64 = self
            .weights
            .iter()
            .zip(&self.means)
            .map(|(w, m)| w * m)
            .sum();
        if mean.abs() > 1e-10 {
            return Err(Error::InvariantViolation(format!(
                "split mean {mean} is not zero"
            )));
        }
        let spread = self.mean_square_spread();
        if l > 1 && spread >= 1.0 {
            return Err(Error::InvariantViolation(format!(
                "mean-square spread {spread} >= 1 breaks positive definiteness"
            )));
        }
        let var = spread + self.sigma * self.sigma;
        if (var - 1.0).abs() > 1e-10 {
            return Err(Error::InvariantViolation(format!(
                "split variance {var} is not unity"
            )));
        }
        Ok(())
    }
}

/// Closed-form L2 distance of a split to the standard normal:
/// `<q,q> - 2<q,q~> + <q~,q~>` with every term a Gaussian overlap integral.
pub fn l2_to_standard_normal(s: &UnivariateSplit) -> f64 {
    let var = s.sigma * s.sigma;
    // All three terms go through the same overlap evaluation so that the
    // identity split cancels to exactly zero.
    let qq = normal_pdf(0.0, 2.0); // <q, q> = N(0; 0, 2) = 1 / (2 sqrt(pi))
    let mut cross = 0.0;
    for (w, m) in s.weights.iter().zip(&s.means) {
        cross += w * normal_pdf(*m, 1.0 + var);
    }
    let mut self_term = 0.0;
    for (wi, mi) in s.weights.iter().zip(&s.means) {
        for (wj, mj) in s.weights.iter().zip(&s.means) {
            self_term += wi * wj * normal_pdf(mi - mj, 2.0 * var);
        }
    }
    (qq - 2.0 * cross + self_term).max(0.0)
}

fn normal_pdf(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (SQRT_2PI * var.sqrt())
}

/// Objective of the library optimization:
/// `L2(q || q~) + (lambda / L) * sum sigma_i^2 = L2 + lambda * sigma^2`
/// for a homoscedastic mixture.
fn objective(weights: &[f64], means: &[f64], lambda: f64) -> f64 {
    let spread: f64 = weights.iter().zip(means).map(|(w, m)| w * m * m).sum();
    let var = 1.0 - spread;
    if var <= 0.0 {
        return f64::INFINITY;
    }
    let s = UnivariateSplit {
        weights: weights.to_vec(),
        means: means.to_vec(),
        sigma: var.sqrt(),
        lambda,
        l2_error: 0.0,
    };
    l2_to_standard_normal(&s) + lambda * var
}

/// Equally spaced symmetric means `mu_i = eps * L * ((i-1)/(L-1) - 1/2)`,
/// with the mirror half copied by negation so pairwise sums cancel exactly.
pub fn spaced_means(l: usize, eps: f64) -> Vec<f64> {
    let mut means = vec![0.0; l];
    for i in 0..l / 2 {
        let frac = i as f64 / (l - 1) as f64 - 0.5;
        let m = eps * l as f64 * frac;
        means[i] = m;
        means[l - 1 - i] = -m;
    }
    means
}

/// Expands the free half-weights into the full symmetric weight vector.
/// For `L = 2d` the free parameters are the first `d - 1` weights; for
/// `L = 2d + 1` they are the first `d` outer weights. Returns `None` when
/// any implied weight is nonpositive.
fn expand_weights(l: usize, free: &[f64]) -> Option<Vec<f64>> {
    let half = l / 2;
    let mut first_half = Vec::with_capacity(half);
    first_half.extend_from_slice(free);
    let used: f64 = free.iter().sum();
    if l.is_multiple_of(2) {
        // Last distinct weight closes the sum: 2 * sum(first_half) = 1.
        let last = 0.5 - used;
        first_half.push(last);
    }
    let mut weights = vec![0.0; l];
    for (i, w) in first_half.iter().enumerate() {
        weights[i] = *w;
        weights[l - 1 - i] = *w;
    }
    if !l.is_multiple_of(2) {
        weights[half] = 1.0 - 2.0 * used;
    }
    if weights.iter().any(|&w| w <= 0.0) {
        return None;
    }
    Some(weights)
}

fn free_weight_count(l: usize) -> usize {
    if l.is_multiple_of(2) {
        l / 2 - 1
    } else {
        l / 2
    }
}

/// Objective as a function of `eps` minimized over the free weights.
fn inner_minimum(l: usize, eps: f64, lambda: f64) -> (f64, Vec<f64>) {
    let means = spaced_means(l, eps);
    let nfree = free_weight_count(l);
    let eval = |free: &[f64]| -> f64 {
        match expand_weights(l, free) {
            Some(w) => objective(&w, &means, lambda),
            None => f64::INFINITY,
        }
    };
    match nfree {
        0 => (eval(&[]), vec![]),
        1 => {
            let f = |w: f64| eval(&[w]);
            let (w, v) = scan_then_golden(f, 1e-6, 0.5 - 1e-6, 101, 60);
            (v, vec![w])
        }
        _ => nelder_mead(eval, nfree),
    }
}

/// Coarse scan followed by golden-section refinement between the
/// neighbors of the best scan point. Deterministic and seedless.
fn scan_then_golden(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    scan: usize,
    iters: usize,
) -> (f64, f64) {
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    let step = (hi - lo) / (scan - 1) as f64;
    for i in 0..scan {
        let v = f(lo + step * i as f64);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    golden_section(f, a, b, iters)
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Small deterministic Nelder-Mead over the free weights, started from the
/// best point of a coarse feasible grid. Infeasible points evaluate to
/// infinity.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, dim: usize) -> (f64, Vec<f64>) {
    let grid = 12usize;
    let mut best = vec![1.0 / (2.0 * dim as f64 + 1.0); dim];
    let mut best_v = f(&best);
    let mut idx = vec![0usize; dim];
    loop {
        let point: Vec<f64> = idx
            .iter()
            .map(|&i| 0.5 * (i as f64 + 0.5) / grid as f64)
            .collect();
        let v = f(&point);
        if v < best_v {
            best_v = v;
            best = point;
        }
        let mut carry = true;
        for slot in idx.iter_mut() {
            if carry {
                *slot += 1;
                if *slot == grid {
                    *slot = 0;
                } else {
                    carry = false;
                }
            }
        }
        if carry {
            break;
        }
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((best.clone(), best_v));
    for i in 0..dim {
        let mut p = best.clone();
        p[i] = (p[i] + 0.02).min(0.49);
        let v = f(&p);
        simplex.push((p, v));
    }
    for _ in 0..400 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let worst = simplex[dim].clone();
        let centroid: Vec<f64> = (0..dim)
            .map(|i| simplex[..dim].iter().map(|(p, _)| p[i]).sum::<f64>() / dim as f64)
            .collect();
        let reflect: Vec<f64> = (0..dim)
            .map(|i| centroid[i] + (centroid[i] - worst.0[i]))
            .collect();
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let expand: Vec<f64> = (0..dim)
                .map(|i| centroid[i] + 2.0 * (centroid[i] - worst.0[i]))
                .collect();
            let fe = f(&expand);
            simplex[dim] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflect, fr);
        } else {
            let contract: Vec<f64> = (0..dim)
                .map(|i| centroid[i] + 0.5 * (worst.0[i] - centroid[i]))
                .collect();
            let fc = f(&contract);
            if fc < worst.1 {
                simplex[dim] = (contract, fc);
            } else {
                let best_p = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = (0..dim)
                        .map(|i| best_p[i] + 0.5 * (entry.0[i] - best_p[i]))
                        .collect();
                    let fv = f(&shrunk);
                    *entry = (shrunk, fv);
                }
            }
        }
        let spread = simplex
            .iter()
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max)
            - simplex
                .iter()
                .map(|(_, v)| *v)
                .fold(f64::INFINITY, f64::min);
        if spread.abs() < 1e-14 {
            break;
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].1, simplex[0].0.clone())
}

/// Generates the optimal homoscedastic, equally spaced entry for `(L,
/// lambda)` by a nested search: coarse scan plus golden-section on the mean
/// spacing, and an exact/golden/simplex search on the symmetric free
/// weights.
pub fn generate_entry(l: usize, lambda: f64) -> Result<UnivariateSplit> {
    if l < 2 {
        return Err(Error::InvariantViolation(
            "split size must be at least 2".into(),
        ));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvariantViolation(
            "lambda must be nonnegative".into(),
        ));
    }
    let outer = |eps: f64| inner_minimum(l, eps, lambda).0;
    let (eps, _) = scan_then_golden(outer, 0.01, 1.5, 150, 80);
    let (_, free) = inner_minimum(l, eps, lambda);
    let means = spaced_means(l, eps);
    let weights = expand_weights(l, &free)
        .ok_or_else(|| Error::Infeasible(format!("no positive-weight solution for L={l}")))?;
    let spread: f64 = weights.iter().zip(&means).map(|(w, m)| w * m * m).sum();
    if spread >= 1.0 {
        return Err(Error::Infeasible(format!(
            "mean-square spread {spread} >= 1 at the optimum"
        )));
    }
    let sigma = (1.0 - spread).sqrt();
    let mut entry = UnivariateSplit {
        weights,
        means,
        sigma,
        lambda,
        l2_error: 0.0,
    };
    entry.l2_error = l2_to_standard_normal(&entry);
    entry.validate()?;
    Ok(entry)
}

/// A set of generated entries keyed by `(L, lambda)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitLibrary {
    entries: Vec<UnivariateSplit>,
}

impl SplitLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    /// The library shipped by default: 3-way splits over a small lambda
    /// ladder. The experiments all use 3-way splits (depths 2..4 give 9,
    /// 27, 81 mixands).
    pub fn default_library() -> Result<Self> {
        let mut lib = Self::new();
        for lambda in [1e-4, 1e-3, 1e-2] {
            lib.insert(generate_entry(3, lambda)?);
        }
        Ok(lib)
    }

    pub fn insert(&mut self, entry: UnivariateSplit) {
        self.entries.push(entry);
        self.entries.sort_by(|a, b| {
            a.len()
                .cmp(&b.len())
                .then(a.lambda().total_cmp(&b.lambda()))
        });
    }

    pub fn entries(&self) -> &[UnivariateSplit] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact-size, approximate-lambda lookup (relative 1e-9 on lambda).
    pub fn get(&self, l: usize, lambda: f64) -> Option<&UnivariateSplit> {
        self.entries.iter().find(|e| {
            e.len() == l && (e.lambda() - lambda).abs() <= 1e-9 * lambda.abs().max(1e-300)
        })
    }

    pub fn save<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "gmsplit split library v1")?;
        writeln!(out, "entries {}", self.entries.len())?;
        for e in &self.entries {
            writeln!(out, "entry")?;
            writeln!(out, "L {}", e.len())?;
            writeln!(out, "lambda {}", fmt_f64(e.lambda()))?;
            let ws: Vec<String> = e.weights().iter().map(|&w| fmt_f64(w)).collect();
            writeln!(out, "weights {}", ws.join(" "))?;
            let ms: Vec<String> = e.means().iter().map(|&m| fmt_f64(m)).collect();
            writeln!(out, "means {}", ms.join(" "))?;
            writeln!(out, "sigma {}", fmt_f64(e.sigma()))?;
            writeln!(out, "l2_error {}", fmt_f64(e.l2_error()))?;
        }
        Ok(())
    }

    pub fn save_path(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.save(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = next(&mut lines)?;
        if header.trim() != "gmsplit split library v1" {
            return Err(Error::ParseError(format!("unexpected header {header:?}")));
        }
        let count: usize = kv(&next(&mut lines)?, "entries")?;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let marker = next(&mut lines)?;
            if marker.trim() != "entry" {
                return Err(Error::ParseError(format!(
                    "expected 'entry', got {marker:?}"
                )));
            }
            let l: usize = kv(&next(&mut lines)?, "L")?;
            let lambda: f64 = kv(&next(&mut lines)?, "lambda")?;
            let weights = row(&next(&mut lines)?, "weights", l)?;
            let means = row(&next(&mut lines)?, "means", l)?;
            let sigma: f64 = kv(&next(&mut lines)?, "sigma")?;
            let l2: f64 = kv(&next(&mut lines)?, "l2_error")?;
            entries.push(UnivariateSplit::new(weights, means, sigma, lambda, l2)?);
        }
        Ok(Self { entries })
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(file))
    }
}

fn next<I: Iterator<Item = std::io::Result<String>>>(lines: &mut I) -> Result<String> {
    match lines.next() {
        Some(Ok(line)) => Ok(line),
        Some(Err(e)) => Err(e.into()),
        None => Err(Error::ParseError("unexpected end of file".into())),
    }
}

fn kv<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    line.trim()
        .strip_prefix(key)
        .ok_or_else(|| Error::ParseError(format!("expected '{key} ...', got {line:?}")))?
        .trim()
        .parse()
        .map_err(|_| Error::ParseError(format!("bad value in {line:?}")))
}

fn row(line: &str, key: &str, len: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .trim()
        .strip_prefix(key)
        .ok_or_else(|| Error::ParseError(format!("expected '{key} ...', got {line:?}")))?
        .split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| Error::ParseError(format!("bad float {tok:?}")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != len {
        return Err(Error::ParseError(format!(
            "expected {len} values, got {}",
            vals.len()
        )));
    }
    Ok(vals)
}
