//! Command-line harness: split-library generation, scenario execution
//! across heuristics, metric tables, plot-data emission, and truth caching.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use gmsplit::error::{Error, Result};
use gmsplit::heuristics::{HeuristicKind, SutConfig};
use gmsplit::linalg::SpdMatrix;
use gmsplit::metrics::{self, MetricReport, Truth};
use gmsplit::mixture::{write_mixture, Gaussian, GaussianMixture};
use gmsplit::model::Model;
use gmsplit::scenarios::{
    mc_truth_samples, read_mc_cache, write_mc_cache, McSamples, PolarTruth, ScenarioSpec,
    TruthMode, TwoBodyTruth,
};
use gmsplit::split::{recursive_split, SplitCriterion};
use gmsplit::splitlib::{generate_entry, SplitLibrary, UnivariateSplit};

/// Which covariance induces the MaDEM norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MademCov {
    /// The approximation's own mixture covariance.
    #[default]
    Approx,
    /// First-order propagated covariance at the parent mean.
    Linear,
    /// Monte Carlo sample covariance.
    Mc,
}

impl MademCov {
    pub fn name(&self) -> &'static str {
        match self {
            MademCov::Approx => "approx",
            MademCov::Linear => "linear",
            MademCov::Mc => "mc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "approx" => Ok(MademCov::Approx),
            "linear" => Ok(MademCov::Linear),
            "mc" => Ok(MademCov::Mc),
            other => Err(Error::ParseError(format!("unknown madem-cov {other:?}"))),
        }
    }
}

/// How mixands are pushed through the map. Linearization is the benchmark
/// protocol; the unscented alternative is available but not part of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Propagation {
    #[default]
    Linear,
    Unscented,
}

impl Propagation {
    pub fn name(&self) -> &'static str {
        match self {
            Propagation::Linear => "linear",
            Propagation::Unscented => "ut",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(Propagation::Linear),
            "ut" => Ok(Propagation::Unscented),
            other => Err(Error::ParseError(format!("unknown propagation {other:?}"))),
        }
    }
}

/// Partial settings from one source (preset, flags, or config file).
/// Later sources override earlier ones field by field; the config file is
/// the strongest, then flags, then the preset.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub heuristics: Option<Vec<HeuristicKind>>,
    pub depth: Option<usize>,
    pub library: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub split_size: Option<usize>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub threshold: Option<f64>,
    pub madem_cov: Option<MademCov>,
    pub propagation: Option<Propagation>,
}

impl Overrides {
    /// Applies `stronger` on top of `self`.
    pub fn merged(mut self, stronger: Overrides) -> Overrides {
        macro_rules! take {
            ($field:ident) => {
                if stronger.$field.is_some() {
                    self.$field = stronger.$field;
                }
            };
        }
        take!(scenario);
        take!(heuristics);
        take!(depth);
        take!(library);
        take!(lambda);
        take!(split_size);
        take!(mc_samples);
        take!(seed);
        take!(out);
        take!(gamma);
        take!(threshold);
        take!(madem_cov);
        take!(propagation);
        self
    }
}

pub fn parse_heuristics(s: &str) -> Result<Vec<HeuristicKind>> {
    if s.trim() == "all" {
        return Ok(HeuristicKind::ALL.to_vec());
    }
    s.split(',').map(|tok| tok.parse()).collect()
}

/// Parses a `key = value` config file (# comments allowed).
pub fn parse_config_file(path: &Path) -> Result<Overrides> {
    let text = std::fs::read_to_string(path)?;
    let mut o = Overrides::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::ParseError(format!("line {}: expected key = value", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad =
            |what: &str| Error::ParseError(format!("line {}: bad {what} {value:?}", lineno + 1));
        match key {
            "scenario" => o.scenario = Some(value.to_string()),
            "heuristics" => o.heuristics = Some(parse_heuristics(value)?),
            "depth" => o.depth = Some(value.parse().map_err(|_| bad("depth"))?),
            "library" => o.library = Some(PathBuf::from(value)),
            "lambda" => o.lambda = Some(value.parse().map_err(|_| bad("lambda"))?),
            "split-size" => o.split_size = Some(value.parse().map_err(|_| bad("split-size"))?),
            "mc-samples" => o.mc_samples = Some(value.parse().map_err(|_| bad("mc-samples"))?),
            "seed" => o.seed = Some(value.parse().map_err(|_| bad("seed"))?),
            "out" => o.out = Some(PathBuf::from(value)),
            "gamma" => o.gamma = Some(value.parse().map_err(|_| bad("gamma"))?),
            "threshold" => o.threshold = Some(value.parse().map_err(|_| bad("threshold"))?),
            "madem-cov" => o.madem_cov = Some(MademCov::parse(value)?),
            "propagation" => o.propagation = Some(Propagation::parse(value)?),
            other => {
                return Err(Error::ParseError(format!(
                    "line {}: unknown key {other:?}",
                    lineno + 1
                )))
            }
        }
    }
    Ok(o)
}

/// A fully resolved execution configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: ScenarioSpec,
    pub heuristics: Vec<HeuristicKind>,
    pub library: Option<PathBuf>,
    pub lambda: f64,
    pub split_size: usize,
    pub out: PathBuf,
    pub gamma: f64,
    pub threshold: f64,
    pub madem_cov: MademCov,
    pub propagation: Propagation,
}

impl RunConfig {
    /// Resolves preset -> flags -> config file (strongest last).
    pub fn resolve(flags: Overrides, config_file: Option<&Path>) -> Result<RunConfig> {
        let mut merged = flags;
        if let Some(path) = config_file {
            merged = merged.merged(parse_config_file(path)?);
        }
        let scenario = merged
            .scenario
            .clone()
            .ok_or_else(|| Error::ParseError("no scenario selected".into()))?;
        let mut spec = ScenarioSpec::preset(&scenario)?;
        if let Some(d) = merged.depth {
            spec.depth = d;
        }
        if let Some(n) = merged.mc_samples {
            spec.samples = n;
        }
        if let Some(s) = merged.seed {
            spec.seed = s;
        }
        Ok(RunConfig {
            spec,
            heuristics: merged
                .heuristics
                .unwrap_or_else(|| HeuristicKind::ALL.to_vec()),
            library: merged.library,
            lambda: merged.lambda.unwrap_or(1e-3),
            split_size: merged.split_size.unwrap_or(3),
            out: merged.out.unwrap_or_else(|| PathBuf::from("out")),
            gamma: merged.gamma.unwrap_or(0.5),
            threshold: merged.threshold.unwrap_or(0.0),
            madem_cov: merged.madem_cov.unwrap_or_default(),
            propagation: merged.propagation.unwrap_or_default(),
        })
    }

    /// Canonical text of everything that affects outputs.
    pub fn canonical_string(&self) -> String {
        let mut s = self.spec.canonical_string();
        let names: Vec<&str> = self.heuristics.iter().map(|h| h.name()).collect();
        s.push_str(&format!("heuristics {}\n", names.join(",")));
        s.push_str(&format!("lambda {:e}\n", self.lambda));
        s.push_str(&format!("split_size {}\n", self.split_size));
        s.push_str(&format!("gamma {:e}\n", self.gamma));
        s.push_str(&format!("threshold {:e}\n", self.threshold));
        s.push_str(&format!("madem_cov {}\n", self.madem_cov.name()));
        s.push_str(&format!("propagation {}\n", self.propagation.name()));
        s
    }

    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_string().as_bytes());
        hasher
            .finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn load_library(&self) -> Result<SplitLibrary> {
        match &self.library {
            Some(path) => SplitLibrary::load_path(path),
            None => SplitLibrary::default_library(),
        }
    }
}

/// Generates library entries for every (size, lambda) pair and writes the
/// library file. Deterministic: a rerun produces identical bytes.
pub fn cmd_gen_library(sizes: &[usize], lambdas: &[f64], out: &Path) -> Result<()> {
    let mut lib = SplitLibrary::new();
    for &l in sizes {
        for &lambda in lambdas {
            lib.insert(generate_entry(l, lambda)?);
        }
    }
    lib.save_path(out)?;
    Ok(())
}

/// Outcome of `cmd_truth`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TruthOutcome {
    AnalyticMarker(PathBuf),
    Generated {
        cache: PathBuf,
        rows: usize,
        failed: usize,
    },
    Reused {
        cache: PathBuf,
        rows: usize,
    },
}

/// Ensures the truth artifacts for a configuration exist: a marker file
/// for analytic scenarios, a sample cache for Monte Carlo scenarios
/// (reused when the spec hash matches).
pub fn cmd_truth(cfg: &RunConfig) -> Result<TruthOutcome> {
    std::fs::create_dir_all(&cfg.out)?;
    match cfg.spec.truth {
        TruthMode::Analytic => {
            let marker = cfg.out.join("truth_analytic.marker");
            std::fs::write(
                &marker,
                format!("analytic {} {}\n", cfg.spec.name, cfg.spec.hash()),
            )?;
            Ok(TruthOutcome::AnalyticMarker(marker))
        }
        TruthMode::MonteCarlo => {
            let cache = cfg.out.join(format!("truth_{}.f64", cfg.spec.hash()));
            if cache.exists() {
                if let Ok(samples) = read_mc_cache(&cache, &cfg.spec) {
                    return Ok(TruthOutcome::Reused {
                        cache,
                        rows: samples.data.nrows(),
                    });
                }
            }
            let model = cfg.spec.model()?;
            let samples = mc_truth_samples(&cfg.spec, &model)?;
            write_mc_cache(&cache, &cfg.spec, &samples)?;
            Ok(TruthOutcome::Generated {
                cache,
                rows: samples.data.nrows(),
                failed: samples.failed,
            })
        }
    }
}

/// Per-heuristic result of a run.
#[derive(Debug, Clone)]
pub enum HeuristicOutcome {
    Done(MetricReport),
    Failed { heuristic: String, error: String },
}

#[derive(Debug)]
pub struct RunSummary {
    pub outcomes: Vec<HeuristicOutcome>,
    pub csv_path: PathBuf,
    pub config_hash: String,
}

impl RunSummary {
    pub fn any_failed(&self) -> bool {
        self.outcomes
            .iter()
            .any(|o| matches!(o, HeuristicOutcome::Failed { .. }))
    }
}

/// Split mixture, propagated mixture, and metric row of one heuristic.
pub type HeuristicRun = (GaussianMixture, GaussianMixture, MetricReport);

/// Splits, propagates, and scores one heuristic. Exposed for the test
/// suites; `cmd_run` drives it across the configured heuristic list.
pub fn run_heuristic(
    cfg: &RunConfig,
    kind: HeuristicKind,
    model: &dyn Model,
    entry: &UnivariateSplit,
    truth: Option<&McSamples>,
) -> Result<HeuristicRun> {
    let input = cfg.spec.input_gaussian()?;
    let criterion = SplitCriterion::new(cfg.gamma, cfg.threshold, cfg.spec.depth)?;
    let sut = SutConfig::default();
    let split = recursive_split(
        &GaussianMixture::single(input.clone()),
        model,
        kind,
        &criterion,
        entry,
        Some(&sut),
    )?;
    let propagated = propagate_mixture(&split, model, cfg.propagation, &sut)?;

    let mut report = MetricReport {
        scenario: cfg.spec.name.clone(),
        heuristic: kind.name().to_string(),
        ..Default::default()
    };
    match cfg.spec.truth {
        TruthMode::Analytic => {
            report.nise = Some(metrics::nise(
                &propagated,
                &Truth::Pushforward {
                    model,
                    input: &input,
                },
            )?);
        }
        TruthMode::MonteCarlo => {
            let samples = truth.ok_or_else(|| {
                Error::InvariantViolation("monte-carlo scenario without a sample set".into())
            })?;
            report.sample_count = samples.data.nrows();
            report.elk = Some(metrics::elk(&propagated, &samples.data)?);
            report.cvm_norm = Some(metrics::cvm_norm(&propagated, &samples.data)?);
            let (approx_mean, approx_cov) = propagated.moments();
            let (mc_mean, mc_cov) = sample_moments(&samples.data);
            let norm_cov = match cfg.madem_cov {
                MademCov::Approx => approx_cov.clone(),
                MademCov::Linear => {
                    let d = model.derivatives(input.mean(), false)?;
                    SpdMatrix::new_psd(
                        &d.jacobian * input.cov().as_matrix() * d.jacobian.transpose(),
                    )?
                }
                MademCov::Mc => mc_cov.clone(),
            };
            report.madem = Some(metrics::madem(&approx_mean, &mc_mean, &norm_cov)?);
            report.mcr = Some(metrics::mcr(&approx_cov, &mc_cov)?);
        }
    }
    Ok((split, propagated, report))
}

/// Full scenario execution: writes mixtures, plot data, the metric CSV,
/// and the resolved configuration. Heuristics run concurrently; outputs
/// and row order follow the configured heuristic order. A per-heuristic
/// failure becomes an error row without aborting the rest.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    std::fs::create_dir_all(&cfg.out)?;
    let model = cfg.spec.model()?;
    let library = cfg.load_library()?;
    let entry = library
        .get(cfg.split_size, cfg.lambda)
        .ok_or_else(|| {
            Error::ParseError(format!(
                "library has no entry for L={} lambda={:e}",
                cfg.split_size, cfg.lambda
            ))
        })?
        .clone();
    let truth = match cfg.spec.truth {
        TruthMode::Analytic => None,
        TruthMode::MonteCarlo => {
            let outcome = cmd_truth(cfg)?;
            let cache = match &outcome {
                TruthOutcome::Generated { cache, .. } | TruthOutcome::Reused { cache, .. } => cache,
                TruthOutcome::AnalyticMarker(_) => unreachable!("monte-carlo branch"),
            };
            Some(read_mc_cache(cache, &cfg.spec)?)
        }
    };

    use rayon::prelude::*;
    let results: Vec<std::result::Result<HeuristicRun, String>> = cfg
        .heuristics
        .par_iter()
        .map(|&kind| {
            run_heuristic(cfg, kind, &model, &entry, truth.as_ref()).map_err(|e| e.to_string())
        })
        .collect();

    let mut outcomes = Vec::with_capacity(results.len());
    for (kind, result) in cfg.heuristics.iter().zip(results) {
        match result {
            Ok((split, propagated, report)) => {
                write_mixture_file(&cfg.out.join(format!("split_{kind}.txt")), &split)?;
                write_mixture_file(&cfg.out.join(format!("propagated_{kind}.txt")), &propagated)?;
                write_plot_data(&cfg.out, kind.name(), &propagated)?;
                outcomes.push(HeuristicOutcome::Done(report));
            }
            Err(error) => outcomes.push(HeuristicOutcome::Failed {
                heuristic: kind.name().to_string(),
                error,
            }),
        }
    }

    write_truth_plot(cfg, &model, truth.as_ref())?;

    let csv_path = cfg.out.join("metrics.csv");
    let csv = render_csv(cfg.spec.truth, &outcomes);
    std::fs::write(&csv_path, csv)?;

    let config_hash = cfg.hash();
    let mut config_txt = cfg.canonical_string();
    config_txt.push_str(&format!("hash {config_hash}\n"));
    std::fs::write(cfg.out.join("config.txt"), config_txt)?;

    Ok(RunSummary {
        outcomes,
        csv_path,
        config_hash,
    })
}

/// Metric table with the exact column layout of the results tables:
/// `method,NISE` for analytic truths, `method,ELK,MaDEM,MCR,CvMnorm`
/// otherwise.
pub fn render_csv(truth: TruthMode, outcomes: &[HeuristicOutcome]) -> String {
    let mut s = String::new();
    match truth {
        TruthMode::Analytic => {
            s.push_str("method,NISE\n");
            for o in outcomes {
                match o {
                    HeuristicOutcome::Done(r) => {
                        s.push_str(&format!("{},{}\n", r.heuristic, fmt_metric(r.nise)));
                    }
                    HeuristicOutcome::Failed { heuristic, .. } => {
                        s.push_str(&format!("{heuristic},ERROR\n"));
                    }
                }
            }
        }
        TruthMode::MonteCarlo => {
            s.push_str("method,ELK,MaDEM,MCR,CvMnorm\n");
            for o in outcomes {
                match o {
                    HeuristicOutcome::Done(r) => {
                        s.push_str(&format!(
                            "{},{},{},{},{}\n",
                            r.heuristic,
                            fmt_metric(r.elk),
                            fmt_metric(r.madem),
                            fmt_metric(r.mcr),
                            fmt_metric(r.cvm_norm)
                        ));
                    }
                    HeuristicOutcome::Failed { heuristic, .. } => {
                        s.push_str(&format!("{heuristic},ERROR,ERROR,ERROR,ERROR\n"));
                    }
                }
            }
        }
    }
    s
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.6e}"),
        None => "ERROR".into(),
    }
}

/// Joins several metric CSVs on the method column; value columns get the
/// source file stem as a prefix. Row order follows the first file.
pub fn cmd_compare(inputs: &[PathBuf], out: &Path) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::ParseError(
            "compare needs at least one input CSV".into(),
        ));
    }
    let mut tables = Vec::new();
    for path in inputs {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::ParseError(format!("{path:?} is empty")))?
            .split(',')
            .map(str::to_string)
            .collect();
        if header.first().map(String::as_str) != Some("method") {
            return Err(Error::ParseError(format!("{path:?} lacks a method column")));
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("table")
            .to_string();
        let mut rows = Vec::new();
        for line in lines {
            let cells: Vec<String> = line.split(',').map(str::to_string).collect();
            if cells.len() != header.len() {
                return Err(Error::ParseError(format!(
                    "ragged row in {path:?}: {line:?}"
                )));
            }
            rows.push(cells);
        }
        tables.push((stem, header, rows));
    }

    let mut header = vec!["method".to_string()];
    for (stem, cols, _) in &tables {
        for col in &cols[1..] {
            header.push(format!("{stem}.{col}"));
        }
    }
    let mut out_rows = Vec::new();
    for row in &tables[0].2 {
        let method = &row[0];
        let mut cells = vec![method.clone()];
        for (_, cols, rows) in &tables {
            match rows.iter().find(|r| &r[0] == method) {
                Some(r) => cells.extend(r[1..].iter().cloned()),
                None => cells.extend(std::iter::repeat_n("MISSING".to_string(), cols.len() - 1)),
            }
        }
        out_rows.push(cells.join(","));
    }
    let mut text = header.join(",");
    text.push('\n');
    for row in out_rows {
        text.push_str(&row);
        text.push('\n');
    }
    std::fs::write(out, text)?;
    Ok(())
}

/// Linearized (or unscented) pushforward of every mixand.
pub fn propagate_mixture(
    gm: &GaussianMixture,
    model: &dyn Model,
    propagation: Propagation,
    sut: &SutConfig,
) -> Result<GaussianMixture> {
    use rayon::prelude::*;
    let comps: Vec<(f64, Gaussian)> = gm
        .components()
        .par_iter()
        .map(|(w, g)| {
            let mapped = match propagation {
                Propagation::Linear => {
                    let d = model.derivatives(g.mean(), false)?;
                    let cov = &d.jacobian * g.cov().as_matrix() * d.jacobian.transpose();
                    Gaussian::new(d.value, SpdMatrix::new_psd(cov)?)?
                }
                Propagation::Unscented => {
                    let sp = gmsplit::heuristics::sut_sigma_points(g, sut)?;
                    let z: Vec<DVector<f64>> = sp
                        .points
                        .iter()
                        .map(|p| model.value(p))
                        .collect::<Result<_>>()?;
                    let m = model.output_dim();
                    let mut mean = DVector::zeros(m);
                    for (wm, zi) in sp.mean_weights.iter().zip(&z) {
                        mean += *wm * zi;
                    }
                    let mut cov = DMatrix::zeros(m, m);
                    for (wc, zi) in sp.cov_weights.iter().zip(&z) {
                        let d = zi - &mean;
                        cov += *wc * &d * d.transpose();
                    }
                    Gaussian::new(mean, SpdMatrix::new_psd_tol(cov, 1e-9)?)?
                }
            };
            Ok((*w, mapped))
        })
        .collect::<Result<_>>()?;
    GaussianMixture::new(comps)
}

type DensityFn = Box<dyn Fn(&DVector<f64>) -> f64>;

fn sample_moments(data: &DMatrix<f64>) -> (DVector<f64>, SpdMatrix) {
    let n = data.nrows() as f64;
    let mean = data.row_sum().transpose() / n;
    let mut cov = DMatrix::zeros(data.ncols(), data.ncols());
    for i in 0..data.nrows() {
        let d = data.row(i).transpose() - &mean;
        cov += &d * d.transpose();
    }
    cov /= n - 1.0;
    (
        mean,
        SpdMatrix::new_psd(cov).expect("sample covariance is PSD"),
    )
}

fn write_mixture_file(path: &Path, gm: &GaussianMixture) -> Result<()> {
    let mut buf = Vec::new();
    write_mixture(&mut buf, gm)?;
    std::fs::write(path, buf)?;
    Ok(())
}

const PLOT_GRID: usize = 100;

/// Gridded pdf of the (0,1) marginal plus mixand-mean markers, as plain
/// tabular text consumable by any plotting tool.
fn write_plot_data(out: &Path, name: &str, propagated: &GaussianMixture) -> Result<()> {
    let marginal = propagated.marginal(&[0, 1])?;
    let (mean, cov) = marginal.moments();
    let sx = 4.0 * cov.as_matrix()[(0, 0)].max(0.0).sqrt();
    let sy = 4.0 * cov.as_matrix()[(1, 1)].max(0.0).sqrt();
    let mut pdf = String::new();
    pdf.push_str("# x y pdf\n");
    for i in 0..PLOT_GRID {
        let x = mean[0] - sx + 2.0 * sx * i as f64 / (PLOT_GRID - 1) as f64;
        for j in 0..PLOT_GRID {
            let y = mean[1] - sy + 2.0 * sy * j as f64 / (PLOT_GRID - 1) as f64;
            let v = marginal.pdf(&DVector::from_vec(vec![x, y])).unwrap_or(0.0);
            pdf.push_str(&format!("{x:.9e} {y:.9e} {v:.9e}\n"));
        }
        pdf.push('\n');
    }
    std::fs::write(out.join(format!("pdf_{name}.dat")), pdf)?;

    let mut means = String::new();
    means.push_str("# x y weight\n");
    for (w, g) in propagated.components() {
        means.push_str(&format!(
            "{:.9e} {:.9e} {:.9e}\n",
            g.mean()[0],
            g.mean()[1],
            w
        ));
    }
    std::fs::write(out.join(format!("means_{name}.dat")), means)?;
    Ok(())
}

/// Truth plot data: the analytic density on a grid, or a 2-d histogram of
/// the Monte Carlo cloud's (0,1) marginal.
fn write_truth_plot(cfg: &RunConfig, model: &dyn Model, truth: Option<&McSamples>) -> Result<()> {
    let mut text = String::new();
    match cfg.spec.truth {
        TruthMode::Analytic => {
            let input = cfg.spec.input_gaussian()?;
            // Grid over the image of the input mean +/- 4 sigma, evaluated
            // through the scenario's closed-form density.
            let pdf: DensityFn = match cfg.spec.name.as_str() {
                "polar" => {
                    let truth = PolarTruth::new(input.clone())?;
                    Box::new(move |z| truth.pdf(z))
                }
                "twobody" => {
                    let truth = TwoBodyTruth {
                        mean_a: cfg.spec.mean[0],
                        mean_m: cfg.spec.mean[1],
                        sigma_a: cfg.spec.cov.as_matrix()[(0, 0)].sqrt(),
                        sigma_m: cfg.spec.cov.as_matrix()[(1, 1)].sqrt(),
                        grav_param: cfg.spec.grav_param,
                        tof: cfg.spec.tof,
                    };
                    Box::new(move |z| truth.pdf(z))
                }
                other => {
                    return Err(Error::ParseError(format!(
                        "no analytic truth for scenario {other:?}"
                    )))
                }
            };
            // Use the propagated cloud of sigma-ish probe points to size
            // the grid: image of the input 4-sigma box corners and mean.
            let mut zs = Vec::new();
            let (vals, vecs) = gmsplit::linalg::sym_eig_descending(input.cov().as_matrix());
            for i in 0..input.dim() {
                for s in [-4.0, -2.0, 0.0, 2.0, 4.0] {
                    let x = input.mean() + s * vals[i].max(0.0).sqrt() * vecs.column(i);
                    if let Ok(z) = model.value(&x) {
                        zs.push(z);
                    }
                }
            }
            let (mut x0, mut x1, mut y0, mut y1) = (
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
            );
            for z in &zs {
                x0 = x0.min(z[0]);
                x1 = x1.max(z[0]);
                y0 = y0.min(z[1]);
                y1 = y1.max(z[1]);
            }
            let (px, py) = (0.1 * (x1 - x0).max(1e-12), 0.1 * (y1 - y0).max(1e-12));
            text.push_str("# x y pdf\n");
            for i in 0..PLOT_GRID {
                let x = x0 - px + (x1 - x0 + 2.0 * px) * i as f64 / (PLOT_GRID - 1) as f64;
                for j in 0..PLOT_GRID {
                    let y = y0 - py + (y1 - y0 + 2.0 * py) * j as f64 / (PLOT_GRID - 1) as f64;
                    let v = pdf(&DVector::from_vec(vec![x, y]));
                    text.push_str(&format!("{x:.9e} {y:.9e} {v:.9e}\n"));
                }
                text.push('\n');
            }
        }
        TruthMode::MonteCarlo => {
            let samples = match truth {
                Some(s) if s.data.nrows() > 0 => s,
                _ => return Ok(()),
            };
            let (mut x0, mut x1, mut y0, mut y1) = (
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
            );
            for i in 0..samples.data.nrows() {
                x0 = x0.min(samples.data[(i, 0)]);
                x1 = x1.max(samples.data[(i, 0)]);
                y0 = y0.min(samples.data[(i, 1)]);
                y1 = y1.max(samples.data[(i, 1)]);
            }
            let bins = 100usize;
            let mut hist = vec![0u64; bins * bins];
            for i in 0..samples.data.nrows() {
                let bx = (((samples.data[(i, 0)] - x0) / (x1 - x0)) * bins as f64)
                    .clamp(0.0, bins as f64 - 1.0) as usize;
                let by = (((samples.data[(i, 1)] - y0) / (y1 - y0)) * bins as f64)
                    .clamp(0.0, bins as f64 - 1.0) as usize;
                hist[bx * bins + by] += 1;
            }
            let cell = ((x1 - x0) / bins as f64) * ((y1 - y0) / bins as f64);
            let norm = 1.0 / (samples.data.nrows() as f64 * cell);
            text.push_str("# x y density\n");
            for i in 0..bins {
                let x = x0 + (x1 - x0) * (i as f64 + 0.5) / bins as f64;
                for j in 0..bins {
                    let y = y0 + (y1 - y0) * (j as f64 + 0.5) / bins as f64;
                    let v = hist[i * bins + j] as f64 * norm;
                    text.push_str(&format!("{x:.9e} {y:.9e} {v:.9e}\n"));
                }
                text.push('\n');
            }
        }
    }
    std::fs::write(cfg.out.join("truth_pdf.dat"), text)?;
    Ok(())
}

/// Pretty-prints a run summary to the given writer (stdout in the CLI).
pub fn print_summary<W: std::io::Write>(w: &mut W, summary: &RunSummary) -> Result<()> {
    writeln!(w, "config hash {}", summary.config_hash)?;
    for outcome in &summary.outcomes {
        match outcome {
            HeuristicOutcome::Done(r) => {
                let mut parts = vec![r.heuristic.clone()];
                if let Some(v) = r.nise {
                    parts.push(format!("NISE={v:.6e}"));
                }
                if let Some(v) = r.elk {
                    parts.push(format!("ELK={v:.6e}"));
                }
                if let Some(v) = r.madem {
                    parts.push(format!("MaDEM={v:.6e}"));
                }
                if let Some(v) = r.mcr {
                    parts.push(format!("MCR={v:.6e}"));
                }
                if let Some(v) = r.cvm_norm {
                    parts.push(format!("CvMnorm={v:.6e}"));
                }
                writeln!(w, "  {}", parts.join("  "))?;
            }
            HeuristicOutcome::Failed { heuristic, error } => {
                writeln!(w, "  {heuristic}  FAILED: {error}")?;
            }
        }
    }
    writeln!(w, "wrote {}", summary.csv_path.display())?;
    Ok(())
}
