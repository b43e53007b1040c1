//! Monte-Carlo evaluation: timing-error-probability sweeps over SNR, path
//! count and profile decay, baseline comparisons, complexity accounting and
//! result export.
//!
//! A trial counts as an error when the estimated timing point differs from
//! the true first-path training start. Per-trial seeds derive from (seed,
//! grid point, trial index), so sweep results are identical for any worker
//! count; the exported CSVs are byte-stable.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, draw_channel, ChannelSpec};
use crate::error::{Error, Result};
use crate::frame::{build_frame, generate_data_symbols, generate_zc, ComplexSequence, FrameSpec};
use crate::nn::{argmax_ties_first, NetworkDims, NetworkModel};
use crate::pipeline::{extract_observation, realify};
use crate::rng::{derive_seed, seeded_rng, stream};
use crate::sync::{
    acquire_initial, cross_correlate, strongest_path_baseline, threshold_first_path_baseline,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Coarse acquisition plus network refinement.
    Proposed,
    /// Coarse correlation peak taken directly as the timing point.
    StrongestPath,
    /// First in-window crossing of an alpha-scaled peak threshold.
    Threshold,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::StrongestPath => "strongest_path",
            Method::Threshold => "threshold",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "strongest_path" => Ok(Method::StrongestPath),
            "threshold" => Ok(Method::Threshold),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected proposed, strongest_path or threshold)"
            ))),
        }
    }
}

/// Full factorial sweep description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub snr_points_db: Vec<f64>,
    pub l_values: Vec<usize>,
    pub eta_values: Vec<f64>,
    pub trials_per_point: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub frame: FrameSpec,
    pub tau_max: usize,
    /// Threshold-baseline crossing factor.
    pub alpha: f64,
    /// Secondary error criterion: an estimate early by at most this many
    /// samples (and never late) still counts as synchronized.
    pub tolerance: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        if self.trials_per_point == 0 {
            return Err(Error::Config("trials_per_point must be at least 1".into()));
        }
        if self.snr_points_db.is_empty() || self.l_values.is_empty() || self.eta_values.is_empty()
        {
            return Err(Error::Config("sweep grids must be non-empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method must be selected".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        for &l in &self.l_values {
            ChannelSpec::new(l, self.eta_values[0], 0.0, self.tau_max)?
                .validate_with(&self.frame)?;
        }
        Ok(())
    }
}

/// Outcome of one method on one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub method: Method,
    pub tau_hat: i64,
    /// Exact mismatch with the true first-path training start.
    pub error: bool,
    /// Mismatch under the early-by-at-most-`tolerance` criterion.
    pub error_tol: bool,
}

/// Fixed per-trial context shared across the sweep.
pub struct TrialContext<'a> {
    pub frame: &'a FrameSpec,
    pub channel: &'a ChannelSpec,
    pub zc: &'a ComplexSequence,
    pub model: Option<&'a NetworkModel>,
    pub methods: &'a [Method],
    pub alpha: f64,
    pub tolerance: usize,
}

fn judge(tau_hat: i64, true_ts: i64, tolerance: usize) -> (bool, bool) {
    let exact = tau_hat != true_ts;
    let tol = tau_hat > true_ts || tau_hat < true_ts - tolerance as i64;
    (exact, tol)
}

/// Synthesize one frame/channel/noise realization and run every requested
/// method on it. Returns one outcome per method plus the per-method time
/// spent estimating (coarse stage attributed to every method).
pub fn run_trial<R: rand::Rng>(
    ctx: &TrialContext<'_>,
    rng: &mut R,
) -> Result<(Vec<TrialOutcome>, Vec<Duration>)> {
    let real = draw_channel(ctx.channel, rng);
    let data = generate_data_symbols(ctx.frame, rng)?;
    let frame = build_frame(ctx.frame, ctx.zc, &data)?;
    let y = apply_channel(&frame, &real, ctx.frame, rng)?;
    let true_ts = (ctx.frame.ng + real.tau) as i64;

    let coarse_start = Instant::now();
    let metric = cross_correlate(&y, ctx.zc, ctx.frame.nlag)?;
    let est = acquire_initial(&metric, ctx.frame)?;
    let coarse_elapsed = coarse_start.elapsed();

    let mut outcomes = Vec::with_capacity(ctx.methods.len());
    let mut times = Vec::with_capacity(ctx.methods.len());
    for &method in ctx.methods {
        let start = Instant::now();
        let tau_hat = match method {
            Method::Proposed => {
                let model = ctx.model.ok_or_else(|| {
                    Error::Config("the proposed method needs a trained model".into())
                })?;
                let obs = extract_observation(&y, est.tau_init, ctx.frame)?;
                let features = realify(&obs);
                let out = model.infer(&features)?;
                let tau_r = argmax_ties_first(&out);
                let tau_hat = est.tau_init as i64 - tau_r as i64;
                debug_assert!(
                    tau_hat <= est.tau_init as i64
                        && tau_hat >= est.tau_init as i64 - (ctx.frame.ng as i64 - 1)
                );
                tau_hat
            }
            Method::StrongestPath => strongest_path_baseline(&metric) as i64,
            Method::Threshold => {
                threshold_first_path_baseline(&metric, &est, ctx.alpha) as i64
            }
        };
        let (error, error_tol) = judge(tau_hat, true_ts, ctx.tolerance);
        outcomes.push(TrialOutcome { method, tau_hat, error, error_tol });
        times.push(coarse_elapsed + start.elapsed());
    }
    Ok((outcomes, times))
}

/// Aggregated result for one (method, snr, l, eta) grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub method: Method,
    pub snr_db: f64,
    pub l: usize,
    pub eta: f64,
    pub trials: u64,
    pub errors: u64,
    pub errors_tol: u64,
}

impl PointResult {
    pub fn error_prob(&self) -> f64 {
        self.errors as f64 / self.trials as f64
    }

    pub fn error_prob_tol(&self) -> f64 {
        self.errors_tol as f64 / self.trials as f64
    }

    /// Binomial standard error of the error probability.
    pub fn std_error(&self) -> f64 {
        let p = self.error_prob();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: Method,
    pub total_seconds: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Grid points in (l, eta, snr) x method order.
    pub points: Vec<PointResult>,
    /// Accumulated estimation time per method (sum over workers).
    pub timing: Vec<MethodTiming>,
}

impl SweepResult {
    pub fn find(&self, method: Method, snr_db: f64, l: usize, eta: f64) -> Option<&PointResult> {
        self.points.iter().find(|p| {
            p.method == method && p.snr_db == snr_db && p.l == l && p.eta == eta
        })
    }
}

/// Run the full factorial sweep. Error counts are summed order-independently
/// so any rayon worker count yields identical results.
pub fn sweep(spec: &SweepSpec, model: Option<&NetworkModel>) -> Result<SweepResult> {
    spec.validate()?;
    if spec.methods.contains(&Method::Proposed) && model.is_none() {
        return Err(Error::Config(
            "sweep requests the proposed method but no model was supplied".into(),
        ));
    }
    let zc = generate_zc(&spec.frame)?;
    let n_methods = spec.methods.len();
    let mut points = Vec::new();
    let time_nanos: Vec<AtomicU64> = (0..n_methods).map(|_| AtomicU64::new(0)).collect();
    let mut trials_total = 0u64;

    let mut point_index = 0u64;
    for &l in &spec.l_values {
        for &eta in &spec.eta_values {
            for &snr_db in &spec.snr_points_db {
                let channel = ChannelSpec { l, eta, snr_db, tau_max: spec.tau_max };
                channel.validate_with(&spec.frame)?;
                let ctx = TrialContext {
                    frame: &spec.frame,
                    channel: &channel,
                    zc: &zc,
                    model,
                    methods: &spec.methods,
                    alpha: spec.alpha,
                    tolerance: spec.tolerance,
                };
                let counts = (0..spec.trials_per_point as u64)
                    .into_par_iter()
                    .map(|trial| -> Result<Vec<(u64, u64)>> {
                        let seed =
                            derive_seed(spec.seed, &[stream::SWEEP, point_index, trial]);
                        let mut rng = seeded_rng(seed);
                        let (outcomes, times) = run_trial(&ctx, &mut rng)?;
                        for (t, counter) in times.iter().zip(&time_nanos) {
                            counter.fetch_add(t.as_nanos() as u64, Ordering::Relaxed);
                        }
                        Ok(outcomes
                            .iter()
                            .map(|o| (o.error as u64, o.error_tol as u64))
                            .collect())
                    })
                    .try_reduce(
                        || vec![(0u64, 0u64); n_methods],
                        |mut acc, item| {
                            for (a, b) in acc.iter_mut().zip(item) {
                                a.0 += b.0;
                                a.1 += b.1;
                            }
                            Ok(acc)
                        },
                    )?;
                for (&method, &(errors, errors_tol)) in spec.methods.iter().zip(&counts) {
                    points.push(PointResult {
                        method,
                        snr_db,
                        l,
                        eta,
                        trials: spec.trials_per_point as u64,
                        errors,
                        errors_tol,
                    });
                }
                trials_total += spec.trials_per_point as u64;
                point_index += 1;
            }
        }
    }

    let timing = spec
        .methods
        .iter()
        .zip(&time_nanos)
        .map(|(&method, nanos)| MethodTiming {
            method,
            total_seconds: nanos.load(Ordering::Relaxed) as f64 * 1e-9,
            trials: trials_total,
        })
        .collect();

    Ok(SweepResult { spec: spec.clone(), points, timing })
}

/// Per-layer multiplication counts entering the complexity expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub n: usize,
    pub ng: usize,
    pub nlag: usize,
    /// nlag * n, the coarse-stage count by formula.
    pub coarse_formula: u64,
    /// Complex multiplications counted while running the coarse stage once.
    pub coarse_instrumented: u64,
    /// K_l * N_l * C_{l-1} * C_l per convolution layer.
    pub conv_terms: Vec<u64>,
    /// N_{l-1} * N_l per dense layer.
    pub dense_terms: Vec<u64>,
    /// coarse_formula + (sum of network terms) / 4.
    pub total: f64,
}

/// Network multiplication terms for the refinement architecture.
pub fn network_complexity_terms(dims: &NetworkDims) -> (Vec<u64>, Vec<u64>) {
    let conv = vec![
        (dims.conv1_kernel() * dims.conv1_out_len() * 1 * crate::nn::CHANNELS) as u64,
        (dims.conv2_kernel() * dims.conv2_out_len() * crate::nn::CHANNELS * crate::nn::CHANNELS)
            as u64,
    ];
    let dense = vec![(dims.flatten_len() * dims.output_len()) as u64];
    (conv, dense)
}

/// The method's complexity expression: nlag*n + (sum conv + sum dense) / 4.
/// The quarter factor reflects the four real multiplications per complex
/// multiplication; network arithmetic is real.
pub fn proposed_complexity_expression(
    nlag: usize,
    n: usize,
    conv_terms: &[u64],
    dense_terms: &[u64],
) -> f64 {
    let network: u64 = conv_terms.iter().chain(dense_terms).sum();
    (nlag * n) as f64 + network as f64 / 4.0
}

/// Published reference evaluation of the complexity expression, kept for
/// comparison in reports. Transcribed, not produced by this build; direct
/// evaluation of the expression at these parameters gives 44288.
pub const COMPLEXITY_REFERENCE: (usize, usize, usize, f64) = (180, 128, 32, 44544.0);

/// Evaluate the complexity expression with this build's dimensions and
/// instrument an actual coarse pass for the executed multiplication count.
pub fn complexity_report(frame: &FrameSpec, dims: &NetworkDims) -> Result<ComplexityReport> {
    frame.validate()?;
    let mut rng = seeded_rng(derive_seed(frame.rng_seed, &[stream::COMPLEXITY]));
    let zc = generate_zc(frame)?;
    let cspec = ChannelSpec { l: 1, eta: 0.2, snr_db: 10.0, tau_max: 0 };
    let real = draw_channel(&cspec, &mut rng);
    let data = generate_data_symbols(frame, &mut rng)?;
    let tx = build_frame(frame, &zc, &data)?;
    let y = apply_channel(&tx, &real, frame, &mut rng)?;
    let (_, coarse_instrumented) =
        crate::sync::cross_correlate_instrumented(&y, &zc, frame.nlag)?;
    let (conv_terms, dense_terms) = network_complexity_terms(dims);
    let total = proposed_complexity_expression(frame.nlag, frame.n, &conv_terms, &dense_terms);
    Ok(ComplexityReport {
        n: frame.n,
        ng: dims.ng,
        nlag: frame.nlag,
        coarse_formula: (frame.nlag * frame.n) as u64,
        coarse_instrumented,
        conv_terms,
        dense_terms,
        total,
    })
}

/// Reference operating points of the two externally published comparison
/// methods, transcribed for plot annotation. `source` is always
/// "transcribed" in the export.
pub const REFERENCE_POINTS: &[(&str, f64, usize, f64, f64)] = &[
    // (method, snr_db, l, eta, error_prob)
    ("cs", 12.0, 20, 0.2, 0.06),
    ("elm", 12.0, 20, 0.2, 0.23),
    ("cs", 16.0, 20, 0.3, 0.02),
    ("elm", 16.0, 20, 0.3, 0.21),
];

fn write_if_changed(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}

/// Export the sweep: the full grid CSV, two long-format plot CSVs (grouped
/// by path count and by decay factor), transcribed reference annotations and
/// a JSON summary. CSV bytes depend only on the result values.
pub fn export_results(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let mut grid = String::from("method,snr_db,l,eta,trials,errors,error_prob\n");
    for p in &result.points {
        grid.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.method.name(),
            p.snr_db,
            p.l,
            p.eta,
            p.trials,
            p.errors,
            p.error_prob()
        ));
    }
    let grid_path = dir.join("results.csv");
    write_if_changed(&grid_path, &grid)?;
    written.push(grid_path);

    // long-format per-figure files
    let mut by_l: Vec<&PointResult> = result.points.iter().collect();
    by_l.sort_by(|a, b| {
        (a.method.name(), a.l, &a.eta, &a.snr_db)
            .partial_cmp(&(b.method.name(), b.l, &b.eta, &b.snr_db))
            .unwrap()
    });
    let mut fig_l = String::from("method,l,eta,snr_db,error_prob\n");
    for p in by_l {
        fig_l.push_str(&format!(
            "{},{},{},{},{}\n",
            p.method.name(),
            p.l,
            p.eta,
            p.snr_db,
            p.error_prob()
        ));
    }
    let fig_l_path = dir.join("sweep_by_l.csv");
    write_if_changed(&fig_l_path, &fig_l)?;
    written.push(fig_l_path);

    let mut by_eta: Vec<&PointResult> = result.points.iter().collect();
    by_eta.sort_by(|a, b| {
        (a.method.name(), &a.eta, a.l, &a.snr_db)
            .partial_cmp(&(b.method.name(), &b.eta, b.l, &b.snr_db))
            .unwrap()
    });
    let mut fig_eta = String::from("method,eta,l,snr_db,error_prob\n");
    for p in by_eta {
        fig_eta.push_str(&format!(
            "{},{},{},{},{}\n",
            p.method.name(),
            p.eta,
            p.l,
            p.snr_db,
            p.error_prob()
        ));
    }
    let fig_eta_path = dir.join("sweep_by_eta.csv");
    write_if_changed(&fig_eta_path, &fig_eta)?;
    written.push(fig_eta_path);

    let mut refs = String::from("method,snr_db,l,eta,error_prob,source\n");
    for (method, snr, l, eta, p) in REFERENCE_POINTS {
        refs.push_str(&format!("{method},{snr},{l},{eta},{p},transcribed\n"));
    }
    let refs_path = dir.join("reference_points.csv");
    write_if_changed(&refs_path, &refs)?;
    written.push(refs_path);

    #[derive(Serialize)]
    struct Summary<'a> {
        spec: &'a SweepSpec,
        points: Vec<SummaryPoint>,
        timing: &'a [MethodTiming],
    }
    #[derive(Serialize)]
    struct SummaryPoint {
        method: &'static str,
        snr_db: f64,
        l: usize,
        eta: f64,
        trials: u64,
        errors: u64,
        error_prob: f64,
        errors_tol: u64,
        error_prob_tol: f64,
        std_error: f64,
    }
    let summary = Summary {
        spec: &result.spec,
        points: result
            .points
            .iter()
            .map(|p| SummaryPoint {
                method: p.method.name(),
                snr_db: p.snr_db,
                l: p.l,
                eta: p.eta,
                trials: p.trials,
                errors: p.errors,
                error_prob: p.error_prob(),
                errors_tol: p.errors_tol,
                error_prob_tol: p.error_prob_tol(),
                std_error: p.std_error(),
            })
            .collect(),
        timing: &result.timing,
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Format(format!("summary serialization failed: {e}")))?;
    let json_path = dir.join("summary.json");
    write_if_changed(&json_path, &json)?;
    written.push(json_path);

    Ok(written)
}
