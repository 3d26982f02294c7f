//! End-to-end orchestration: per-trace deconvolution chain, scan-level
//! wavelet scopes (one wavelet per trace, one global wavelet, or zoned
//! estimation with crossfaded seams), and report assembly.
//!
//! Per-trace processing is pure, so the parallel path must produce output
//! bitwise identical to the sequential one; pooling passes for the global
//! strategy complete before any deconvolution starts and always reduce in
//! trace order.

use crate::ase::{ase_broaden_with, AseDiagnostics, ExtrapolationOptions};
use crate::error::{Error, Result};
use crate::metrics::{
    detect_peaks, match_truth, mean, AggregateMetrics, MetricConventions, ResolutionReport,
    TraceMetrics,
};
use crate::scan::ScanSet;
use crate::signal::{autocorrelation, envelope, Autocorrelation, RfTrace, TaperKind};
use crate::synth::ReflectivitySeries;
use crate::wavelet::{
    estimate_phase, estimate_wavelet, finish_curve, suggest_wavelet_length, synthesize_wavelet,
    validate_wavelet_length, KurtosisCurve, PhaseSearchConfig, WaveletEstimate,
};
use crate::wiener::{wiener_deconvolve, DeconTrace, WienerConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

/// How the wavelet estimate is scoped across a scan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum WaveletScope {
    /// Independent estimate per trace.
    PerTrace,
    /// Pool autocorrelations and kurtosis curves across the scan, derive
    /// one wavelet, deconvolve every trace with it.
    Global,
    /// Split every trace at the boundaries, pool per zone across the scan,
    /// deconvolve zones separately and rejoin with a cosine crossfade.
    /// An empty boundary list degenerates to the global strategy.
    Zoned { zone_boundaries: Vec<usize> },
}

impl Default for WaveletScope {
    fn default() -> Self {
        WaveletScope::PerTrace
    }
}

/// All pipeline knobs, JSON-loadable. Defaults follow the processing
/// conventions: 1 degree phase grid, 1% noise desensitizing factor,
/// -6 dB band, AIC order cap 40, 5-bin band smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Wavelet support in samples; `None` derives three dominant periods
    /// from the trace spectrum.
    pub wavelet_length: Option<usize>,
    /// Phase grid step in degrees.
    pub grid_step_deg: f64,
    /// Optional kurtosis gate `[start, end)` in samples.
    pub gate: Option<(usize, usize)>,
    pub eps_factor: f64,
    /// Band threshold for spectral extrapolation, dB relative to peak.
    pub threshold_db: f64,
    /// AR order cap.
    pub p_max: usize,
    /// Moving-average width for band detection.
    pub smoothing_bins: usize,
    pub scope: WaveletScope,
    /// Emit the envelope of the broadened trace alongside it.
    pub emit_envelope: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            wavelet_length: None,
            grid_step_deg: 1.0,
            gate: None,
            eps_factor: 0.01,
            threshold_db: -6.0,
            p_max: 40,
            smoothing_bins: 5,
            scope: WaveletScope::default(),
            emit_envelope: true,
        }
    }
}

impl PipelineConfig {
    pub fn phase_config(&self) -> PhaseSearchConfig {
        PhaseSearchConfig {
            grid_step: self.grid_step_deg * PI / 180.0,
            refine: Default::default(),
            gate: self.gate,
        }
    }

    pub fn wiener_config(&self) -> WienerConfig {
        WienerConfig {
            eps_factor: self.eps_factor,
            ..Default::default()
        }
    }

    pub fn validate(&self, trace_len: usize) -> Result<()> {
        if let Some(l) = self.wavelet_length {
            validate_wavelet_length(l, trace_len)?;
        }
        if !(self.grid_step_deg > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "grid_step_deg {}",
                self.grid_step_deg
            )));
        }
        if self.p_max == 0 {
            return Err(Error::InvalidConfig("p_max must be positive".into()));
        }
        if let WaveletScope::Zoned { zone_boundaries } = &self.scope {
            let mut prev = 0usize;
            for &b in zone_boundaries {
                if b <= prev || b >= trace_len {
                    return Err(Error::InvalidConfig(format!(
                        "zone boundary {b} not strictly increasing inside trace of {trace_len}"
                    )));
                }
                prev = b;
            }
        }
        Ok(())
    }
}

/// Processing configuration shipped with the canonical five-reflector
/// scenario: defaults except for wider band smoothing, which keeps the
/// -6 dB walk from stopping inside reflectivity ripple at this trace
/// length.
pub fn five_reflector_config() -> PipelineConfig {
    PipelineConfig {
        smoothing_bins: 51,
        ..Default::default()
    }
}

/// Pipeline stage names used to annotate errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    WaveletEstimation,
    WienerDeconv,
    SpectralExtrapolation,
    Envelope,
    Metrics,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::WaveletEstimation => "wavelet_estimation",
            Stage::WienerDeconv => "wiener_deconv",
            Stage::SpectralExtrapolation => "spectral_extrapolation",
            Stage::Envelope => "envelope",
            Stage::Metrics => "metrics",
        };
        f.write_str(name)
    }
}

/// An error annotated with the stage (and, at scan level, trace) it
/// came from.
#[derive(Debug, thiserror::Error)]
#[error("{stage}{}: {source}", trace.map(|t| format!(" (trace {t})")).unwrap_or_default())]
pub struct StageError {
    pub stage: Stage,
    pub trace: Option<usize>,
    #[source]
    pub source: Error,
}

impl StageError {
    fn new(stage: Stage, source: Error) -> Self {
        StageError {
            stage,
            trace: None,
            source,
        }
    }

    fn with_trace(mut self, trace: usize) -> Self {
        self.trace = Some(trace);
        self
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

/// Everything produced for one trace.
#[derive(Debug, Clone)]
pub struct TraceProducts {
    pub wiener: DeconTrace,
    /// Broadened signed trace; equals the Wiener output when the
    /// extrapolation stage fell back.
    pub broadened: RfTrace,
    /// Envelope of the broadened trace (empty when `emit_envelope` is
    /// off).
    pub envelope: RfTrace,
    /// Wavelets used, one per zone (a single entry outside zoned mode).
    pub wavelets: Vec<WaveletEstimate>,
    pub ase: Option<AseDiagnostics>,
    pub warnings: Vec<String>,
}

impl TraceProducts {
    pub fn wavelet(&self) -> &WaveletEstimate {
        &self.wavelets[0]
    }
}

fn resolve_wavelet_length(trace: &RfTrace, cfg: &PipelineConfig) -> Result<usize> {
    match cfg.wavelet_length {
        Some(l) => {
            validate_wavelet_length(l, trace.len())?;
            Ok(l)
        }
        None => {
            let l = suggest_wavelet_length(trace)?;
            validate_wavelet_length(l, trace.len())?;
            Ok(l)
        }
    }
}

/// Run the full chain on one trace: estimate (or accept) a wavelet, Wiener
/// deconvolve, broaden by spectral extrapolation, take the envelope.
/// Extrapolation failures downgrade to a warning and the Wiener output
/// passes through unchanged.
pub fn deconvolve_trace(
    trace: &RfTrace,
    cfg: &PipelineConfig,
    wavelet_override: Option<&WaveletEstimate>,
) -> StageResult<TraceProducts> {
    cfg.validate(trace.len())
        .map_err(|e| StageError::new(Stage::WaveletEstimation, e))?;
    let wavelet = match wavelet_override {
        Some(w) => w.clone(),
        None => {
            let length = resolve_wavelet_length(trace, cfg)
                .map_err(|e| StageError::new(Stage::WaveletEstimation, e))?;
            estimate_wavelet(trace, length, &cfg.phase_config())
                .map_err(|e| StageError::new(Stage::WaveletEstimation, e))?
        }
    };
    finish_trace(trace, wavelet, cfg)
}

/// Wiener + ASE + envelope once a wavelet is in hand.
fn finish_trace(
    trace: &RfTrace,
    wavelet: WaveletEstimate,
    cfg: &PipelineConfig,
) -> StageResult<TraceProducts> {
    let wiener = wiener_deconvolve(trace, &wavelet, &cfg.wiener_config())
        .map_err(|e| StageError::new(Stage::WienerDeconv, e))?;
    let mut warnings = Vec::new();
    let (broadened, ase) = match ase_broaden_with(
        &wiener,
        cfg.threshold_db,
        cfg.p_max,
        cfg.smoothing_bins,
        &ExtrapolationOptions::default(),
    ) {
        Ok(outcome) => (outcome.trace, Some(outcome.diagnostics)),
        Err(e) => {
            warnings.push(format!(
                "spectral extrapolation fell back to the Wiener output: {e}"
            ));
            (wiener.as_trace(), None)
        }
    };
    let env = if cfg.emit_envelope {
        envelope(&broadened).map_err(|e| StageError::new(Stage::Envelope, e))?
    } else {
        RfTrace {
            samples: vec![],
            fs: trace.fs,
            t0: 0.0,
        }
    };
    Ok(TraceProducts {
        wiener,
        broadened,
        envelope: env,
        wavelets: vec![wavelet],
        ase,
        warnings,
    })
}

/// Scan-level output: per-trace products in input order.
#[derive(Debug, Clone)]
pub struct ScanOutputs {
    pub products: Vec<TraceProducts>,
}

impl ScanOutputs {
    /// The broadened traces repackaged as a scan.
    pub fn processed_scan(&self, input: &ScanSet) -> ScanSet {
        ScanSet {
            traces: self.products.iter().map(|p| p.broadened.clone()).collect(),
            kind: input.kind,
            axis: input.axis.clone(),
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        self.products
            .iter()
            .enumerate()
            .flat_map(|(i, p)| {
                p.warnings
                    .iter()
                    .map(move |w| format!("trace {i}: {w}"))
            })
            .collect()
    }
}

/// Process a whole scan with the configured wavelet scope, in parallel.
/// Output is bitwise identical to [`process_scan_sequential`].
pub fn process_scan(scan: &ScanSet, cfg: &PipelineConfig) -> StageResult<ScanOutputs> {
    process_scan_inner(scan, cfg, true)
}

/// Single-worker variant of [`process_scan`].
pub fn process_scan_sequential(scan: &ScanSet, cfg: &PipelineConfig) -> StageResult<ScanOutputs> {
    process_scan_inner(scan, cfg, false)
}

fn process_scan_inner(
    scan: &ScanSet,
    cfg: &PipelineConfig,
    parallel: bool,
) -> StageResult<ScanOutputs> {
    cfg.validate(scan.samples_per_trace())
        .map_err(|e| StageError::new(Stage::WaveletEstimation, e))?;
    match &cfg.scope {
        WaveletScope::PerTrace => {
            let products = run_per_trace(&scan.traces, cfg, None, parallel)?;
            Ok(ScanOutputs { products })
        }
        WaveletScope::Global => {
            let wavelet = pooled_wavelet(&scan.traces, cfg, parallel)?;
            let products = run_per_trace(&scan.traces, cfg, Some(&wavelet), parallel)?;
            Ok(ScanOutputs { products })
        }
        WaveletScope::Zoned { zone_boundaries } => {
            if zone_boundaries.is_empty() {
                let wavelet = pooled_wavelet(&scan.traces, cfg, parallel)?;
                let products = run_per_trace(&scan.traces, cfg, Some(&wavelet), parallel)?;
                return Ok(ScanOutputs { products });
            }
            run_zoned(scan, cfg, zone_boundaries, parallel)
        }
    }
}

fn run_per_trace(
    traces: &[RfTrace],
    cfg: &PipelineConfig,
    wavelet: Option<&WaveletEstimate>,
    parallel: bool,
) -> StageResult<Vec<TraceProducts>> {
    let job = |(i, trace): (usize, &RfTrace)| {
        deconvolve_trace(trace, cfg, wavelet).map_err(|e| e.with_trace(i))
    };
    if parallel {
        traces.par_iter().enumerate().map(job).collect()
    } else {
        traces.iter().enumerate().map(job).collect()
    }
}

/// Averaged autocorrelation and kurtosis curve across traces, reduced in
/// trace order so parallel and sequential runs agree bitwise.
fn pooled_wavelet(
    traces: &[RfTrace],
    cfg: &PipelineConfig,
    parallel: bool,
) -> StageResult<WaveletEstimate> {
    let lengths: Vec<usize> = traces
        .iter()
        .map(|t| resolve_wavelet_length(t, cfg))
        .collect::<Result<_>>()
        .map_err(|e| StageError::new(Stage::WaveletEstimation, e))?;
    // One support for the pooled estimate: the smallest suggestion keeps
    // every trace within its preconditions.
    let length = *lengths.iter().min().expect("non-empty scan");
    let phase_cfg = cfg.phase_config();
    let job = |(i, trace): (usize, &RfTrace)| -> StageResult<(Autocorrelation, KurtosisCurve)> {
        let centered = trace.mean_removed();
        let curve = estimate_phase(&centered, &phase_cfg)
            .map_err(|e| StageError::new(Stage::WaveletEstimation, e).with_trace(i))?;
        let acf = autocorrelation(&centered, length, TaperKind::HannLag)
            .map_err(|e| StageError::new(Stage::WaveletEstimation, e).with_trace(i))?;
        Ok((acf, curve))
    };
    let parts: Vec<(Autocorrelation, KurtosisCurve)> = if parallel {
        traces.par_iter().enumerate().map(job).collect::<StageResult<_>>()?
    } else {
        traces.iter().enumerate().map(job).collect::<StageResult<_>>()?
    };
    let n = parts.len() as f64;
    let mut acf_values = vec![0.0; length + 1];
    let mut curve_values = vec![0.0; parts[0].1.values.len()];
    for (acf, curve) in &parts {
        for (a, v) in acf_values.iter_mut().zip(&acf.values) {
            *a += v;
        }
        for (c, v) in curve_values.iter_mut().zip(&curve.values) {
            *c += v;
        }
    }
    for v in acf_values.iter_mut() {
        *v /= n;
    }
    for v in curve_values.iter_mut() {
        *v /= n;
    }
    let pooled_acf = Autocorrelation {
        values: acf_values,
        max_lag: length,
        taper: TaperKind::HannLag,
        fs: traces[0].fs,
    };
    let angles = parts[0].1.angles.clone();
    let pooled_curve = finish_curve(angles, curve_values, phase_cfg.grid_step, phase_cfg.refine);
    synthesize_wavelet(&pooled_acf, &pooled_curve, length)
        .map_err(|e| StageError::new(Stage::WaveletEstimation, e))
}

/// Half width of the crossfade window at zone seams.
const SEAM_MARGIN: usize = 8;

fn run_zoned(
    scan: &ScanSet,
    cfg: &PipelineConfig,
    boundaries: &[usize],
    parallel: bool,
) -> StageResult<ScanOutputs> {
    let len = scan.samples_per_trace();
    let mut edges = Vec::with_capacity(boundaries.len() + 2);
    edges.push(0);
    edges.extend_from_slice(boundaries);
    edges.push(len);
    let zones: Vec<(usize, usize)> = edges.windows(2).map(|w| (w[0], w[1])).collect();

    // Zone processing works on margin-extended segments so that adjacent
    // zone outputs overlap across each seam.
    let mut zone_products: Vec<Vec<TraceProducts>> = Vec::with_capacity(zones.len());
    for (zi, &(start, end)) in zones.iter().enumerate() {
        let seg_start = start.saturating_sub(SEAM_MARGIN);
        let seg_end = (end + SEAM_MARGIN).min(len);
        let segments: Vec<RfTrace> = scan
            .traces
            .iter()
            .map(|t| RfTrace {
                samples: t.samples[seg_start..seg_end].to_vec(),
                fs: t.fs,
                t0: t.t0 + seg_start as f64 / t.fs,
            })
            .collect();
        let mut zone_cfg = cfg.clone();
        zone_cfg.scope = WaveletScope::Global;
        // Clamp the configured support to the zone length.
        if let Some(l) = zone_cfg.wavelet_length {
            let cap = ((seg_end - seg_start) / 4) & !1;
            zone_cfg.wavelet_length = Some(l.min(cap.max(4)));
        }
        // Gates are trace-global; drop them for zone segments.
        zone_cfg.gate = None;
        let wavelet = pooled_wavelet(&segments, &zone_cfg, parallel)
            .map_err(|e| annotate_zone(e, zi))?;
        let products = run_per_trace(&segments, &zone_cfg, Some(&wavelet), parallel)
            .map_err(|e| annotate_zone(e, zi))?;
        zone_products.push(products);
    }

    // Rejoin per trace with cosine crossfades over the seam overlaps.
    let products = (0..scan.len())
        .map(|ti| {
            let per_zone: Vec<&TraceProducts> =
                zone_products.iter().map(|z| &z[ti]).collect();
            join_zones(scan, cfg, &zones, &per_zone, ti)
        })
        .collect::<StageResult<Vec<_>>>()?;
    Ok(ScanOutputs { products })
}

fn annotate_zone(mut e: StageError, zone: usize) -> StageError {
    e.source = match e.source {
        Error::InvalidConfig(msg) => Error::InvalidConfig(format!("zone {zone}: {msg}")),
        other => Error::EstimationFailed(format!("zone {zone}: {other}")),
    };
    e
}

fn join_zones(
    scan: &ScanSet,
    cfg: &PipelineConfig,
    zones: &[(usize, usize)],
    per_zone: &[&TraceProducts],
    trace_index: usize,
) -> StageResult<TraceProducts> {
    let len = scan.samples_per_trace();
    let fs = scan.fs();
    let mut wiener = vec![0.0; len];
    let mut broadened = vec![0.0; len];
    for (zi, &(start, end)) in zones.iter().enumerate() {
        let seg_start = start.saturating_sub(SEAM_MARGIN);
        let p = per_zone[zi];
        for dst in start..end {
            let src = dst - seg_start;
            wiener[dst] = p.wiener.samples[src];
            broadened[dst] = p.broadened.samples[src];
        }
    }
    // Raised-cosine blend across each interior seam.
    for (zi, &(_, end)) in zones.iter().enumerate().take(zones.len() - 1) {
        let seam = end;
        let left = per_zone[zi];
        let right = per_zone[zi + 1];
        let left_start = zones[zi].0.saturating_sub(SEAM_MARGIN);
        let right_start = zones[zi + 1].0.saturating_sub(SEAM_MARGIN);
        let window = 2 * SEAM_MARGIN;
        for j in 0..window {
            let dst = seam + j;
            if dst < SEAM_MARGIN || dst - SEAM_MARGIN >= len {
                continue;
            }
            let dst = dst - SEAM_MARGIN;
            let fade = 0.5 * (1.0 - (PI * (j as f64 + 0.5) / window as f64).cos());
            let li = dst - left_start;
            let ri = dst - right_start;
            if li < left.wiener.samples.len() && ri < right.wiener.samples.len() {
                wiener[dst] =
                    (1.0 - fade) * left.wiener.samples[li] + fade * right.wiener.samples[ri];
                broadened[dst] =
                    (1.0 - fade) * left.broadened.samples[li] + fade * right.broadened.samples[ri];
            }
        }
    }
    let broadened = RfTrace {
        samples: broadened,
        fs,
        t0: 0.0,
    };
    let env = if cfg.emit_envelope {
        envelope(&broadened)
            .map_err(|e| StageError::new(Stage::Envelope, e).with_trace(trace_index))?
    } else {
        RfTrace {
            samples: vec![],
            fs,
            t0: 0.0,
        }
    };
    // The joined Wiener trace keeps the first zone's spectrum/diagnostics
    // as representative metadata.
    let mut joined_wiener = per_zone[0].wiener.clone();
    joined_wiener.samples = wiener;
    let warnings: Vec<String> = per_zone
        .iter()
        .enumerate()
        .flat_map(|(zi, p)| p.warnings.iter().map(move |w| format!("zone {zi}: {w}")))
        .collect();
    Ok(TraceProducts {
        wiener: joined_wiener,
        broadened,
        envelope: env,
        wavelets: per_zone.iter().map(|p| p.wavelets[0].clone()).collect(),
        ase: per_zone[0].ase.clone(),
        warnings,
    })
}

/// Build the resolution report for processed scan outputs, with the raw
/// scan for before/after width aggregates and optional ground truth.
pub fn resolution_metrics(
    scan: &ScanSet,
    outputs: &ScanOutputs,
    truth: Option<&ReflectivitySeries>,
    conventions: &MetricConventions,
) -> StageResult<ResolutionReport> {
    let mut per_trace = Vec::with_capacity(outputs.products.len());
    let mut fwhm_raw = Vec::new();
    let mut fwhm_wiener = Vec::new();
    let mut fwhm_ase = Vec::new();
    let mut errors = Vec::new();
    let mut matched = 0usize;
    let mut truth_total = 0usize;
    for (i, (trace, products)) in scan.traces.iter().zip(&outputs.products).enumerate() {
        let stage_err = |e: Error| StageError::new(Stage::Metrics, e).with_trace(i);
        let env = if products.envelope.is_empty() {
            envelope(&products.broadened).map_err(stage_err)?
        } else {
            products.envelope.clone()
        };
        let peaks = detect_peaks(&env.samples, &products.broadened.samples, conventions)
            .map_err(stage_err)?;
        fwhm_ase.extend(peaks.iter().map(|p| p.fwhm));

        let raw_env = envelope(trace).map_err(stage_err)?;
        let raw_peaks =
            detect_peaks(&raw_env.samples, &trace.samples, conventions).map_err(stage_err)?;
        fwhm_raw.extend(raw_peaks.iter().map(|p| p.fwhm));

        let wiener_trace = products.wiener.as_trace();
        let wiener_env = envelope(&wiener_trace).map_err(stage_err)?;
        let wiener_peaks =
            detect_peaks(&wiener_env.samples, &wiener_trace.samples, conventions)
                .map_err(stage_err)?;
        fwhm_wiener.extend(wiener_peaks.iter().map(|p| p.fwhm));

        let matches = match truth {
            Some(r) => {
                let m = match_truth(&peaks, r, conventions);
                truth_total += m.len();
                for tm in &m {
                    if let Some(e) = tm.error_samples {
                        matched += 1;
                        errors.push(e);
                    }
                }
                m
            }
            None => vec![],
        };
        per_trace.push(TraceMetrics {
            trace_index: i,
            peaks,
            matches,
        });
    }
    let aggregate = AggregateMetrics {
        position_rmse: if errors.is_empty() {
            None
        } else {
            Some((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
        },
        detection_fraction: if truth_total == 0 {
            None
        } else {
            Some(matched as f64 / truth_total as f64)
        },
        mean_fwhm_raw: mean(&fwhm_raw),
        mean_fwhm_wiener: mean(&fwhm_wiener),
        mean_fwhm_ase: mean(&fwhm_ase),
    };
    Ok(ResolutionReport {
        conventions: *conventions,
        per_trace,
        aggregate,
        warnings: outputs.warnings(),
    })
}
