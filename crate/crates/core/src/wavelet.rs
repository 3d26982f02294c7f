//! Statistical pulse estimation: the propagating wavelet is recovered from
//! a single trace without picking any reflector. Its magnitude spectrum
//! comes from the trace autocorrelation (the reflectivity is assumed
//! white), its constant phase from a grid search maximizing the excess
//! kurtosis of phase-rotated copies of the trace. A band-limited wavelet
//! convolved with a sparse spike series makes the outcome more Gaussian,
//! so the rotation that undoes the wavelet phase is the one of maximum
//! kurtosis.
//!
//! Traces are mean-subtracted once on entry to the estimators; DC offsets
//! common in digitizers would otherwise bias the moment ratios.

use crate::error::{Error, Result};
use crate::fft;
use crate::signal::{
    amplitude_spectrum_from_acf, analytic_signal, autocorrelation, rotate_analytic,
    Autocorrelation, RfTrace, TaperKind,
};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Excess kurtosis curve over a half-turn of rotation angles.
#[derive(Debug, Clone, PartialEq)]
pub struct KurtosisCurve {
    /// Grid angles in radians over [-pi/2, pi/2).
    pub angles: Vec<f64>,
    /// Excess kurtosis of the trace rotated by each angle.
    pub values: Vec<f64>,
    /// Angle of maximum kurtosis; refined off-grid when parabolic
    /// interpolation is enabled.
    pub best_angle: f64,
    /// Maximum grid kurtosis value.
    pub best_value: f64,
}

/// Estimated propagating pulse.
#[derive(Debug, Clone)]
pub struct WaveletEstimate {
    /// Peak-normalized samples with zero lag at index `len/2`.
    pub samples: Vec<f64>,
    pub fs: f64,
    /// Constant phase of the wavelet, the negative of the best rotation
    /// angle, canonicalized into [-pi/2, pi/2).
    pub phase: f64,
    /// Kurtosis curve behind the phase pick; absent for synthetic pulses.
    pub curve: Option<KurtosisCurve>,
    /// Peak amplitude removed by normalization; multiply the samples by
    /// this to restore the estimated physical scale.
    pub scale: f64,
    /// Power bins clamped to zero while forming the magnitude spectrum.
    pub clamped_bins: usize,
}

impl WaveletEstimate {
    /// Wrap raw samples as a wavelet, normalizing to unit peak. The zero
    /// lag is taken to sit at `len/2`, matching the estimator output.
    pub fn from_samples(samples: Vec<f64>, fs: f64, phase: f64) -> Result<Self> {
        let peak = samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            return Err(Error::ZeroWavelet);
        }
        Ok(WaveletEstimate {
            samples: samples.iter().map(|v| v / peak).collect(),
            fs,
            phase,
            curve: None,
            scale: peak,
            clamped_bins: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Sub-grid refinement of the kurtosis maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseRefinement {
    /// Raw grid argmax.
    None,
    /// Parabola through the three grid points around the maximum.
    Parabolic,
    /// Fit the lowest two angular harmonics of the pi-periodic curve and
    /// maximize the fit. A rotated wavelet's fourth-moment curve lives in
    /// those harmonics, so this pools the whole grid into the estimate and
    /// is far less noise-sensitive than a local argmax.
    #[default]
    Harmonic,
}

/// Options for the constant-phase grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSearchConfig {
    /// Angle step in radians; must divide pi evenly. Default 1 degree.
    pub grid_step: f64,
    pub refine: PhaseRefinement,
    /// Restrict the kurtosis statistics to a sample window, e.g. to
    /// exclude a dominant lateral wave. The rotation itself always uses
    /// the full trace.
    pub gate: Option<(usize, usize)>,
}

impl Default for PhaseSearchConfig {
    fn default() -> Self {
        PhaseSearchConfig {
            grid_step: PI / 180.0,
            refine: PhaseRefinement::default(),
            gate: None,
        }
    }
}

const MIN_KURTOSIS_LEN: usize = 16;

/// Excess kurtosis `E[s^4]/(E[s^2])^2 - 3` from plain sample moments.
/// The expectation is over all samples; callers remove DC beforehand
/// (the estimators in this module do so on entry).
pub fn excess_kurtosis(trace: &RfTrace) -> Result<f64> {
    kurtosis_of(&trace.samples)
}

fn kurtosis_of(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < MIN_KURTOSIS_LEN {
        return Err(Error::TraceTooShort {
            len: n,
            min: MIN_KURTOSIS_LEN,
        });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let variance = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if variance <= 0.0 {
        return Err(Error::UndefinedKurtosis);
    }
    let m2 = samples.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let m4 = samples.iter().map(|v| v * v * v * v).sum::<f64>() / n as f64;
    Ok(m4 / (m2 * m2) - 3.0)
}

fn angle_grid(grid_step: f64) -> Result<Vec<f64>> {
    if !(grid_step > 0.0) || !grid_step.is_finite() {
        return Err(Error::InvalidGridStep(format!("{grid_step} rad")));
    }
    let count_f = PI / grid_step;
    let count = count_f.round() as usize;
    if count == 0 || (count_f - count as f64).abs() > 1e-6 {
        return Err(Error::InvalidGridStep(format!(
            "{grid_step} rad does not divide pi evenly"
        )));
    }
    Ok((0..count)
        .map(|j| -PI / 2.0 + j as f64 * grid_step)
        .collect())
}

/// Wrap an angle into [-pi/2, pi/2); the kurtosis curve is pi-periodic so
/// this loses nothing.
pub fn canonical_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(PI);
    if p >= PI / 2.0 {
        p -= PI;
    }
    p
}

/// Grid search for the rotation angle of maximum kurtosis.
pub fn estimate_phase(trace: &RfTrace, cfg: &PhaseSearchConfig) -> Result<KurtosisCurve> {
    let angles = angle_grid(cfg.grid_step)?;
    let centered = trace.mean_removed();
    let analytic = analytic_signal(&centered)?;
    if let Some((start, end)) = cfg.gate {
        if start >= end || end > trace.len() {
            return Err(Error::InvalidConfig(format!(
                "gate [{start}, {end}) outside trace of {} samples",
                trace.len()
            )));
        }
    }
    let mut values = Vec::with_capacity(angles.len());
    for &phi in &angles {
        let rotated = rotate_analytic(&analytic, phi);
        let window = match cfg.gate {
            Some((start, end)) => &rotated[start..end],
            None => &rotated[..],
        };
        values.push(kurtosis_of(window)?);
    }
    Ok(finish_curve(angles, values, cfg.grid_step, cfg.refine))
}

/// Argmax plus the configured refinement over an evaluated curve.
pub(crate) fn finish_curve(
    angles: Vec<f64>,
    values: Vec<f64>,
    grid_step: f64,
    refine: PhaseRefinement,
) -> KurtosisCurve {
    let best_idx = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let best_value = values[best_idx];
    let mut best_angle = angles[best_idx];
    match refine {
        PhaseRefinement::None => {}
        PhaseRefinement::Parabolic => {
            // The curve is pi-periodic, so the neighbors wrap around.
            let n = angles.len();
            let left = values[(best_idx + n - 1) % n];
            let right = values[(best_idx + 1) % n];
            let denom = left - 2.0 * best_value + right;
            if denom < 0.0 {
                let offset = 0.5 * (left - right) / denom;
                if offset.is_finite() && offset.abs() <= 0.5 {
                    best_angle = canonical_phase(best_angle + offset * grid_step);
                }
            }
        }
        PhaseRefinement::Harmonic => {
            if let Some(refined) = harmonic_argmax(&values) {
                best_angle = canonical_phase(-PI / 2.0 + refined * PI);
            }
        }
    }
    KurtosisCurve {
        angles,
        values,
        best_angle,
        best_value,
    }
}

/// Maximize the first two circular harmonics of a curve sampled uniformly
/// over one period. Returns the argmax as a fraction of the period.
fn harmonic_argmax(values: &[f64]) -> Option<f64> {
    let m = values.len();
    if m < 8 {
        return None;
    }
    let mut c1 = (0.0, 0.0);
    let mut c2 = (0.0, 0.0);
    for (j, &v) in values.iter().enumerate() {
        let t = 2.0 * PI * j as f64 / m as f64;
        c1.0 += v * t.cos();
        c1.1 += v * t.sin();
        c2.0 += v * (2.0 * t).cos();
        c2.1 += v * (2.0 * t).sin();
    }
    let fit = |x: f64| -> f64 {
        let t = 2.0 * PI * x;
        c1.0 * t.cos() + c1.1 * t.sin() + c2.0 * (2.0 * t).cos() + c2.1 * (2.0 * t).sin()
    };
    // Dense scan at ~0.005 degree resolution over the period.
    let steps = 36_000;
    let mut best_x = 0.0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..steps {
        let x = i as f64 / steps as f64;
        let v = fit(x);
        if v > best_v {
            best_v = v;
            best_x = x;
        }
    }
    if best_v.is_finite() {
        Some(best_x)
    } else {
        None
    }
}

/// Dominant-period heuristic for the wavelet support: three periods of the
/// periodogram peak, clamped to the estimator's preconditions.
pub fn suggest_wavelet_length(trace: &RfTrace) -> Result<usize> {
    let centered = trace.mean_removed();
    let n = centered.len();
    let spec = fft::forward_real(&centered.samples, n);
    let nyq = n / 2;
    let mut best_bin = 1usize;
    let mut best_mag = 0.0;
    for (k, c) in spec.iter().enumerate().take(nyq + 1).skip(1) {
        let m = c.norm();
        if m > best_mag {
            best_mag = m;
            best_bin = k;
        }
    }
    if best_mag == 0.0 {
        return Err(Error::DegenerateSpectrum);
    }
    let period = n as f64 / best_bin as f64;
    let mut len = (3.0 * period).round() as usize;
    len = len.clamp(8, (n / 4).max(8));
    if len % 2 == 1 {
        len -= 1;
    }
    Ok(len.max(8))
}

/// Full single-trace wavelet estimate: kurtosis phase search plus
/// autocorrelation magnitude, combined per the constant-phase model
/// `W(f) = |S(f)| exp(i phi_kurt sgn(f))` and inverse-transformed to a
/// centered, tapered, peak-normalized pulse.
pub fn estimate_wavelet(
    trace: &RfTrace,
    wavelet_length: usize,
    cfg: &PhaseSearchConfig,
) -> Result<WaveletEstimate> {
    validate_wavelet_length(wavelet_length, trace.len())?;
    let centered = trace.mean_removed();
    // Phase search first: a zero-variance trace must surface the kurtosis
    // error, not a degenerate-spectrum error.
    let curve = estimate_phase(&centered, cfg)?;
    let acf = autocorrelation(&centered, wavelet_length, TaperKind::HannLag)?;
    synthesize_wavelet(&acf, &curve, wavelet_length)
}

pub(crate) fn validate_wavelet_length(wavelet_length: usize, trace_len: usize) -> Result<()> {
    if wavelet_length % 2 != 0 || wavelet_length < 4 {
        return Err(Error::InvalidWaveletLength(format!(
            "{wavelet_length} (must be even and >= 4)"
        )));
    }
    if wavelet_length > trace_len / 4 {
        return Err(Error::InvalidWaveletLength(format!(
            "{wavelet_length} exceeds a quarter of the {trace_len}-sample trace"
        )));
    }
    Ok(())
}

/// Build the time-domain wavelet from an autocorrelation estimate and a
/// kurtosis curve. Split out from [`estimate_wavelet`] so scan-level
/// strategies can pool autocorrelations and curves across traces before
/// synthesizing a single wavelet.
pub fn synthesize_wavelet(
    acf: &Autocorrelation,
    curve: &KurtosisCurve,
    wavelet_length: usize,
) -> Result<WaveletEstimate> {
    if acf.max_lag < wavelet_length {
        return Err(Error::InvalidWaveletLength(format!(
            "autocorrelation holds {} lags, wavelet needs {wavelet_length}",
            acf.max_lag
        )));
    }
    let nfft = fft::next_pow2(2 * wavelet_length + 1);
    let acf_spectrum = amplitude_spectrum_from_acf(acf, nfft)?;
    let magnitude = acf_spectrum.spectrum;
    if magnitude.bins.iter().all(|b| b.re == 0.0) {
        return Err(Error::EstimationFailed(
            "magnitude spectrum fully clamped".into(),
        ));
    }
    let phi = curve.best_angle;
    let rot = Complex64::from_polar(1.0, phi);
    let nyq = nfft / 2;
    let mut bins = vec![Complex64::new(0.0, 0.0); nfft];
    bins[0] = magnitude.bins[0]; // sgn(0) = 0
    bins[nyq] = magnitude.bins[nyq]; // sgn(Nyquist) = 0
    for k in 1..nyq {
        bins[k] = magnitude.bins[k] * rot;
        bins[nfft - k] = bins[k].conj();
    }
    fft::inverse(&mut bins);
    debug_assert!(fft::relative_imag_residue(&bins) < 1e-9);
    // Shift zero lag to the buffer center, then cut the requested support.
    let center = nfft / 2;
    let start = center - wavelet_length / 2;
    let mut samples: Vec<f64> = (0..wavelet_length)
        .map(|i| bins[(start + i + center) % nfft].re)
        .collect();
    apply_edge_taper(&mut samples);
    let peak = samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::EstimationFailed("wavelet has no energy".into()));
    }
    for v in samples.iter_mut() {
        *v /= peak;
    }
    Ok(WaveletEstimate {
        samples,
        fs: acf.fs,
        phase: canonical_phase(-phi),
        curve: Some(curve.clone()),
        scale: peak,
        clamped_bins: acf_spectrum.clamped_bins,
    })
}

/// Raised-cosine ramp over the outer 10% of samples at each end.
fn apply_edge_taper(samples: &mut [f64]) {
    let n = samples.len();
    let ramp = ((n as f64) * 0.10).round() as usize;
    if ramp == 0 {
        return;
    }
    for i in 0..ramp.min(n) {
        let w = 0.5 * (1.0 - (PI * (i as f64 + 0.5) / ramp as f64).cos());
        samples[i] *= w;
        samples[n - 1 - i] *= w;
    }
}
