//! Resolution metrics: envelope peak picking, FWHM measurement, resolved
//! close pairs, and ground-truth matching. Conventions (peak threshold
//! -20 dB of the global envelope maximum, 3 dB dip for a resolved pair,
//! +-4 sample truth matching window) are recorded in the report header so
//! numbers stay comparable across runs.

use crate::error::{Error, Result};
use crate::synth::ReflectivitySeries;
use serde::{Deserialize, Serialize};

/// Fixed conventions behind every number in a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConventions {
    /// Peaks below this level relative to the envelope max are ignored.
    pub peak_threshold_db: f64,
    /// Minimum spacing between detected peaks in samples.
    pub min_peak_spacing: usize,
    /// A pair counts as resolved when the dip between the peaks sits at
    /// least this far below the lower peak.
    pub dip_db: f64,
    /// Truth spikes match the nearest detected peak within this window.
    pub match_window: usize,
}

impl Default for MetricConventions {
    fn default() -> Self {
        MetricConventions {
            peak_threshold_db: -20.0,
            min_peak_spacing: 3,
            dip_db: 3.0,
            match_window: 4,
        }
    }
}

/// One detected envelope peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub sample: usize,
    /// Sign read from the signed (broadened) trace at the peak sample.
    pub polarity: i8,
    pub envelope_value: f64,
    /// Full width at half maximum of the envelope peak, in samples.
    pub fwhm: f64,
}

/// Match of one truth spike against the detected peaks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthMatch {
    pub truth_sample: usize,
    pub truth_amplitude: f64,
    /// Detected peak sample, when one lies within the match window.
    pub matched_sample: Option<usize>,
    pub error_samples: Option<f64>,
    pub polarity_ok: Option<bool>,
}

/// Per-trace metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub trace_index: usize,
    pub peaks: Vec<Peak>,
    pub matches: Vec<TruthMatch>,
}

/// Scan-level aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    /// RMS position error over matched truth spikes, in samples.
    pub position_rmse: Option<f64>,
    /// Fraction of truth spikes matched by a detected peak.
    pub detection_fraction: Option<f64>,
    pub mean_fwhm_raw: Option<f64>,
    pub mean_fwhm_wiener: Option<f64>,
    pub mean_fwhm_ase: Option<f64>,
}

/// Full report emitted by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub conventions: MetricConventions,
    pub per_trace: Vec<TraceMetrics>,
    pub aggregate: AggregateMetrics,
    /// Human-readable processing warnings (e.g. extrapolation fallbacks).
    pub warnings: Vec<String>,
}

/// Local maxima of the envelope above the relative threshold, thinned to
/// the minimum spacing by keeping the taller peak.
pub fn detect_peaks(
    envelope: &[f64],
    signed: &[f64],
    conventions: &MetricConventions,
) -> Result<Vec<Peak>> {
    if envelope.is_empty() {
        return Err(Error::DimensionMismatch("empty envelope".into()));
    }
    if signed.len() != envelope.len() {
        return Err(Error::DimensionMismatch(format!(
            "envelope {} vs signed {} samples",
            envelope.len(),
            signed.len()
        )));
    }
    let max = envelope.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return Ok(vec![]);
    }
    let threshold = max * 10f64.powf(conventions.peak_threshold_db / 20.0);
    let n = envelope.len();
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for i in 1..n - 1 {
        let v = envelope[i];
        if v >= threshold && v >= envelope[i - 1] && v > envelope[i + 1] {
            candidates.push((i, v));
        }
    }
    // Tallest first, suppress anything closer than the spacing.
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut kept: Vec<(usize, f64)> = Vec::new();
    for (i, v) in candidates {
        if kept
            .iter()
            .all(|&(j, _)| i.abs_diff(j) >= conventions.min_peak_spacing)
        {
            kept.push((i, v));
        }
    }
    kept.sort_by_key(|&(i, _)| i);
    Ok(kept
        .into_iter()
        .map(|(i, v)| Peak {
            sample: i,
            polarity: if signed[i] >= 0.0 { 1 } else { -1 },
            envelope_value: v,
            fwhm: fwhm_at(envelope, i),
        })
        .collect())
}

/// Width of the envelope peak at half its height, by linear interpolation
/// of the crossings; never below one sample.
pub fn fwhm_at(envelope: &[f64], peak: usize) -> f64 {
    let half = envelope[peak] / 2.0;
    let n = envelope.len();
    let mut left = peak as f64 - 0.5;
    for i in (0..peak).rev() {
        if envelope[i] <= half {
            let span = envelope[i + 1] - envelope[i];
            let frac = if span > 0.0 { (half - envelope[i]) / span } else { 0.0 };
            left = i as f64 + frac;
            break;
        }
        if i == 0 {
            left = 0.0;
        }
    }
    let mut right = peak as f64 + 0.5;
    for i in peak + 1..n {
        if envelope[i] <= half {
            let span = envelope[i - 1] - envelope[i];
            let frac = if span > 0.0 { (half - envelope[i]) / span } else { 0.0 };
            right = i as f64 - frac;
            break;
        }
        if i == n - 1 {
            right = (n - 1) as f64;
        }
    }
    (right - left).max(1.0)
}

/// Check whether two nominal arrival positions show up as two envelope
/// peaks with a dip of at least `dip_db` below the lower one.
pub fn pair_resolved(
    envelope: &[f64],
    first: usize,
    second: usize,
    conventions: &MetricConventions,
) -> bool {
    let (a, b) = if first <= second { (first, second) } else { (second, first) };
    let w = conventions.match_window;
    let peak_near = |center: usize| -> Option<usize> {
        let lo = center.saturating_sub(w);
        let hi = (center + w).min(envelope.len() - 1);
        let mut best = None;
        let mut best_v = 0.0;
        for i in lo..=hi {
            let is_local_max = (i == 0 || envelope[i] >= envelope[i - 1])
                && (i + 1 >= envelope.len() || envelope[i] > envelope[i + 1]);
            if is_local_max && envelope[i] > best_v {
                best_v = envelope[i];
                best = Some(i);
            }
        }
        best
    };
    let (Some(p1), Some(p2)) = (peak_near(a), peak_near(b)) else {
        return false;
    };
    if p1 >= p2 {
        return false;
    }
    let dip = envelope[p1 + 1..p2].iter().cloned().fold(f64::INFINITY, f64::min);
    if !dip.is_finite() {
        return false;
    }
    let lower = envelope[p1].min(envelope[p2]);
    dip <= lower * 10f64.powf(-conventions.dip_db / 20.0)
}

/// Match truth spikes to detected peaks: nearest peak within the window,
/// each peak consumed at most once.
pub fn match_truth(
    peaks: &[Peak],
    truth: &ReflectivitySeries,
    conventions: &MetricConventions,
) -> Vec<TruthMatch> {
    let mut used = vec![false; peaks.len()];
    truth
        .spike_samples()
        .into_iter()
        .map(|(truth_sample, amplitude)| {
            let mut best: Option<(usize, f64)> = None;
            for (pi, p) in peaks.iter().enumerate() {
                if used[pi] {
                    continue;
                }
                let d = (p.sample as f64 - truth_sample as f64).abs();
                if d <= conventions.match_window as f64
                    && best.map(|(_, bd)| d < bd).unwrap_or(true)
                {
                    best = Some((pi, d));
                }
            }
            match best {
                Some((pi, d)) => {
                    used[pi] = true;
                    TruthMatch {
                        truth_sample,
                        truth_amplitude: amplitude,
                        matched_sample: Some(peaks[pi].sample),
                        error_samples: Some(d),
                        polarity_ok: Some(peaks[pi].polarity as f64 * amplitude > 0.0),
                    }
                }
                None => TruthMatch {
                    truth_sample,
                    truth_amplitude: amplitude,
                    matched_sample: None,
                    error_samples: None,
                    polarity_ok: None,
                },
            }
        })
        .collect()
}

/// Normalized zero-lag cross-correlation of two equal-length sequences,
/// sign-insensitive (the estimated pulse polarity is ambiguous by
/// construction).
pub fn ncc_zero_lag_abs(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let ea: f64 = a.iter().map(|x| x * x).sum();
    let eb: f64 = b.iter().map(|x| x * x).sum();
    if ea <= 0.0 || eb <= 0.0 {
        return 0.0;
    }
    dot.abs() / (ea * eb).sqrt()
}

pub(crate) fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Spike;

    fn bump(center: f64, width: f64, height: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let d = (i as f64 - center) / width;
                height * (-d * d).exp()
            })
            .collect()
    }

    fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    #[test]
    fn two_peaks_with_deep_dip_resolve() {
        let n = 256;
        let env = add(&bump(100.0, 6.0, 1.0, n), &bump(140.0, 6.0, 0.8, n));
        let conv = MetricConventions::default();
        assert!(pair_resolved(&env, 100, 140, &conv));
        let peaks = detect_peaks(&env, &vec![1.0; n], &conv).unwrap();
        assert_eq!(peaks.len(), 2);
    }

    #[test]
    fn merged_hump_does_not_resolve() {
        let n = 256;
        let env = add(&bump(100.0, 20.0, 1.0, n), &bump(112.0, 20.0, 0.9, n));
        let conv = MetricConventions::default();
        let peaks = detect_peaks(&env, &vec![1.0; n], &conv).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!(!pair_resolved(&env, 100, 112, &conv));
    }

    #[test]
    fn shallow_dip_counts_as_unresolved() {
        let n = 256;
        // Overlapping bumps leaving a dip well under 3 dB.
        let env = add(&bump(100.0, 14.0, 1.0, n), &bump(126.0, 14.0, 1.0, n));
        let conv = MetricConventions::default();
        let dip = env[101..126].iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(dip > 0.708 * env[100].min(env[126]), "fixture dip too deep");
        assert!(!pair_resolved(&env, 100, 126, &conv));
    }

    #[test]
    fn fwhm_of_gaussian_bump() {
        let n = 256;
        let width = 9.0;
        let env = bump(128.0, width, 2.0, n);
        // exp(-(d/w)^2) = 1/2 at d = w sqrt(ln 2); FWHM = 2 w sqrt(ln 2).
        let expected = 2.0 * width * (2.0_f64.ln()).sqrt();
        let measured = fwhm_at(&env, 128);
        assert!((measured - expected).abs() < 0.2, "{measured} vs {expected}");
    }

    #[test]
    fn polarity_comes_from_signed_trace() {
        let n = 128;
        let env = bump(64.0, 4.0, 1.0, n);
        let mut signed = env.clone();
        for v in signed.iter_mut() {
            *v = -*v;
        }
        let peaks = detect_peaks(&env, &signed, &MetricConventions::default()).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].polarity, -1);
    }

    #[test]
    fn truth_matching_within_window() {
        let n = 256;
        let env = add(&bump(80.0, 4.0, 1.0, n), &bump(160.0, 4.0, 0.5, n));
        let signed: Vec<f64> = env.iter().map(|v| if *v > 0.9 { *v } else { -*v }).collect();
        let peaks = detect_peaks(&env, &signed, &MetricConventions::default()).unwrap();
        let truth = ReflectivitySeries {
            spikes: vec![
                Spike { time: 82.0, amplitude: 1.0 },
                Spike { time: 159.0, amplitude: -0.5 },
                Spike { time: 10.0, amplitude: 0.4 },
            ],
            length: n,
            fs: 1.0,
        };
        let matches = match_truth(&peaks, &truth, &MetricConventions::default());
        assert_eq!(matches[0].matched_sample, Some(80));
        assert_eq!(matches[0].error_samples, Some(2.0));
        assert_eq!(matches[1].matched_sample, Some(160));
        assert_eq!(matches[1].polarity_ok, Some(true));
        assert_eq!(matches[2].matched_sample, None);
    }

    #[test]
    fn empty_envelope_is_an_error() {
        assert!(detect_peaks(&[], &[], &MetricConventions::default()).is_err());
    }

    #[test]
    fn ncc_is_scale_and_sign_insensitive() {
        let a: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = a.iter().map(|v| -2.5 * v).collect();
        assert!((ncc_zero_lag_abs(&a, &b) - 1.0).abs() < 1e-12);
    }
}
