//! Trace and spectrum data types plus the spectral primitives the rest of
//! the crate is built on: analytic signal, envelope, constant-phase
//! rotation, biased autocorrelation, and the magnitude spectrum recovered
//! from an autocorrelation sequence.
//!
//! Every function here is a pure function of its inputs; all types are
//! plain value data and can be moved freely across threads.

use crate::error::{Error, Result};
use crate::fft;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A uniformly sampled real-valued RF trace (one A-scan).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfTrace {
    pub samples: Vec<f64>,
    /// Sampling rate in Hz.
    pub fs: f64,
    /// Time of the first sample in seconds.
    pub t0: f64,
}

impl RfTrace {
    /// Build a trace starting at t = 0, validating the basic invariants:
    /// at least two finite samples and a positive sampling rate.
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::TraceTooShort {
                len: samples.len(),
                min: 2,
            });
        }
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::InvalidTrace(format!("sampling rate {fs} Hz")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTrace(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, fs, t0: 0.0 })
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Copy of the trace with its sample mean removed.
    pub fn mean_removed(&self) -> RfTrace {
        let mean = self.samples.iter().sum::<f64>() / self.len() as f64;
        RfTrace {
            samples: self.samples.iter().map(|v| v - mean).collect(),
            fs: self.fs,
            t0: self.t0,
        }
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }
}

/// Complex spectrum over bins k = 0..N-1 at spacing `df`, i.e. the
/// unnormalized DFT of a length-N signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    /// Bin width in Hz.
    pub df: f64,
    /// Set when the bins represent a real time signal.
    pub hermitian: bool,
}

impl Spectrum {
    /// Spectrum of a real trace zero-padded to `nfft` bins.
    pub fn from_real_signal(x: &[f64], fs: f64, nfft: usize) -> Result<Self> {
        if nfft < x.len() || nfft < 2 {
            return Err(Error::NfftTooSmall {
                nfft,
                min: x.len().max(2),
            });
        }
        Ok(Spectrum {
            bins: fft::forward_real(x, nfft),
            df: fs / nfft as f64,
            hermitian: true,
        })
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Index of the Nyquist bin (N/2 for even N, (N-1)/2 for odd N).
    pub fn nyquist_bin(&self) -> usize {
        self.bins.len() / 2
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }

    /// Worst relative deviation from `bin[k] == conj(bin[N-k])`.
    pub fn hermitian_residue(&self) -> f64 {
        let n = self.bins.len();
        let peak = self.bins.iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for k in 1..n {
            let d = (self.bins[k] - self.bins[n - k].conj()).norm();
            worst = worst.max(d);
        }
        worst / peak
    }

    /// Inverse transform to a real signal of `len` samples. Fails when the
    /// imaginary residue exceeds 1e-9 relative, which would mean the bins
    /// were not Hermitian to begin with.
    pub fn into_real_signal(&self, len: usize) -> Result<Vec<f64>> {
        if len > self.bins.len() {
            return Err(Error::DimensionMismatch(format!(
                "requested {len} samples from {} bins",
                self.bins.len()
            )));
        }
        let mut buf = self.bins.clone();
        fft::inverse(&mut buf);
        let residue = fft::relative_imag_residue(&buf);
        if residue > 1e-9 {
            return Err(Error::DimensionMismatch(format!(
                "imaginary residue {residue:.3e} after inverse transform"
            )));
        }
        Ok(buf[..len].iter().map(|c| c.re).collect())
    }
}

/// A real trace paired with its Hilbert transform.
#[derive(Debug, Clone)]
pub struct AnalyticTrace {
    pub real_part: Vec<f64>,
    pub imag_part: Vec<f64>,
    pub fs: f64,
}

impl AnalyticTrace {
    pub fn envelope_samples(&self) -> Vec<f64> {
        self.real_part
            .iter()
            .zip(&self.imag_part)
            .map(|(r, i)| r.hypot(*i))
            .collect()
    }
}

/// Lag window applied to an autocorrelation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaperKind {
    None,
    /// Raised-cosine lag window, 1 at lag 0 decaying to 0 at `max_lag`.
    HannLag,
}

/// Biased sample autocorrelation over lags `0..=max_lag`.
#[derive(Debug, Clone)]
pub struct Autocorrelation {
    pub values: Vec<f64>,
    pub max_lag: usize,
    pub taper: TaperKind,
    /// Sampling rate of the trace the estimate came from, carried so a
    /// spectrum derived from it knows its bin width.
    pub fs: f64,
}

const MIN_ANALYTIC_LEN: usize = 8;

/// Analytic signal via the frequency-domain quadrature filter: the DC and
/// Nyquist bins are zeroed, positive frequencies doubled, negative
/// frequencies dropped. The real part of the result is the input itself;
/// the imaginary part is the discrete (circular) Hilbert transform.
pub fn analytic_signal(trace: &RfTrace) -> Result<AnalyticTrace> {
    let n = trace.len();
    if n < MIN_ANALYTIC_LEN {
        return Err(Error::TraceTooShort {
            len: n,
            min: MIN_ANALYTIC_LEN,
        });
    }
    let mut buf = fft::forward_real(&trace.samples, n);
    // Positive frequencies double, DC/Nyquist/negative frequencies zero.
    // Dropping DC and Nyquist only affects the real part of the inverse
    // transform, which we replace with the input anyway.
    let zero = Complex64::new(0.0, 0.0);
    buf[0] = zero;
    let half = n / 2;
    // Last positive-frequency bin: n/2 - 1 for even n, (n-1)/2 for odd n.
    let last_pos = if n % 2 == 0 { half - 1 } else { half };
    for b in buf.iter_mut().take(last_pos + 1).skip(1) {
        *b *= 2.0;
    }
    for b in buf.iter_mut().skip(last_pos + 1) {
        *b = zero;
    }
    fft::inverse(&mut buf);
    Ok(AnalyticTrace {
        real_part: trace.samples.clone(),
        imag_part: buf.iter().map(|c| c.im).collect(),
        fs: trace.fs,
    })
}

/// Envelope of the analytic signal, pointwise at least `|samples|`.
pub fn envelope(trace: &RfTrace) -> Result<RfTrace> {
    let analytic = analytic_signal(trace)?;
    Ok(RfTrace {
        samples: analytic.envelope_samples(),
        fs: trace.fs,
        t0: trace.t0,
    })
}

/// Constant-phase rotation `s cos(phi) + H[s] sin(phi)`.
pub fn phase_rotate(trace: &RfTrace, phi: f64) -> Result<RfTrace> {
    let analytic = analytic_signal(trace)?;
    let (c, s) = (phi.cos(), phi.sin());
    Ok(RfTrace {
        samples: analytic
            .real_part
            .iter()
            .zip(&analytic.imag_part)
            .map(|(re, im)| re * c + im * s)
            .collect(),
        fs: trace.fs,
        t0: trace.t0,
    })
}

/// Rotation applied to a precomputed analytic pair. Lets a grid search
/// reuse one Hilbert transform across many angles.
pub fn rotate_analytic(analytic: &AnalyticTrace, phi: f64) -> Vec<f64> {
    let (c, s) = (phi.cos(), phi.sin());
    analytic
        .real_part
        .iter()
        .zip(&analytic.imag_part)
        .map(|(re, im)| re * c + im * s)
        .collect()
}

/// Biased sample autocorrelation `r[k] = (1/N) sum s[n] s[n+k]` for
/// `k = 0..=max_lag`, multiplied by the selected lag window. The biased
/// estimator keeps the sequence non-negative definite so the derived power
/// spectrum stays non-negative before any tapering artifacts.
pub fn autocorrelation(trace: &RfTrace, max_lag: usize, taper: TaperKind) -> Result<Autocorrelation> {
    let n = trace.len();
    if max_lag >= n {
        return Err(Error::MaxLagOutOfRange { max_lag, len: n });
    }
    let s = &trace.samples;
    let mut values = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let mut acc = 0.0;
        for i in 0..n - k {
            acc += s[i] * s[i + k];
        }
        values.push(acc / n as f64);
    }
    if taper == TaperKind::HannLag && max_lag > 0 {
        for (k, v) in values.iter_mut().enumerate() {
            let w = 0.5 * (1.0 + (std::f64::consts::PI * k as f64 / max_lag as f64).cos());
            *v *= w;
        }
    }
    Ok(Autocorrelation {
        values,
        max_lag,
        taper,
        fs: trace.fs,
    })
}

/// Magnitude spectrum plus the count of power bins that had to be clamped
/// to zero before the square root.
#[derive(Debug, Clone)]
pub struct AcfSpectrum {
    pub spectrum: Spectrum,
    /// Bins where lag tapering pushed the power estimate negative.
    pub clamped_bins: usize,
}

/// Magnitude spectrum of the underlying signal estimated from its
/// autocorrelation: the lags are extended symmetrically to negative lags,
/// zero-padded to `nfft` and transformed. The transform of the (biased,
/// tapered) autocorrelation is a power spectrum; negative values from
/// tapering are clamped to zero and the square root taken.
pub fn amplitude_spectrum_from_acf(acf: &Autocorrelation, nfft: usize) -> Result<AcfSpectrum> {
    let min = 2 * acf.max_lag + 1;
    if nfft < min {
        return Err(Error::NfftTooSmall { nfft, min });
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    buf[0] = Complex64::new(acf.values[0], 0.0);
    for k in 1..=acf.max_lag {
        buf[k] = Complex64::new(acf.values[k], 0.0);
        buf[nfft - k] = Complex64::new(acf.values[k], 0.0);
    }
    fft::forward(&mut buf);
    let mut clamped = 0usize;
    let bins: Vec<Complex64> = buf
        .iter()
        .map(|c| {
            let p = c.re;
            if p < 0.0 {
                clamped += 1;
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(p.sqrt(), 0.0)
            }
        })
        .collect();
    Ok(AcfSpectrum {
        spectrum: Spectrum {
            bins,
            df: acf.fs / nfft as f64,
            hermitian: true,
        },
        clamped_bins: clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(n: usize, fs: f64, f0: f64, amp: f64) -> RfTrace {
        let samples = (0..n)
            .map(|i| amp * (2.0 * PI * f0 * i as f64 / fs).cos())
            .collect();
        RfTrace::new(samples, fs).unwrap()
    }

    #[test]
    fn trace_validation_rejects_bad_input() {
        assert!(matches!(
            RfTrace::new(vec![1.0], 1.0),
            Err(Error::TraceTooShort { .. })
        ));
        assert!(RfTrace::new(vec![1.0, 2.0], 0.0).is_err());
        assert!(RfTrace::new(vec![1.0, f64::NAN], 1.0).is_err());
    }

    #[test]
    fn analytic_of_cosine_is_sine() {
        // 8 cycles in 512 samples, well inside the band.
        let n = 512;
        let trace = tone(n, n as f64, 8.0, 1.0);
        let analytic = analytic_signal(&trace).unwrap();
        for i in 0..n {
            let expected = (2.0 * PI * 8.0 * i as f64 / n as f64).sin();
            assert!(
                (analytic.imag_part[i] - expected).abs() < 1e-6,
                "at {i}: {} vs {expected}",
                analytic.imag_part[i]
            );
        }
        assert_eq!(analytic.real_part, trace.samples);
    }

    #[test]
    fn analytic_of_zero_is_zero() {
        let trace = RfTrace::new(vec![0.0; 64], 1.0).unwrap();
        let analytic = analytic_signal(&trace).unwrap();
        assert!(analytic.imag_part.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn analytic_rejects_short_trace() {
        let trace = RfTrace::new(vec![1.0; 4], 1.0).unwrap();
        assert!(matches!(
            analytic_signal(&trace),
            Err(Error::TraceTooShort { .. })
        ));
    }

    #[test]
    fn impulse_hilbert_matches_closed_form_kernel() {
        // The circular Hilbert kernel of even length N has the closed form
        // h[m] = (2/N) cot(pi m / N) for odd m and 0 for even m. An impulse
        // at the center must reproduce it exactly (independent of the FFT
        // route used by the implementation).
        let n = 1024usize;
        let center = n / 2;
        let mut samples = vec![0.0; n];
        samples[center] = 1.0;
        let trace = RfTrace::new(samples, 1.0).unwrap();
        let analytic = analytic_signal(&trace).unwrap();
        for i in 0..n {
            let m = (i + n - center) % n;
            let expected = if m == 0 || m % 2 == 0 {
                0.0
            } else {
                2.0 / (n as f64 * (PI * m as f64 / n as f64).tan())
            };
            assert!(
                (analytic.imag_part[i] - expected).abs() < 1e-10,
                "lag {m}: {} vs {expected}",
                analytic.imag_part[i]
            );
        }
        // Away from the wrap point the periodic kernel is close to the
        // aperiodic 1/(pi t) kernel.
        for m in (1..200usize).step_by(2) {
            let aperiodic = 2.0 / (PI * m as f64);
            assert!((analytic.imag_part[center + m] - aperiodic).abs() < 5e-3);
        }
    }

    #[test]
    fn envelope_of_tone_is_flat() {
        let n = 1024;
        let amp = 2.5;
        let trace = tone(n, n as f64, 32.0, amp);
        let env = envelope(&trace).unwrap();
        let edge = n / 20;
        for i in edge..n - edge {
            assert!(
                (env.samples[i] - amp).abs() < 0.01 * amp,
                "at {i}: {}",
                env.samples[i]
            );
        }
    }

    #[test]
    fn envelope_of_gaussian_tone_tracks_gaussian() {
        let n = 2048usize;
        let fs = n as f64;
        let f0 = 128.0;
        let sigma = 2.5 / f0 * fs; // f0*sigma = 2.5 cycles, in samples
        let center = n as f64 / 2.0;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 - center;
                (-t * t / (2.0 * sigma * sigma)).exp() * (2.0 * PI * f0 * t / fs).cos()
            })
            .collect();
        let trace = RfTrace::new(samples, fs).unwrap();
        let env = envelope(&trace).unwrap();
        let edge = n / 20;
        for i in edge..n - edge {
            let t = i as f64 - center;
            let expected = (-t * t / (2.0 * sigma * sigma)).exp();
            if expected > 1e-3 {
                assert!(
                    (env.samples[i] - expected).abs() < 0.02 * expected,
                    "at {i}: {} vs {expected}",
                    env.samples[i]
                );
            }
        }
    }

    #[test]
    fn envelope_dominates_signal() {
        let n = 256;
        let trace = tone(n, n as f64, 13.0, 1.0);
        let env = envelope(&trace).unwrap();
        for i in 0..n {
            assert!(env.samples[i] >= trace.samples[i].abs() - 1e-9);
        }
    }

    #[test]
    fn rotation_by_zero_pi_and_half_pi() {
        let n = 512;
        let trace = tone(n, n as f64, 20.0, 1.3);
        let r0 = phase_rotate(&trace, 0.0).unwrap();
        for (a, b) in r0.samples.iter().zip(&trace.samples) {
            assert!((a - b).abs() < 1e-12);
        }
        let rpi = phase_rotate(&trace, PI).unwrap();
        for (a, b) in rpi.samples.iter().zip(&trace.samples) {
            assert!((a + b).abs() < 1e-9);
        }
        let rhalf = phase_rotate(&trace, PI / 2.0).unwrap();
        let hilbert = analytic_signal(&trace).unwrap().imag_part;
        for (a, b) in rhalf.samples.iter().zip(&hilbert) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn acf_of_impulse() {
        let n = 64;
        let mut samples = vec![0.0; n];
        samples[10] = 1.0;
        let trace = RfTrace::new(samples, 1.0).unwrap();
        let acf = autocorrelation(&trace, 8, TaperKind::None).unwrap();
        assert!((acf.values[0] - 1.0 / n as f64).abs() < 1e-15);
        for k in 1..=8 {
            assert_eq!(acf.values[k], 0.0);
        }
    }

    #[test]
    fn acf_of_constant() {
        let n = 50usize;
        let c = 1.7;
        let trace = RfTrace::new(vec![c; n], 1.0).unwrap();
        let acf = autocorrelation(&trace, 10, TaperKind::None).unwrap();
        for k in 0..=10 {
            let expected = c * c * (n - k) as f64 / n as f64;
            assert!((acf.values[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn acf_rejects_out_of_range_lag() {
        let trace = RfTrace::new(vec![1.0; 16], 1.0).unwrap();
        assert!(matches!(
            autocorrelation(&trace, 16, TaperKind::None),
            Err(Error::MaxLagOutOfRange { .. })
        ));
    }

    #[test]
    fn white_noise_acf_is_small_off_zero() {
        // Monte Carlo: normalized off-zero lags stay within ~3/sqrt(N) for
        // 99% of lags across seeds.
        use rand::{Rng, SeedableRng};
        let n = 4096usize;
        let bound = 3.0 / (n as f64).sqrt();
        let mut total = 0usize;
        let mut inside = 0usize;
        for seed in 0..10u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let trace = RfTrace::new(samples, 1.0).unwrap();
            let acf = autocorrelation(&trace, 64, TaperKind::None).unwrap();
            for k in 1..=64 {
                total += 1;
                if (acf.values[k] / acf.values[0]).abs() <= bound {
                    inside += 1;
                }
            }
        }
        assert!(
            inside as f64 >= 0.99 * total as f64,
            "{inside}/{total} lags inside bound"
        );
    }

    #[test]
    fn acf_spectrum_of_lag0_impulse_is_flat() {
        let acf = Autocorrelation {
            values: vec![1.0, 0.0, 0.0, 0.0],
            max_lag: 3,
            taper: TaperKind::None,
            fs: 1.0,
        };
        let out = amplitude_spectrum_from_acf(&acf, 16).unwrap();
        assert_eq!(out.clamped_bins, 0);
        for b in &out.spectrum.bins {
            assert!((b.re - 1.0).abs() < 1e-12);
            assert_eq!(b.im, 0.0);
        }
    }

    #[test]
    fn acf_spectrum_of_cosine_peaks_at_tone_bins() {
        let n = 1024usize;
        let fs = 1024.0;
        let cycles = 128.0;
        let trace = tone(n, fs, cycles, 1.0);
        let acf = autocorrelation(&trace, 64, TaperKind::None).unwrap();
        let nfft = 256;
        let out = amplitude_spectrum_from_acf(&acf, nfft).unwrap();
        let mags: Vec<f64> = out.spectrum.bins[..=nfft / 2]
            .iter()
            .map(|c| c.re)
            .collect();
        let peak = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let expected_bin = (cycles / fs * nfft as f64).round() as usize;
        assert!(
            (peak as i64 - expected_bin as i64).abs() <= 1,
            "peak at {peak}, expected near {expected_bin}"
        );
    }

    #[test]
    fn acf_spectrum_rejects_small_nfft() {
        let acf = Autocorrelation {
            values: vec![1.0, 0.5],
            max_lag: 1,
            taper: TaperKind::None,
            fs: 1.0,
        };
        assert!(matches!(
            amplitude_spectrum_from_acf(&acf, 2),
            Err(Error::NfftTooSmall { .. })
        ));
    }
}
