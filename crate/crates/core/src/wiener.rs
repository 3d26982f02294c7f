//! Regularized least-squares inverse filtering. Given an estimated pulse,
//! the inverse filter `G(f) = W*(f) / (|W(f)|^2 + eps)` is applied to the
//! trace spectrum; with the pulse treated as zero-lag-centered the output
//! is a zero-phase, band-limited reflectivity estimate. The regularizer
//! defaults to the one-percent rule `eps = 0.01 max|W(f)|^2`; a measured
//! noise-variance mode is available but off by default.

use crate::error::{Error, Result};
use crate::fft;
use crate::signal::{RfTrace, Spectrum};
use crate::wavelet::WaveletEstimate;
use num_complex::Complex64;

/// Configuration of the inverse filter.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerConfig {
    /// Fraction of the peak wavelet power used as the noise desensitizing
    /// factor.
    pub eps_factor: f64,
    /// Transform length; `None` picks the next power of two at or above
    /// trace length + wavelet length, which guarantees linear (not
    /// circular) convolution semantics.
    pub nfft: Option<usize>,
    /// When set, the regularizer is this measured noise variance instead
    /// of the one-percent rule.
    pub noise_variance: Option<f64>,
}

impl Default for WienerConfig {
    fn default() -> Self {
        WienerConfig {
            eps_factor: 0.01,
            nfft: None,
            noise_variance: None,
        }
    }
}

impl WienerConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eps_factor > 0.0) || !self.eps_factor.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "eps_factor {} must be positive",
                self.eps_factor
            )));
        }
        if let Some(v) = self.noise_variance {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "noise variance {v} must be positive"
                )));
            }
        }
        Ok(())
    }

    fn resolve_nfft(&self, trace_len: usize, wavelet_len: usize) -> usize {
        self.nfft
            .unwrap_or_else(|| fft::next_pow2(trace_len + wavelet_len))
    }
}

/// Filter diagnostics kept with the deconvolved trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DeconDiagnostics {
    /// Regularizer actually used.
    pub eps: f64,
    /// First and last positive-frequency bins where the wavelet power
    /// clears 10x the regularizer; the filter is near-unity inside.
    pub passband_bins: (usize, usize),
}

/// Zero-phase reflectivity estimate with its full spectrum retained for
/// the spectral extrapolation stage.
#[derive(Debug, Clone)]
pub struct DeconTrace {
    pub samples: Vec<f64>,
    pub fs: f64,
    /// `R(f)` on the transform grid, Hermitian.
    pub spectrum: Spectrum,
    pub wavelet_used: WaveletEstimate,
    pub diagnostics: DeconDiagnostics,
}

impl DeconTrace {
    pub fn as_trace(&self) -> RfTrace {
        RfTrace {
            samples: self.samples.clone(),
            fs: self.fs,
            t0: 0.0,
        }
    }
}

/// Wavelet spectrum on the `nfft` grid with the zero lag at the origin, so
/// phases encode no time shift.
fn wavelet_spectrum(wavelet: &WaveletEstimate, nfft: usize) -> Vec<Complex64> {
    let l = wavelet.len();
    let center = l / 2;
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for (i, &v) in wavelet.samples.iter().enumerate() {
        let idx = (i + nfft - center) % nfft;
        buf[idx] += Complex64::new(v, 0.0);
    }
    fft::forward(&mut buf);
    buf
}

fn regularizer(w: &[Complex64], cfg: &WienerConfig) -> Result<f64> {
    let max_power = w.iter().map(|c| c.norm_sqr()).fold(0.0_f64, f64::max);
    if max_power == 0.0 {
        return Err(Error::ZeroWavelet);
    }
    Ok(match cfg.noise_variance {
        Some(v) => v,
        None => cfg.eps_factor * max_power,
    })
}

fn passband(w: &[Complex64], eps: f64, nyq: usize) -> (usize, usize) {
    let mut lo = 0;
    let mut hi = 0;
    let mut found = false;
    for (k, c) in w.iter().enumerate().take(nyq + 1) {
        if c.norm_sqr() >= 10.0 * eps {
            if !found {
                lo = k;
                found = true;
            }
            hi = k;
        }
    }
    (lo, hi)
}

/// The inverse filter `G(f) = W*(f) / (|W(f)|^2 + eps)` on the `nfft`
/// grid. `nfft` defaults to the next power of two above twice the wavelet
/// length when the config leaves it unset.
pub fn wiener_filter_spectrum(wavelet: &WaveletEstimate, cfg: &WienerConfig) -> Result<Spectrum> {
    cfg.validate()?;
    let nfft = cfg.resolve_nfft(wavelet.len(), wavelet.len());
    let w = wavelet_spectrum(wavelet, nfft);
    let eps = regularizer(&w, cfg)?;
    let bins = w
        .iter()
        .map(|c| c.conj() / (c.norm_sqr() + eps))
        .collect();
    Ok(Spectrum {
        bins,
        df: wavelet.fs / nfft as f64,
        hermitian: true,
    })
}

/// Deconvolve a trace with the estimated wavelet. The output keeps the
/// trace length and sampling rate; the transform grid spectrum rides along
/// for the extrapolation stage.
pub fn wiener_deconvolve(
    trace: &RfTrace,
    wavelet: &WaveletEstimate,
    cfg: &WienerConfig,
) -> Result<DeconTrace> {
    cfg.validate()?;
    if relative_ne(trace.fs, wavelet.fs) {
        return Err(Error::FsMismatch {
            a: trace.fs,
            b: wavelet.fs,
        });
    }
    let nfft = cfg.resolve_nfft(trace.len(), wavelet.len());
    if nfft < trace.len() {
        return Err(Error::NfftTooSmall {
            nfft,
            min: trace.len(),
        });
    }
    let w = wavelet_spectrum(wavelet, nfft);
    let eps = regularizer(&w, cfg)?;
    let mut bins = fft::forward_real(&trace.samples, nfft);
    for (b, wf) in bins.iter_mut().zip(&w) {
        *b = *b * wf.conj() / (wf.norm_sqr() + eps);
    }
    let spectrum = Spectrum {
        bins,
        df: trace.fs / nfft as f64,
        hermitian: true,
    };
    let samples = spectrum.into_real_signal(trace.len())?;
    let diagnostics = DeconDiagnostics {
        eps,
        passband_bins: passband(&w, eps, nfft / 2),
    };
    Ok(DeconTrace {
        samples,
        fs: trace.fs,
        spectrum,
        wavelet_used: wavelet.clone(),
        diagnostics,
    })
}

fn relative_ne(a: f64, b: f64) -> bool {
    (a - b).abs() > 1e-9 * a.abs().max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_impulse_wavelet(len: usize, fs: f64) -> WaveletEstimate {
        let mut samples = vec![0.0; len];
        samples[len / 2] = 1.0;
        WaveletEstimate::from_samples(samples, fs, 0.0).unwrap()
    }

    fn gabor(len: usize, fs: f64, fc: f64, sigma: f64) -> Vec<f64> {
        let center = len as f64 / 2.0;
        (0..len)
            .map(|i| {
                let t = (i as f64 - center) / fs;
                (-t * t / (2.0 * sigma * sigma)).exp()
                    * (2.0 * std::f64::consts::PI * fc * t).cos()
            })
            .collect()
    }

    #[test]
    fn identity_wavelet_scales_by_one_over_one_plus_eps() {
        let fs = 100e6;
        let trace = RfTrace::new(
            (0..500).map(|i| ((i * 13) as f64 * 0.01).sin()).collect(),
            fs,
        )
        .unwrap();
        let wavelet = unit_impulse_wavelet(32, fs);
        let out = wiener_deconvolve(&trace, &wavelet, &WienerConfig::default()).unwrap();
        let peak = trace.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (o, s) in out.samples.iter().zip(&trace.samples) {
            assert!((o - s / 1.01).abs() <= 1e-12 * peak, "{o} vs {}", s / 1.01);
        }
    }

    #[test]
    fn filter_spectrum_of_flat_wavelet() {
        let fs = 1.0;
        let wavelet = unit_impulse_wavelet(16, fs);
        let g = wiener_filter_spectrum(&wavelet, &WienerConfig::default()).unwrap();
        for b in &g.bins {
            assert!((b.re - 1.0 / 1.01).abs() < 1e-12);
            assert!(b.im.abs() < 1e-12);
        }
    }

    #[test]
    fn filter_times_wavelet_is_real_and_bounded() {
        let fs = 100e6;
        let samples = gabor(64, fs, 5e6, 1.5e-7);
        let wavelet = WaveletEstimate::from_samples(samples, fs, 0.0).unwrap();
        let cfg = WienerConfig::default();
        let nfft = cfg.resolve_nfft(wavelet.len(), wavelet.len());
        let w = wavelet_spectrum(&wavelet, nfft);
        let g = wiener_filter_spectrum(&wavelet, &cfg).unwrap();
        let cap = 1.0 / (1.0 + cfg.eps_factor);
        let max_power = w.iter().map(|c| c.norm_sqr()).fold(0.0_f64, f64::max);
        let mut hit_cap = false;
        for (gf, wf) in g.bins.iter().zip(&w) {
            let t = gf * wf;
            assert!(t.im.abs() < 1e-12 * max_power);
            assert!(t.re >= -1e-15);
            assert!(t.re <= cap + 1e-12);
            if (wf.norm_sqr() - max_power).abs() <= 1e-9 * max_power {
                assert!((t.re - cap).abs() < 1e-9, "peak-bin transfer {}", t.re);
                hit_cap = true;
            }
        }
        assert!(hit_cap);
    }

    #[test]
    fn self_deconvolution_is_zero_phase() {
        let fs = 100e6;
        let n = 2048usize;
        let tc = 900usize;
        let pulse = gabor(96, fs, 5e6, 1.25e-7);
        // Rotate the data pulse so the test covers a non-symmetric wavelet.
        let wavelet = WaveletEstimate::from_samples(pulse.clone(), fs, 0.0).unwrap();
        let mut samples = vec![0.0; n];
        for (i, &v) in pulse.iter().enumerate() {
            samples[tc - 48 + i] = v;
        }
        let trace = RfTrace::new(samples, fs).unwrap();
        let out = wiener_deconvolve(&trace, &wavelet, &WienerConfig::default()).unwrap();
        let peak_idx = out
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0;
        assert_eq!(peak_idx, tc);
        let peak = out.samples[tc].abs();
        for k in 1..400 {
            let d = (out.samples[tc + k] - out.samples[tc - k]).abs();
            assert!(d <= 1e-6 * peak, "asymmetry {d} at lag {k}");
        }
    }

    #[test]
    fn wavelet_scaling_covariance() {
        let fs = 100e6;
        let n = 1024usize;
        let pulse = gabor(64, fs, 5e6, 1.25e-7);
        let mut samples = vec![0.0; n];
        for (i, &v) in pulse.iter().enumerate() {
            samples[400 + i] = 0.8 * v;
        }
        samples[700] = 0.3;
        let trace = RfTrace::new(samples, fs).unwrap();
        let unscaled = WaveletEstimate::from_samples(pulse.clone(), fs, 0.0).unwrap();
        let c = 3.7;
        let mut scaled = unscaled.clone();
        for v in scaled.samples.iter_mut() {
            *v *= c;
        }
        let a = wiener_deconvolve(&trace, &unscaled, &WienerConfig::default()).unwrap();
        let b = wiener_deconvolve(&trace, &scaled, &WienerConfig::default()).unwrap();
        let peak = a.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x - y * c).abs() <= 1e-9 * peak);
        }
    }

    #[test]
    fn fs_mismatch_is_rejected() {
        let trace = RfTrace::new(vec![0.0, 1.0, 0.0, -1.0], 50e6).unwrap();
        let wavelet = unit_impulse_wavelet(4, 100e6);
        assert!(matches!(
            wiener_deconvolve(&trace, &wavelet, &WienerConfig::default()),
            Err(Error::FsMismatch { .. })
        ));
    }

    #[test]
    fn zero_wavelet_is_rejected() {
        assert!(matches!(
            WaveletEstimate::from_samples(vec![0.0; 16], 1.0, 0.0),
            Err(Error::ZeroWavelet)
        ));
    }

    #[test]
    fn linearity() {
        let fs = 1.0;
        let n = 256usize;
        let wavelet =
            WaveletEstimate::from_samples(gabor(32, fs, 0.2, 8.0), fs, 0.0).unwrap();
        let s1: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).sin()).collect();
        let s2: Vec<f64> = (0..n).map(|i| (i as f64 * 0.043).cos()).collect();
        let (a, b) = (1.7, -0.6);
        let mixed: Vec<f64> = s1.iter().zip(&s2).map(|(x, y)| a * x + b * y).collect();
        let cfg = WienerConfig::default();
        let d1 = wiener_deconvolve(&RfTrace::new(s1, fs).unwrap(), &wavelet, &cfg).unwrap();
        let d2 = wiener_deconvolve(&RfTrace::new(s2, fs).unwrap(), &wavelet, &cfg).unwrap();
        let dm = wiener_deconvolve(&RfTrace::new(mixed, fs).unwrap(), &wavelet, &cfg).unwrap();
        let peak = dm.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            let expected = a * d1.samples[i] + b * d2.samples[i];
            assert!((dm.samples[i] - expected).abs() <= 1e-9 * peak);
        }
    }
}
