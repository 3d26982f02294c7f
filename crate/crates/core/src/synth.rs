//! Forward model and generators for synthetic experiments: signed sparse
//! reflectivity series, band-limited pulse prototypes, and the convolution
//! `s = w * r + noise` with calibrated additive Gaussian noise. Everything
//! is deterministic given the seed (ChaCha8), so fixtures are reproducible
//! across platforms.

use crate::error::{Error, Result};
use crate::signal::{phase_rotate, RfTrace};
use crate::wavelet::WaveletEstimate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One reflection coefficient: arrival time and signed amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    /// Arrival time in seconds.
    pub time: f64,
    pub amplitude: f64,
}

/// Idealized reflectivity: a handful of signed deltas on a dense grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectivitySeries {
    pub spikes: Vec<Spike>,
    /// Rendered trace length in samples.
    pub length: usize,
    pub fs: f64,
}

impl ReflectivitySeries {
    /// Nearest-sample position of each spike.
    pub fn spike_samples(&self) -> Vec<(usize, f64)> {
        self.spikes
            .iter()
            .map(|s| ((s.time * self.fs).round() as usize, s.amplitude))
            .collect()
    }

    /// Bernoulli-Gaussian series: every sample carries a standard normal
    /// amplitude with probability `density`.
    pub fn bernoulli_gaussian(length: usize, fs: f64, density: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spikes = Vec::new();
        for i in 0..length {
            if rng.gen::<f64>() < density {
                let amplitude: f64 = rng.sample(rand_distr::StandardNormal);
                spikes.push(Spike {
                    time: i as f64 / fs,
                    amplitude,
                });
            }
        }
        ReflectivitySeries { spikes, length, fs }
    }
}

/// Pulse prototypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    /// Gaussian-envelope cosine; the envelope width is set from the
    /// requested fractional -6 dB bandwidth.
    Gabor,
    /// Second derivative of a Gaussian with its spectral peak at `fc`;
    /// its bandwidth is fixed by shape, so `bandwidth_frac` is ignored.
    Ricker,
}

/// Parameters of a generated ultrasonic pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub kind: PulseKind,
    /// Center frequency in Hz.
    pub fc: f64,
    /// Fractional -6 dB bandwidth relative to `fc`.
    pub bandwidth_frac: f64,
    /// Constant phase applied to the zero-phase prototype.
    pub phase: f64,
    /// Support in samples (even).
    pub length: usize,
    pub fs: f64,
}

impl PulseSpec {
    fn validate(&self) -> Result<()> {
        if !(self.fc > 0.0 && self.fc < self.fs / 2.0) {
            return Err(Error::InvalidPulseSpec(format!(
                "fc {} Hz outside (0, fs/2)",
                self.fc
            )));
        }
        if !(self.bandwidth_frac > 0.0 && self.bandwidth_frac < 2.0) {
            return Err(Error::InvalidPulseSpec(format!(
                "bandwidth_frac {}",
                self.bandwidth_frac
            )));
        }
        if self.length < 8 || self.length % 2 != 0 {
            return Err(Error::InvalidPulseSpec(format!(
                "length {} (must be even and >= 8)",
                self.length
            )));
        }
        Ok(())
    }
}

/// Additive noise description; `snr_db = None` means noiseless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Clean-signal-power to noise-power ratio in dB.
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec {
            snr_db: None,
            seed: 0,
        }
    }

    pub fn snr(snr_db: f64, seed: u64) -> Self {
        NoiseSpec {
            snr_db: Some(snr_db),
            seed,
        }
    }
}

/// Generate a pulse: zero-phase prototype, constant-phase rotation,
/// peak normalization, center at `length/2`. The result plugs in anywhere
/// a [`WaveletEstimate`] is accepted.
pub fn make_pulse(spec: &PulseSpec) -> Result<WaveletEstimate> {
    spec.validate()?;
    let center = spec.length as f64 / 2.0;
    let proto: Vec<f64> = match spec.kind {
        PulseKind::Gabor => {
            // -6 dB spectral full width B = bandwidth_frac * fc for a
            // Gaussian envelope exp(-t^2 / 2 sigma^2):
            // sigma = sqrt(2 ln 2) / (pi B).
            let b = spec.bandwidth_frac * spec.fc;
            let sigma = (2.0 * 2.0_f64.ln()).sqrt() / (PI * b);
            (0..spec.length)
                .map(|i| {
                    let t = (i as f64 - center) / spec.fs;
                    (-t * t / (2.0 * sigma * sigma)).exp() * (2.0 * PI * spec.fc * t).cos()
                })
                .collect()
        }
        PulseKind::Ricker => (0..spec.length)
            .map(|i| {
                let t = (i as f64 - center) / spec.fs;
                let u = PI * spec.fc * t;
                (1.0 - 2.0 * u * u) * (-u * u).exp()
            })
            .collect(),
    };
    let samples = if spec.phase == 0.0 {
        proto
    } else {
        let trace = RfTrace::new(proto, spec.fs)?;
        phase_rotate(&trace, spec.phase)?.samples
    };
    let mut wavelet = WaveletEstimate::from_samples(samples, spec.fs, 0.0)?;
    wavelet.phase = crate::wavelet::canonical_phase(spec.phase);
    Ok(wavelet)
}

/// Render the deltas onto the dense sample grid. Two spikes landing on the
/// same sample or outside the trace are rejected.
pub fn render_reflectivity(r: &ReflectivitySeries) -> Result<RfTrace> {
    let mut samples = vec![0.0; r.length];
    for spike in &r.spikes {
        let pos = (spike.time * r.fs).round();
        if !(pos >= 0.0) || pos as usize >= r.length {
            return Err(Error::SpikeOutOfRange { time_s: spike.time });
        }
        let idx = pos as usize;
        if samples[idx] != 0.0 {
            return Err(Error::SpikeCollision { sample: idx });
        }
        samples[idx] = spike.amplitude;
    }
    RfTrace::new(samples, r.fs)
}

/// Forward model: reflectivity convolved with the pulse (pulse center
/// aligned to the spike sample) plus seeded Gaussian noise scaled so the
/// clean-to-noise power ratio is exactly `snr_db`.
pub fn synthesize_rf(
    r: &ReflectivitySeries,
    pulse: &WaveletEstimate,
    noise: &NoiseSpec,
) -> Result<RfTrace> {
    if (pulse.fs - r.fs).abs() > 1e-9 * r.fs.max(pulse.fs) {
        return Err(Error::FsMismatch {
            a: r.fs,
            b: pulse.fs,
        });
    }
    // Validation of spike placement happens in render_reflectivity.
    render_reflectivity(r)?;
    let center = pulse.len() / 2;
    let mut clean = vec![0.0; r.length];
    for (pos, amplitude) in r.spike_samples() {
        for (j, &w) in pulse.samples.iter().enumerate() {
            let idx = pos as i64 + j as i64 - center as i64;
            if idx >= 0 && (idx as usize) < r.length {
                clean[idx as usize] += amplitude * w;
            }
        }
    }
    let samples = match noise.snr_db {
        None => clean,
        Some(snr_db) => {
            let clean_power = clean.iter().map(|v| v * v).sum::<f64>() / r.length as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            let raw: Vec<f64> = (0..r.length)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let raw_power = raw.iter().map(|v| v * v).sum::<f64>() / r.length as f64;
            let target_power = clean_power * 10f64.powf(-snr_db / 10.0);
            // Scale the realization to the exact target power so the
            // measured ratio matches the request, not just in expectation.
            let scale = if raw_power > 0.0 {
                (target_power / raw_power).sqrt()
            } else {
                0.0
            };
            clean
                .iter()
                .zip(&raw)
                .map(|(c, n)| c + scale * n)
                .collect()
        }
    };
    RfTrace::new(samples, r.fs)
}

/// Canonical five-reflector scenario mirroring the synthetic crack-sizing
/// experiment: lateral wave (+), upper tip (-), lower tip (+) half a pulse
/// period later, notch (+), and a strong negative backwall. The tip
/// separation is chosen so plain Wiener deconvolution leaves the pair
/// merged (the opposite-polarity carriers interfere constructively at
/// half-period spacing) while spectral extrapolation splits it.
pub struct FiveReflectorScenario {
    pub reflectivity: ReflectivitySeries,
    pub pulse_spec: PulseSpec,
}

pub const FIVE_REFLECTOR_FS: f64 = 100e6;
pub const FIVE_REFLECTOR_LENGTH: usize = 2048;
/// (sample, amplitude) of the five reflectors at `FIVE_REFLECTOR_FS`.
pub const FIVE_REFLECTOR_SPIKES: [(usize, f64); 5] = [
    (300, 1.0),
    (700, -0.8),
    (710, 0.8),
    (1200, 0.9),
    (1600, -1.4),
];

pub fn five_reflector_scenario() -> FiveReflectorScenario {
    let fs = FIVE_REFLECTOR_FS;
    let spikes = FIVE_REFLECTOR_SPIKES
        .iter()
        .map(|&(pos, amplitude)| Spike {
            time: pos as f64 / fs,
            amplitude,
        })
        .collect();
    FiveReflectorScenario {
        reflectivity: ReflectivitySeries {
            spikes,
            length: FIVE_REFLECTOR_LENGTH,
            fs,
        },
        pulse_spec: PulseSpec {
            kind: PulseKind::Gabor,
            fc: 5e6,
            bandwidth_frac: 1.0,
            phase: 0.0,
            length: 96,
            fs,
        },
    }
}
