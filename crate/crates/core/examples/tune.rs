// Scratch harness for inspecting pipeline internals while tuning the
// canonical scenario. Not part of the deliverable surface.

use utdecon_core::ase::spectral_flatness;
use utdecon_core::metrics::{detect_peaks, pair_resolved, MetricConventions};
use utdecon_core::pipeline::{deconvolve_trace, PipelineConfig};
use utdecon_core::signal::envelope;
use utdecon_core::synth::*;
use utdecon_core::wavelet::{estimate_wavelet, PhaseSearchConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("all");

    if mode == "all" || mode == "phase" {
        phase_study();
    }
    if mode == "all" || mode == "single" {
        single_reflector_study();
    }
    if mode == "all" || mode == "five" {
        five_reflector_study();
    }
    if mode == "curve" {
        curve_study();
    }
    if mode == "resid" {
        residual_tables();
    }
}

fn phase_study() {
    println!("=== phase recovery (harmonic refinement) ===");
    let fs = 100e6;
    for &theta_deg in &[-75.0f64, -45.0, 0.0, 45.0, 75.0] {
        let mut errs_clean = vec![];
        let mut errs_noisy = vec![];
        for seed in 0..20u64 {
            let refl = ReflectivitySeries::bernoulli_gaussian(4096, fs, 0.03, 100 + seed);
            let spec = PulseSpec {
                kind: PulseKind::Gabor,
                fc: 5e6,
                bandwidth_frac: 0.6,
                phase: theta_deg.to_radians(),
                length: 96,
                fs,
            };
            let p = make_pulse(&spec).unwrap();
            let clean = synthesize_rf(&refl, &p, &NoiseSpec::noiseless()).unwrap();
            let noisy = synthesize_rf(&refl, &p, &NoiseSpec::snr(15.0, 999 + seed)).unwrap();
            for (t, errs) in [(&clean, &mut errs_clean), (&noisy, &mut errs_noisy)] {
                let w = estimate_wavelet(t, 60, &PhaseSearchConfig::default()).unwrap();
                errs.push(angdist_deg(w.phase.to_degrees(), theta_deg));
            }
        }
        errs_clean.sort_by(f64::total_cmp);
        errs_noisy.sort_by(f64::total_cmp);
        println!(
            "theta {theta_deg:+.0}: clean median {:.2} p90 {:.2} | 15dB median {:.2} p90 {:.2}",
            errs_clean[10], errs_clean[18], errs_noisy[10], errs_noisy[18]
        );
    }
}

fn single_reflector_study() {
    println!("=== single reflector, noise free ===");
    let fs = 100e6;
    let spec = PulseSpec {
        kind: PulseKind::Gabor,
        fc: 5e6,
        bandwidth_frac: 0.6,
        phase: 0.0,
        length: 96,
        fs,
    };
    let pulse = make_pulse(&spec).unwrap();
    let r = ReflectivitySeries {
        spikes: vec![Spike { time: 1000.0 / fs, amplitude: 1.0 }],
        length: 2048,
        fs,
    };
    let trace = synthesize_rf(&r, &pulse, &NoiseSpec::noiseless()).unwrap();
    let conv = MetricConventions::default();
    let raw_env = envelope(&trace).unwrap();
    let raw_fwhm = utdecon_core::metrics::fwhm_at(&raw_env.samples, 1000);
    for p_max in [2usize, 4, 6, 8, 12, 40] {
        let mut cfg = PipelineConfig::default();
        cfg.p_max = p_max;
        let products = deconvolve_trace(&trace, &cfg, None).unwrap();
        let peaks = detect_peaks(&products.envelope.samples, &products.broadened.samples, &conv).unwrap();
        let ase_fwhm = utdecon_core::metrics::fwhm_at(
            &products.envelope.samples,
            argmax(&products.envelope.samples),
        );
        println!(
            "p_max {p_max:>2}: order {:?} peaks {:?} fwhm_ratio {:.3}",
            products.ase.as_ref().map(|d| d.order),
            peaks.iter().map(|p| (p.sample, p.polarity)).collect::<Vec<_>>(),
            ase_fwhm / raw_fwhm
        );
    }
}

fn five_reflector_study() {
    println!("=== five reflector scenario sweeps (15 dB, 20 seeds) ===");
    let fs = 100e6;
    let conv = MetricConventions::default();
    for &(sep, bw, smoothing) in &[
        (24usize, 0.6f64, 5usize),
        (24, 0.6, 25),
        (24, 0.6, 51),
        (24, 0.6, 101),
        (20, 0.6, 51),
        (18, 0.6, 51),
        (16, 0.6, 51),
        (24, 0.45, 51),
        (24, 0.4, 51),
    ] {
        let spikes = [
            (300usize, 1.0f64),
            (700, -0.8),
            (700 + sep, 0.8),
            (1200, 0.9),
            (1600, -1.4),
        ];
        let refl = ReflectivitySeries {
            spikes: spikes
                .iter()
                .map(|&(pos, amplitude)| Spike { time: pos as f64 / fs, amplitude })
                .collect(),
            length: 2048,
            fs,
        };
        let spec = PulseSpec {
            kind: PulseKind::Gabor,
            fc: 5e6,
            bandwidth_frac: bw,
            phase: 0.0,
            length: 96,
            fs,
        };
        let pulse = make_pulse(&spec).unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.smoothing_bins = smoothing;
        let mut wiener_resolved = 0;
        let mut ase_resolved = 0;
        let mut all5 = 0;
        let mut signs_ok = 0;
        let mut flat_up = 0;
        let seeds = 20u64;
        for seed in 0..seeds {
            let noisy = synthesize_rf(&refl, &pulse, &NoiseSpec::snr(15.0, seed)).unwrap();
            let p = deconvolve_trace(&noisy, &cfg, None).unwrap();
            let wt = p.wiener.as_trace();
            let wenv = envelope(&wt).unwrap();
            if pair_resolved(&wenv.samples, 700, 700 + sep, &conv) {
                wiener_resolved += 1;
            }
            if pair_resolved(&p.envelope.samples, 700, 700 + sep, &conv) {
                ase_resolved += 1;
            }
            let peaks = detect_peaks(&p.envelope.samples, &p.broadened.samples, &conv).unwrap();
            let matches = utdecon_core::metrics::match_truth(&peaks, &refl, &conv);
            let found = matches
                .iter()
                .filter(|m| m.error_samples.map(|e| e <= 2.0).unwrap_or(false))
                .count();
            if found == 5 {
                all5 += 1;
            }
            if matches.iter().filter(|m| m.polarity_ok == Some(true)).count() == 5 {
                signs_ok += 1;
            }
            let flat_w = spectral_flatness(&p.wiener.spectrum);
            let bspec = utdecon_core::signal::Spectrum::from_real_signal(
                &p.broadened.samples,
                fs,
                p.wiener.spectrum.len(),
            )
            .unwrap();
            if spectral_flatness(&bspec) > flat_w {
                flat_up += 1;
            }
        }
        println!(
            "sep {sep:>2} bw {bw:.2} smooth {smoothing:>3}: wiener_res {wiener_resolved:>2} ase_res {ase_resolved:>2} all5 {all5:>2} signs {signs_ok:>2} flat_up {flat_up:>2}"
        );
    }
}

fn angdist_deg(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(180.0);
    if d > 90.0 {
        d = 180.0 - d;
    }
    d
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
}

// ---- extra studies appended during tuning ----

#[allow(dead_code)]
fn residual_tables() {
    use num_complex::Complex64;
    use utdecon_core::ase::{burg_fit, select_band};
    use utdecon_core::wiener::{wiener_deconvolve, WienerConfig};
    let fs = 100e6;
    for bw in [0.6f64, 0.8] {
        let spec = PulseSpec { kind: PulseKind::Gabor, fc: 5e6, bandwidth_frac: bw, phase: 0.0, length: 96, fs };
        let pulse = make_pulse(&spec).unwrap();
        let r = ReflectivitySeries { spikes: vec![Spike { time: 1000.0 / fs, amplitude: 1.0 }], length: 2048, fs };
        let trace = synthesize_rf(&r, &pulse, &NoiseSpec::noiseless()).unwrap();
        let west = estimate_wavelet(&trace, 60, &PhaseSearchConfig::default()).unwrap();
        let dec = wiener_deconvolve(&trace, &west, &WienerConfig::default()).unwrap();
        let band = select_band(&dec.spectrum, -6.0, 51).unwrap();
        let seg: Vec<Complex64> = dec.spectrum.bins[band.m..=band.n].to_vec();
        print!("single bw {bw}: band [{}, {}] E_p/E0:", band.m, band.n);
        let e0: f64 = seg.iter().map(|c| c.norm_sqr()).sum::<f64>() / seg.len() as f64;
        for p in 1..=8 {
            let m = burg_fit(&seg, p).unwrap();
            print!(" {:.2e}", m.residual_power / e0);
        }
        println!();
    }
    // five reflector at 15 dB
    let scen = five_reflector_scenario();
    let pulse = make_pulse(&scen.pulse_spec).unwrap();
    let noisy = synthesize_rf(&scen.reflectivity, &pulse, &NoiseSpec::snr(15.0, 3)).unwrap();
    let west = estimate_wavelet(&noisy, 60, &PhaseSearchConfig::default()).unwrap();
    let dec = wiener_deconvolve(&noisy, &west, &WienerConfig::default()).unwrap();
    let band = select_band(&dec.spectrum, -6.0, 51).unwrap();
    let seg: Vec<num_complex::Complex64> = dec.spectrum.bins[band.m..=band.n].to_vec();
    let e0: f64 = seg.iter().map(|c| c.norm_sqr()).sum::<f64>() / seg.len() as f64;
    print!("five 15dB: band [{}, {}] E_p/E0:", band.m, band.n);
    for p in 1..=12 {
        let m = utdecon_core::ase::burg_fit(&seg, p).unwrap();
        print!(" {:.2e}", m.residual_power / e0);
    }
    println!();
}

#[allow(dead_code)]
fn curve_study() {
    let fs = 100e6;
    for bw in [0.6f64, 0.8, 1.0, 1.2] {
        let refl = ReflectivitySeries::bernoulli_gaussian(4096, fs, 0.03, 101);
        let spec = PulseSpec { kind: PulseKind::Gabor, fc: 5e6, bandwidth_frac: bw, phase: 0.5, length: 96, fs };
        let p = make_pulse(&spec).unwrap();
        for (label, t) in [
            ("clean", synthesize_rf(&refl, &p, &NoiseSpec::noiseless()).unwrap()),
            ("15dB", synthesize_rf(&refl, &p, &NoiseSpec::snr(15.0, 7)).unwrap()),
        ] {
            let c = utdecon_core::wavelet::estimate_phase(&t, &PhaseSearchConfig::default()).unwrap();
            let m = c.values.len() as f64;
            let mean: f64 = c.values.iter().sum::<f64>() / m;
            let (mut c1r, mut c1i, mut c2r, mut c2i) = (0.0, 0.0, 0.0, 0.0);
            for (j, &v) in c.values.iter().enumerate() {
                let t = 2.0 * std::f64::consts::PI * j as f64 / m;
                c1r += v * t.cos(); c1i += v * t.sin();
                c2r += v * (2.0 * t).cos(); c2i += v * (2.0 * t).sin();
            }
            let b1 = 2.0 * (c1r * c1r + c1i * c1i).sqrt() / m;
            let b2 = 2.0 * (c2r * c2r + c2i * c2i).sqrt() / m;
            // residual after removing harmonics 0,1,2
            let mut resid = 0.0;
            for (j, &v) in c.values.iter().enumerate() {
                let t = 2.0 * std::f64::consts::PI * j as f64 / m;
                let fit = mean + 2.0 / m * (c1r * t.cos() + c1i * t.sin() + c2r * (2.0 * t).cos() + c2i * (2.0 * t).sin());
                resid += (v - fit) * (v - fit);
            }
            let resid = (resid / m).sqrt();
            println!("bw {bw} {label}: kappa_mean {mean:.3} B1 {b1:.4} B2 {b2:.4} resid_rms {resid:.4} best {:.2} deg", c.best_angle.to_degrees());
        }
    }
}
