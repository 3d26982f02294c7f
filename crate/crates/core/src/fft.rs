//! Thin FFT layer over `rustfft` fixing one transform convention for the
//! whole crate: the forward transform is unnormalized, the inverse carries
//! the 1/N factor. Under this convention the transform of a biased
//! autocorrelation is directly a power spectrum, and Parseval reads
//! `sum |x[n]|^2 == (1/N) sum |X[k]|^2`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn rustfft::Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn rustfft::Fft<f64>> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

/// In-place forward transform, unnormalized.
pub fn forward(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

/// In-place inverse transform including the 1/N factor.
pub fn inverse(buf: &mut [Complex64]) {
    let n = buf.len();
    plan(n, true).process(buf);
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Forward transform of a real signal zero-padded to `nfft` bins.
pub fn forward_real(x: &[f64], nfft: usize) -> Vec<Complex64> {
    debug_assert!(nfft >= x.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for (b, &v) in buf.iter_mut().zip(x.iter()) {
        *b = Complex64::new(v, 0.0);
    }
    forward(&mut buf);
    buf
}

/// Largest magnitude among the imaginary parts relative to the peak
/// magnitude of the buffer. Used to verify that a spectrum destined for a
/// real signal really is Hermitian before the imaginary parts are dropped.
pub fn relative_imag_residue(buf: &[Complex64]) -> f64 {
    let peak = buf.iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let worst = buf.iter().map(|c| c.im.abs()).fold(0.0_f64, f64::max);
    worst / peak
}

pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}
