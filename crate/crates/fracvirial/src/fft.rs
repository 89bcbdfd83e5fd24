//! FFT plan cache and 1D/2D transforms on square grids.
//!
//! Plans are shared through a process-wide map guarded by a mutex, so lookups
//! from several workers are safe. The forward transform is unnormalized; the
//! inverse divides by the number of samples.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    static CACHE: OnceLock<Mutex<HashMap<usize, Plans>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            }
        })
        .clone()
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

fn run(fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64], n: usize, dim: usize) {
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(data, &mut scratch);
    if dim == 2 {
        transpose_square(data, n);
        fft.process_with_scratch(data, &mut scratch);
        transpose_square(data, n);
    }
}

/// Unnormalized forward DFT of `data` (length n^dim, row-major).
pub fn forward(data: &mut [Complex64], n: usize, dim: usize) {
    debug_assert_eq!(data.len(), n.pow(dim as u32));
    let p = plans(n);
    run(&p.forward, data, n, dim);
}

/// Inverse DFT without the 1/n^dim factor.
pub fn inverse_unnormalized(data: &mut [Complex64], n: usize, dim: usize) {
    debug_assert_eq!(data.len(), n.pow(dim as u32));
    let p = plans(n);
    run(&p.inverse, data, n, dim);
}

/// Inverse DFT including the 1/n^dim normalization.
pub fn inverse(data: &mut [Complex64], n: usize, dim: usize) {
    debug_assert_eq!(data.len(), n.pow(dim as u32));
    let p = plans(n);
    run(&p.inverse, data, n, dim);
    let scale = 1.0 / data.len() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_2d() {
        let n = 8;
        let orig: Vec<Complex64> = (0..n * n)
            .map(|k| Complex64::new((k as f64).sin(), (k as f64 * 0.3).cos()))
            .collect();
        let mut d = orig.clone();
        forward(&mut d, n, 2);
        inverse(&mut d, n, 2);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn single_mode_lands_in_its_bin() {
        let n = 16;
        let mut d: Vec<Complex64> = (0..n)
            .map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 3.0 * j as f64 / n as f64))
            .collect();
        forward(&mut d, n, 1);
        for (k, v) in d.iter().enumerate() {
            let want = if k == 3 { n as f64 } else { 0.0 };
            assert!((v.re - want).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }
}
