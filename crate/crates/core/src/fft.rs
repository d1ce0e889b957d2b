//! 2-D FFT on row-major complex lattices.
//!
//! Forward transforms are unnormalized; the inverse is scaled by
//! `1 / (width * height)` so a round trip is the identity.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

type Plan = Arc<dyn Fft<f64>>;

fn plan(len: usize, direction: FftDirection) -> Plan {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (len, direction == FftDirection::Forward);
    let mut map = cache.lock().unwrap_or_else(|p| p.into_inner());
    map.entry(key)
        .or_insert_with(|| FftPlanner::new().plan_fft(len, direction))
        .clone()
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], width: usize, height: usize) {
    const BLOCK: usize = 32;
    for yb in (0..height).step_by(BLOCK) {
        for xb in (0..width).step_by(BLOCK) {
            for y in yb..(yb + BLOCK).min(height) {
                for x in xb..(xb + BLOCK).min(width) {
                    dst[x * height + y] = src[y * width + x];
                }
            }
        }
    }
}

fn fft2_in_place(data: &mut [Complex64], width: usize, height: usize, direction: FftDirection) {
    assert_eq!(data.len(), width * height, "lattice size mismatch");
    let rows = plan(width, direction);
    let cols = plan(height, direction);
    let scratch_len = rows
        .get_inplace_scratch_len()
        .max(cols.get_inplace_scratch_len());
    let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];

    rows.process_with_scratch(data, &mut scratch);

    let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
    transpose(data, &mut t, width, height);
    cols.process_with_scratch(&mut t, &mut scratch);
    transpose(&t, data, height, width);
}

pub fn fft2(data: &mut [Complex64], width: usize, height: usize) {
    fft2_in_place(data, width, height, FftDirection::Forward);
}

pub fn ifft2(data: &mut [Complex64], width: usize, height: usize) {
    fft2_in_place(data, width, height, FftDirection::Inverse);
    let scale = 1.0 / (width * height) as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Signed FFT frequency index of bin `k` in a length-`n` transform
/// (`0, 1, .., n/2 - 1, -n/2, .., -1` for even `n`).
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// FFT-ordered spatial frequencies (cycles per unit length) for `n` samples
/// spaced `pitch` apart.
pub fn frequencies(n: usize, pitch: f64) -> Vec<f64> {
    let df = 1.0 / (n as f64 * pitch);
    (0..n).map(|k| signed_index(k, n) as f64 * df).collect()
}
