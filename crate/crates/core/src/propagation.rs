//! Angular spectrum free-space propagation.
//!
//! The field is transformed to its angular spectrum, multiplied by the
//! free-space transfer function
//!
//! ```text
//! H(fx, fy; z) = exp(j 2π (n/λ) z sqrt(1 - (λ fx/n)² - (λ fy/n)²))   propagating
//!              = 0                                                  evanescent
//! ```
//!
//! and transformed back. Convolution is periodic unless a zero-padding
//! factor is requested.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::field::ComplexField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    /// Propagation distance in micrometers; negative values backpropagate.
    pub z: f64,
    pub refractive_index: f64,
    /// Zero-padding factor per axis (power of two; 1 disables padding).
    pub padding: usize,
}

impl PropagationParams {
    pub fn new(z: f64, refractive_index: f64) -> Self {
        Self {
            z,
            refractive_index,
            padding: 1,
        }
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.refractive_index > 0.0 && self.refractive_index.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "refractive index must be positive, got {}",
                self.refractive_index
            )));
        }
        if !self.z.is_finite() {
            return Err(Error::InvalidGeometry(format!("non-finite distance {}", self.z)));
        }
        if self.padding == 0 || !self.padding.is_power_of_two() {
            return Err(Error::InvalidGeometry(format!(
                "padding factor must be a power of two, got {}",
                self.padding
            )));
        }
        Ok(())
    }
}

/// FFT-ordered spatial frequencies of a lattice, in cycles per micrometer.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(width: usize, height: usize, pitch: f64) -> Self {
        Self {
            fx: fft::frequencies(width, pitch),
            fy: fft::frequencies(height, pitch),
        }
    }

    /// True when `(fx, fy)` decays in the medium at this wavelength.
    pub fn is_evanescent(fx: f64, fy: f64, wavelength_nm: f64, n: f64) -> bool {
        let lam = wavelength_nm * 1e-3;
        let ax = lam * fx / n;
        let ay = lam * fy / n;
        ax * ax + ay * ay > 1.0
    }
}

/// Free-space transfer function at spatial frequency `(fx, fy)` (1/µm).
pub fn transfer_function(fx: f64, fy: f64, wavelength_nm: f64, params: &PropagationParams) -> Complex64 {
    let n = params.refractive_index;
    let lam = wavelength_nm * 1e-3;
    let ax = lam * fx / n;
    let ay = lam * fy / n;
    let s = ax * ax + ay * ay;
    if s > 1.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::from_polar(1.0, 2.0 * PI * (n / lam) * params.z * (1.0 - s).sqrt())
}

/// Precomputed transfer function for repeated propagation over one distance.
#[derive(Debug, Clone)]
pub struct Propagator {
    width: usize,
    height: usize,
    pitch: f64,
    wavelength: f64,
    params: PropagationParams,
    transfer: Vec<Complex64>,
}

impl Propagator {
    pub fn new(
        width: usize,
        height: usize,
        pitch: f64,
        wavelength_nm: f64,
        params: PropagationParams,
    ) -> Result<Self> {
        params.validate()?;
        if width < 2 || height < 2 {
            return Err(Error::InvalidGeometry(format!(
                "propagation needs at least a 2x2 lattice, got {width}x{height}"
            )));
        }
        let (pw, ph) = (width * params.padding, height * params.padding);
        let grid = FrequencyGrid::new(pw, ph, pitch);
        let mut transfer = Vec::with_capacity(pw * ph);
        for &fy in &grid.fy {
            for &fx in &grid.fx {
                transfer.push(transfer_function(fx, fy, wavelength_nm, &params));
            }
        }
        Ok(Self {
            width,
            height,
            pitch,
            wavelength: wavelength_nm,
            params,
            transfer,
        })
    }

    pub fn for_field(field: &ComplexField, params: PropagationParams) -> Result<Self> {
        Self::new(
            field.width(),
            field.height(),
            field.pitch(),
            field.wavelength(),
            params,
        )
    }

    pub fn distance(&self) -> f64 {
        self.params.z
    }

    /// Propagates raw row-major samples in place.
    pub fn apply_in_place(&self, data: &mut [Complex64]) {
        let (w, h) = (self.width, self.height);
        assert_eq!(data.len(), w * h, "lattice size mismatch");
        if self.params.padding == 1 {
            fft::fft2(data, w, h);
            for (a, t) in data.iter_mut().zip(&self.transfer) {
                *a *= t;
            }
            fft::ifft2(data, w, h);
            return;
        }
        let (pw, ph) = (w * self.params.padding, h * self.params.padding);
        let (x0, y0) = ((pw - w) / 2, (ph - h) / 2);
        let mut padded = vec![Complex64::new(0.0, 0.0); pw * ph];
        for y in 0..h {
            padded[(y + y0) * pw + x0..(y + y0) * pw + x0 + w].copy_from_slice(&data[y * w..(y + 1) * w]);
        }
        fft::fft2(&mut padded, pw, ph);
        for (a, t) in padded.iter_mut().zip(&self.transfer) {
            *a *= t;
        }
        fft::ifft2(&mut padded, pw, ph);
        for y in 0..h {
            data[y * w..(y + 1) * w].copy_from_slice(&padded[(y + y0) * pw + x0..(y + y0) * pw + x0 + w]);
        }
    }

    pub fn apply(&self, field: &ComplexField) -> Result<ComplexField> {
        if field.dims() != (self.width, self.height)
            || field.pitch() != self.pitch
            || field.wavelength() != self.wavelength
        {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                found: field.dims(),
            });
        }
        let mut data = field.data().to_vec();
        self.apply_in_place(&mut data);
        field.with_data(data)
    }
}

/// Propagates `field` over `params.z` micrometers.
pub fn propagate(field: &ComplexField, params: PropagationParams) -> Result<ComplexField> {
    Propagator::for_field(field, params)?.apply(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(w: usize, h: usize, pitch: f64, wl: f64, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexField::new(w, h, pitch, wl, data).unwrap()
    }

    fn max_abs_diff(a: &ComplexField, b: &ComplexField) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn dc_component_is_plane_wave_phase() {
        let p = PropagationParams::new(37.5, 1.33);
        let h = transfer_function(0.0, 0.0, 450.0, &p);
        let expected = Complex64::from_polar(1.0, 2.0 * PI * 1.33 * 37.5 / 0.45);
        assert!((h - expected).norm() < 1e-12);
    }

    #[test]
    fn evanescent_frequencies_give_exact_zero() {
        // (λ fx / n)² = 1.21
        let p = PropagationParams::new(100.0, 1.0);
        let fx = 1.1 / 0.54;
        assert_eq!(transfer_function(fx, 0.0, 540.0, &p), Complex64::new(0.0, 0.0));
        let f = 1.1 / 0.54 / 2f64.sqrt();
        assert_eq!(transfer_function(f, f, 540.0, &p), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn unit_circle_boundary_is_propagating() {
        let p = PropagationParams::new(10.0, 1.0);
        // λ fx / n == 1 exactly (fx = 2 cycles/µm at 500 nm)
        let h = transfer_function(2.0, 0.0, 500.0, &p);
        assert_eq!(h, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn matches_high_precision_scalar_value() {
        // λ = 540 nm, fx = 0.3 /µm, n = 1, z = 100 µm, evaluated with 40-digit arithmetic
        let p = PropagationParams::new(100.0, 1.0);
        let h = transfer_function(0.3, 0.0, 540.0, &p);
        assert!((h.re - -0.068_876_665_770_913_05).abs() < 1e-10);
        assert!((h.im - -0.997_625_182_577_245_3).abs() < 1e-10);
    }

    #[test]
    fn zero_distance_is_identity_up_to_fft_round_trip() {
        let f = random_field(16, 12, 0.5, 540.0, 1);
        let g = propagate(&f, PropagationParams::new(0.0, 1.0)).unwrap();
        assert!(max_abs_diff(&f, &g) < 1e-12);
    }

    #[test]
    fn zero_distance_still_removes_evanescent_content() {
        // pitch 0.2 µm puts the Nyquist band beyond 1/λ at 590 nm
        let f = random_field(16, 16, 0.2, 590.0, 2);
        let g = propagate(&f, PropagationParams::new(0.0, 1.0)).unwrap();
        assert!(max_abs_diff(&f, &g) > 1e-3);
        let mut spec = g.data().to_vec();
        fft::fft2(&mut spec, 16, 16);
        let grid = FrequencyGrid::new(16, 16, 0.2);
        for (j, &fy) in grid.fy.iter().enumerate() {
            for (i, &fx) in grid.fx.iter().enumerate() {
                if FrequencyGrid::is_evanescent(fx, fy, 590.0, 1.0) {
                    assert!(spec[j * 16 + i].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn forward_then_back_recovers_input() {
        let f = random_field(32, 24, 0.5, 450.0, 3);
        let fwd = propagate(&f, PropagationParams::new(120.0, 1.0)).unwrap();
        let back = propagate(&fwd, PropagationParams::new(-120.0, 1.0)).unwrap();
        assert!(max_abs_diff(&f, &back) < 1e-10);
    }

    #[test]
    fn padded_propagation_agrees_at_zero_distance() {
        let f = random_field(8, 8, 0.5, 540.0, 4);
        let g = propagate(&f, PropagationParams::new(0.0, 1.0).with_padding(2)).unwrap();
        assert!(max_abs_diff(&f, &g) < 1e-12);
        assert!(propagate(&f, PropagationParams::new(1.0, 1.0).with_padding(3)).is_err());
    }

    #[test]
    fn rejects_tiny_lattices_and_bad_index() {
        let f = random_field(1, 4, 0.5, 540.0, 5);
        assert!(propagate(&f, PropagationParams::new(1.0, 1.0)).is_err());
        let f = random_field(4, 4, 0.5, 540.0, 5);
        assert!(propagate(&f, PropagationParams::new(1.0, 0.0)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn transfer_function_is_unit_modulus_when_propagating(
            fx in -3.0f64..3.0, fy in -3.0f64..3.0, z in -500.0f64..500.0,
            wl in 400.0f64..700.0, n in 1.0f64..1.6,
        ) {
            let h = transfer_function(fx, fy, wl, &PropagationParams::new(z, n));
            if FrequencyGrid::is_evanescent(fx, fy, wl, n) {
                proptest::prop_assert_eq!(h, Complex64::new(0.0, 0.0));
            } else {
                proptest::prop_assert!((h.norm() - 1.0).abs() < 1e-14);
            }
        }

        #[test]
        fn composition_and_norm_conservation(z1 in -200.0f64..200.0, z2 in -200.0f64..200.0, seed in 0u64..1000) {
            // pitch 0.5 µm at 540 nm: the whole lattice is propagating
            let f = random_field(16, 16, 0.5, 540.0, seed);
            let a = propagate(&propagate(&f, PropagationParams::new(z1, 1.0)).unwrap(), PropagationParams::new(z2, 1.0)).unwrap();
            let b = propagate(&f, PropagationParams::new(z1 + z2, 1.0)).unwrap();
            proptest::prop_assert!(max_abs_diff(&a, &b) < 1e-10);
            let rel = (a.l2_norm() - f.l2_norm()).abs() / f.l2_norm();
            proptest::prop_assert!(rel < 1e-12);
        }
    }
}
