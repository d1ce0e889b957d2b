//! Sample-to-sensor distance estimation by focus-metric maximization.
//!
//! The hologram is backpropagated over a coarse grid of candidate distances,
//! the sharpest plane is bracketed, and a golden-section search refines it.
//! Sharpness is the Tamura coefficient `sqrt(σ/μ)` of the gradient-magnitude
//! image of the amplitude.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft;
use crate::field::ComplexField;
use crate::propagation::{transfer_function, FrequencyGrid, PropagationParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusSearch {
    pub z_min: f64,
    pub z_max: f64,
    pub coarse_step: f64,
    pub refine_tolerance: f64,
}

impl FocusSearch {
    pub fn new(z_min: f64, z_max: f64, coarse_step: f64, refine_tolerance: f64) -> Result<Self> {
        let s = Self {
            z_min,
            z_max,
            coarse_step,
            refine_tolerance,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if !(self.z_min < self.z_max) || !self.z_min.is_finite() || !self.z_max.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "focus window [{}, {}] is empty",
                self.z_min, self.z_max
            )));
        }
        if !(self.coarse_step > 0.0) || !(self.refine_tolerance > 0.0) {
            return Err(Error::InvalidGeometry(
                "focus step and tolerance must be positive".into(),
            ));
        }
        if self.coarse_grid().len() < 3 {
            return Err(Error::InvalidGeometry(format!(
                "focus window [{}, {}] with step {} yields fewer than 3 samples",
                self.z_min, self.z_max, self.coarse_step
            )));
        }
        Ok(())
    }

    pub fn coarse_grid(&self) -> Vec<f64> {
        let count = ((self.z_max - self.z_min) / self.coarse_step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|k| self.z_min + k as f64 * self.coarse_step)
            .collect()
    }
}

fn gradient_magnitude(amp: &[f64], w: usize, h: usize) -> Vec<f64> {
    let at = |x: usize, y: usize| amp[y * w + x];
    let mut g = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = if x == 0 {
                at(1, y) - at(0, y)
            } else if x == w - 1 {
                at(w - 1, y) - at(w - 2, y)
            } else {
                0.5 * (at(x + 1, y) - at(x - 1, y))
            };
            let gy = if y == 0 {
                at(x, 1) - at(x, 0)
            } else if y == h - 1 {
                at(x, h - 1) - at(x, h - 2)
            } else {
                0.5 * (at(x, y + 1) - at(x, y - 1))
            };
            g.push(gx.hypot(gy));
        }
    }
    g
}

fn tamura_of_gradient(amp: &[f64], w: usize, h: usize) -> Result<f64> {
    let g = gradient_magnitude(amp, w, h);
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return Err(Error::DegenerateField("amplitude is constant".into()));
    }
    let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((var.sqrt() / mean).sqrt())
}

/// Tamura coefficient of the amplitude gradient magnitude.
pub fn focus_metric(field: &ComplexField) -> Result<f64> {
    let (w, h) = field.dims();
    if w < 3 || h < 3 {
        return Err(Error::InvalidGeometry(format!(
            "focus metric needs at least 3x3 samples, got {w}x{h}"
        )));
    }
    let amp: Vec<f64> = field.data().iter().map(|u| u.norm()).collect();
    tamura_of_gradient(&amp, w, h)
}

/// Backpropagation sweep that transforms the hologram once and reuses its
/// spectrum for every candidate distance.
struct Sweep<'a> {
    holo: &'a ComplexField,
    spectrum: Vec<Complex64>,
    grid: FrequencyGrid,
    n: f64,
}

impl<'a> Sweep<'a> {
    fn new(holo: &'a ComplexField, n: f64) -> Self {
        let (w, h) = holo.dims();
        let mut spectrum = holo.data().to_vec();
        fft::fft2(&mut spectrum, w, h);
        Self {
            holo,
            spectrum,
            grid: FrequencyGrid::new(w, h, holo.pitch()),
            n,
        }
    }

    fn metric_at(&self, z: f64) -> Result<f64> {
        let (w, h) = self.holo.dims();
        let params = PropagationParams::new(-z, self.n);
        let mut data = self.spectrum.clone();
        for (j, &fy) in self.grid.fy.iter().enumerate() {
            for (i, &fx) in self.grid.fx.iter().enumerate() {
                data[j * w + i] *= transfer_function(fx, fy, self.holo.wavelength(), &params);
            }
        }
        fft::ifft2(&mut data, w, h);
        let amp: Vec<f64> = data.iter().map(|u| u.norm()).collect();
        tamura_of_gradient(&amp, w, h)
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Estimates the sample-to-sensor distance of an in-line hologram.
///
/// `holo` is the field at the sensor (typically the zero-phase
/// `sqrt(intensity)`); it is backpropagated by each candidate distance.
pub fn estimate_z(holo: &ComplexField, search: &FocusSearch, n: f64) -> Result<f64> {
    search.validate()?;
    let (w, h) = holo.dims();
    if w < 3 || h < 3 {
        return Err(Error::InvalidGeometry(format!(
            "autofocus needs at least 3x3 samples, got {w}x{h}"
        )));
    }
    let sweep = Sweep::new(holo, n);
    let zs = search.coarse_grid();
    let scores = zs
        .par_iter()
        .map(|&z| sweep.metric_at(z))
        .collect::<Result<Vec<f64>>>()?;

    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = k;
        }
    }
    if best == 0 || best == zs.len() - 1 {
        return Err(Error::NoPeak { z: zs[best] });
    }

    let (mut a, mut b) = (zs[best - 1], zs[best + 1]);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = sweep.metric_at(c)?;
    let mut fd = sweep.metric_at(d)?;
    while b - a >= search.refine_tolerance {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = sweep.metric_at(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = sweep.metric_at(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_field(scale: f64) -> ComplexField {
        let data = (0..64)
            .map(|i| {
                let (x, y) = ((i % 8) as f64, (i / 8) as f64);
                Complex64::new(scale * (1.0 + (x * 0.9).sin() * (y * 0.4).cos()), 0.0)
            })
            .collect();
        ComplexField::new(8, 8, 1.0, 540.0, data).unwrap()
    }

    #[test]
    fn constant_amplitude_is_degenerate() {
        let f = ComplexField::filled(6, 6, 1.0, 540.0, Complex64::from_polar(2.0, 0.7)).unwrap();
        assert!(matches!(focus_metric(&f), Err(Error::DegenerateField(_))));
    }

    #[test]
    fn metric_is_scale_invariant_and_positive() {
        let a = focus_metric(&ramp_field(1.0)).unwrap();
        let b = focus_metric(&ramp_field(7.3)).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn coarse_grid_includes_both_ends() {
        let s = FocusSearch::new(100.0, 500.0, 10.0, 0.5).unwrap();
        let g = s.coarse_grid();
        assert_eq!(g.len(), 41);
        assert_eq!(g[40], 500.0);
        assert!(FocusSearch::new(0.0, 1.0, 0.6, 0.1).is_err());
        assert!(FocusSearch::new(5.0, 1.0, 0.1, 0.1).is_err());
    }
}
