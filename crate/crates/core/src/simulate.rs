//! Synthetic forward model: phantom objects and the acquisition chain
//! (propagation, intensity, lateral shift, Bayer sampling with channel
//! cross-talk, decimation, noise) that produces sensor frames with a known
//! ground truth.
//!
//! A phantom is a thin transmission object. Each feature has a transmittance
//! spectrum and a smooth concentration map; pixels mix the features by area
//! over a clear background, so the intensity transmittance is
//! `T(λ) = 1 − Σ c_f (1 − T_f(λ))`, rescaled into the requested absorption
//! range. The phase is proportional to the local feature coverage and
//! scales as `540/λ`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorimetry::{self, ColorMatchingTable, Illuminant, ThreeBandProjector};
use crate::error::{Error, Result};
use crate::fft;
use crate::field::{
    spectral_grid, Channel, ComplexField, HologramFrame, RealField, RgbImage, SpectralCube, Spectrum,
    SPECTRAL_GRID_LEN, SPECTRAL_GRID_START, SPECTRAL_GRID_STEP,
};
use crate::propagation::{propagate, PropagationParams};
use crate::superres::{sequential_channel, BayerLayout};

/// Wavelength at which the phase pattern reaches `phase_range`.
const PHASE_REFERENCE_NM: f64 = 540.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomStyle {
    Bars,
    Disks,
    #[default]
    TexturedTissue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    /// Side length in high-resolution pixels.
    pub size: usize,
    /// Micrometers.
    pub pitch: f64,
    pub seed: u64,
    pub style: PhantomStyle,
    /// Absorption `1 − T` is mapped into this interval.
    pub absorption_range: (f64, f64),
    /// Peak phase delay in radians at 540 nm.
    pub phase_range: f64,
    /// Transmittance spectrum per feature label; built-in stain-like
    /// spectra when absent.
    pub spectra: Option<BTreeMap<String, Vec<f64>>>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 128,
            pitch: 0.28,
            seed: 1,
            style: PhantomStyle::TexturedTissue,
            absorption_range: (0.0, 1.0),
            phase_range: 1.0,
            spectra: None,
        }
    }
}

/// Stain-like default features: a pink, a purple and a brown absorber.
pub fn default_feature_spectra() -> Vec<(String, Spectrum)> {
    let band = |depth: f64, centre: f64, width: f64, floor: f64| -> Spectrum {
        let grid = spectral_grid();
        std::array::from_fn(|i| {
            (1.0 - floor - depth * (-((grid[i] - centre) / width).powi(2)).exp()).clamp(0.0, 1.0)
        })
    };
    vec![
        ("eosin".to_string(), band(0.85, 530.0, 32.0, 0.0)),
        ("hematoxylin".to_string(), band(0.75, 590.0, 60.0, 0.15)),
        ("pigment".to_string(), band(0.6, 440.0, 40.0, 0.05)),
    ]
}

/// Linear interpolation of a grid spectrum; constant beyond the ends.
pub fn sample_spectrum(s: &Spectrum, wavelength: f64) -> f64 {
    let t = (wavelength - SPECTRAL_GRID_START) / SPECTRAL_GRID_STEP;
    if t <= 0.0 {
        return s[0];
    }
    if t >= (SPECTRAL_GRID_LEN - 1) as f64 {
        return s[SPECTRAL_GRID_LEN - 1];
    }
    let i = t.floor() as usize;
    let f = t - i as f64;
    s[i] * (1.0 - f) + s[i + 1] * f
}

/// A generated phantom: per-feature concentration maps plus spectra.
#[derive(Debug, Clone)]
pub struct Phantom {
    size: usize,
    pitch: f64,
    absorption_range: (f64, f64),
    phase_range: f64,
    features: Vec<(String, Spectrum)>,
    concentrations: Vec<Vec<f64>>,
    thickness: Vec<f64>,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::config("phantom.size", "must be at least 2"));
        }
        if !(self.pitch > 0.0) || !self.pitch.is_finite() {
            return Err(Error::config("phantom.pitch", "must be positive"));
        }
        let (a0, a1) = self.absorption_range;
        if !(0.0..=1.0).contains(&a0) || !(0.0..=1.0).contains(&a1) || a0 > a1 {
            return Err(Error::config(
                "phantom.absorption_range",
                format!("[{a0}, {a1}] must be an ordered sub-interval of [0, 1]"),
            ));
        }
        if !self.phase_range.is_finite() {
            return Err(Error::config("phantom.phase_range", "must be finite"));
        }
        if let Some(map) = &self.spectra {
            if map.is_empty() {
                return Err(Error::config("phantom.spectra", "needs at least one feature"));
            }
            for (label, s) in map {
                if s.len() != SPECTRAL_GRID_LEN || s.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::config(
                        format!("phantom.spectra.{label}"),
                        format!("needs {SPECTRAL_GRID_LEN} transmittance samples in [0, 1]"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn features(&self) -> Vec<(String, Spectrum)> {
        match &self.spectra {
            Some(map) => map
                .iter()
                .map(|(k, v)| (k.clone(), std::array::from_fn(|i| v[i])))
                .collect(),
            None => default_feature_spectra(),
        }
    }
}

fn smooth_noise(size: usize, rng: &mut ChaCha8Rng, correlation_px: f64) -> Vec<f64> {
    let mut data: Vec<Complex64> = (0..size * size)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, 0.0))
        .collect();
    fft::fft2(&mut data, size, size);
    let s = correlation_px / size as f64;
    for y in 0..size {
        let fy = fft::signed_index(y, size) as f64;
        for x in 0..size {
            let fx = fft::signed_index(x, size) as f64;
            let g = (-2.0 * (std::f64::consts::PI * s).powi(2) * (fx * fx + fy * fy)).exp();
            data[y * size + x] *= g;
        }
    }
    data[0] = Complex64::new(0.0, 0.0);
    fft::ifft2(&mut data, size, size);
    let v: Vec<f64> = data.iter().map(|c| c.re).collect();
    let sd = (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
    v.into_iter().map(|a| if sd > 0.0 { a / sd } else { 0.0 }).collect()
}

fn soft_step(t: f64) -> f64 {
    0.5 * (1.0 + t.tanh())
}

fn raw_maps(spec: &PhantomSpec, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = spec.size;
    let nf = n as f64;
    let edge = 1.5;
    match spec.style {
        PhantomStyle::Bars => (0..count)
            .map(|k| {
                let period = nf / (3.0 + 2.0 * k as f64);
                let phase = rng.random::<f64>() * period;
                let duty = 0.3 + 0.2 * rng.random::<f64>();
                (0..n * n)
                    .map(|i| {
                        let (x, y) = ((i % n) as f64, (i / n) as f64);
                        let coord = if k % 2 == 0 { x } else { y };
                        let u = (coord + phase).rem_euclid(period);
                        let d = (u - 0.5 * period).abs() - 0.5 * duty * period;
                        soft_step(-d / edge)
                    })
                    .collect()
            })
            .collect(),
        PhantomStyle::Disks => {
            let mut maps = vec![vec![0.0; n * n]; count];
            let disks = 6 + 3 * count;
            for d in 0..disks {
                let (cx, cy) = (rng.random::<f64>() * nf, rng.random::<f64>() * nf);
                let r = nf * (0.05 + 0.1 * rng.random::<f64>());
                let map = &mut maps[d % count];
                for (i, v) in map.iter_mut().enumerate() {
                    let (x, y) = ((i % n) as f64, (i / n) as f64);
                    // periodic distance keeps the scene seamless
                    let dx = (x - cx + nf / 2.0).rem_euclid(nf) - nf / 2.0;
                    let dy = (y - cy + nf / 2.0).rem_euclid(nf) - nf / 2.0;
                    let rr = dx.hypot(dy);
                    *v = f64::max(*v, soft_step((r - rr) / edge));
                }
            }
            maps
        }
        PhantomStyle::TexturedTissue => (0..count)
            .map(|k| {
                let corr = nf / (10.0 + 4.0 * k as f64);
                let threshold = 0.3 + 0.4 * rng.random::<f64>();
                smooth_noise(n, rng, corr.max(2.0))
                    .into_iter()
                    .map(|v| soft_step(1.5 * (v - threshold)))
                    .collect()
            })
            .collect(),
    }
}

/// Builds a deterministic phantom from `spec`.
pub fn make_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let features = spec.features();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut maps = raw_maps(spec, features.len(), &mut rng);
    let n2 = spec.size * spec.size;
    let mut thickness = vec![0.0; n2];
    for i in 0..n2 {
        let total: f64 = maps.iter().map(|m| m[i]).sum();
        if total > 1.0 {
            for m in maps.iter_mut() {
                m[i] /= total;
            }
        }
        thickness[i] = total.min(1.0);
    }
    Ok(Phantom {
        size: spec.size,
        pitch: spec.pitch,
        absorption_range: spec.absorption_range,
        phase_range: spec.phase_range,
        features,
        concentrations: maps,
        thickness,
    })
}

impl Phantom {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn features(&self) -> &[(String, Spectrum)] {
        &self.features
    }

    /// Concentration map of feature `k`.
    pub fn concentration(&self, k: usize) -> RealField {
        RealField::new(self.size, self.size, self.pitch, self.concentrations[k].clone())
            .expect("phantom geometry is valid")
    }

    fn transmittance_at(&self, i: usize, feature_t: &[f64]) -> f64 {
        let absorbed: f64 = self
            .concentrations
            .iter()
            .zip(feature_t)
            .map(|(c, t)| c[i] * (1.0 - t))
            .sum();
        let (a0, a1) = self.absorption_range;
        1.0 - (a0 + (a1 - a0) * absorbed.clamp(0.0, 1.0))
    }

    /// Intensity transmittance at `wavelength` nm.
    pub fn transmittance(&self, wavelength: f64) -> RealField {
        let ft: Vec<f64> = self.features.iter().map(|(_, s)| sample_spectrum(s, wavelength)).collect();
        let data = (0..self.size * self.size).map(|i| self.transmittance_at(i, &ft)).collect();
        RealField::new(self.size, self.size, self.pitch, data).expect("phantom geometry is valid")
    }

    /// Phase delay in radians at `wavelength` nm.
    pub fn phase(&self, wavelength: f64) -> RealField {
        let scale = self.phase_range * PHASE_REFERENCE_NM / wavelength;
        let data = self.thickness.iter().map(|t| scale * t).collect();
        RealField::new(self.size, self.size, self.pitch, data).expect("phantom geometry is valid")
    }

    /// Complex transmission `sqrt(T) · exp(jφ)` at `wavelength` nm.
    pub fn field(&self, wavelength: f64) -> Result<ComplexField> {
        let t = self.transmittance(wavelength);
        let p = self.phase(wavelength);
        let data = t
            .data()
            .iter()
            .zip(p.data())
            .map(|(&t, &p)| Complex64::from_polar(t.sqrt(), p))
            .collect();
        ComplexField::new(self.size, self.size, self.pitch, wavelength, data)
    }

    /// Transmission fields at several wavelengths.
    pub fn fields(&self, wavelengths: &[f64]) -> Result<Vec<ComplexField>> {
        wavelengths.iter().map(|&wl| self.field(wl)).collect()
    }

    /// Transmittance on the 400..=700 nm grid.
    pub fn cube(&self) -> SpectralCube {
        let grid = spectral_grid();
        let per_wl: Vec<Vec<f64>> = grid
            .iter()
            .map(|&wl| self.features.iter().map(|(_, s)| sample_spectrum(s, wl)).collect())
            .collect();
        let mut data = Vec::with_capacity(self.size * self.size * SPECTRAL_GRID_LEN);
        for i in 0..self.size * self.size {
            for ft in &per_wl {
                data.push(self.transmittance_at(i, ft));
            }
        }
        SpectralCube::new(self.size, self.size, self.pitch, data).expect("phantom geometry is valid")
    }

    /// sRGB rendering of the full transmittance spectrum under D65.
    pub fn truth_rgb(&self) -> RgbImage {
        let xyz = colorimetry::tristimulus(&self.cube(), &ColorMatchingTable::cie1931(), &Illuminant::d65());
        colorimetry::xyz_to_srgb(&xyz)
    }

    /// sRGB composite of the transmittance at three wavelengths, the same
    /// rendering the multi-height reconstruction modes use.
    pub fn truth_rgb_three_band(&self, wavelengths: [f64; 3]) -> Result<RgbImage> {
        let proj = ThreeBandProjector::new(wavelengths)?;
        let planes: Vec<RealField> = wavelengths.iter().map(|&wl| self.transmittance(wl)).collect();
        let data = (0..self.size * self.size)
            .map(|i| proj.srgb([planes[0].data()[i], planes[1].data()[i], planes[2].data()[i]]))
            .collect();
        RgbImage::new(self.size, self.size, data)
    }
}

/// In-line hologram `|propagate(object, +z)|²` recorded `z` µm downstream.
pub fn forward_hologram(object: &ComplexField, z: f64, n: f64) -> Result<RealField> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::NonPositiveZ(z));
    }
    Ok(propagate(object, PropagationParams::new(z, n))?.intensity())
}

/// Geometry and sensor model of a simulated acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionSpec {
    /// Sample-to-sensor distances in µm, ascending.
    pub heights: Vec<f64>,
    /// One wavelength for sequential, three for multiplexed illumination.
    pub wavelengths: Vec<f64>,
    /// Lateral stage positions in µm.
    pub raster_shifts: Vec<(f64, f64)>,
    pub sensor_pitch: f64,
    pub bayer: BayerLayout,
    /// Forward cross-talk: rows `(R, G1, G2, B)` sensor channels, columns
    /// illuminations ordered by descending wavelength.
    pub mixing: [[f64; 3]; 4],
    /// Gaussian noise standard deviation relative to the frame mean.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl AcquisitionSpec {
    /// `steps × steps` raster of stage positions `spacing` µm apart.
    pub fn raster_grid(steps: usize, spacing: f64) -> Vec<(f64, f64)> {
        let d = spacing;
        (0..steps * steps)
            .map(|k| ((k % steps) as f64 * d, (k / steps) as f64 * d))
            .collect()
    }

    pub fn identity_mixing() -> [[f64; 3]; 4] {
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    }

    pub fn validate(&self) -> Result<()> {
        if self.heights.is_empty() {
            return Err(Error::config("acquisition.heights", "needs at least one height"));
        }
        if let Some(z) = self.heights.iter().find(|z| !(**z > 0.0) || !z.is_finite()) {
            return Err(Error::NonPositiveZ(*z));
        }
        if self.heights.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("acquisition.heights", "must be strictly ascending"));
        }
        if !matches!(self.wavelengths.len(), 1 | 3) {
            return Err(Error::ConfigMismatch(format!(
                "acquisition needs 1 or 3 wavelengths, got {}",
                self.wavelengths.len()
            )));
        }
        if self.raster_shifts.is_empty() {
            return Err(Error::config("acquisition.raster_shifts", "needs at least one position"));
        }
        if self.raster_shifts.iter().any(|s| !(s.0.is_finite() && s.1.is_finite())) {
            return Err(Error::config("acquisition.raster_shifts", "shifts must be finite"));
        }
        if !(self.sensor_pitch > 0.0) {
            return Err(Error::config("acquisition.sensor_pitch", "must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::config("acquisition.noise_sigma", "must be non-negative"));
        }
        Ok(())
    }

    /// Illumination wavelengths in mixing-column order.
    fn column_order(&self) -> Vec<f64> {
        let mut wl = self.wavelengths.clone();
        wl.sort_by(|a, b| b.total_cmp(a));
        wl
    }
}

/// Integer decimation factor between the high-resolution lattice and the
/// sensor.
fn decimation(hr_pitch: f64, sensor_pitch: f64) -> Result<usize> {
    let ratio = sensor_pitch / hr_pitch;
    let factor = ratio.round();
    if factor < 1.0 || (ratio - factor).abs() > 1e-6 * ratio {
        return Err(Error::GridMismatch(format!(
            "sensor pitch {sensor_pitch} µm is not an integer multiple of {hr_pitch} µm"
        )));
    }
    Ok(factor as usize)
}

/// `I(x + s)` for a shift `s` in pixels, via the Fourier shift theorem
/// (an exact roll for integer shifts).
pub fn translate(img: &RealField, shift: (f64, f64)) -> RealField {
    let (w, h) = img.dims();
    let (sx, sy) = shift;
    if sx.fract() == 0.0 && sy.fract() == 0.0 {
        let (ix, iy) = (sx as i64, sy as i64);
        return RealField::from_fn(w, h, img.pitch(), |x, y| {
            img.get(
                (x as i64 + ix).rem_euclid(w as i64) as usize,
                (y as i64 + iy).rem_euclid(h as i64) as usize,
            )
        })
        .expect("same geometry");
    }
    let mut data: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::fft2(&mut data, w, h);
    let two_pi = 2.0 * std::f64::consts::PI;
    // The Nyquist bin of an even axis has no conjugate partner; its real
    // shift factor keeps the output real.
    let factor = |k: usize, n: usize, s: f64| {
        if n.is_multiple_of(2) && k == n / 2 {
            Complex64::new((std::f64::consts::PI * s).cos(), 0.0)
        } else {
            Complex64::from_polar(1.0, two_pi * fft::signed_index(k, n) as f64 / n as f64 * s)
        }
    };
    let fxs: Vec<Complex64> = (0..w).map(|x| factor(x, w, sx)).collect();
    for y in 0..h {
        let fy = factor(y, h, sy);
        for x in 0..w {
            data[y * w + x] *= fxs[x] * fy;
        }
    }
    fft::ifft2(&mut data, w, h);
    img.with_data(data.iter().map(|c| c.re).collect()).expect("same geometry")
}

fn frame_rng(seed: u64, height_index: usize, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((height_index as u64) << 32) | frame as u64);
    rng
}

/// Raw Bayer frames for every raster position at one height.
///
/// `intensities` pairs each illumination wavelength (nm) with its
/// high-resolution hologram; they must match `acq.wavelengths`. Frames are
/// point samples of the shifted scene on the sensor lattice.
pub fn bayer_acquire(
    intensities: &[(f64, RealField)],
    acq: &AcquisitionSpec,
    height_index: usize,
) -> Result<Vec<HologramFrame>> {
    acq.validate()?;
    let mut given: Vec<f64> = intensities.iter().map(|(wl, _)| *wl).collect();
    let mut wanted = acq.wavelengths.clone();
    given.sort_by(f64::total_cmp);
    wanted.sort_by(f64::total_cmp);
    if given != wanted {
        return Err(Error::ConfigMismatch(format!(
            "holograms at {given:?} nm do not match the illumination {wanted:?} nm"
        )));
    }
    let first = &intensities[0].1;
    for (_, img) in intensities {
        if img.dims() != first.dims() || img.pitch() != first.pitch() {
            return Err(Error::DimensionMismatch {
                expected: first.dims(),
                found: img.dims(),
            });
        }
    }
    let factor = decimation(first.pitch(), acq.sensor_pitch)?;
    let (w, h) = first.dims();
    if w % (2 * factor) != 0 || h % (2 * factor) != 0 {
        return Err(Error::GridMismatch(format!(
            "{w}x{h} high-resolution pixels do not tile whole Bayer cells at factor {factor}"
        )));
    }
    let (sw, sh) = (w / factor, h / factor);

    // response weight of each (sensor channel, illumination)
    let columns = acq.column_order();
    let by_column: Vec<&RealField> = columns
        .iter()
        .map(|wl| &intensities.iter().find(|(w, _)| w == wl).expect("matched above").1)
        .collect();
    let weights: [Vec<f64>; 4] = std::array::from_fn(|c| {
        if columns.len() == 3 {
            acq.mixing[c].to_vec()
        } else {
            let col = match sequential_channel(columns[0]) {
                Channel::R => 0,
                Channel::B => 2,
                _ => 1,
            };
            vec![acq.mixing[c][col]]
        }
    });
    let hr_pitch = first.pitch();

    acq.raster_shifts
        .par_iter()
        .enumerate()
        .map(|(k, &(dx, dy))| {
            let shift_px = (dx / hr_pitch, dy / hr_pitch);
            let moved: Vec<RealField> = by_column.iter().map(|img| translate(img, shift_px)).collect();
            let mut data = Vec::with_capacity(sw * sh);
            for y in 0..sh {
                for x in 0..sw {
                    let ch = acq.bayer.at(x, y);
                    let c = Channel::BAYER.iter().position(|&b| b == ch).expect("Bayer channel");
                    let v: f64 = weights[c]
                        .iter()
                        .zip(&moved)
                        .map(|(wt, img)| wt * img.get(x * factor, y * factor))
                        .sum();
                    data.push(v);
                }
            }
            if acq.noise_sigma > 0.0 {
                let mean = data.iter().sum::<f64>() / data.len() as f64;
                let normal = Normal::new(0.0, acq.noise_sigma * mean.abs())
                    .map_err(|e| Error::config("acquisition.noise_sigma", e.to_string()))?;
                let mut rng = frame_rng(acq.seed, height_index, k);
                for v in data.iter_mut() {
                    *v += normal.sample(&mut rng);
                }
            }
            for v in data.iter_mut() {
                *v = v.max(0.0);
            }
            let img = RealField::new(sw, sh, acq.sensor_pitch, data)?;
            HologramFrame::new(img, (dx, dy), height_index, Channel::Mosaic, columns.clone())
        })
        .collect()
}

/// Holograms of `phantom` at every height and wavelength of `acq`, then
/// sensor frames for each height (and, under sequential illumination, each
/// wavelength listed in `acq.wavelengths`).
pub fn simulate_acquisition(phantom: &Phantom, acq: &AcquisitionSpec, n: f64) -> Result<Vec<HologramFrame>> {
    acq.validate()?;
    let fields = phantom.fields(&acq.wavelengths)?;
    let mut frames = Vec::new();
    for (hi, &z) in acq.heights.iter().enumerate() {
        let holos = fields
            .par_iter()
            .map(|f| Ok((f.wavelength(), forward_hologram(f, z, n)?)))
            .collect::<Result<Vec<_>>>()?;
        frames.extend(bayer_acquire(&holos, acq, hi)?);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(style: PhantomStyle) -> PhantomSpec {
        PhantomSpec {
            size: 32,
            pitch: 0.5,
            seed: 7,
            style,
            ..Default::default()
        }
    }

    #[test]
    fn clear_phantom_is_a_plane_wave() {
        let s = PhantomSpec {
            absorption_range: (0.0, 0.0),
            phase_range: 0.0,
            ..spec(PhantomStyle::Disks)
        };
        let f = make_phantom(&s).unwrap().field(530.0).unwrap();
        assert!(f.data().iter().all(|&u| u == Complex64::new(1.0, 0.0)));
        let holo = forward_hologram(&f, 50.0, 1.0).unwrap();
        assert!(holo.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn phantoms_are_deterministic() {
        for style in [PhantomStyle::Bars, PhantomStyle::Disks, PhantomStyle::TexturedTissue] {
            let a = make_phantom(&spec(style)).unwrap().field(450.0).unwrap();
            let b = make_phantom(&spec(style)).unwrap().field(450.0).unwrap();
            assert_eq!(a, b);
            let c = make_phantom(&PhantomSpec { seed: 8, ..spec(style) }).unwrap().field(450.0).unwrap();
            if style != PhantomStyle::Bars {
                assert_ne!(a, c);
            }
            let t = make_phantom(&spec(style)).unwrap().transmittance(600.0);
            assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn hologram_conserves_mean_intensity() {
        let f = make_phantom(&spec(PhantomStyle::TexturedTissue)).unwrap().field(540.0).unwrap();
        let holo = forward_hologram(&f, 40.0, 1.0).unwrap();
        let mean_obj = f.intensity().mean();
        assert!((holo.mean() - mean_obj).abs() < 1e-10);
        assert!(matches!(forward_hologram(&f, 0.0, 1.0), Err(Error::NonPositiveZ(_))));
    }

    #[test]
    fn fractional_translation_matches_integer_roll_composition() {
        let img = RealField::from_fn(33, 31, 1.0, |x, y| ((x * 7 + y * 3) % 11) as f64).unwrap();
        let rolled = translate(&img, (3.0, -2.0));
        assert_eq!(rolled.get(0, 2), img.get(3, 0));
        let half = translate(&translate(&img, (0.5, 0.25)), (0.5, -2.25));
        let direct = translate(&img, (1.0, -2.0));
        for (a, b) in half.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn acquisition(wls: Vec<f64>, shifts: Vec<(f64, f64)>) -> AcquisitionSpec {
        AcquisitionSpec {
            heights: vec![100.0],
            wavelengths: wls,
            raster_shifts: shifts,
            sensor_pitch: 1.0,
            bayer: BayerLayout::rggb(),
            mixing: AcquisitionSpec::identity_mixing(),
            noise_sigma: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn selection_mixing_is_pure_decimation() {
        let p = make_phantom(&spec(PhantomStyle::Disks)).unwrap();
        let wls = [590.0, 540.0, 450.0];
        let holos: Vec<(f64, RealField)> = wls.iter().map(|&wl| (wl, p.transmittance(wl))).collect();
        let frames = bayer_acquire(&holos, &acquisition(wls.to_vec(), vec![(0.0, 0.0)]), 0).unwrap();
        assert_eq!(frames.len(), 1);
        let f = &frames[0].intensity;
        assert_eq!(f.dims(), (16, 16));
        assert_eq!(f.get(0, 0), holos[0].1.get(0, 0));
        assert_eq!(f.get(1, 0), holos[1].1.get(2, 0));
        assert_eq!(f.get(0, 1), holos[1].1.get(0, 2));
        assert_eq!(f.get(3, 5), holos[2].1.get(6, 10));
        assert_eq!(frames[0].illumination, wls.to_vec());
    }

    #[test]
    fn acquisition_is_order_independent_and_validated() {
        let p = make_phantom(&spec(PhantomStyle::Bars)).unwrap();
        let holos = vec![(540.0, p.transmittance(540.0))];
        let mut acq = acquisition(vec![540.0], AcquisitionSpec::raster_grid(2, 0.5));
        acq.noise_sigma = 0.01;
        let a = bayer_acquire(&holos, &acq, 2).unwrap();
        let b = bayer_acquire(&holos, &acq, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        let wrong = vec![(600.0, p.transmittance(600.0))];
        assert!(matches!(bayer_acquire(&wrong, &acq, 0), Err(Error::ConfigMismatch(_))));
        acq.sensor_pitch = 1.3;
        assert!(bayer_acquire(&holos, &acq, 0).is_err());
    }

    #[test]
    fn box_spectrum_feature_colour() {
        let mut box_spec = vec![1.0; SPECTRAL_GRID_LEN];
        for (i, wl) in spectral_grid().iter().enumerate() {
            if (500.0..=600.0).contains(wl) {
                box_spec[i] = 0.2;
            }
        }
        let s = PhantomSpec {
            spectra: Some(BTreeMap::from([("box".to_string(), box_spec.clone())])),
            size: 96,
            ..spec(PhantomStyle::Disks)
        };
        let p = make_phantom(&s).unwrap();
        let c = p.concentration(0);
        let proj = colorimetry::Projector::new(&ColorMatchingTable::cie1931(), &Illuminant::d65());
        let cube = p.cube();
        let i = (0..c.data().len())
            .max_by(|&a, &b| c.data()[a].total_cmp(&c.data()[b]))
            .unwrap();
        let conc = c.data()[i];
        assert!(conc > 0.999, "{conc}");
        let xyz = proj.xyz(cube.spectrum(i % 96, i / 96));
        let mixed: Vec<f64> = box_spec.iter().map(|t| 1.0 - conc * (1.0 - t)).collect();
        let want = proj.xyz(&mixed);
        let pure = proj.xyz(&box_spec);
        for k in 0..3 {
            assert!((xyz[k] - want[k]).abs() < 1e-12);
            assert!((xyz[k] - pure[k]).abs() < 1e-2);
        }
    }

    #[test]
    fn invalid_specs_name_the_field() {
        let bad = PhantomSpec {
            absorption_range: (0.5, 0.2),
            ..Default::default()
        };
        match make_phantom(&bad) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "phantom.absorption_range"),
            other => panic!("{other:?}"),
        }
    }
}
