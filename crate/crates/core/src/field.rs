//! Optical field and raster carriers.
//!
//! Every lattice is row-major with the origin at the top-left corner, `x`
//! running rightward and `y` downward. Pixels are square; `pitch` is the
//! pixel size in micrometers and `wavelength` is in nanometers.

use num_complex::Complex64;

use crate::error::{Error, Result};

fn check_geometry(width: usize, height: usize, pitch: f64, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidGeometry(format!(
            "lattice must be at least 1x1, got {width}x{height}"
        )));
    }
    if !(pitch > 0.0 && pitch.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "pitch must be positive, got {pitch}"
        )));
    }
    if len != width * height {
        return Err(Error::InvalidGeometry(format!(
            "{width}x{height} lattice needs {} samples, got {len}",
            width * height
        )));
    }
    Ok(())
}

fn check_wavelength(wavelength: f64) -> Result<()> {
    if wavelength > 0.0 && wavelength.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGeometry(format!(
            "wavelength must be positive, got {wavelength}"
        )))
    }
}

/// Complex amplitude lattice `U(x, y)` at a single wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    width: usize,
    height: usize,
    pitch: f64,
    wavelength: f64,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(
        width: usize,
        height: usize,
        pitch: f64,
        wavelength: f64,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        check_geometry(width, height, pitch, data.len())?;
        check_wavelength(wavelength)?;
        Ok(Self {
            width,
            height,
            pitch,
            wavelength,
            data,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        pitch: f64,
        wavelength: f64,
        value: Complex64,
    ) -> Result<Self> {
        Self::new(width, height, pitch, wavelength, vec![value; width * height])
    }

    /// Zero-phase field whose amplitude is `sqrt(meas)`.
    pub fn from_intensity(meas: &RealField, wavelength: f64) -> Result<Self> {
        if let Some(i) = meas.data.iter().position(|&v| v < 0.0 || v.is_nan()) {
            return Err(Error::NegativeIntensity {
                x: i % meas.width,
                y: i / meas.width,
                value: meas.data[i],
            });
        }
        let data = meas
            .data
            .iter()
            .map(|&v| Complex64::new(v.sqrt(), 0.0))
            .collect();
        Self::new(meas.width, meas.height, meas.pitch, wavelength, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.data[y * self.width + x]
    }

    /// Same geometry and wavelength, new samples.
    pub fn with_data(&self, data: Vec<Complex64>) -> Result<Self> {
        Self::new(self.width, self.height, self.pitch, self.wavelength, data)
    }

    pub fn amplitude(&self) -> RealField {
        RealField {
            width: self.width,
            height: self.height,
            pitch: self.pitch,
            data: self.data.iter().map(|u| u.norm()).collect(),
        }
    }

    pub fn intensity(&self) -> RealField {
        RealField {
            width: self.width,
            height: self.height,
            pitch: self.pitch,
            data: self.data.iter().map(|u| u.norm_sqr()).collect(),
        }
    }

    pub fn phase(&self) -> RealField {
        RealField {
            width: self.width,
            height: self.height,
            pitch: self.pitch,
            data: self.data.iter().map(|u| u.arg()).collect(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|u| u.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Per-pixel modulus `|u|`; metadata other than wavelength is carried over.
pub fn amplitude(field: &ComplexField) -> RealField {
    field.amplitude()
}

/// Zero-phase complex field `sqrt(meas) + 0j`.
pub fn from_intensity(meas: &RealField, wavelength: f64) -> Result<ComplexField> {
    ComplexField::from_intensity(meas, wavelength)
}

/// Real-valued lattice carrying intensity, amplitude or phase samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    width: usize,
    height: usize,
    pitch: f64,
    data: Vec<f64>,
}

impl RealField {
    pub fn new(width: usize, height: usize, pitch: f64, data: Vec<f64>) -> Result<Self> {
        check_geometry(width, height, pitch, data.len())?;
        Ok(Self {
            width,
            height,
            pitch,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, pitch: f64, value: f64) -> Result<Self> {
        Self::new(width, height, pitch, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        pitch: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, pitch, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, self.pitch, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pitch: self.pitch,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Rectangular sub-lattice starting at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidGeometry(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{} lattice",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + width]);
        }
        Self::new(width, height, self.pitch, data)
    }
}

/// Color filter behind which a frame was recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Channel {
    R,
    G1,
    G2,
    B,
    /// Already demultiplexed or monochrome data.
    Mono,
    /// Raw sensor readout with all four color filters interleaved.
    Mosaic,
}

impl Channel {
    pub const BAYER: [Channel; 4] = [Channel::R, Channel::G1, Channel::G2, Channel::B];

    pub fn name(self) -> &'static str {
        match self {
            Channel::R => "R",
            Channel::G1 => "G1",
            Channel::G2 => "G2",
            Channel::B => "B",
            Channel::Mono => "mono",
            Channel::Mosaic => "mosaic",
        }
    }
}

/// One recorded (or simulated) low-resolution hologram.
#[derive(Debug, Clone, PartialEq)]
pub struct HologramFrame {
    pub intensity: RealField,
    /// Lateral stage position in micrometers.
    pub shift: (f64, f64),
    pub height_index: usize,
    pub channel: Channel,
    /// Illumination wavelengths in nanometers; one for sequential, three for
    /// multiplexed acquisition.
    pub illumination: Vec<f64>,
}

impl HologramFrame {
    pub fn new(
        intensity: RealField,
        shift: (f64, f64),
        height_index: usize,
        channel: Channel,
        illumination: Vec<f64>,
    ) -> Result<Self> {
        if !matches!(illumination.len(), 1 | 3) {
            return Err(Error::ConfigMismatch(format!(
                "frame illumination must list 1 or 3 wavelengths, got {}",
                illumination.len()
            )));
        }
        if !(shift.0.is_finite() && shift.1.is_finite()) {
            return Err(Error::InvalidGeometry(format!("non-finite shift {shift:?}")));
        }
        Ok(Self {
            intensity,
            shift,
            height_index,
            channel,
            illumination,
        })
    }

    pub fn is_multiplexed(&self) -> bool {
        self.illumination.len() == 3
    }
}

/// The fixed 400..=700 nm, 10 nm wavelength grid.
pub const SPECTRAL_GRID_LEN: usize = 31;
pub const SPECTRAL_GRID_START: f64 = 400.0;
pub const SPECTRAL_GRID_STEP: f64 = 10.0;

pub fn spectral_grid() -> [f64; SPECTRAL_GRID_LEN] {
    std::array::from_fn(|i| SPECTRAL_GRID_START + SPECTRAL_GRID_STEP * i as f64)
}

/// A transmittance spectrum sampled on the 31-point grid.
pub type Spectrum = [f64; SPECTRAL_GRID_LEN];

/// Per-pixel transmittance spectra `T(λ)` on the 31-point grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    width: usize,
    height: usize,
    pitch: f64,
    /// Pixel-major: the 31 samples of pixel `(x, y)` start at `31 * (y * width + x)`.
    data: Vec<f64>,
}

impl SpectralCube {
    pub fn new(width: usize, height: usize, pitch: f64, data: Vec<f64>) -> Result<Self> {
        check_geometry(width, height, pitch, data.len() / SPECTRAL_GRID_LEN)?;
        if !data.len().is_multiple_of(SPECTRAL_GRID_LEN) {
            return Err(Error::GridMismatch(format!(
                "cube payload of {} samples is not a multiple of {SPECTRAL_GRID_LEN}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pitch,
            data,
        })
    }

    /// Assembles a cube from 31 per-wavelength planes in grid order.
    pub fn from_planes(planes: &[RealField]) -> Result<Self> {
        if planes.len() != SPECTRAL_GRID_LEN {
            return Err(Error::GridMismatch(format!(
                "expected {SPECTRAL_GRID_LEN} wavelength planes, got {}",
                planes.len()
            )));
        }
        let (w, h) = planes[0].dims();
        for p in planes {
            if p.dims() != (w, h) {
                return Err(Error::DimensionMismatch {
                    expected: (w, h),
                    found: p.dims(),
                });
            }
        }
        let mut data = vec![0.0; w * h * SPECTRAL_GRID_LEN];
        for (k, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.data().iter().enumerate() {
                data[i * SPECTRAL_GRID_LEN + k] = v;
            }
        }
        Self::new(w, h, planes[0].pitch(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn wavelengths(&self) -> [f64; SPECTRAL_GRID_LEN] {
        spectral_grid()
    }

    pub fn spectrum(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * SPECTRAL_GRID_LEN;
        &self.data[i..i + SPECTRAL_GRID_LEN]
    }

    pub fn spectra(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(SPECTRAL_GRID_LEN)
    }
}

/// Three-channel sRGB-encoded image with values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        check_geometry(width, height, 1.0, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    /// One color plane as a flat vector.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().map(|p| p[c]).collect()
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidGeometry(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + width]);
        }
        Self::new(width, height, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn amplitude_of_zero_field_is_zero() {
        let f = ComplexField::filled(4, 3, 1.0, 500.0, Complex64::new(0.0, 0.0)).unwrap();
        assert!(amplitude(&f).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn amplitude_of_three_four_is_five() {
        let f = ComplexField::filled(5, 2, 0.5, 540.0, Complex64::new(3.0, 4.0)).unwrap();
        let a = amplitude(&f);
        assert!(a.data().iter().all(|&v| v == 5.0));
        assert_eq!(a.pitch(), 0.5);
        assert_eq!(a.dims(), (5, 2));
    }

    #[test]
    fn amplitude_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<Complex64> = (0..48)
            .map(|_| Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect();
        let f = ComplexField::new(8, 6, 1.12, 450.0, data.clone()).unwrap();
        let a = amplitude(&f);
        for (i, u) in data.iter().enumerate() {
            let expected = (u.re * u.re + u.im * u.im).sqrt();
            assert!((a.data()[i] - expected).abs() <= 1e-15 * expected.max(1.0));
        }
    }

    #[test]
    fn from_intensity_is_zero_phase_sqrt() {
        let m = RealField::filled(3, 3, 1.0, 4.0).unwrap();
        let f = from_intensity(&m, 590.0).unwrap();
        assert!(f.data().iter().all(|u| *u == Complex64::new(2.0, 0.0)));
        assert_eq!(f.wavelength(), 590.0);

        let z = RealField::filled(2, 2, 1.0, 0.0).unwrap();
        let f = from_intensity(&z, 590.0).unwrap();
        assert!(f.data().iter().all(|u| *u == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn from_intensity_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..35).map(|_| rng.random_range(0.0..10.0)).collect();
        let m = RealField::new(7, 5, 1.0, data.clone()).unwrap();
        let f = from_intensity(&m, 540.0).unwrap();
        for (u, v) in f.data().iter().zip(&data) {
            assert_eq!(u.re, v.sqrt());
            assert_eq!(u.im, 0.0);
        }
    }

    #[test]
    fn from_intensity_rejects_negative_samples() {
        let m = RealField::new(2, 2, 1.0, vec![1.0, 0.0, -0.5, 2.0]).unwrap();
        match from_intensity(&m, 540.0) {
            Err(Error::NegativeIntensity { x: 0, y: 1, value }) => assert_eq!(value, -0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn geometry_invariants_are_enforced() {
        assert!(RealField::new(0, 3, 1.0, vec![]).is_err());
        assert!(RealField::new(2, 2, 0.0, vec![0.0; 4]).is_err());
        assert!(RealField::new(2, 2, 1.0, vec![0.0; 5]).is_err());
        assert!(ComplexField::filled(2, 2, 1.0, -1.0, Complex64::new(1.0, 0.0)).is_err());
        let r = RealField::filled(1, 1, 1.0, 1.0).unwrap();
        assert!(HologramFrame::new(r.clone(), (0.0, 0.0), 0, Channel::R, vec![]).is_err());
        assert!(HologramFrame::new(r, (0.0, 0.0), 0, Channel::R, vec![450.0, 540.0]).is_err());
    }

    #[test]
    fn spectral_grid_is_uniform_31_points() {
        let g = spectral_grid();
        assert_eq!(g.len(), 31);
        assert_eq!(g[0], 400.0);
        assert_eq!(g[30], 700.0);
        assert!(g.windows(2).all(|w| w[1] - w[0] == 10.0));
    }

    proptest::proptest! {
        #[test]
        fn amplitude_squared_reproduces_intensity(
            vals in proptest::collection::vec(0.0f64..1e6, 16)
        ) {
            let m = RealField::new(4, 4, 1.0, vals.clone()).unwrap();
            let a = from_intensity(&m, 500.0).unwrap().amplitude();
            for (x, v) in a.data().iter().zip(&vals) {
                let rel = (x * x - v).abs() / v.max(f64::MIN_POSITIVE);
                proptest::prop_assert!(*v == 0.0 && *x == 0.0 || rel <= 1e-12);
            }
        }
    }
}
