//! Spectral to color projection.
//!
//! Per-pixel transmittance spectra on the 31-point 400..700 nm grid are
//! projected to CIE XYZ with the 1931 2° observer under D65,
//!
//! ```text
//! X = k Σ x̄(λ) T(λ) E(λ) Δλ,   k = 1 / Σ ȳ(λ) E(λ) Δλ
//! ```
//!
//! (likewise Y, Z) so that a fully transparent sample has `Y = 1`. Display
//! values use the sRGB primaries with the grid-integrated D65 white as the
//! reference white, which keeps `T ≡ 1` mapped to `(1, 1, 1)` exactly.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::field::{spectral_grid, RgbImage, SpectralCube, Spectrum, SPECTRAL_GRID_LEN, SPECTRAL_GRID_STEP};

const CMF_1931_2DEG: &str = include_str!("../data/cie1931_2deg_cmf.txt");
const ILLUMINANT_D65: &str = include_str!("../data/cie_d65.txt");

/// sRGB primaries as CIE xy chromaticities (R, G, B).
const SRGB_PRIMARIES: [(f64, f64); 3] = [(0.64, 0.33), (0.30, 0.60), (0.15, 0.06)];

/// Parses a "λ value..." table with exactly `columns` values per line and
/// checks it against the 31-point grid. Blank lines and `#` comments are
/// skipped.
pub fn parse_spectral_table(text: &str, columns: usize) -> Result<Vec<Vec<f64>>> {
    let grid = spectral_grid();
    let mut rows = Vec::with_capacity(SPECTRAL_GRID_LEN);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::GridMismatch(format!("line {}: cannot parse {t:?}", lineno + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if nums.len() != columns + 1 {
            return Err(Error::GridMismatch(format!(
                "line {}: expected wavelength plus {columns} values, got {} numbers",
                lineno + 1,
                nums.len()
            )));
        }
        let k = rows.len();
        if k >= SPECTRAL_GRID_LEN || (nums[0] - grid[k]).abs() > 1e-9 {
            return Err(Error::GridMismatch(format!(
                "line {}: wavelength {} nm does not match grid sample {}",
                lineno + 1,
                nums[0],
                grid.get(k).map_or("<end>".to_string(), |g| format!("{g} nm"))
            )));
        }
        if nums[1..].iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::GridMismatch(format!(
                "line {}: values must be finite and non-negative",
                lineno + 1
            )));
        }
        rows.push(nums[1..].to_vec());
    }
    if rows.len() != SPECTRAL_GRID_LEN {
        return Err(Error::GridMismatch(format!(
            "table has {} rows, grid needs {SPECTRAL_GRID_LEN}",
            rows.len()
        )));
    }
    Ok(rows)
}

fn read_table(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spectral_table(&text, columns)
}

/// x̄, ȳ, z̄ sampled on the 31-point grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorMatchingTable {
    values: [[f64; 3]; SPECTRAL_GRID_LEN],
}

impl ColorMatchingTable {
    pub fn from_text(text: &str) -> Result<Self> {
        let rows = parse_spectral_table(text, 3)?;
        Ok(Self {
            values: std::array::from_fn(|i| [rows[i][0], rows[i][1], rows[i][2]]),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let rows = read_table(path.as_ref(), 3)?;
        Ok(Self {
            values: std::array::from_fn(|i| [rows[i][0], rows[i][1], rows[i][2]]),
        })
    }

    /// CIE 1931 2° standard observer.
    pub fn cie1931() -> Self {
        Self::from_text(CMF_1931_2DEG).expect("bundled CMF table is valid")
    }

    pub fn values(&self) -> &[[f64; 3]; SPECTRAL_GRID_LEN] {
        &self.values
    }
}

/// Relative spectral power `E(λ)` on the 31-point grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Illuminant {
    power: Spectrum,
}

impl Illuminant {
    pub fn from_text(text: &str) -> Result<Self> {
        let rows = parse_spectral_table(text, 1)?;
        Ok(Self {
            power: std::array::from_fn(|i| rows[i][0]),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let rows = read_table(path.as_ref(), 1)?;
        Ok(Self {
            power: std::array::from_fn(|i| rows[i][0]),
        })
    }

    pub fn d65() -> Self {
        Self::from_text(ILLUMINANT_D65).expect("bundled D65 table is valid")
    }

    pub fn power(&self) -> &Spectrum {
        &self.power
    }
}

/// Per-pixel CIE XYZ tristimulus values.
#[derive(Debug, Clone, PartialEq)]
pub struct XyzImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

/// Spectral weights `k · cmf(λ) · E(λ) · Δλ` folding the normalization into
/// one table, so a projection is a 31-term dot product per channel.
#[derive(Debug, Clone)]
pub struct Projector {
    weights: [[f64; 3]; SPECTRAL_GRID_LEN],
}

impl Projector {
    pub fn new(cmf: &ColorMatchingTable, illum: &Illuminant) -> Self {
        let y_sum: f64 = (0..SPECTRAL_GRID_LEN)
            .map(|i| cmf.values[i][1] * illum.power[i] * SPECTRAL_GRID_STEP)
            .sum();
        let k = 1.0 / y_sum;
        let weights = std::array::from_fn(|i| {
            let e = illum.power[i] * SPECTRAL_GRID_STEP * k;
            [cmf.values[i][0] * e, cmf.values[i][1] * e, cmf.values[i][2] * e]
        });
        Self { weights }
    }

    pub fn xyz(&self, spectrum: &[f64]) -> [f64; 3] {
        debug_assert_eq!(spectrum.len(), SPECTRAL_GRID_LEN);
        let mut out = [0.0; 3];
        for (w, &t) in self.weights.iter().zip(spectrum) {
            out[0] += w[0] * t;
            out[1] += w[1] * t;
            out[2] += w[2] * t;
        }
        out
    }

    /// XYZ of a unit-transmittance sample (the illuminant white, `Y = 1`).
    pub fn white(&self) -> [f64; 3] {
        self.xyz(&[1.0; SPECTRAL_GRID_LEN])
    }

    /// XYZ contributed by one grid sample at unit transmittance.
    pub fn sample_weight(&self, index: usize) -> [f64; 3] {
        self.weights[index]
    }
}

/// Riemann-sum XYZ projection of every pixel of `cube`.
pub fn tristimulus(cube: &SpectralCube, cmf: &ColorMatchingTable, illum: &Illuminant) -> XyzImage {
    let p = Projector::new(cmf, illum);
    XyzImage {
        width: cube.width(),
        height: cube.height(),
        data: cube.spectra().map(|s| p.xyz(s)).collect(),
    }
}

/// The D65 white integrated on the 31-point grid with the 1931 observer.
pub fn d65_white() -> [f64; 3] {
    static WHITE: OnceLock<[f64; 3]> = OnceLock::new();
    *WHITE.get_or_init(|| Projector::new(&ColorMatchingTable::cie1931(), &Illuminant::d65()).white())
}

/// Linear-RGB to XYZ matrix for the sRGB primaries and a given white.
pub fn rgb_to_xyz_matrix(white: [f64; 3]) -> Matrix3<f64> {
    let cols: Vec<Vector3<f64>> = SRGB_PRIMARIES
        .iter()
        .map(|&(x, y)| Vector3::new(x / y, 1.0, (1.0 - x - y) / y))
        .collect();
    let p = Matrix3::from_columns(&cols);
    let scale = p
        .try_inverse()
        .expect("sRGB primaries are independent")
        * Vector3::from(white);
    p * Matrix3::from_diagonal(&scale)
}

struct SrgbMatrices {
    to_xyz: Matrix3<f64>,
    from_xyz: Matrix3<f64>,
}

fn srgb_matrices() -> &'static SrgbMatrices {
    static M: OnceLock<SrgbMatrices> = OnceLock::new();
    M.get_or_init(|| {
        let to_xyz = rgb_to_xyz_matrix(d65_white());
        SrgbMatrices {
            to_xyz,
            from_xyz: to_xyz.try_inverse().expect("invertible"),
        }
    })
}

pub fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn xyz_to_linear_rgb(xyz: [f64; 3]) -> [f64; 3] {
    let v = srgb_matrices().from_xyz * Vector3::from(xyz);
    [v[0], v[1], v[2]]
}

pub fn linear_rgb_to_xyz(rgb: [f64; 3]) -> [f64; 3] {
    let v = srgb_matrices().to_xyz * Vector3::from(rgb);
    [v[0], v[1], v[2]]
}

/// Linear-light RGB clipped to `[0, 1]`, then sRGB encoded.
pub fn encode_linear_rgb(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|c| linear_to_srgb(c.clamp(0.0, 1.0)))
}

pub fn xyz_pixel_to_srgb(xyz: [f64; 3]) -> [f64; 3] {
    encode_linear_rgb(xyz_to_linear_rgb(xyz))
}

pub fn xyz_to_srgb(img: &XyzImage) -> RgbImage {
    let data = img.data.iter().map(|&p| xyz_pixel_to_srgb(p)).collect();
    RgbImage::new(img.width, img.height, data).expect("XyzImage geometry is valid")
}

pub fn xyz_to_lab(xyz: [f64; 3], white: [f64; 3]) -> [f64; 3] {
    const EPS: f64 = 216.0 / 24389.0;
    const KAPPA: f64 = 24389.0 / 27.0;
    let f = |t: f64| {
        if t > EPS {
            t.cbrt()
        } else {
            (KAPPA * t + 16.0) / 116.0
        }
    };
    let fx = f(xyz[0] / white[0]);
    let fy = f(xyz[1] / white[1]);
    let fz = f(xyz[2] / white[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn srgb_pixel_to_lab(rgb: [f64; 3], white: [f64; 3]) -> [f64; 3] {
    xyz_to_lab(linear_rgb_to_xyz(rgb.map(srgb_to_linear)), white)
}

/// CIELAB of every pixel, relative to `white` (XYZ).
pub fn srgb_to_lab(img: &RgbImage, white: [f64; 3]) -> Vec<[f64; 3]> {
    img.pixels().iter().map(|&p| srgb_pixel_to_lab(p, white)).collect()
}

/// Maps transmittances measured at three wavelengths to XYZ.
///
/// Each wavelength contributes the tristimulus of a delta-like spectrum at
/// that grid sample; per-band gains are chosen so unit transmittance in all
/// three bands reproduces the D65 white. Used for three-wavelength
/// composites where no full spectrum is available.
#[derive(Debug, Clone)]
pub struct ThreeBandProjector {
    wavelengths: [f64; 3],
    basis: Matrix3<f64>,
}

impl ThreeBandProjector {
    pub fn new(wavelengths: [f64; 3]) -> Result<Self> {
        let projector = Projector::new(&ColorMatchingTable::cie1931(), &Illuminant::d65());
        let grid = spectral_grid();
        let mut cols = Vec::with_capacity(3);
        for &wl in &wavelengths {
            let idx = grid
                .iter()
                .position(|&g| (g - wl).abs() < 1e-9)
                .ok_or_else(|| Error::GridMismatch(format!("{wl} nm is not on the 10 nm grid")))?;
            cols.push(Vector3::from(projector.sample_weight(idx)));
        }
        let raw = Matrix3::from_columns(&cols);
        let gains = raw
            .try_inverse()
            .ok_or_else(|| Error::GridMismatch(format!("bands {wavelengths:?} are colorimetrically degenerate")))?
            * Vector3::from(projector.white());
        if gains.iter().any(|g| *g <= 0.0) {
            return Err(Error::GridMismatch(format!(
                "bands {wavelengths:?} cannot reproduce the D65 white with positive gains"
            )));
        }
        Ok(Self {
            wavelengths,
            basis: raw * Matrix3::from_diagonal(&gains),
        })
    }

    pub fn wavelengths(&self) -> [f64; 3] {
        self.wavelengths
    }

    /// `transmittance[i]` is the intensity transmittance at `wavelengths[i]`.
    pub fn xyz(&self, transmittance: [f64; 3]) -> [f64; 3] {
        let v = self.basis * Vector3::from(transmittance);
        [v[0], v[1], v[2]]
    }

    pub fn srgb(&self, transmittance: [f64; 3]) -> [f64; 3] {
        xyz_pixel_to_srgb(self.xyz(transmittance))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_cube(w: usize, h: usize, t: f64) -> SpectralCube {
        SpectralCube::new(w, h, 1.0, vec![t; w * h * SPECTRAL_GRID_LEN]).unwrap()
    }

    #[test]
    fn bundled_tables_load() {
        let cmf = ColorMatchingTable::cie1931();
        assert_eq!(cmf.values()[0], [0.014310, 0.000396, 0.067850]);
        assert_eq!(cmf.values()[16], [0.594500, 0.995000, 0.003900]);
        assert_eq!(Illuminant::d65().power()[16], 100.0);
    }

    #[test]
    fn zero_transmittance_projects_to_black() {
        let xyz = tristimulus(&uniform_cube(2, 2, 0.0), &ColorMatchingTable::cie1931(), &Illuminant::d65());
        assert!(xyz.data.iter().all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn unit_transmittance_is_grid_white() {
        let xyz = tristimulus(&uniform_cube(1, 1, 1.0), &ColorMatchingTable::cie1931(), &Illuminant::d65());
        let [x, y, z] = xyz.data[0];
        assert_eq!(y, 1.0);
        // independent summation of the published tables
        assert!((x - 0.949_400_939_860_897).abs() < 1e-12);
        assert!((z - 1.087_091_222_059_46).abs() < 1e-12);
    }

    #[test]
    fn white_and_black_encode_to_srgb_extremes() {
        let white = xyz_pixel_to_srgb(d65_white());
        for c in white {
            assert!((c - 1.0).abs() < 1e-12);
        }
        // the textbook D65 white lands within 1e-3 as well
        for c in xyz_pixel_to_srgb([0.9505, 1.0, 1.089]) {
            assert!((c - 1.0).abs() < 1e-3);
        }
        assert_eq!(xyz_pixel_to_srgb([0.0; 3]), [0.0; 3]);
    }

    #[test]
    fn red_primary_maps_to_pure_red() {
        let rgb = xyz_pixel_to_srgb([0.4124, 0.2126, 0.0193]);
        assert!((rgb[0] - 1.0).abs() < 1e-3);
        assert!(rgb[1].abs() < 1e-3);
        assert!(rgb[2].abs() < 1e-3);
    }

    #[test]
    fn lab_of_white_black_and_gray() {
        let w = d65_white();
        let white = srgb_pixel_to_lab([1.0; 3], w);
        assert!((white[0] - 100.0).abs() < 0.01 && white[1].abs() < 0.01 && white[2].abs() < 0.01);
        assert_eq!(srgb_pixel_to_lab([0.0; 3], w), [0.0, 0.0, 0.0]);
        // L* = 116 Y^(1/3) - 16 with Y = ((0.5 + 0.055) / 1.055)^2.4, evaluated to 30 digits
        let gray = srgb_pixel_to_lab([0.5; 3], w);
        assert!((gray[0] - 53.388_964_741_114_31).abs() < 1e-9);
        assert!(gray[1].abs() < 1e-9 && gray[2].abs() < 1e-9);
    }

    #[test]
    fn three_band_white_is_exact() {
        let p = ThreeBandProjector::new([590.0, 540.0, 450.0]).unwrap();
        let xyz = p.xyz([1.0; 3]);
        let w = d65_white();
        for i in 0..3 {
            assert!((xyz[i] - w[i]).abs() < 1e-12);
        }
        assert!(ThreeBandProjector::new([455.0, 540.0, 590.0]).is_err());
    }

    #[test]
    fn table_parser_rejects_bad_grids() {
        assert!(matches!(parse_spectral_table("400 1\n", 1), Err(Error::GridMismatch(_))));
        let shifted: String = (0..31).map(|i| format!("{} 1\n", 405 + 10 * i)).collect();
        assert!(matches!(parse_spectral_table(&shifted, 1), Err(Error::GridMismatch(_))));
        let good: String = (0..31).map(|i| format!("{} 1 # note\n", 400 + 10 * i)).collect();
        assert_eq!(parse_spectral_table(&format!("# header\n\n{good}"), 1).unwrap().len(), 31);
        let wrong_cols: String = (0..31).map(|i| format!("{} 1 2\n", 400 + 10 * i)).collect();
        assert!(parse_spectral_table(&wrong_cols, 1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn linear_rgb_round_trip(r in 0.0f64..1.0, g in 0.0f64..1.0, b in 0.0f64..1.0) {
            let back = xyz_to_linear_rgb(linear_rgb_to_xyz([r, g, b]));
            for (x, y) in back.iter().zip([r, g, b]) {
                proptest::prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn transfer_curve_round_trip(c in 0.0f64..1.0) {
            proptest::prop_assert!((srgb_to_linear(linear_to_srgb(c)) - c).abs() < 1e-12);
        }
    }
}
