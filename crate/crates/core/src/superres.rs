//! Pixel super-resolution from laterally shifted low-resolution frames, and
//! its demosaiced variant for wavelength-multiplexed illumination.
//!
//! Shift convention: a frame with shift `(sx, sy)` (low-resolution pixels)
//! sees at its pixel `(i, j)` the scene point that frame 0 sees at
//! `(i + sx, j + sy)`. Shift-and-add deposits every low-resolution sample at
//! the nearest high-resolution site of that scene position and averages the
//! deposits per site.

use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Matrix4x3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{Channel, HologramFrame, RealField};

/// Per-frame lateral shift in low-resolution pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTable {
    shifts: Vec<(f64, f64)>,
}

impl ShiftTable {
    pub fn new(shifts: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(s) = shifts.iter().find(|s| !(s.0.is_finite() && s.1.is_finite())) {
            return Err(Error::InvalidGeometry(format!("non-finite shift {s:?}")));
        }
        Ok(Self { shifts })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            shifts: vec![(0.0, 0.0); n],
        }
    }

    /// Stage positions recorded in frame metadata, converted from
    /// micrometers to pixels of each frame's own lattice.
    pub fn from_metadata(frames: &[HologramFrame]) -> Self {
        Self {
            shifts: frames
                .iter()
                .map(|f| {
                    let p = f.intensity.pitch();
                    (f.shift.0 / p, f.shift.1 / p)
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    pub fn get(&self, i: usize) -> (f64, f64) {
        self.shifts[i]
    }

    pub fn as_slice(&self) -> &[(f64, f64)] {
        &self.shifts
    }
}

/// The 3×4 demultiplexing matrix mapping sensor channel responses
/// `(R, G1, G2, B)` to per-illumination holograms `(R, G, B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrosstalkMatrix {
    rows: [[f64; 4]; 3],
}

impl CrosstalkMatrix {
    pub fn new(rows: [[f64; 4]; 3]) -> Result<Self> {
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Format("cross-talk matrix entries must be finite".into()));
        }
        Ok(Self { rows })
    }

    /// Picks R, averages G1 and G2, picks B.
    pub fn selection() -> Self {
        Self {
            rows: [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 0.5, 0.5, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ],
        }
    }

    /// Least-squares demixing `(MᵀM)⁻¹Mᵀ` for a 4×3 forward mixing matrix
    /// whose rows are sensor channels `(R, G1, G2, B)` and whose columns are
    /// illuminations `(R, G, B)`.
    pub fn from_mixing(mixing: &[[f64; 3]; 4]) -> Result<Self> {
        let m = Matrix4x3::from_fn(|r, c| mixing[r][c]);
        let gram: Matrix3<f64> = m.transpose() * m;
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Format("mixing matrix has rank below 3".into()))?;
        let w: Matrix3x4<f64> = inv * m.transpose();
        Self::new(std::array::from_fn(|r| std::array::from_fn(|c| w[(r, c)])))
    }

    pub fn rows(&self) -> &[[f64; 4]; 3] {
        &self.rows
    }

    /// Three rows of four whitespace-separated numbers; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Format(format!("cannot parse {t:?} in cross-talk matrix")))
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != 4 {
                return Err(Error::Format(format!(
                    "cross-talk matrix rows need 4 values, got {}",
                    vals.len()
                )));
            }
            rows.push([vals[0], vals[1], vals[2], vals[3]]);
        }
        if rows.len() != 3 {
            return Err(Error::Format(format!(
                "cross-talk matrix needs 3 rows, got {}",
                rows.len()
            )));
        }
        Self::new([rows[0], rows[1], rows[2]])
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# rows: R, G, B; columns: R, G1, G2, B\n");
        for r in &self.rows {
            s.push_str(&format!("{} {} {} {}\n", r[0], r[1], r[2], r[3]));
        }
        s
    }
}

/// Which color filter sits at each position of the 2×2 Bayer cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BayerLayout {
    /// `cells[y][x]` for `x, y ∈ {0, 1}`.
    cells: [[Channel; 2]; 2],
}

impl BayerLayout {
    pub fn new(cells: [[Channel; 2]; 2]) -> Result<Self> {
        let flat = [cells[0][0], cells[0][1], cells[1][0], cells[1][1]];
        for ch in Channel::BAYER {
            if flat.iter().filter(|&&c| c == ch).count() != 1 {
                return Err(Error::ConfigMismatch(format!(
                    "Bayer cell {flat:?} must name R, G1, G2 and B exactly once"
                )));
            }
        }
        Ok(Self { cells })
    }

    /// R G1 / G2 B.
    pub fn rggb() -> Self {
        Self {
            cells: [[Channel::R, Channel::G1], [Channel::G2, Channel::B]],
        }
    }

    /// Offset `(x, y)` of `channel` within the cell, in sensor pixels.
    pub fn offset(&self, channel: Channel) -> Option<(usize, usize)> {
        for y in 0..2 {
            for x in 0..2 {
                if self.cells[y][x] == channel {
                    return Some((x, y));
                }
            }
        }
        None
    }

    pub fn at(&self, x: usize, y: usize) -> Channel {
        self.cells[y % 2][x % 2]
    }

    /// Parses a four-letter pattern such as `RGGB` or `BGGR`; the first G is
    /// G1.
    pub fn from_pattern(pattern: &str) -> Result<Self> {
        let chars: Vec<char> = pattern.trim().to_ascii_uppercase().chars().collect();
        if chars.len() != 4 {
            return Err(Error::ConfigMismatch(format!("Bayer pattern {pattern:?} needs 4 letters")));
        }
        let mut seen_g = false;
        let mut flat = [Channel::R; 4];
        for (i, c) in chars.iter().enumerate() {
            flat[i] = match c {
                'R' => Channel::R,
                'B' => Channel::B,
                'G' if !seen_g => {
                    seen_g = true;
                    Channel::G1
                }
                'G' => Channel::G2,
                _ => {
                    return Err(Error::ConfigMismatch(format!(
                        "unknown Bayer letter {c:?} in {pattern:?}"
                    )))
                }
            };
        }
        Self::new([[flat[0], flat[1]], [flat[2], flat[3]]])
    }
}

impl Default for BayerLayout {
    fn default() -> Self {
        Self::rggb()
    }
}

/// Sensor channel used for one wavelength under sequential illumination:
/// B for 400–470 nm, G1 for 480–580 nm, R for 590–700 nm.
pub fn sequential_channel(wavelength_nm: f64) -> Channel {
    if wavelength_nm < 475.0 {
        Channel::B
    } else if wavelength_nm < 585.0 {
        Channel::G1
    } else {
        Channel::R
    }
}

/// Quarter-resolution image of one Bayer channel. The returned frame has
/// twice the sensor pitch and its shift includes the channel's intrinsic
/// offset within the Bayer cell.
pub fn extract_channel(frame: &HologramFrame, layout: &BayerLayout, channel: Channel) -> Result<HologramFrame> {
    let (ox, oy) = layout
        .offset(channel)
        .ok_or_else(|| Error::ConfigMismatch(format!("{} is not a Bayer channel", channel.name())))?;
    let img = &frame.intensity;
    let (w, h) = img.dims();
    if w % 2 != 0 || h % 2 != 0 || w < 2 || h < 2 {
        return Err(Error::InvalidGeometry(format!(
            "Bayer frames need even dimensions, got {w}x{h}"
        )));
    }
    let p = img.pitch();
    let sub = RealField::from_fn(w / 2, h / 2, 2.0 * p, |x, y| img.get(2 * x + ox, 2 * y + oy))?;
    HologramFrame::new(
        sub,
        (frame.shift.0 + ox as f64 * p, frame.shift.1 + oy as f64 * p),
        frame.height_index,
        channel,
        frame.illumination.clone(),
    )
}

/// How to treat cross-correlation peaks when estimating shifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftEstimator {
    /// Apply a separable Hann window before correlating.
    pub window: bool,
    /// Upsampling factor of the local correlation search that follows the
    /// parabolic estimate; 1 keeps the parabolic estimate.
    pub upsample: usize,
}

impl Default for ShiftEstimator {
    fn default() -> Self {
        Self {
            window: false,
            upsample: 32,
        }
    }
}

fn prepared_spectrum(img: &RealField, window: bool) -> Vec<Complex64> {
    let (w, h) = img.dims();
    let mean = img.mean();
    let hann = |k: usize, n: usize| {
        if window {
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()
        } else {
            1.0
        }
    };
    let mut data: Vec<Complex64> = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            Complex64::new((img.data()[i] - mean) * hann(x, w) * hann(y, h), 0.0)
        })
        .collect();
    fft::fft2(&mut data, w, h);
    data
}

fn parabolic_offset(ym: f64, y0: f64, yp: f64) -> f64 {
    let denom = ym - 2.0 * y0 + yp;
    if denom.abs() < f64::EPSILON * y0.abs().max(1.0) {
        0.0
    } else {
        (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
    }
}

fn refine_upsampled(cross: &[Complex64], w: usize, h: usize, start: (f64, f64), upsample: usize) -> (f64, f64) {
    use std::f64::consts::PI;
    let step = 1.0 / upsample as f64;
    let half = (1.5 * upsample as f64).round() as i64;
    let centre = (
        (start.0 * upsample as f64).round() * step,
        (start.1 * upsample as f64).round() * step,
    );
    let m = (2 * half + 1) as usize;
    let dx: Vec<f64> = (0..m).map(|k| centre.0 + (k as i64 - half) as f64 * step).collect();
    let dy: Vec<f64> = (0..m).map(|k| centre.1 + (k as i64 - half) as f64 * step).collect();
    let fx: Vec<f64> = (0..w).map(|k| fft::signed_index(k, w) as f64 / w as f64).collect();
    let fy: Vec<f64> = (0..h).map(|k| fft::signed_index(k, h) as f64 / h as f64).collect();

    // rows[v][a] = Σ_u cross[v][u] · exp(2πi fx_u dx_a)
    let ex: Vec<Complex64> = dx
        .iter()
        .flat_map(|&d| fx.iter().map(move |&f| Complex64::from_polar(1.0, 2.0 * PI * f * d)))
        .collect();
    let mut rows = vec![Complex64::new(0.0, 0.0); h * m];
    for v in 0..h {
        let src = &cross[v * w..(v + 1) * w];
        for a in 0..m {
            let e = &ex[a * w..(a + 1) * w];
            rows[v * m + a] = src.iter().zip(e).map(|(s, e)| s * e).sum();
        }
    }
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    let mut surface = vec![0.0; m * m];
    for (b, &d) in dy.iter().enumerate() {
        let ey: Vec<Complex64> = fy.iter().map(|&f| Complex64::from_polar(1.0, 2.0 * PI * f * d)).collect();
        for a in 0..m {
            let val: Complex64 = (0..h).map(|v| rows[v * m + a] * ey[v]).sum();
            surface[b * m + a] = val.re;
            if val.re > best.0 {
                best = (val.re, a, b);
            }
        }
    }
    let (_, a, b) = best;
    let sub_x = if a > 0 && a + 1 < m {
        parabolic_offset(surface[b * m + a - 1], surface[b * m + a], surface[b * m + a + 1])
    } else {
        0.0
    };
    let sub_y = if b > 0 && b + 1 < m {
        parabolic_offset(surface[(b - 1) * m + a], surface[b * m + a], surface[(b + 1) * m + a])
    } else {
        0.0
    };
    (dx[a] + sub_x * step, dy[b] + sub_y * step)
}

/// Shift of every frame relative to frame 0, from the cross-correlation
/// peak with parabolic sub-pixel interpolation and an optional upsampled
/// local search.
pub fn estimate_shifts_with(frames: &[HologramFrame], est: ShiftEstimator) -> Result<ShiftTable> {
    if frames.len() < 2 {
        return Err(Error::ConfigMismatch(format!(
            "shift estimation needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let reference = &frames[0];
    let dims = reference.intensity.dims();
    for f in &frames[1..] {
        if f.intensity.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: f.intensity.dims(),
            });
        }
        if f.channel != reference.channel {
            return Err(Error::ConfigMismatch(format!(
                "cannot register a {} frame against a {} frame",
                f.channel.name(),
                reference.channel.name()
            )));
        }
    }
    let (w, h) = dims;
    let ref_spec = prepared_spectrum(&reference.intensity, est.window);

    let shifts = frames[1..]
        .par_iter()
        .map(|f| {
            let spec = prepared_spectrum(&f.intensity, est.window);
            let cross: Vec<Complex64> = ref_spec.iter().zip(&spec).map(|(a, b)| a * b.conj()).collect();
            let mut corr = cross.clone();
            fft::ifft2(&mut corr, w, h);
            let (mut bi, mut bv) = (0, f64::NEG_INFINITY);
            for (i, c) in corr.iter().enumerate() {
                if c.re > bv {
                    bv = c.re;
                    bi = i;
                }
            }
            let (px, py) = (bi % w, bi / w);
            let at = |x: usize, y: usize| corr[(y % h) * w + (x % w)].re;
            let ox = if w >= 3 {
                parabolic_offset(at(px + w - 1, py), bv, at(px + 1, py))
            } else {
                0.0
            };
            let oy = if h >= 3 {
                parabolic_offset(at(px, py + h - 1), bv, at(px, py + 1))
            } else {
                0.0
            };
            let coarse = (
                fft::signed_index(px, w) as f64 + ox,
                fft::signed_index(py, h) as f64 + oy,
            );
            if est.upsample > 1 {
                refine_upsampled(&cross, w, h, coarse, est.upsample)
            } else {
                coarse
            }
        })
        .collect::<Vec<_>>();
    let mut all = Vec::with_capacity(frames.len());
    all.push((0.0, 0.0));
    all.extend(shifts);
    ShiftTable::new(all)
}

pub fn estimate_shifts(frames: &[HologramFrame]) -> Result<ShiftTable> {
    estimate_shifts_with(frames, ShiftEstimator::default())
}

/// Treatment of high-resolution sites that receive no sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillPolicy {
    /// Interpolate from the nearest filled sites along the row and column.
    #[default]
    Bilinear,
    /// Report the first empty site as an error.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsrOptions {
    /// Output sampling relative to the input frames.
    pub factor: usize,
    pub fill: FillPolicy,
    /// Wrap deposits that land outside the output lattice periodically
    /// (periodic scenes) instead of discarding them.
    pub wrap: bool,
}

impl PsrOptions {
    pub fn new(factor: usize) -> Self {
        Self {
            factor,
            fill: FillPolicy::Bilinear,
            wrap: false,
        }
    }

    pub fn wrapping(mut self, wrap: bool) -> Self {
        self.wrap = wrap;
        self
    }

    pub fn with_fill(mut self, fill: FillPolicy) -> Self {
        self.fill = fill;
        self
    }
}

fn nearest_site(pos: f64, factor: usize, len: usize, wrap: bool) -> Option<usize> {
    let idx = (pos * factor as f64).round() as i64;
    if wrap {
        Some(idx.rem_euclid(len as i64) as usize)
    } else if idx >= 0 && (idx as usize) < len {
        Some(idx as usize)
    } else {
        None
    }
}

fn fill_empty(sum: &mut [f64], filled: &mut [bool], w: usize, h: usize) -> Result<()> {
    if !filled.iter().any(|&f| f) {
        return Err(Error::EmptyCell { x: 0, y: 0 });
    }
    loop {
        let snapshot = filled.to_vec();
        let values = sum.to_vec();
        let mut remaining = false;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if snapshot[i] {
                    continue;
                }
                let mut estimates = Vec::with_capacity(2);
                let left = (0..x).rev().find(|&k| snapshot[y * w + k]);
                let right = (x + 1..w).find(|&k| snapshot[y * w + k]);
                match (left, right) {
                    (Some(l), Some(r)) => {
                        let t = (x - l) as f64 / (r - l) as f64;
                        estimates.push(values[y * w + l] * (1.0 - t) + values[y * w + r] * t);
                    }
                    (Some(k), None) | (None, Some(k)) => estimates.push(values[y * w + k]),
                    (None, None) => {}
                }
                let up = (0..y).rev().find(|&k| snapshot[k * w + x]);
                let down = (y + 1..h).find(|&k| snapshot[k * w + x]);
                match (up, down) {
                    (Some(u), Some(d)) => {
                        let t = (y - u) as f64 / (d - u) as f64;
                        estimates.push(values[u * w + x] * (1.0 - t) + values[d * w + x] * t);
                    }
                    (Some(k), None) | (None, Some(k)) => estimates.push(values[k * w + x]),
                    (None, None) => {}
                }
                if estimates.is_empty() {
                    remaining = true;
                } else {
                    sum[i] = estimates.iter().sum::<f64>() / estimates.len() as f64;
                    filled[i] = true;
                }
            }
        }
        if !remaining {
            return Ok(());
        }
    }
}

fn shift_and_add_fields(images: &[&RealField], shifts: &ShiftTable, opts: &PsrOptions) -> Result<RealField> {
    if opts.factor == 0 {
        return Err(Error::InvalidGeometry("super-resolution factor must be at least 1".into()));
    }
    let first = images
        .first()
        .ok_or_else(|| Error::ConfigMismatch("shift-and-add needs at least one frame".into()))?;
    if shifts.len() != images.len() {
        return Err(Error::ConfigMismatch(format!(
            "{} shifts for {} frames",
            shifts.len(),
            images.len()
        )));
    }
    let (w, h) = first.dims();
    for img in images {
        if img.dims() != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                found: img.dims(),
            });
        }
    }
    let (hw, hh) = (w * opts.factor, h * opts.factor);
    let mut sum = vec![0.0; hw * hh];
    let mut count = vec![0u32; hw * hh];
    for (img, &(sx, sy)) in images.iter().zip(shifts.as_slice()) {
        let cols: Vec<Option<usize>> = (0..w)
            .map(|x| nearest_site(x as f64 + sx, opts.factor, hw, opts.wrap))
            .collect();
        for y in 0..h {
            let Some(hy) = nearest_site(y as f64 + sy, opts.factor, hh, opts.wrap) else {
                continue;
            };
            let row = &img.data()[y * w..(y + 1) * w];
            for (x, &v) in row.iter().enumerate() {
                if let Some(hx) = cols[x] {
                    sum[hy * hw + hx] += v;
                    count[hy * hw + hx] += 1;
                }
            }
        }
    }
    let mut filled = vec![false; hw * hh];
    for i in 0..hw * hh {
        if count[i] > 0 {
            sum[i] /= count[i] as f64;
            filled[i] = true;
        } else if opts.fill == FillPolicy::Strict {
            return Err(Error::EmptyCell { x: i % hw, y: i / hw });
        }
    }
    if filled.iter().any(|f| !f) {
        fill_empty(&mut sum, &mut filled, hw, hh)?;
    }
    RealField::new(hw, hh, first.pitch() / opts.factor as f64, sum)
}

/// Shift-and-add onto a lattice `opts.factor` times finer than the frames.
pub fn shift_and_add(frames: &[HologramFrame], shifts: &ShiftTable, opts: &PsrOptions) -> Result<RealField> {
    let images: Vec<&RealField> = frames.iter().map(|f| &f.intensity).collect();
    shift_and_add_fields(&images, shifts, opts)
}

/// Per-pixel `W · (R, G1, G2, B)`.
pub fn demultiplex(
    r: &RealField,
    g1: &RealField,
    g2: &RealField,
    b: &RealField,
    w: &CrosstalkMatrix,
) -> Result<(RealField, RealField, RealField)> {
    let dims = r.dims();
    for f in [g1, g2, b] {
        if f.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: f.dims(),
            });
        }
    }
    let n = r.data().len();
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let v = [r.data()[i], g1.data()[i], g2.data()[i], b.data()[i]];
        for (row, plane) in w.rows().iter().zip(out.iter_mut()) {
            plane[i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
        }
    }
    let [pr, pg, pb] = out;
    Ok((r.with_data(pr)?, r.with_data(pg)?, r.with_data(pb)?))
}

/// Per-channel pixel super-resolution of raw Bayer frames onto a common
/// lattice `opts.factor` times finer than the sensor, followed by
/// demultiplexing. `shifts` are stage shifts in sensor pixels. Returns the
/// `(R, G, B)` high-resolution holograms.
pub fn dpsr(
    frames: &[HologramFrame],
    shifts: &ShiftTable,
    layout: &BayerLayout,
    w: &CrosstalkMatrix,
    opts: &PsrOptions,
) -> Result<(RealField, RealField, RealField)> {
    if frames.is_empty() {
        return Err(Error::ConfigMismatch("DPSR needs at least one frame".into()));
    }
    if let Some(f) = frames.iter().find(|f| !f.is_multiplexed()) {
        return Err(Error::ConfigMismatch(format!(
            "DPSR expects multiplexed illumination, frame has {:?}",
            f.illumination
        )));
    }
    if shifts.len() != frames.len() {
        return Err(Error::ConfigMismatch(format!(
            "{} shifts for {} frames",
            shifts.len(),
            frames.len()
        )));
    }
    let channels = Channel::BAYER
        .par_iter()
        .map(|&ch| channel_psr(frames, shifts, layout, ch, opts))
        .collect::<Result<Vec<_>>>()?;
    demultiplex(&channels[0], &channels[1], &channels[2], &channels[3], w)
}

/// Super-resolves one Bayer channel of raw frames onto the sensor-anchored
/// high-resolution lattice. `shifts` are stage shifts in sensor pixels.
pub fn channel_psr(
    frames: &[HologramFrame],
    shifts: &ShiftTable,
    layout: &BayerLayout,
    channel: Channel,
    opts: &PsrOptions,
) -> Result<RealField> {
    let (ox, oy) = layout
        .offset(channel)
        .ok_or_else(|| Error::ConfigMismatch(format!("{} is not a Bayer channel", channel.name())))?;
    let subs = frames
        .iter()
        .map(|f| extract_channel(f, layout, channel))
        .collect::<Result<Vec<_>>>()?;
    let sub_shifts = ShiftTable::new(
        shifts
            .as_slice()
            .iter()
            .map(|&(sx, sy)| ((sx + ox as f64) / 2.0, (sy + oy as f64) / 2.0))
            .collect(),
    )?;
    let images: Vec<&RealField> = subs.iter().map(|f| &f.intensity).collect();
    let channel_opts = PsrOptions {
        factor: opts.factor * 2,
        ..*opts
    };
    shift_and_add_fields(&images, &sub_shifts, &channel_opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(img: RealField) -> HologramFrame {
        HologramFrame::new(img, (0.0, 0.0), 0, Channel::Mono, vec![540.0]).unwrap()
    }

    fn smooth_image(w: usize, h: usize) -> RealField {
        RealField::from_fn(w, h, 1.0, |x, y| {
            let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
            1.0 + 0.5 * (2.0 * std::f64::consts::PI * (2.0 * u + v)).sin()
                + 0.3 * (2.0 * std::f64::consts::PI * (3.0 * v - u)).cos()
        })
        .unwrap()
    }

    #[test]
    fn identity_configuration() {
        let img = smooth_image(7, 5);
        let out = shift_and_add(&[frame(img.clone())], &ShiftTable::zeros(1), &PsrOptions::new(1)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn single_frame_upsampling_is_filled() {
        let img = smooth_image(6, 6);
        let opts = PsrOptions::new(3);
        let out = shift_and_add(&[frame(img.clone())], &ShiftTable::zeros(1), &opts).unwrap();
        assert_eq!(out.dims(), (18, 18));
        assert!(out.data().iter().all(|v| v.is_finite()));
        assert_eq!(out.get(3, 6), img.get(1, 2));
        let strict = opts.with_fill(FillPolicy::Strict);
        assert!(matches!(
            shift_and_add(&[frame(img)], &ShiftTable::zeros(1), &strict),
            Err(Error::EmptyCell { .. })
        ));
    }

    #[test]
    fn fill_interpolates_linearly_between_deposits() {
        let img = RealField::new(2, 1, 1.0, vec![0.0, 3.0]).unwrap();
        let out = shift_and_add(&[frame(img)], &ShiftTable::zeros(1), &PsrOptions::new(3)).unwrap();
        // row 0: deposits at x = 0 and 3, extrapolated flat beyond the last one
        assert_eq!(&out.data()[..6], &[0.0, 1.0, 2.0, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn integer_shift_is_recovered_exactly() {
        let base = smooth_image(32, 32);
        let moved = RealField::from_fn(32, 32, 1.0, |x, y| base.get((x + 3) % 32, (y + 30) % 32)).unwrap();
        let t = estimate_shifts(&[frame(base.clone()), frame(moved.clone())]).unwrap();
        assert_eq!(t.get(0), (0.0, 0.0));
        let (sx, sy) = t.get(1);
        assert!((sx - 3.0).abs() < 1e-6 && (sy + 2.0).abs() < 1e-6, "{sx} {sy}");

        let parabolic = ShiftEstimator { window: false, upsample: 1 };
        let (sx, sy) = estimate_shifts_with(&[frame(base), frame(moved)], parabolic).unwrap().get(1);
        assert!((sx - 3.0).abs() < 1e-6 && (sy + 2.0).abs() < 1e-6, "{sx} {sy}");
    }

    #[test]
    fn identical_frames_have_zero_shift() {
        let base = smooth_image(16, 16);
        let t = estimate_shifts(&[frame(base.clone()), frame(base)]).unwrap();
        let (sx, sy) = t.get(1);
        assert!(sx.abs() < 1e-9 && sy.abs() < 1e-9);
    }

    #[test]
    fn estimation_rejects_mixed_inputs() {
        let a = frame(smooth_image(8, 8));
        let b = frame(smooth_image(8, 6));
        assert!(matches!(estimate_shifts(&[a.clone(), b]), Err(Error::DimensionMismatch { .. })));
        let mut c = a.clone();
        c.channel = Channel::R;
        assert!(estimate_shifts(&[a.clone(), c]).is_err());
        assert!(estimate_shifts(&[a]).is_err());
    }

    #[test]
    fn selection_matrix_demultiplex() {
        let a = smooth_image(4, 4);
        let g = a.map(|v| v * 2.0);
        let b = a.map(|v| v + 1.0);
        let (r, gg, bb) = demultiplex(&a, &g, &g, &b, &CrosstalkMatrix::selection()).unwrap();
        assert_eq!((r, gg, bb), (a.clone(), g, b));
        let zero = CrosstalkMatrix::new([[0.0; 4]; 3]).unwrap();
        let (r, g, b) = demultiplex(&a, &a, &a, &a, &zero).unwrap();
        assert!([r, g, b].iter().all(|f| f.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn demixing_inverts_known_mixing() {
        let mixing = [[0.9, 0.15, 0.02], [0.2, 0.8, 0.1], [0.18, 0.82, 0.12], [0.03, 0.2, 0.85]];
        let w = CrosstalkMatrix::from_mixing(&mixing).unwrap();
        let src = [smooth_image(5, 5), smooth_image(5, 5).map(|v| v * v), smooth_image(5, 5).map(|v| 2.0 - v * 0.5)];
        let mixed: Vec<RealField> = mixing
            .iter()
            .map(|row| {
                let data = (0..25)
                    .map(|i| row[0] * src[0].data()[i] + row[1] * src[1].data()[i] + row[2] * src[2].data()[i])
                    .collect();
                src[0].with_data(data).unwrap()
            })
            .collect();
        let (r, g, b) = demultiplex(&mixed[0], &mixed[1], &mixed[2], &mixed[3], &w).unwrap();
        for (out, want) in [r, g, b].iter().zip(&src) {
            for (a, b) in out.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn crosstalk_file_format() {
        let text = "# calibration\n1 0 0 0\n0 0.5 0.5 0 # greens\n\n0 0 0 1\n";
        assert_eq!(CrosstalkMatrix::parse(text).unwrap(), CrosstalkMatrix::selection());
        assert_eq!(CrosstalkMatrix::parse(&CrosstalkMatrix::selection().to_text()).unwrap(), CrosstalkMatrix::selection());
        assert!(CrosstalkMatrix::parse("1 0 0\n0 1 0\n0 0 1\n").is_err());
        assert!(CrosstalkMatrix::parse("1 0 0 0\n0 1 0 0\n").is_err());
        assert!(CrosstalkMatrix::parse("1 0 0 x\n0 1 0 0\n0 0 1 0\n").is_err());
    }

    #[test]
    fn bayer_layout_rules() {
        let l = BayerLayout::rggb();
        assert_eq!(l.offset(Channel::R), Some((0, 0)));
        assert_eq!(l.offset(Channel::G1), Some((1, 0)));
        assert_eq!(l.offset(Channel::G2), Some((0, 1)));
        assert_eq!(l.offset(Channel::B), Some((1, 1)));
        assert_eq!(BayerLayout::from_pattern("rggb").unwrap(), l);
        let bggr = BayerLayout::from_pattern("BGGR").unwrap();
        assert_eq!(bggr.offset(Channel::B), Some((0, 0)));
        assert!(BayerLayout::new([[Channel::R, Channel::R], [Channel::G2, Channel::B]]).is_err());
        assert!(BayerLayout::from_pattern("RGB").is_err());
    }

    #[test]
    fn sequential_channel_selection_on_grid() {
        for wl in crate::field::spectral_grid() {
            let expected = if wl <= 470.0 {
                Channel::B
            } else if wl <= 580.0 {
                Channel::G1
            } else {
                Channel::R
            };
            assert_eq!(sequential_channel(wl), expected, "{wl} nm");
        }
    }

    proptest::proptest! {
        #[test]
        fn demultiplex_is_linear(
            alpha in -3.0f64..3.0, beta in -3.0f64..3.0,
            wv in proptest::collection::vec(-2.0f64..2.0, 12),
            av in proptest::collection::vec(-5.0f64..5.0, 16),
            bv in proptest::collection::vec(-5.0f64..5.0, 16),
        ) {
            let w = CrosstalkMatrix::new(std::array::from_fn(|r| std::array::from_fn(|c| wv[r * 4 + c]))).unwrap();
            let plane = |v: &[f64], k: usize| RealField::new(2, 2, 1.0, v[k * 4..k * 4 + 4].to_vec()).unwrap();
            let da = demultiplex(&plane(&av, 0), &plane(&av, 1), &plane(&av, 2), &plane(&av, 3), &w).unwrap();
            let db = demultiplex(&plane(&bv, 0), &plane(&bv, 1), &plane(&bv, 2), &plane(&bv, 3), &w).unwrap();
            let comb: Vec<f64> = av.iter().zip(&bv).map(|(a, b)| alpha * a + beta * b).collect();
            let dc = demultiplex(&plane(&comb, 0), &plane(&comb, 1), &plane(&comb, 2), &plane(&comb, 3), &w).unwrap();
            for (c, (a, b)) in [&dc.0, &dc.1, &dc.2].iter().zip([(&da.0, &db.0), (&da.1, &db.1), (&da.2, &db.2)]) {
                for i in 0..4 {
                    let want = alpha * a.data()[i] + beta * b.data()[i];
                    proptest::prop_assert!((c.data()[i] - want).abs() < 1e-12 * (1.0 + want.abs()) * 10.0);
                }
            }
        }
    }
}
