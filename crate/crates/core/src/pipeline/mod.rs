//! End-to-end reconstruction: super-resolution, distance estimation, phase
//! recovery, color projection, tiling and artifact export.

pub mod config;
pub mod io;
pub mod network;
pub mod scenario;
pub mod stitch;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

pub use config::{AutofocusConfig, Mode, PipelineConfig, ShiftSource, TilingConfig};
pub use network::{prepare_network_input, FocusDistance, NetworkInputTensor};

use crate::autofocus::estimate_z;
use crate::colorimetry::{self, ColorMatchingTable, Illuminant, ThreeBandProjector};
use crate::error::{Error, Result, StageExt};
use crate::field::{Channel, ComplexField, HologramFrame, RealField, RgbImage, SpectralCube};
use crate::metrics::MetricReport;
use crate::phase::{multiheight_recover, HeightMeasurement, RecoveryConfig};
use crate::superres::{
    channel_psr, dpsr, estimate_shifts, extract_channel, sequential_channel, shift_and_add, BayerLayout,
    CrosstalkMatrix, FillPolicy, PsrOptions, ShiftTable,
};

/// Super-resolution settings shared by all modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsrSettings {
    pub factor: usize,
    pub bayer: BayerLayout,
    pub shifts: ShiftSource,
    pub wrap: bool,
    pub fill: FillPolicy,
}

impl PsrSettings {
    pub fn new(factor: usize) -> Self {
        Self {
            factor,
            bayer: BayerLayout::rggb(),
            shifts: ShiftSource::Metadata,
            wrap: false,
            fill: FillPolicy::Bilinear,
        }
    }

    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        Ok(Self {
            factor: cfg.acquisition.psr_factor,
            bayer: cfg.bayer()?,
            shifts: cfg.acquisition.shifts,
            wrap: cfg.acquisition.wrap,
            fill: cfg.acquisition.fill,
        })
    }

    fn options(&self) -> PsrOptions {
        PsrOptions {
            factor: self.factor,
            fill: self.fill,
            wrap: self.wrap,
        }
    }
}

/// Shifts in pixels of the frames' own lattice (sensor pixels for mosaic
/// frames).
fn shift_table(frames: &[HologramFrame], psr: &PsrSettings) -> Result<ShiftTable> {
    match psr.shifts {
        ShiftSource::Metadata => Ok(ShiftTable::from_metadata(frames)),
        ShiftSource::Estimate if frames.len() < 2 => Ok(ShiftTable::zeros(frames.len())),
        ShiftSource::Estimate if frames[0].channel == Channel::Mosaic => {
            // register on one colour plane; its pixels are two sensor pixels wide
            let plane = frames
                .iter()
                .map(|f| extract_channel(f, &psr.bayer, Channel::G1))
                .collect::<Result<Vec<_>>>()?;
            let t = estimate_shifts(&plane)?;
            ShiftTable::new(t.as_slice().iter().map(|&(x, y)| (2.0 * x, 2.0 * y)).collect())
        }
        ShiftSource::Estimate => estimate_shifts(frames),
    }
}

/// DPSR of multiplexed frames from one height. Returns the illumination
/// wavelengths in R, G, B (descending) order and the matching holograms.
pub(crate) fn super_resolve_multiplexed(
    frames: &[HologramFrame],
    w: &CrosstalkMatrix,
    psr: &PsrSettings,
) -> Result<(Vec<f64>, Vec<RealField>)> {
    let first = frames
        .first()
        .ok_or_else(|| Error::ConfigMismatch("no frames to super-resolve".into()))?;
    let mut wls = first.illumination.clone();
    if frames.iter().any(|f| f.illumination != first.illumination) {
        return Err(Error::ConfigMismatch("frames of one height disagree on illumination".into()));
    }
    wls.sort_by(|a, b| b.total_cmp(a));
    if wls != first.illumination {
        return Err(Error::ConfigMismatch(format!(
            "multiplexed illumination must be listed in descending wavelength order, got {:?}",
            first.illumination
        )));
    }
    let shifts = shift_table(frames, psr)?;
    let (r, g, b) = dpsr(frames, &shifts, &psr.bayer, w, &psr.options())?;
    Ok((wls, vec![r, g, b]))
}

/// Pixel super-resolution of single-wavelength frames, reading the Bayer
/// channel that best matches `wavelength` from mosaic frames.
pub fn super_resolve_sequential(frames: &[HologramFrame], wavelength: f64, psr: &PsrSettings) -> Result<RealField> {
    let shifts = shift_table(frames, psr)?;
    if frames.first().is_some_and(|f| f.channel == Channel::Mosaic) {
        channel_psr(frames, &shifts, &psr.bayer, sequential_channel(wavelength), &psr.options())
    } else {
        shift_and_add(frames, &shifts, &psr.options())
    }
}

/// High-resolution holograms indexed `[height][wavelength]`.
#[derive(Debug, Clone)]
pub struct HrStack {
    pub wavelengths: Vec<f64>,
    pub height_indices: Vec<usize>,
    pub holograms: Vec<Vec<RealField>>,
}

fn by_height(frames: &[HologramFrame]) -> BTreeMap<usize, Vec<HologramFrame>> {
    let mut groups: BTreeMap<usize, Vec<HologramFrame>> = BTreeMap::new();
    for f in frames {
        groups.entry(f.height_index).or_default().push(f.clone());
    }
    groups
}

fn same_wavelength(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-6
}

/// Super-resolves every height and wavelength of a run.
pub fn super_resolve(
    frames: &[HologramFrame],
    mode: Mode,
    wavelengths: &[f64],
    w: Option<&CrosstalkMatrix>,
    psr: &PsrSettings,
) -> Result<HrStack> {
    if frames.is_empty() {
        return Err(Error::ConfigMismatch("no frames to reconstruct".into()));
    }
    let groups = by_height(frames);
    let results = groups
        .par_iter()
        .map(|(_, group)| -> Result<Vec<RealField>> {
            if mode.is_multiplexed() {
                let w = w.ok_or_else(|| Error::config("input.crosstalk", "required for multiplexed frames"))?;
                let (wls, holos) = super_resolve_multiplexed(group, w, psr)?;
                wavelengths
                    .iter()
                    .map(|&wl| {
                        wls.iter()
                            .position(|&v| same_wavelength(v, wl))
                            .map(|k| holos[k].clone())
                            .ok_or_else(|| {
                                Error::ConfigMismatch(format!("no {wl} nm illumination among {wls:?} nm"))
                            })
                    })
                    .collect()
            } else {
                wavelengths
                    .par_iter()
                    .map(|&wl| {
                        let sub: Vec<HologramFrame> = group
                            .iter()
                            .filter(|f| f.illumination.len() == 1 && same_wavelength(f.illumination[0], wl))
                            .cloned()
                            .collect();
                        if sub.is_empty() {
                            return Err(Error::ConfigMismatch(format!(
                                "height {} has no frames at {wl} nm",
                                group[0].height_index
                            )));
                        }
                        super_resolve_sequential(&sub, wl, psr)
                    })
                    .collect()
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HrStack {
        wavelengths: wavelengths.to_vec(),
        height_indices: groups.keys().copied().collect(),
        holograms: results,
    })
}

/// Nearest-rank percentile, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Divides by the 99th-percentile level, taken as the empty background.
pub fn normalize_transmittance(t: &RealField) -> Result<RealField> {
    let level = percentile(t.data(), 0.99);
    if !(level > 0.0) {
        return Err(Error::DegenerateField("transmittance background level is not positive".into()));
    }
    Ok(t.map(|v| v / level))
}

/// sRGB rendering of normalized transmittance planes: full D65 spectral
/// projection for the 31-point grid, three-band composite for three
/// wavelengths.
pub fn render_rgb(planes: &[RealField], wavelengths: &[f64]) -> Result<RgbImage> {
    let first = planes.first().ok_or_else(|| Error::ConfigMismatch("no planes to render".into()))?;
    let (w, h) = first.dims();
    match planes.len() {
        3 => {
            let proj = ThreeBandProjector::new([wavelengths[0], wavelengths[1], wavelengths[2]])?;
            let data = (0..w * h)
                .map(|i| proj.srgb([planes[0].data()[i], planes[1].data()[i], planes[2].data()[i]]))
                .collect();
            RgbImage::new(w, h, data)
        }
        _ => {
            let mut order: Vec<usize> = (0..planes.len()).collect();
            order.sort_by(|&a, &b| wavelengths[a].total_cmp(&wavelengths[b]));
            let sorted: Vec<RealField> = order.iter().map(|&k| planes[k].clone()).collect();
            let cube = SpectralCube::from_planes(&sorted)?;
            let xyz = colorimetry::tristimulus(&cube, &ColorMatchingTable::cie1931(), &Illuminant::d65());
            Ok(colorimetry::xyz_to_srgb(&xyz))
        }
    }
}

/// Wall-clock seconds spent in one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().stage(stage)?;
    let seconds = start.elapsed().as_secs_f64();
    log::info!("{stage}: {seconds:.3} s");
    timings.push(StageTiming { stage, seconds });
    Ok(out)
}

/// Output of a reconstruction in memory.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub rgb: RgbImage,
    pub pitch: f64,
    pub wavelengths: Vec<f64>,
    /// Sample-to-sensor distance per height, µm.
    pub heights: Vec<f64>,
    /// Normalized transmittance per wavelength.
    pub transmittance: Vec<RealField>,
    pub timings: Vec<StageTiming>,
}

fn resolve_heights(stack: &HrStack, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    match &cfg.acquisition.heights {
        Some(h) => {
            if h.len() != stack.height_indices.len() {
                return Err(Error::config(
                    "acquisition.heights",
                    format!("{} heights listed for {} recorded heights", h.len(), stack.height_indices.len()),
                ));
            }
            Ok(h.clone())
        }
        None => {
            let af = cfg.autofocus.ok_or_else(|| Error::config("autofocus", "needed to estimate heights"))?;
            let search = af.search()?;
            // the wavelength closest to 540 nm gives the sharpest amplitude image
            let k = (0..stack.wavelengths.len())
                .min_by(|&a, &b| {
                    (stack.wavelengths[a] - 540.0)
                        .abs()
                        .total_cmp(&(stack.wavelengths[b] - 540.0).abs())
                })
                .unwrap_or(0);
            stack
                .holograms
                .par_iter()
                .map(|hs| {
                    let f = ComplexField::from_intensity(&hs[k].map(|v| v.max(0.0)), stack.wavelengths[k])?;
                    estimate_z(&f, &search, cfg.refractive_index)
                })
                .collect()
        }
    }
}

/// Runs a multi-height or hyperspectral reconstruction on frames in
/// memory.
pub fn reconstruct(
    frames: &[HologramFrame],
    cfg: &PipelineConfig,
    w: Option<&CrosstalkMatrix>,
) -> Result<Reconstruction> {
    cfg.validate()?;
    if cfg.mode == Mode::SingleshotNetworkInput {
        return Err(Error::ConfigMismatch(
            "single-shot mode exports network inputs; use prepare_network_input".into(),
        ));
    }
    let psr = PsrSettings::from_config(cfg)?;
    let wavelengths = cfg.wavelengths();
    let mut timings = Vec::new();
    let stack = timed(&mut timings, "super resolution", || {
        super_resolve(frames, cfg.mode, &wavelengths, w, &psr)
    })?;
    let heights = timed(&mut timings, "autofocus", || resolve_heights(&stack, cfg))?;

    let mut order: Vec<usize> = (0..heights.len()).collect();
    order.sort_by(|&a, &b| heights[a].total_cmp(&heights[b]));
    let (width, height) = stack.holograms[0][0].dims();
    let pitch = stack.holograms[0][0].pitch();
    let (tiles, overlap) = match &cfg.tiling {
        Some(t) => (stitch::tile_grid(width, height, t.tile_size, t.overlap), t.overlap),
        None => (stitch::tile_grid(width, height, width.max(height), 0.0), 0.0),
    };

    // the run's medium applies to every stage
    let recovery = RecoveryConfig {
        refractive_index: cfg.refractive_index,
        ..cfg.recovery
    };
    let jobs: Vec<(usize, usize)> = (0..tiles.len())
        .flat_map(|t| (0..wavelengths.len()).map(move |k| (t, k)))
        .collect();
    let recovered: Vec<RealField> = timed(&mut timings, "phase recovery", || {
        jobs.par_iter()
            .map(|&(t, k)| {
                let tile = tiles[t];
                let ms = order
                    .iter()
                    .map(|&hi| {
                        let img = stack.holograms[hi][k]
                            .crop(tile.x0, tile.y0, tile.width, tile.height)?
                            .map(|v| v.max(0.0));
                        HeightMeasurement::new(img, heights[hi], wavelengths[k])
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(multiheight_recover(&ms, &recovery, cfg.acquisition.object_z)?.intensity())
            })
            .collect()
    })?;

    let transmittance = timed(&mut timings, "stitching", || {
        (0..wavelengths.len())
            .map(|k| {
                let parts: Vec<(RealField, (usize, usize))> = tiles
                    .iter()
                    .enumerate()
                    .map(|(t, tile)| (recovered[t * wavelengths.len() + k].clone(), (tile.x0, tile.y0)))
                    .collect();
                normalize_transmittance(&stitch::stitch_fields(&parts, overlap)?)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rgb = timed(&mut timings, "color transformation", || render_rgb(&transmittance, &wavelengths))?;
    Ok(Reconstruction {
        rgb,
        pitch,
        wavelengths,
        heights,
        transmittance,
        timings,
    })
}

/// Files and results produced by [`run`].
#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    pub rgb: Option<RgbImage>,
    pub metrics: Option<MetricReport>,
    pub heights: Vec<f64>,
    pub timings: Vec<StageTiming>,
    pub written: Vec<PathBuf>,
}

/// Executes a configured run from files on disk to files on disk.
pub fn run(cfg: &PipelineConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let frames_dir = cfg
        .input
        .frames
        .as_ref()
        .ok_or_else(|| Error::config("input.frames", "no frame directory given"))?;
    let frames = io::read_frame_set(frames_dir).stage("load")?;
    let w = cfg
        .input
        .crosstalk
        .as_ref()
        .map(CrosstalkMatrix::from_file)
        .transpose()
        .stage("load")?;
    let out = &cfg.output.directory;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut art = RunArtifacts::default();
    let resolved = out.join("resolved_config.toml");
    std::fs::write(&resolved, cfg.to_toml()?).map_err(|e| Error::io(&resolved, e))?;
    art.written.push(resolved);

    let (rgb, pitch) = if cfg.mode == Mode::SingleshotNetworkInput {
        let w = w.ok_or_else(|| Error::config("input.crosstalk", "required in single-shot mode"))?;
        let psr = PsrSettings::from_config(cfg)?;
        let groups = by_height(&frames);
        let mut composite = None;
        for (i, (hi, group)) in groups.iter().enumerate() {
            let z = match (&cfg.acquisition.heights, &cfg.autofocus) {
                (Some(h), _) => FocusDistance::Known(*h.get(i).ok_or_else(|| {
                    Error::config("acquisition.heights", format!("no height listed for height index {hi}"))
                })?),
                (None, Some(af)) => FocusDistance::Auto(af.search()?),
                (None, None) => return Err(Error::config("acquisition.heights", "or [autofocus] required")),
            };
            let start = Instant::now();
            let tensor =
                prepare_network_input(group, &w, z, cfg.refractive_index, &psr).stage("network input")?;
            art.timings.push(StageTiming {
                stage: "network input",
                seconds: start.elapsed().as_secs_f64(),
            });
            art.heights.push(tensor.z);
            let path = out.join(format!("network_input_h{hi}.hsf"));
            tensor.write(&path)?;
            art.written.push(path);
            if composite.is_none() {
                composite = Some((input_composite(&tensor)?, tensor.pitch));
            }
        }
        composite.ok_or_else(|| Error::ConfigMismatch("no frames".into()))?
    } else {
        let rec = reconstruct(&frames, cfg, w.as_ref())?;
        for (t, wl) in rec.transmittance.iter().zip(&rec.wavelengths) {
            let path = out.join(format!("transmittance_{wl:.0}nm.hsf"));
            crate::raster::write_raster(t.clone(), &path)?;
            art.written.push(path);
        }
        art.heights = rec.heights.clone();
        art.timings = rec.timings.clone();
        (rec.rgb, rec.pitch)
    };

    let rgb_path = out.join("rgb.hsf");
    io::write_rgb(&rgb, pitch, &rgb_path)?;
    art.written.push(rgb_path);
    if cfg.output.png {
        let png = out.join("rgb.png");
        io::write_rgb(&rgb, pitch, &png)?;
        art.written.push(png);
    }
    if let Some(reference) = &cfg.input.reference {
        let truth = io::read_rgb(reference).stage("load")?;
        let report = MetricReport::compare(&truth, &rgb).stage("metrics")?;
        let path = out.join("metrics.txt");
        std::fs::write(&path, report.to_text()).map_err(|e| Error::io(&path, e))?;
        art.written.push(path);
        art.metrics = Some(report);
    }
    let mut timing_text = String::new();
    for t in &art.timings {
        timing_text.push_str(&format!("{}={:.6}\n", t.stage.replace(' ', "_"), t.seconds));
    }
    let path = out.join("timing.txt");
    std::fs::write(&path, timing_text).map_err(|e| Error::io(&path, e))?;
    art.written.push(path);
    art.rgb = Some(rgb);
    Ok(art)
}

/// Three-band composite of the backpropagated amplitudes squared in a
/// network-input tensor, the display baseline for single-shot data.
pub fn input_composite(t: &NetworkInputTensor) -> Result<RgbImage> {
    let planes = (0..3)
        .map(|c| {
            let re = t.channel(2 * c);
            let im = t.channel(2 * c + 1);
            let i = RealField::new(
                t.width,
                t.height,
                t.pitch,
                re.iter().zip(&im).map(|(a, b)| a * a + b * b).collect(),
            )?;
            normalize_transmittance(&i)
        })
        .collect::<Result<Vec<_>>>()?;
    render_rgb(&planes, &t.wavelengths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(|k| k as f64).collect();
        assert_eq!(percentile(&v, 0.99), 99.0);
        assert_eq!(percentile(&v, 1.0), 100.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&[3.0], 0.5), 3.0);
    }

    #[test]
    fn normalization_rejects_dark_fields() {
        let dark = RealField::filled(4, 4, 1.0, 0.0).unwrap();
        assert!(matches!(normalize_transmittance(&dark), Err(Error::DegenerateField(_))));
        let f = RealField::from_fn(10, 10, 1.0, |x, y| (x + 10 * y) as f64).unwrap();
        assert_eq!(normalize_transmittance(&f).unwrap().get(8, 9), 1.0);
    }

    #[test]
    fn white_planes_render_white() {
        let one = RealField::filled(2, 2, 1.0, 1.0).unwrap();
        let rgb = render_rgb(&[one.clone(), one.clone(), one.clone()], &[590.0, 540.0, 450.0]).unwrap();
        for p in rgb.pixels() {
            for c in p {
                assert!((c - 1.0).abs() < 1e-9);
            }
        }
        let planes = vec![one; 31];
        let rgb = render_rgb(&planes, &crate::field::spectral_grid()).unwrap();
        for p in rgb.pixels() {
            for c in p {
                assert!((c - 1.0).abs() < 1e-3);
            }
        }
    }
}
