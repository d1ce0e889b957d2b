//! Frame sets on disk and RGB image files.
//!
//! A frame set is a directory with one HSF1 raster per frame and a
//! `frames.toml` manifest carrying the acquisition metadata:
//!
//! ```toml
//! [[frame]]
//! file = "f00000.hsf"
//! shift_um = [0.0, 0.0]
//! height_index = 0
//! channel = "Mosaic"
//! illumination_nm = [590.0, 540.0, 450.0]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Channel, HologramFrame, RgbImage};
use crate::raster::{self, ChannelInfo, MultiChannelRaster, Raster};

pub const MANIFEST: &str = "frames.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameEntry {
    file: String,
    shift_um: (f64, f64),
    height_index: usize,
    channel: Channel,
    illumination_nm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    frame: Vec<FrameEntry>,
}

pub fn write_frame_set(dir: impl AsRef<Path>, frames: &[HologramFrame]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(frames.len());
    for (k, f) in frames.iter().enumerate() {
        let file = format!("f{k:05}.hsf");
        raster::write_raster(f.intensity.clone(), dir.join(&file))?;
        entries.push(FrameEntry {
            file,
            shift_um: f.shift,
            height_index: f.height_index,
            channel: f.channel,
            illumination_nm: f.illumination.clone(),
        });
    }
    let text = toml::to_string(&Manifest { frame: entries }).map_err(|e| Error::Format(e.to_string()))?;
    let path = dir.join(MANIFEST);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub fn read_frame_set(dir: impl AsRef<Path>) -> Result<Vec<HologramFrame>> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {}", path.display(), e.message())))?;
    manifest
        .frame
        .into_iter()
        .map(|e| {
            let img = raster::read_real(dir.join(&e.file))?;
            HologramFrame::new(img, e.shift_um, e.height_index, e.channel, e.illumination_nm)
        })
        .collect()
}

/// Three-plane raster with channels labelled R, G, B.
pub fn rgb_to_raster(img: &RgbImage, pitch: f64) -> Result<MultiChannelRaster> {
    let channels = ["R", "G", "B"]
        .iter()
        .map(|l| ChannelInfo {
            label: l.to_string(),
            wavelength: 0.0,
        })
        .collect();
    let data = img.pixels().iter().flat_map(|p| p.iter().copied()).collect();
    MultiChannelRaster::new(img.width(), img.height(), pitch, channels, data)
}

pub fn raster_to_rgb(r: &MultiChannelRaster) -> Result<RgbImage> {
    if r.channels.len() != 3 {
        return Err(Error::Format(format!(
            "an RGB raster needs 3 channels, got {}",
            r.channels.len()
        )));
    }
    let data = r.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    RgbImage::new(r.width, r.height, data)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// 8-bit PNG for `.png` paths, an HSF1 three-plane raster otherwise.
pub fn write_rgb(img: &RgbImage, pitch: f64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        let bytes: Vec<u8> = img
            .pixels()
            .iter()
            .flat_map(|p| p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect();
        image::save_buffer(path, &bytes, img.width() as u32, img.height() as u32, image::ColorType::Rgb8)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    } else {
        raster::write_raster(rgb_to_raster(img, pitch)?, path)
    }
}

/// Reads an RGB image from PNG (scaled to [0, 1]) or HSF1.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    if is_png(path) {
        let img = image::open(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let data = img
            .pixels()
            .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
            .collect();
        RgbImage::new(img.width() as usize, img.height() as usize, data)
    } else {
        match raster::read_raster(path)? {
            Raster::Multi(m) => raster_to_rgb(&m),
            _ => Err(Error::Format(format!("{} is not a multi-channel raster", path.display()))),
        }
    }
}
