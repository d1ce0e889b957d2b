//! HSF1 raster files.
//!
//! Layout (all little-endian):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 4    | magic `HSF1`                              |
//! | 4      | 4    | dtype tag: 1 real64, 2 complex64-pair, 3 multi-channel real64 |
//! | 8      | 4    | width (u32)                               |
//! | 12     | 4    | height (u32)                              |
//! | 16     | 8    | pitch in micrometers (f64)                |
//! | 24     | 8    | wavelength in nanometers (f64)            |
//!
//! Real payloads follow as row-major f64; complex payloads as interleaved
//! `(re, im)` pairs. Multi-channel files carry a header extension right after
//! the 32-byte header: channel count (u32), a reserved u32 (zero), then per
//! channel an 8-byte NUL-padded ASCII label and its wavelength (f64). The
//! payload is pixel-major with the channels interleaved per pixel.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};

pub const MAGIC: &[u8; 4] = b"HSF1";
pub const HEADER_LEN: usize = 32;

const TAG_REAL: u32 = 1;
const TAG_COMPLEX: u32 = 2;
const TAG_MULTI: u32 = 3;
const LABEL_LEN: usize = 8;

/// Label and wavelength of one plane of a multi-channel raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInfo {
    pub label: String,
    pub wavelength: f64,
}

/// Several real planes sharing one lattice, interleaved per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelRaster {
    pub width: usize,
    pub height: usize,
    pub pitch: f64,
    pub channels: Vec<ChannelInfo>,
    pub data: Vec<f64>,
}

impl MultiChannelRaster {
    pub fn new(
        width: usize,
        height: usize,
        pitch: f64,
        channels: Vec<ChannelInfo>,
        data: Vec<f64>,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Format("multi-channel raster needs at least one channel".into()));
        }
        for c in &channels {
            if c.label.len() > LABEL_LEN || !c.label.is_ascii() {
                return Err(Error::Format(format!(
                    "channel label {:?} must be ASCII of at most {LABEL_LEN} bytes",
                    c.label
                )));
            }
        }
        if width == 0 || height == 0 || data.len() != width * height * channels.len() {
            return Err(Error::Format(format!(
                "{width}x{height}x{} raster cannot hold {} samples",
                channels.len(),
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pitch,
            channels,
            data,
        })
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels.len())
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    Real(RealField),
    Complex(ComplexField),
    Multi(MultiChannelRaster),
}

impl From<RealField> for Raster {
    fn from(f: RealField) -> Self {
        Raster::Real(f)
    }
}

impl From<ComplexField> for Raster {
    fn from(f: ComplexField) -> Self {
        Raster::Complex(f)
    }
}

impl From<MultiChannelRaster> for Raster {
    fn from(f: MultiChannelRaster) -> Self {
        Raster::Multi(f)
    }
}

fn header(tag: u32, width: usize, height: usize, pitch: f64, wavelength: f64) -> Result<Vec<u8>> {
    let w = u32::try_from(width).map_err(|_| Error::Format("width exceeds u32".into()))?;
    let h = u32::try_from(height).map_err(|_| Error::Format("height exceeds u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&pitch.to_le_bytes());
    out.extend_from_slice(&wavelength.to_le_bytes());
    Ok(out)
}

pub fn encode(raster: &Raster) -> Result<Vec<u8>> {
    let mut out = match raster {
        Raster::Real(f) => {
            let mut out = header(TAG_REAL, f.width(), f.height(), f.pitch(), 0.0)?;
            out.reserve(f.data().len() * 8);
            for v in f.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out
        }
        Raster::Complex(f) => {
            let mut out = header(TAG_COMPLEX, f.width(), f.height(), f.pitch(), f.wavelength())?;
            out.reserve(f.data().len() * 16);
            for u in f.data() {
                out.extend_from_slice(&u.re.to_le_bytes());
                out.extend_from_slice(&u.im.to_le_bytes());
            }
            out
        }
        Raster::Multi(m) => {
            let mut out = header(TAG_MULTI, m.width, m.height, m.pitch, 0.0)?;
            out.extend_from_slice(&(m.channels.len() as u32).to_le_bytes());
            out.extend_from_slice(&0u32.to_le_bytes());
            for c in &m.channels {
                let mut label = [0u8; LABEL_LEN];
                label[..c.label.len()].copy_from_slice(c.label.as_bytes());
                out.extend_from_slice(&label);
                out.extend_from_slice(&c.wavelength.to_le_bytes());
            }
            for v in &m.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out
        }
    };
    out.shrink_to_fit();
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!(
                "truncated file: need {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            ))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| {
            Error::Format("payload length overflows".into())
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(buf: &[u8]) -> Result<Raster> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected HSF1".into()));
    }
    let tag = cur.u32()?;
    let width = cur.u32()? as usize;
    let height = cur.u32()? as usize;
    let pitch = cur.f64()?;
    let wavelength = cur.f64()?;
    let pixels = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("width x height overflows".into()))?;

    let bad_geometry = |e: Error| Error::Format(e.to_string());
    let raster = match tag {
        TAG_REAL => {
            let data = cur.f64s(pixels)?;
            Raster::Real(RealField::new(width, height, pitch, data).map_err(bad_geometry)?)
        }
        TAG_COMPLEX => {
            let flat = cur.f64s(pixels.saturating_mul(2))?;
            let data = flat
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect();
            Raster::Complex(
                ComplexField::new(width, height, pitch, wavelength, data).map_err(bad_geometry)?,
            )
        }
        TAG_MULTI => {
            let count = cur.u32()? as usize;
            let _reserved = cur.u32()?;
            if count == 0 {
                return Err(Error::Format("multi-channel raster declares zero channels".into()));
            }
            let mut channels = Vec::with_capacity(count.min(64));
            for _ in 0..count {
                let raw = cur.take(LABEL_LEN)?;
                let end = raw.iter().position(|&b| b == 0).unwrap_or(LABEL_LEN);
                let label = std::str::from_utf8(&raw[..end])
                    .map_err(|_| Error::Format("channel label is not ASCII".into()))?
                    .to_owned();
                let wavelength = cur.f64()?;
                channels.push(ChannelInfo { label, wavelength });
            }
            let data = cur.f64s(pixels.saturating_mul(count))?;
            Raster::Multi(MultiChannelRaster::new(width, height, pitch, channels, data)?)
        }
        other => return Err(Error::Format(format!("unknown dtype tag {other}"))),
    };
    if cur.pos != buf.len() {
        return Err(Error::Format(format!(
            "payload length mismatch: {} trailing bytes after {width}x{height} lattice",
            buf.len() - cur.pos
        )));
    }
    Ok(raster)
}

pub fn write_raster(raster: impl Into<Raster>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(&raster.into())?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn read_real(path: impl AsRef<Path>) -> Result<RealField> {
    match read_raster(&path)? {
        Raster::Real(f) => Ok(f),
        _ => Err(Error::Format(format!(
            "{} does not hold a real raster",
            path.as_ref().display()
        ))),
    }
}

pub fn read_complex(path: impl AsRef<Path>) -> Result<ComplexField> {
    match read_raster(&path)? {
        Raster::Complex(f) => Ok(f),
        _ => Err(Error::Format(format!(
            "{} does not hold a complex raster",
            path.as_ref().display()
        ))),
    }
}
