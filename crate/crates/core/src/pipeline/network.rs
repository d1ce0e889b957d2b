//! Six-channel network input: demultiplexed single-height holograms
//! backpropagated to the object plane without phase retrieval.
//!
//! Channel order is fixed: `Re_R, Im_R, Re_G, Im_G, Re_B, Im_B`, with R, G, B
//! the illuminations in descending wavelength order. On disk the tensor is
//! an HSF1 multi-channel raster with those labels and each channel's
//! wavelength.

use std::path::Path;

use crate::autofocus::{estimate_z, FocusSearch};
use crate::error::{Error, Result};
use crate::field::{ComplexField, HologramFrame};
use crate::propagation::{propagate, PropagationParams};
use crate::raster::{self, ChannelInfo, MultiChannelRaster, Raster};
use crate::superres::CrosstalkMatrix;

use super::{super_resolve_multiplexed, PsrSettings};

pub const CHANNEL_LABELS: [&str; 6] = ["Re_R", "Im_R", "Re_G", "Im_G", "Re_B", "Im_B"];

/// Sample-to-sensor distance for backpropagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FocusDistance {
    Known(f64),
    Auto(FocusSearch),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInputTensor {
    pub width: usize,
    pub height: usize,
    pub pitch: f64,
    /// R, G, B illumination wavelengths (nm).
    pub wavelengths: [f64; 3],
    /// Backpropagation distance used, µm.
    pub z: f64,
    /// Pixel-interleaved, six values per pixel.
    pub data: Vec<f64>,
}

impl NetworkInputTensor {
    /// Interleaves the real and imaginary parts of three object-plane fields
    /// given in R, G, B order.
    pub fn from_fields(fields: &[ComplexField; 3], z: f64) -> Result<Self> {
        let dims = fields[0].dims();
        if let Some(f) = fields.iter().find(|f| f.dims() != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: f.dims(),
            });
        }
        let n = dims.0 * dims.1;
        let mut data = Vec::with_capacity(6 * n);
        for i in 0..n {
            for f in fields {
                let u = f.data()[i];
                data.push(u.re);
                data.push(u.im);
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateField("network input has non-finite values".into()));
        }
        Ok(Self {
            width: dims.0,
            height: dims.1,
            pitch: fields[0].pitch(),
            wavelengths: [fields[0].wavelength(), fields[1].wavelength(), fields[2].wavelength()],
            z,
            data,
        })
    }

    /// Plane `c` of the six, in [`CHANNEL_LABELS`] order.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(6).copied().collect()
    }

    pub fn to_raster(&self) -> Result<MultiChannelRaster> {
        let channels = CHANNEL_LABELS
            .iter()
            .enumerate()
            .map(|(k, l)| ChannelInfo {
                label: l.to_string(),
                wavelength: self.wavelengths[k / 2],
            })
            .collect();
        MultiChannelRaster::new(self.width, self.height, self.pitch, channels, self.data.clone())
    }

    /// Reads a tensor back, checking the channel layout. The distance is not
    /// stored on disk and comes back as NaN.
    pub fn from_raster(r: &MultiChannelRaster) -> Result<Self> {
        let labels: Vec<&str> = r.channels.iter().map(|c| c.label.as_str()).collect();
        if labels != CHANNEL_LABELS {
            return Err(Error::Format(format!(
                "network input channels must be {CHANNEL_LABELS:?}, found {labels:?}"
            )));
        }
        Ok(Self {
            width: r.width,
            height: r.height,
            pitch: r.pitch,
            wavelengths: [r.channels[0].wavelength, r.channels[2].wavelength, r.channels[4].wavelength],
            z: f64::NAN,
            data: r.data.clone(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        raster::write_raster(self.to_raster()?, path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match raster::read_raster(path)? {
            Raster::Multi(m) => Self::from_raster(&m),
            _ => Err(Error::Format(format!("{} is not a multi-channel raster", path.display()))),
        }
    }
}

/// DPSR of one height's multiplexed frames, then zero-phase
/// backpropagation of each demultiplexed hologram at its own wavelength.
/// With [`FocusDistance::Auto`] the distance is estimated on the G
/// hologram and shared by all three.
pub fn prepare_network_input(
    frames: &[HologramFrame],
    w: &CrosstalkMatrix,
    z: FocusDistance,
    n: f64,
    psr: &PsrSettings,
) -> Result<NetworkInputTensor> {
    let (wavelengths, holos) = super_resolve_multiplexed(frames, w, psr)?;
    let fields: Vec<ComplexField> = holos
        .iter()
        .zip(&wavelengths)
        .map(|(h, &wl)| ComplexField::from_intensity(&h.map(|v| v.max(0.0)), wl))
        .collect::<Result<_>>()?;
    let z = match z {
        FocusDistance::Known(z) => z,
        FocusDistance::Auto(search) => estimate_z(&fields[1], &search, n)?,
    };
    let back: Vec<ComplexField> = fields
        .iter()
        .map(|f| {
            if z == 0.0 {
                Ok(f.clone())
            } else {
                propagate(f, PropagationParams::new(-z, n))
            }
        })
        .collect::<Result<_>>()?;
    NetworkInputTensor::from_fields(&[back[0].clone(), back[1].clone(), back[2].clone()], z)
}
