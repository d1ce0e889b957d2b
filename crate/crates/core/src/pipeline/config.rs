//! Reconstruction run configuration (TOML).
//!
//! ```toml
//! mode = "multiheight-multiplexed"
//! refractive_index = 1.0
//!
//! [input]
//! frames = "frames"            # directory holding frames.toml
//! crosstalk = "crosstalk.txt"  # required for multiplexed modes
//! reference = "truth_rgb.hsf"  # optional; enables the metric report
//!
//! [acquisition]
//! wavelengths = [590.0, 540.0, 450.0]
//! heights = [100.0, 115.0]     # omit to estimate each by autofocus
//! psr_factor = 4
//!
//! [autofocus]
//! z_min = 50.0
//! z_max = 400.0
//!
//! [recovery]
//! max_iterations = 30
//!
//! [output]
//! directory = "out"
//!
//! [tiling]
//! tile_size = 128
//! overlap = 0.1
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! The top-level `refractive_index` applies to every stage of a run and
//! takes precedence over `recovery.refractive_index`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autofocus::FocusSearch;
use crate::error::{Error, Result};
use crate::field::spectral_grid;
use crate::phase::RecoveryConfig;
use crate::superres::{BayerLayout, FillPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Sequential illumination over the 400..=700 nm grid; full spectral
    /// color projection.
    Hyperspectral,
    /// Three wavelengths recorded one after another.
    MultiheightSequential,
    /// Three wavelengths recorded simultaneously through the Bayer filter.
    MultiheightMultiplexed,
    /// One multiplexed height, backpropagated without phase retrieval and
    /// exported as a six-channel tensor.
    SingleshotNetworkInput,
}

impl Mode {
    pub fn is_multiplexed(self) -> bool {
        matches!(self, Mode::MultiheightMultiplexed | Mode::SingleshotNetworkInput)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Hyperspectral => "hyperspectral",
            Mode::MultiheightSequential => "multiheight-sequential",
            Mode::MultiheightMultiplexed => "multiheight-multiplexed",
            Mode::SingleshotNetworkInput => "singleshot-network-input",
        }
    }

    pub const ALL: [Mode; 4] = [
        Mode::Hyperspectral,
        Mode::MultiheightSequential,
        Mode::MultiheightMultiplexed,
        Mode::SingleshotNetworkInput,
    ];
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("mode", format!("unknown mode {s:?}")))
    }
}

/// Where per-frame lateral shifts come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftSource {
    /// Stage positions stored with each frame.
    #[default]
    Metadata,
    /// Cross-correlation against the first frame of each group.
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub frames: Option<PathBuf>,
    pub crosstalk: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

fn default_psr_factor() -> usize {
    3
}

fn default_bayer() -> String {
    "RGGB".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// Nanometers. Defaults: the 31-point grid (hyperspectral) or
    /// 590/540/450 nm.
    pub wavelengths: Option<Vec<f64>>,
    /// Sample-to-sensor distances in µm per height index; estimated by
    /// autofocus when absent.
    pub heights: Option<Vec<f64>>,
    #[serde(default = "default_psr_factor")]
    pub psr_factor: usize,
    #[serde(default = "default_bayer")]
    pub bayer: String,
    #[serde(default)]
    pub shifts: ShiftSource,
    /// Treat the field of view as periodic when depositing samples.
    #[serde(default)]
    pub wrap: bool,
    #[serde(default)]
    pub fill: FillPolicy,
    /// Object plane relative to the sample plane, µm.
    #[serde(default)]
    pub object_z: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            wavelengths: None,
            heights: None,
            psr_factor: default_psr_factor(),
            bayer: default_bayer(),
            shifts: ShiftSource::default(),
            wrap: false,
            fill: FillPolicy::default(),
            object_z: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutofocusConfig {
    pub z_min: f64,
    pub z_max: f64,
    pub coarse_step: f64,
    pub refine_tolerance: f64,
}

impl Default for AutofocusConfig {
    fn default() -> Self {
        Self {
            z_min: 100.0,
            z_max: 500.0,
            coarse_step: 10.0,
            refine_tolerance: 0.5,
        }
    }
}

impl AutofocusConfig {
    pub fn search(&self) -> Result<FocusSearch> {
        FocusSearch::new(self.z_min, self.z_max, self.coarse_step, self.refine_tolerance)
            .map_err(|e| Error::config("autofocus", e.to_string()))
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Also write 8-bit PNG renderings.
    #[serde(default = "yes")]
    pub png: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TilingConfig {
    /// Tile side in high-resolution pixels.
    pub tile_size: usize,
    /// Overlap between neighbouring tiles as a fraction of the tile size.
    pub overlap: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    #[serde(default = "one")]
    pub refractive_index: f64,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    pub autofocus: Option<AutofocusConfig>,
    #[serde(default)]
    pub recovery: RecoveryConfig,
    pub output: OutputConfig,
    pub tiling: Option<TilingConfig>,
}

/// Extracts the field name from a serde "missing field `x`" message.
fn missing_field(msg: &str) -> Option<String> {
    let start = msg.find("missing field `")? + "missing field `".len();
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

impl PipelineConfig {
    /// A configuration with defaults for everything but the mode and
    /// output directory.
    pub fn new(mode: Mode, output: impl Into<PathBuf>) -> Self {
        Self {
            mode,
            refractive_index: 1.0,
            input: InputConfig::default(),
            acquisition: AcquisitionConfig::default(),
            autofocus: None,
            recovery: RecoveryConfig::default(),
            output: OutputConfig {
                directory: output.into(),
                png: true,
            },
            tiling: None,
        }
    }

    /// Parses and validates; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = missing_field(&msg).unwrap_or_else(|| "config".to_string());
            Error::config(field, msg)
        })?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.input.frames, &mut self.input.crosstalk, &mut self.input.reference]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.output.directory);
    }

    /// Illumination wavelengths of the run, in nm.
    pub fn wavelengths(&self) -> Vec<f64> {
        match (&self.acquisition.wavelengths, self.mode) {
            (Some(w), _) => w.clone(),
            (None, Mode::Hyperspectral) => spectral_grid().to_vec(),
            (None, _) => vec![590.0, 540.0, 450.0],
        }
    }

    pub fn bayer(&self) -> Result<BayerLayout> {
        BayerLayout::from_pattern(&self.acquisition.bayer)
            .map_err(|e| Error::config("acquisition.bayer", e.to_string()))
    }

    /// Mode-specific checks; every error names the offending field.
    pub fn validate(&self) -> Result<()> {
        if !(self.refractive_index > 0.0) || !self.refractive_index.is_finite() {
            return Err(Error::config("refractive_index", "must be positive"));
        }
        if self.mode.is_multiplexed() && self.input.crosstalk.is_none() {
            return Err(Error::config(
                "input.crosstalk",
                format!("{} mode needs a cross-talk (W) matrix file", self.mode.name()),
            ));
        }
        let wls = self.wavelengths();
        if wls.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::config("acquisition.wavelengths", "must be positive"));
        }
        match self.mode {
            Mode::Hyperspectral => {
                let grid = spectral_grid();
                let mut sorted = wls.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.len() != grid.len() || sorted.iter().zip(&grid).any(|(a, b)| (a - b).abs() > 1e-9) {
                    return Err(Error::config(
                        "acquisition.wavelengths",
                        "hyperspectral mode needs every wavelength of the 400..=700 nm, 10 nm grid",
                    ));
                }
            }
            _ => {
                if wls.len() != 3 {
                    return Err(Error::config(
                        "acquisition.wavelengths",
                        format!("{} mode needs exactly 3 wavelengths, got {}", self.mode.name(), wls.len()),
                    ));
                }
            }
        }
        if self.acquisition.psr_factor == 0 {
            return Err(Error::config("acquisition.psr_factor", "must be at least 1"));
        }
        self.bayer()?;
        match &self.acquisition.heights {
            Some(h) => {
                if h.is_empty() {
                    return Err(Error::config("acquisition.heights", "must list at least one height"));
                }
                if h.iter().any(|z| !(*z > 0.0) || !z.is_finite()) {
                    return Err(Error::config("acquisition.heights", "heights must be positive"));
                }
            }
            None => {
                if self.autofocus.is_none() {
                    return Err(Error::config(
                        "acquisition.heights",
                        "required unless an [autofocus] section is given",
                    ));
                }
            }
        }
        if let Some(af) = &self.autofocus {
            af.search()?;
        }
        self.recovery.validate()?;
        if let Some(t) = &self.tiling {
            if t.tile_size < 8 {
                return Err(Error::config("tiling.tile_size", "must be at least 8 pixels"));
            }
            if !(0.0..0.5).contains(&t.overlap) {
                return Err(Error::config("tiling.overlap", "must lie in [0, 0.5)"));
            }
        }
        if !self.acquisition.object_z.is_finite() {
            return Err(Error::config("acquisition.object_z", "must be finite"));
        }
        Ok(())
    }
}
