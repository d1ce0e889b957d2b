//! Synthetic data sets: a phantom, an acquisition geometry and a mode,
//! written out as frames plus a ready-to-run reconstruction config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Mode, PipelineConfig};
use super::io;
use crate::error::{Error, Result};
use crate::field::{spectral_grid, HologramFrame, RgbImage};
use crate::simulate::{make_phantom, simulate_acquisition, AcquisitionSpec, Phantom, PhantomSpec};
use crate::superres::{BayerLayout, CrosstalkMatrix};

fn default_heights() -> Vec<f64> {
    (0..8).map(|k| 100.0 + 15.0 * k as f64).collect()
}

fn default_raster_steps() -> usize {
    8
}

fn default_raster_spacing() -> f64 {
    0.28
}

fn default_sensor_pitch() -> f64 {
    1.12
}

fn default_bayer() -> String {
    "RGGB".into()
}

/// Sensor geometry and illumination of a synthetic acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioAcquisition {
    /// µm, strictly ascending.
    #[serde(default = "default_heights")]
    pub heights: Vec<f64>,
    /// nm; defaults follow the mode.
    pub wavelengths: Option<Vec<f64>>,
    /// The stage visits a `raster_steps × raster_steps` grid.
    #[serde(default = "default_raster_steps")]
    pub raster_steps: usize,
    /// µm between raster positions.
    #[serde(default = "default_raster_spacing")]
    pub raster_spacing: f64,
    /// µm.
    #[serde(default = "default_sensor_pitch")]
    pub sensor_pitch: f64,
    #[serde(default = "default_bayer")]
    pub bayer: String,
    /// Rows R, G1, G2, B; columns illuminations by descending wavelength.
    /// Identity (no cross-talk) when absent.
    pub mixing: Option<[[f64; 3]; 4]>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ScenarioAcquisition {
    fn default() -> Self {
        Self {
            heights: default_heights(),
            wavelengths: None,
            raster_steps: default_raster_steps(),
            raster_spacing: default_raster_spacing(),
            sensor_pitch: default_sensor_pitch(),
            bayer: default_bayer(),
            mixing: None,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

fn one() -> f64 {
    1.0
}

/// A complete synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    #[serde(default = "one")]
    pub refractive_index: f64,
    #[serde(default)]
    pub phantom: PhantomSpec,
    #[serde(default)]
    pub acquisition: ScenarioAcquisition,
}

impl ScenarioConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            refractive_index: 1.0,
            phantom: PhantomSpec::default(),
            acquisition: ScenarioAcquisition::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("scenario", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        match (&self.acquisition.wavelengths, self.mode) {
            (Some(w), _) => w.clone(),
            (None, Mode::Hyperspectral) => spectral_grid().to_vec(),
            (None, _) => vec![590.0, 540.0, 450.0],
        }
    }

    /// Ratio of sensor pitch to phantom pitch.
    pub fn psr_factor(&self) -> Result<usize> {
        let ratio = self.acquisition.sensor_pitch / self.phantom.pitch;
        let factor = ratio.round();
        if factor < 1.0 || (ratio - factor).abs() > 1e-6 * ratio {
            return Err(Error::config(
                "acquisition.sensor_pitch",
                format!(
                    "{} µm is not an integer multiple of the phantom pitch {} µm",
                    self.acquisition.sensor_pitch, self.phantom.pitch
                ),
            ));
        }
        Ok(factor as usize)
    }

    fn mixing(&self) -> [[f64; 3]; 4] {
        self.acquisition.mixing.unwrap_or_else(AcquisitionSpec::identity_mixing)
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.psr_factor()?;
        let wls = self.wavelengths();
        let per_run = if self.mode.is_multiplexed() { &wls[..] } else { &wls[..1.min(wls.len())] };
        self.spec_for(per_run, 0)?.validate()?;
        if self.mode == Mode::SingleshotNetworkInput && self.acquisition.heights.len() != 1 {
            return Err(Error::config("acquisition.heights", "single-shot scenarios record one height"));
        }
        if self.acquisition.raster_steps == 0 {
            return Err(Error::config("acquisition.raster_steps", "must be at least 1"));
        }
        // the generated reconstruction config must itself be valid
        self.reconstruction_config(Path::new("out")).validate()
    }

    fn spec_for(&self, wavelengths: &[f64], stream: u64) -> Result<AcquisitionSpec> {
        let a = &self.acquisition;
        Ok(AcquisitionSpec {
            heights: a.heights.clone(),
            wavelengths: wavelengths.to_vec(),
            raster_shifts: AcquisitionSpec::raster_grid(a.raster_steps, a.raster_spacing),
            sensor_pitch: a.sensor_pitch,
            bayer: BayerLayout::from_pattern(&a.bayer).map_err(|e| Error::config("acquisition.bayer", e.to_string()))?,
            mixing: self.mixing(),
            noise_sigma: a.noise_sigma,
            seed: a.seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        })
    }

    /// Raw frames of every height (and wavelength, when sequential).
    pub fn frames(&self, phantom: &Phantom) -> Result<Vec<HologramFrame>> {
        let wls = self.wavelengths();
        if self.mode.is_multiplexed() {
            return simulate_acquisition(phantom, &self.spec_for(&wls, 0)?, self.refractive_index);
        }
        let mut frames = Vec::new();
        for (k, &wl) in wls.iter().enumerate() {
            let spec = self.spec_for(&[wl], k as u64 + 1)?;
            frames.extend(simulate_acquisition(phantom, &spec, self.refractive_index)?);
        }
        Ok(frames)
    }

    /// The color image a perfect reconstruction would produce.
    pub fn truth(&self, phantom: &Phantom) -> Result<RgbImage> {
        if self.mode == Mode::Hyperspectral {
            return Ok(phantom.truth_rgb());
        }
        let w = self.wavelengths();
        phantom.truth_rgb_three_band([w[0], w[1], w[2]])
    }

    /// Reconstruction settings matching the scenario, with paths relative to
    /// the scenario directory.
    pub fn reconstruction_config(&self, output: &Path) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(self.mode, output);
        cfg.refractive_index = self.refractive_index;
        cfg.input.frames = Some(PathBuf::from(FRAMES_DIR));
        cfg.input.reference = Some(PathBuf::from(TRUTH_FILE));
        if self.mode.is_multiplexed() {
            cfg.input.crosstalk = Some(PathBuf::from(CROSSTALK_FILE));
        }
        cfg.acquisition.wavelengths = Some(self.wavelengths());
        cfg.acquisition.heights = Some(self.acquisition.heights.clone());
        cfg.acquisition.psr_factor = self.psr_factor().unwrap_or(1);
        cfg.acquisition.bayer = self.acquisition.bayer.clone();
        // the phantom tiles the plane, so the raster wraps around
        cfg.acquisition.wrap = true;
        cfg
    }
}

pub const FRAMES_DIR: &str = "frames";
pub const TRUTH_FILE: &str = "truth_rgb.hsf";
pub const CROSSTALK_FILE: &str = "crosstalk.txt";
pub const RECONSTRUCT_FILE: &str = "reconstruct.toml";

/// What [`write_scenario`] produced.
#[derive(Debug, Clone)]
pub struct ScenarioArtifacts {
    pub frame_count: usize,
    pub truth: RgbImage,
    pub config: PathBuf,
}

/// Simulates `scenario` into `dir`: `frames/`, `truth_rgb.hsf` (and
/// `.png`), `crosstalk.txt` for multiplexed modes and `reconstruct.toml`.
pub fn write_scenario(scenario: &ScenarioConfig, dir: impl AsRef<Path>) -> Result<ScenarioArtifacts> {
    let dir = dir.as_ref();
    scenario.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let phantom = make_phantom(&scenario.phantom)?;
    let frames = scenario.frames(&phantom)?;
    io::write_frame_set(dir.join(FRAMES_DIR), &frames)?;
    let truth = scenario.truth(&phantom)?;
    io::write_rgb(&truth, phantom.pitch(), dir.join(TRUTH_FILE))?;
    io::write_rgb(&truth, phantom.pitch(), dir.join("truth_rgb.png"))?;
    if scenario.mode.is_multiplexed() {
        let w = CrosstalkMatrix::from_mixing(&scenario.mixing())?;
        let path = dir.join(CROSSTALK_FILE);
        std::fs::write(&path, w.to_text()).map_err(|e| Error::io(&path, e))?;
    }
    let config = dir.join(RECONSTRUCT_FILE);
    let text = scenario.reconstruction_config(Path::new("out")).to_toml()?;
    std::fs::write(&config, text).map_err(|e| Error::io(&config, e))?;
    Ok(ScenarioArtifacts {
        frame_count: frames.len(),
        truth,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::PhantomStyle;

    fn small(mode: Mode) -> ScenarioConfig {
        let mut s = ScenarioConfig::new(mode);
        s.phantom = PhantomSpec {
            size: 64,
            pitch: 0.28,
            style: PhantomStyle::Disks,
            ..Default::default()
        };
        s.acquisition.heights = vec![30.0, 45.0, 60.0];
        s.acquisition.sensor_pitch = 0.56;
        s.acquisition.raster_steps = 4;
        s.acquisition.raster_spacing = 0.14;
        s
    }

    #[test]
    fn scenario_text_round_trip() {
        let s = small(Mode::MultiheightSequential);
        let text = toml::to_string(&s).unwrap();
        assert_eq!(ScenarioConfig::parse(&text).unwrap(), s);
        let minimal = ScenarioConfig::parse("mode = \"hyperspectral\"").unwrap();
        assert_eq!(minimal.wavelengths().len(), 31);
        assert_eq!(minimal.psr_factor().unwrap(), 4);
    }

    #[test]
    fn frame_counts_follow_the_mode() {
        let s = small(Mode::MultiheightSequential);
        let p = make_phantom(&s.phantom).unwrap();
        assert_eq!(s.frames(&p).unwrap().len(), 3 * 3 * 16);
        let s = small(Mode::MultiheightMultiplexed);
        assert_eq!(s.frames(&p).unwrap().len(), 3 * 16);
    }

    #[test]
    fn mismatched_pitches_are_rejected() {
        let mut s = small(Mode::MultiheightMultiplexed);
        s.acquisition.sensor_pitch = 0.7;
        assert!(matches!(s.validate(), Err(Error::Config { field, .. }) if field == "acquisition.sensor_pitch"));
    }

    #[test]
    fn written_scenario_reconstructs() {
        let dir = tempfile::tempdir().unwrap();
        let s = small(Mode::MultiheightMultiplexed);
        let art = write_scenario(&s, dir.path()).unwrap();
        assert_eq!(art.frame_count, 48);
        let cfg = PipelineConfig::load(&art.config).unwrap();
        let out = super::super::run(&cfg).unwrap();
        let m = out.metrics.unwrap();
        assert!(m.ssim > 0.85, "{m:?}");
        assert!(dir.path().join("out/rgb.png").exists());
        assert!(dir.path().join("out/metrics.txt").exists());
    }
}
