//! Multi-height phase retrieval.
//!
//! Starting from the zero-phase square root of the first hologram, the field
//! is carried up through every recording height and back down to the first,
//! and at each visited height its amplitude is replaced by the measured one
//! while the computed phase is kept. The converged field at the first height
//! is finally propagated back to the object plane.

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::propagation::{PropagationParams, Propagator};

/// A super-resolved hologram and the sample-to-sensor distance it was
/// recorded at.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMeasurement {
    pub intensity: RealField,
    /// Micrometers.
    pub z: f64,
    /// Nanometers.
    pub wavelength: f64,
}

impl HeightMeasurement {
    pub fn new(intensity: RealField, z: f64, wavelength: f64) -> Result<Self> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::NonPositiveZ(z));
        }
        if let Some(i) = intensity.data().iter().position(|&v| !(v >= 0.0)) {
            let w = intensity.width();
            return Err(Error::NegativeIntensity {
                x: i % w,
                y: i / w,
                value: intensity.data()[i],
            });
        }
        Ok(Self {
            intensity,
            z,
            wavelength,
        })
    }

    fn amplitude(&self) -> Vec<f64> {
        self.intensity.data().iter().map(|v| v.sqrt()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    pub max_iterations: usize,
    /// Stop once the relative L2 change of the first-height amplitude
    /// between successive iterations falls below this value.
    pub tolerance: f64,
    pub refractive_index: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            tolerance: 1e-6,
            refractive_index: 1.0,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("recovery.max_iterations", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("recovery.tolerance", "must be positive"));
        }
        if !(self.refractive_index > 0.0) || !self.refractive_index.is_finite() {
            return Err(Error::config("recovery.refractive_index", "must be positive"));
        }
        Ok(())
    }
}

/// Result of a recovery run with its convergence diagnostics.
#[derive(Debug, Clone)]
pub struct Recovery {
    /// Field at the object plane.
    pub field: ComplexField,
    /// Field at the first measurement height after the last iteration.
    pub field_at_first: ComplexField,
    pub iterations: usize,
    pub converged: bool,
    /// Residual after each iteration; empty unless requested.
    pub residuals: Vec<f64>,
    /// Relative L2 change of the first-height amplitude per iteration
    /// (from the second iteration on).
    pub updates: Vec<f64>,
}

fn validate_measurements(measurements: &[HeightMeasurement]) -> Result<()> {
    let first = measurements.first().ok_or(Error::EmptyMeasurements)?;
    for m in measurements {
        if !(m.z > 0.0) || !m.z.is_finite() {
            return Err(Error::NonPositiveZ(m.z));
        }
        if m.intensity.dims() != first.intensity.dims() {
            return Err(Error::DimensionMismatch {
                expected: first.intensity.dims(),
                found: m.intensity.dims(),
            });
        }
        if m.intensity.pitch() != first.intensity.pitch() || m.wavelength != first.wavelength {
            return Err(Error::GridMismatch(format!(
                "measurement at z={} has pitch {} µm and wavelength {} nm, expected {} µm and {} nm",
                m.z,
                m.intensity.pitch(),
                m.wavelength,
                first.intensity.pitch(),
                first.wavelength
            )));
        }
    }
    if let Some(w) = measurements.windows(2).find(|w| !(w[1].z > w[0].z)) {
        return Err(Error::GridMismatch(format!(
            "heights must be strictly ascending, got {} then {}",
            w[0].z, w[1].z
        )));
    }
    Ok(())
}

fn replace_amplitude(data: &mut [num_complex::Complex64], amp: &[f64]) {
    for (u, &a) in data.iter_mut().zip(amp) {
        let r = u.norm();
        *u = if r > 0.0 {
            *u * (a / r)
        } else {
            num_complex::Complex64::new(a, 0.0)
        };
    }
}

/// RMS over all heights of `| |U_k| − sqrt(I_k) |`, divided by the mean
/// measured amplitude. `field_at_first` lives at the first height.
pub fn residual(field_at_first: &ComplexField, measurements: &[HeightMeasurement], n: f64) -> Result<f64> {
    validate_measurements(measurements)?;
    let z1 = measurements[0].z;
    let (mut sq, mut amp_sum, mut count) = (0.0, 0.0, 0usize);
    for m in measurements {
        let dz = m.z - z1;
        let u = if dz == 0.0 {
            field_at_first.clone()
        } else {
            Propagator::for_field(field_at_first, PropagationParams::new(dz, n))?.apply(field_at_first)?
        };
        if u.dims() != m.intensity.dims() {
            return Err(Error::DimensionMismatch {
                expected: m.intensity.dims(),
                found: u.dims(),
            });
        }
        for (p, &i) in u.data().iter().zip(m.intensity.data()) {
            let a = i.sqrt();
            sq += (p.norm() - a).powi(2);
            amp_sum += a;
            count += 1;
        }
    }
    let mean = amp_sum / count as f64;
    if mean <= 0.0 {
        return Err(Error::DegenerateField("measured holograms are all zero".into()));
    }
    Ok((sq / count as f64).sqrt() / mean)
}

/// Recovers the complex field at `object_z` (usually 0, the sample plane).
pub fn multiheight_recover(
    measurements: &[HeightMeasurement],
    cfg: &RecoveryConfig,
    object_z: f64,
) -> Result<ComplexField> {
    Ok(recover(measurements, cfg, object_z, false)?.field)
}

/// As [`multiheight_recover`], returning diagnostics; `track_residual`
/// evaluates [`residual`] after every iteration.
pub fn recover(
    measurements: &[HeightMeasurement],
    cfg: &RecoveryConfig,
    object_z: f64,
    track_residual: bool,
) -> Result<Recovery> {
    cfg.validate()?;
    validate_measurements(measurements)?;
    if !object_z.is_finite() {
        return Err(Error::InvalidGeometry(format!("non-finite object plane {object_z}")));
    }
    let n = cfg.refractive_index;
    let first = &measurements[0];
    let start = ComplexField::from_intensity(&first.intensity, first.wavelength)?;
    let (w, h) = start.dims();
    let (pitch, wl) = (start.pitch(), start.wavelength());
    let amps: Vec<Vec<f64>> = measurements.iter().map(HeightMeasurement::amplitude).collect();

    let mut up = Vec::with_capacity(measurements.len().saturating_sub(1));
    let mut down = Vec::with_capacity(up.capacity());
    for pair in measurements.windows(2) {
        let dz = pair[1].z - pair[0].z;
        up.push(Propagator::new(w, h, pitch, wl, PropagationParams::new(dz, n))?);
        down.push(Propagator::new(w, h, pitch, wl, PropagationParams::new(-dz, n))?);
    }

    let mut data = start.into_data();
    let mut iterations = 0;
    let mut converged = false;
    let mut residuals = Vec::new();
    let mut updates = Vec::new();
    if measurements.len() > 1 {
        let mut previous: Option<Vec<f64>> = None;
        for _ in 0..cfg.max_iterations {
            for (k, p) in up.iter().enumerate() {
                p.apply_in_place(&mut data);
                replace_amplitude(&mut data, &amps[k + 1]);
            }
            for k in (0..down.len()).rev() {
                down[k].apply_in_place(&mut data);
                if k > 0 {
                    replace_amplitude(&mut data, &amps[k]);
                }
            }
            let arrived: Vec<f64> = data.iter().map(|u| u.norm()).collect();
            replace_amplitude(&mut data, &amps[0]);
            iterations += 1;
            if track_residual {
                let f = ComplexField::new(w, h, pitch, wl, data.clone())?;
                residuals.push(residual(&f, measurements, n)?);
            }
            if let Some(prev) = &previous {
                let num: f64 = arrived.iter().zip(prev).map(|(a, b)| (a - b).powi(2)).sum();
                let den: f64 = prev.iter().map(|b| b * b).sum();
                let change = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
                updates.push(change);
                if change < cfg.tolerance {
                    converged = true;
                    break;
                }
            }
            previous = Some(arrived);
        }
    } else {
        converged = true;
    }

    let field_at_first = ComplexField::new(w, h, pitch, wl, data)?;
    let back = object_z - first.z;
    let field = if back == 0.0 {
        field_at_first.clone()
    } else {
        Propagator::for_field(&field_at_first, PropagationParams::new(back, n))?.apply(&field_at_first)?
    };
    log::debug!(
        "phase recovery at {wl} nm: {} heights, {iterations} iterations, converged={converged}",
        measurements.len()
    );
    Ok(Recovery {
        field,
        field_at_first,
        iterations,
        converged,
        residuals,
        updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::propagate;
    use num_complex::Complex64;

    fn object(w: usize, h: usize) -> ComplexField {
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let r2 = (x - w as f64 / 2.0).powi(2) + (y - h as f64 / 2.0).powi(2);
                let amp = 1.0 - 0.4 * (-r2 / 18.0).exp();
                let phase = 0.8 * (-((x - 10.0).powi(2) + (y - 20.0).powi(2)) / 30.0).exp();
                Complex64::from_polar(amp, phase)
            })
            .collect();
        ComplexField::new(w, h, 0.5, 530.0, data).unwrap()
    }

    fn measure(obj: &ComplexField, zs: &[f64]) -> Vec<HeightMeasurement> {
        zs.iter()
            .map(|&z| {
                let i = propagate(obj, PropagationParams::new(z, 1.0)).unwrap().intensity();
                HeightMeasurement::new(i, z, obj.wavelength()).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_height_is_plain_backpropagation() {
        let obj = object(32, 32);
        let ms = measure(&obj, &[80.0]);
        let got = multiheight_recover(&ms, &RecoveryConfig::default(), 0.0).unwrap();
        let start = ComplexField::from_intensity(&ms[0].intensity, 530.0).unwrap();
        let want = propagate(&start, PropagationParams::new(-80.0, 1.0)).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn consistent_field_has_zero_residual() {
        let obj = object(32, 32);
        let ms = measure(&obj, &[60.0, 75.0, 90.0]);
        let at_first = propagate(&obj, PropagationParams::new(60.0, 1.0)).unwrap();
        assert!(residual(&at_first, &ms, 1.0).unwrap() < 1e-12);
    }

    #[test]
    fn recovery_reduces_residual_and_is_deterministic() {
        let obj = object(32, 32);
        let ms = measure(&obj, &[60.0, 75.0, 90.0, 105.0]);
        let cfg = RecoveryConfig::default();
        let a = recover(&ms, &cfg, 0.0, true).unwrap();
        let b = recover(&ms, &cfg, 0.0, true).unwrap();
        assert_eq!(a.field, b.field);
        assert!(a.iterations <= cfg.max_iterations);
        for w in a.residuals.windows(2).take(9) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", a.residuals);
        }
        let naive = ComplexField::from_intensity(&ms[0].intensity, 530.0).unwrap();
        assert!(a.residuals.last().unwrap() < &residual(&naive, &ms, 1.0).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let obj = object(16, 16);
        assert!(matches!(
            multiheight_recover(&[], &RecoveryConfig::default(), 0.0),
            Err(Error::EmptyMeasurements)
        ));
        let mut ms = measure(&obj, &[50.0, 60.0]);
        assert!(matches!(
            HeightMeasurement::new(ms[0].intensity.clone(), 0.0, 530.0),
            Err(Error::NonPositiveZ(_))
        ));
        ms[1].intensity = ms[1].intensity.crop(0, 0, 8, 8).unwrap();
        assert!(matches!(
            multiheight_recover(&ms, &RecoveryConfig::default(), 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
        let unsorted = measure(&obj, &[60.0, 50.0]);
        assert!(multiheight_recover(&unsorted, &RecoveryConfig::default(), 0.0).is_err());
        let cfg = RecoveryConfig {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(matches!(
            multiheight_recover(&measure(&obj, &[50.0]), &cfg, 0.0),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn random_measurements_give_finite_residual() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let ms: Vec<_> = [40.0, 55.0, 70.0]
            .iter()
            .map(|&z| {
                let i = RealField::from_fn(16, 16, 0.5, |_, _| rng.random::<f64>()).unwrap();
                HeightMeasurement::new(i, z, 600.0).unwrap()
            })
            .collect();
        let r = recover(&ms, &RecoveryConfig::default(), 0.0, true).unwrap();
        assert!(r.residuals.iter().all(|v| v.is_finite()));
        assert!(r.field.data().iter().all(|u| u.re.is_finite() && u.im.is_finite()));
        let res = *r.residuals.last().unwrap();
        assert!(res > 0.01 && res < 10.0, "{res}");
    }
}
