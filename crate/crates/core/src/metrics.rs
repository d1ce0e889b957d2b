//! Image fidelity metrics: global SSIM and mean CIE94 color difference.

use crate::colorimetry::{d65_white, srgb_to_lab};
use crate::error::{Error, Result};
use crate::field::{RealField, RgbImage};

/// Stabilizing constants of the SSIM quotient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConstants {
    pub c1: f64,
    pub c2: f64,
    pub dynamic_range: f64,
}

impl SsimConstants {
    /// `C1 = (0.01 L)²`, `C2 = (0.03 L)²`.
    pub fn for_range(dynamic_range: f64) -> Self {
        Self {
            c1: (0.01 * dynamic_range).powi(2),
            c2: (0.03 * dynamic_range).powi(2),
            dynamic_range,
        }
    }
}

impl Default for SsimConstants {
    fn default() -> Self {
        Self::for_range(1.0)
    }
}

/// Global SSIM of two vectorized images.
///
/// Means, variances and covariance are taken over the whole image with a
/// `1/N` normalization; no sliding window.
pub fn ssim(u: &[f64], v: &[f64], c: SsimConstants) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: (u.len(), 1),
            found: (v.len(), 1),
        });
    }
    let n = u.len() as f64;
    let mu_u = u.iter().sum::<f64>() / n;
    let mu_v = v.iter().sum::<f64>() / n;
    let (mut var_u, mut var_v, mut cov) = (0.0, 0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        let (du, dv) = (a - mu_u, b - mu_v);
        var_u += du * du;
        var_v += dv * dv;
        cov += du * dv;
    }
    var_u /= n;
    var_v /= n;
    cov /= n;
    Ok(((2.0 * mu_u * mu_v + c.c1) * (2.0 * cov + c.c2))
        / ((mu_u * mu_u + mu_v * mu_v + c.c1) * (var_u + var_v + c.c2)))
}

pub fn ssim_fields(u: &RealField, v: &RealField, c: SsimConstants) -> Result<f64> {
    if u.dims() != v.dims() {
        return Err(Error::DimensionMismatch {
            expected: u.dims(),
            found: v.dims(),
        });
    }
    ssim(u.data(), v.data(), c)
}

/// Per-channel global SSIM averaged over R, G and B.
pub fn ssim_rgb(u: &RgbImage, v: &RgbImage, c: SsimConstants) -> Result<f64> {
    if u.dims() != v.dims() {
        return Err(Error::DimensionMismatch {
            expected: u.dims(),
            found: v.dims(),
        });
    }
    let mut total = 0.0;
    for ch in 0..3 {
        total += ssim(&u.channel(ch), &v.channel(ch), c)?;
    }
    Ok(total / 3.0)
}

const CIE94_K1: f64 = 0.045;
const CIE94_K2: f64 = 0.015;

/// CIE94 color difference (graphic-arts weights, `kL = kC = kH = 1`).
/// `reference` supplies the chroma used by the `S_C`, `S_H` weights.
pub fn cie94(reference: [f64; 3], sample: [f64; 3]) -> f64 {
    let [l1, a1, b1] = reference;
    let [l2, a2, b2] = sample;
    let c1 = a1.hypot(b1);
    let c2 = a2.hypot(b2);
    let dl = l1 - l2;
    let dc = c1 - c2;
    let da = a1 - a2;
    let db = b1 - b2;
    let dh2 = (da * da + db * db - dc * dc).max(0.0);
    let sc = 1.0 + CIE94_K1 * c1;
    let sh = 1.0 + CIE94_K2 * c1;
    (dl * dl + (dc / sc).powi(2) + dh2 / (sh * sh)).sqrt()
}

/// Mean per-pixel CIE94 difference; image `a` is the reference.
pub fn delta_e94(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            found: b.dims(),
        });
    }
    let white = d65_white();
    let la = srgb_to_lab(a, white);
    let lb = srgb_to_lab(b, white);
    let total: f64 = la.iter().zip(&lb).map(|(&p, &q)| cie94(p, q)).sum();
    Ok(total / la.len() as f64)
}

/// Peak signal-to-noise ratio in dB.
pub fn psnr(reference: &[f64], test: &[f64], peak: f64) -> Result<f64> {
    if reference.len() != test.len() || reference.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: (reference.len(), 1),
            found: (test.len(), 1),
        });
    }
    let mse = reference
        .iter()
        .zip(test)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / reference.len() as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Root-mean-square difference relative to the RMS of `reference`.
pub fn relative_rms(reference: &[f64], test: &[f64]) -> f64 {
    let num: f64 = reference.iter().zip(test).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = reference.iter().map(|a| a * a).sum();
    (num / den).sqrt()
}

/// Pearson correlation coefficient.
pub fn correlation(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        suv += (a - mu) * (b - mv);
        suu += (a - mu) * (a - mu);
        svv += (b - mv) * (b - mv);
    }
    suv / (suu * svv).sqrt()
}

/// Flat `key=value` metric report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub ssim: f64,
    pub delta_e94: f64,
}

impl MetricReport {
    pub fn compare(reference: &RgbImage, output: &RgbImage) -> Result<Self> {
        Ok(Self {
            ssim: ssim_rgb(output, reference, SsimConstants::default())?,
            delta_e94: delta_e94(reference, output)?,
        })
    }

    pub fn to_text(&self) -> String {
        format!("ssim={}\ndelta_e94={}\n", self.ssim, self.delta_e94)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut ssim = None;
        let mut de = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("metric line {line:?} lacks '='")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("metric value {v:?} is not a number")))?;
            match k.trim() {
                "ssim" => ssim = Some(v),
                "delta_e94" => de = Some(v),
                _ => {}
            }
        }
        match (ssim, de) {
            (Some(ssim), Some(delta_e94)) => Ok(Self { ssim, delta_e94 }),
            _ => Err(Error::Format("metric report needs ssim and delta_e94".into())),
        }
    }
}
