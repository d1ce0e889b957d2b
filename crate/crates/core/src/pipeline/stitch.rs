//! Field-of-view tiling and linear-ramp blending of overlapping tiles.

use crate::error::{Error, Result};
use crate::field::{RealField, RgbImage};

/// A rectangular tile of the full field of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tile {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

fn starts(len: usize, tile: usize, overlap_px: usize) -> Vec<usize> {
    if tile >= len {
        return vec![0];
    }
    let step = (tile - overlap_px).max(1);
    let mut s: Vec<usize> = (0..).map(|k| k * step).take_while(|&x| x + tile < len).collect();
    s.push(len - tile);
    s.dedup();
    s
}

/// Tiles of side `tile` (clamped to the image) covering `width × height`,
/// neighbours overlapping by `overlap · tile` pixels; the last row and
/// column are flush with the far edges.
pub fn tile_grid(width: usize, height: usize, tile: usize, overlap: f64) -> Vec<Tile> {
    let ov = (overlap * tile as f64).round() as usize;
    let (tw, th) = (tile.min(width), tile.min(height));
    let mut out = Vec::new();
    for &y0 in &starts(height, tile, ov) {
        for &x0 in &starts(width, tile, ov) {
            out.push(Tile {
                x0,
                y0,
                width: tw,
                height: th,
            });
        }
    }
    out
}

fn ramp(d: usize, len: usize) -> f64 {
    if len == 0 {
        1.0
    } else {
        ((d as f64 + 0.5) / len as f64).min(1.0)
    }
}

/// Pixels of one tile with its origin and size.
type PlacedTile<const K: usize> = (Vec<[f64; K]>, (usize, usize), (usize, usize));

fn blend<const K: usize>(
    tiles: &[PlacedTile<K>],
    overlap: f64,
) -> Result<(Vec<[f64; K]>, usize, usize)> {
    if tiles.is_empty() {
        return Err(Error::CoverageGap { x: 0, y: 0 });
    }
    let width = tiles.iter().map(|(_, (w, _), (x, _))| x + w).max().unwrap_or(0);
    let height = tiles.iter().map(|(_, (_, h), (_, y))| y + h).max().unwrap_or(0);
    let mut acc = vec![[0.0; K]; width * height];
    let mut wsum = vec![0.0; width * height];
    let mut first = vec![[0.0; K]; width * height];
    let mut count = vec![0u32; width * height];
    for (px, (tw, th), (x0, y0)) in tiles {
        let (tw, th) = (*tw, *th);
        let (ox, oy) = (
            (overlap * tw as f64).round() as usize,
            (overlap * th as f64).round() as usize,
        );
        for y in 0..th {
            let wy = ramp(y.min(th - 1 - y), oy);
            for x in 0..tw {
                let w = wy * ramp(x.min(tw - 1 - x), ox);
                let i = (y0 + y) * width + x0 + x;
                let p = px[y * tw + x];
                for c in 0..K {
                    acc[i][c] += w * p[c];
                }
                wsum[i] += w;
                if count[i] == 0 {
                    first[i] = p;
                }
                count[i] += 1;
            }
        }
    }
    if let Some(i) = count.iter().position(|&c| c == 0) {
        return Err(Error::CoverageGap {
            x: i % width,
            y: i / width,
        });
    }
    let data = (0..width * height)
        .map(|i| {
            if count[i] == 1 {
                first[i]
            } else {
                acc[i].map(|v| v / wsum[i])
            }
        })
        .collect();
    Ok((data, width, height))
}

/// Blends tiles placed at their `(x0, y0)` offsets. Within `overlap · size`
/// pixels of a tile edge its weight ramps linearly, so two overlapping
/// tiles cross-fade; single-coverage pixels are copied exactly.
pub fn stitch(tiles: &[(RgbImage, (usize, usize))], overlap: f64) -> Result<RgbImage> {
    let parts: Vec<_> = tiles
        .iter()
        .map(|(img, off)| (img.pixels().to_vec(), img.dims(), *off))
        .collect();
    let (data, w, h) = blend(&parts, overlap)?;
    RgbImage::new(w, h, data)
}

/// [`stitch`] for real-valued planes.
pub fn stitch_fields(tiles: &[(RealField, (usize, usize))], overlap: f64) -> Result<RealField> {
    let pitch = tiles.first().map(|(f, _)| f.pitch()).ok_or(Error::CoverageGap { x: 0, y: 0 })?;
    let parts: Vec<_> = tiles
        .iter()
        .map(|(f, off)| (f.data().iter().map(|&v| [v]).collect(), f.dims(), *off))
        .collect();
    let (data, w, h) = blend(&parts, overlap)?;
    RealField::new(w, h, pitch, data.into_iter().map(|[v]| v).collect())
}
