//! Raster figures. Every figure is written next to a CSV of the numbers
//! it shows, so nothing downstream has to read pixels.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::{Array2, ArrayView2};

use crate::error::CliResult;

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GAP: u32 = 2;

/// Palette used for line charts, cycled.
pub const LINE_COLORS: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];

const SEQUENTIAL: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

const DIVERGING: [[f64; 3]; 3] = [[59.0, 76.0, 192.0], [240.0, 240.0, 240.0], [180.0, 4.0, 38.0]];

fn ramp(stops: &[[f64; 3]], u: f64) -> Rgb<u8> {
    let u = if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.0 };
    let x = u * (stops.len() - 1) as f64;
    let i = (x.floor() as usize).min(stops.len() - 2);
    let f = x - i as f64;
    let c = |k: usize| (stops[i][k] + f * (stops[i + 1][k] - stops[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Shared colour scale of a figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale {
    pub lo: f64,
    pub hi: f64,
    pub diverging: bool,
}

impl Scale {
    /// Min and max over all finite values of all frames.
    pub fn shared<'a>(frames: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for f in frames {
            for &v in f.iter().filter(|v| v.is_finite()) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if lo > hi {
            (lo, hi) = (0.0, 1.0);
        }
        Self {
            lo,
            hi,
            diverging: false,
        }
    }

    fn color(&self, v: f64) -> Rgb<u8> {
        let u = if self.hi > self.lo {
            (v - self.lo) / (self.hi - self.lo)
        } else {
            0.5
        };
        if self.diverging {
            ramp(&DIVERGING, u)
        } else {
            ramp(&SEQUENTIAL, u)
        }
    }
}

fn paint_heatmap(img: &mut RgbImage, x0: u32, y0: u32, frame: ArrayView2<'_, f64>, scale: &Scale, px: u32) {
    for ((i, j), &v) in frame.indexed_iter() {
        let c = scale.color(v);
        for dy in 0..px {
            for dx in 0..px {
                img.put_pixel(x0 + j as u32 * px + dx, y0 + i as u32 * px + dy, c);
            }
        }
    }
}

pub fn heatmap(frame: ArrayView2<'_, f64>, scale: &Scale, px: u32) -> RgbImage {
    let (m, n) = frame.dim();
    let mut img = RgbImage::from_pixel(n as u32 * px, m as u32 * px, BG);
    paint_heatmap(&mut img, 0, 0, frame, scale, px);
    img
}

/// Rows of frames drawn side by side with one colour scale for the whole
/// figure.
pub fn strip(rows: &[Vec<Array2<f64>>], scale: &Scale, px: u32) -> RgbImage {
    let (m, n) = rows
        .iter()
        .flatten()
        .next()
        .map(|f| f.dim())
        .unwrap_or((1, 1));
    let cols = rows.iter().map(Vec::len).max().unwrap_or(1).max(1) as u32;
    let (fw, fh) = (n as u32 * px, m as u32 * px);
    let w = cols * fw + (cols - 1) * GAP;
    let h = rows.len().max(1) as u32 * (fh + GAP) - GAP;
    let mut img = RgbImage::from_pixel(w, h, BG);
    for (r, row) in rows.iter().enumerate() {
        for (c, f) in row.iter().enumerate() {
            paint_heatmap(&mut img, c as u32 * (fw + GAP), r as u32 * (fh + GAP), f.view(), scale, px);
        }
    }
    img
}

fn line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

/// Polylines over a shared x index, framed by a box. Non-finite points
/// break the line.
pub fn line_chart(series: &[Vec<f64>], width: u32, height: u32, log_y: bool) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, BG);
    let pad = 10.0;
    let (w, h) = (width as f64 - 2.0 * pad, height as f64 - 2.0 * pad);
    let tf = |v: f64| if log_y { v.log10() } else { v };
    let vals = series.iter().flatten().map(|&v| tf(v)).filter(|v| v.is_finite());
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
    let n = series.iter().map(Vec::len).max().unwrap_or(0);
    let corners = [(pad, pad), (pad + w, pad), (pad + w, pad + h), (pad, pad + h), (pad, pad)];
    for c in corners.windows(2) {
        line(&mut img, c[0], c[1], AXIS);
    }
    if !lo.is_finite() || n == 0 {
        return img;
    }
    let x_of = |i: usize| pad + if n > 1 { w * i as f64 / (n - 1) as f64 } else { w / 2.0 };
    let y_of = |v: f64| pad + h * (1.0 - (v - lo) / (hi - lo));
    for (s, ys) in series.iter().enumerate() {
        let c = Rgb(LINE_COLORS[s % LINE_COLORS.len()]);
        let mut prev: Option<(f64, f64)> = None;
        for (i, &v) in ys.iter().enumerate() {
            let v = tf(v);
            if !v.is_finite() {
                prev = None;
                continue;
            }
            let p = (x_of(i), y_of(v));
            match prev {
                Some(q) => line(&mut img, q, p, c),
                None => line(&mut img, p, p, c),
            }
            prev = Some(p);
        }
    }
    img
}

/// Arrows `(row, col, vertical, horizontal)` over a heatmap of the frame.
/// Arrow length is scaled so the longest spans `step` cells.
pub fn quiver(frame: ArrayView2<'_, f64>, arrows: &[(usize, usize, f64, f64)], step: usize, px: u32) -> RgbImage {
    let scale = Scale::shared([frame]);
    let mut img = heatmap(frame, &scale, px);
    let longest = arrows
        .iter()
        .map(|a| a.2.hypot(a.3))
        .fold(0.0, f64::max);
    if longest == 0.0 {
        return img;
    }
    let k = step.max(1) as f64 * px as f64 / longest;
    let white = Rgb([255, 255, 255]);
    for &(r, c, v, hz) in arrows {
        let x0 = (c as f64 + 0.5) * px as f64;
        let y0 = (r as f64 + 0.5) * px as f64;
        let (x1, y1) = (x0 + hz * k, y0 + v * k);
        line(&mut img, (x0, y0), (x1, y1), white);
        img.put_pixel(
            (x1.max(0.0) as u32).min(img.width() - 1),
            (y1.max(0.0) as u32).min(img.height() - 1),
            Rgb([0, 0, 0]),
        );
    }
    img
}

pub fn save(img: &RgbImage, path: &Path) -> CliResult<()> {
    img.save(path)?;
    Ok(())
}
