//! Minimal PNG line charts: a framed plot area with one polyline per series.
//! There are no labels; the CSV next to each chart carries the numbers.

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};

pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub color: [u8; 3],
}

const MARGIN: u32 = 24;

fn bounds(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for &(px, py) in series.iter().flat_map(|s| &s.points) {
        if px.is_finite() && py.is_finite() {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
    }
    let widen = |(lo, hi): (f64, f64)| {
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    (widen(x), widen(y))
}

fn draw_line(img: &mut RgbImage, a: (i64, i64), b: (i64, i64), color: Rgb<u8>) {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

pub fn line_chart(series: &[Series], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let ((x0, x1), (y0, y1)) = bounds(series);
    let (left, top) = (MARGIN as i64, MARGIN as i64);
    let (right, bottom) = ((width - MARGIN) as i64, (height - MARGIN) as i64);
    let frame = Rgb([0, 0, 0]);
    for (a, b) in [
        ((left, top), (right, top)),
        ((right, top), (right, bottom)),
        ((right, bottom), (left, bottom)),
        ((left, bottom), (left, top)),
    ] {
        draw_line(&mut img, a, b, frame);
    }
    let to_px = |(x, y): (f64, f64)| {
        let u = (x - x0) / (x1 - x0);
        let v = (y - y0) / (y1 - y0);
        (
            left + (u * (right - left) as f64).round() as i64,
            bottom - (v * (bottom - top) as f64).round() as i64,
        )
    };
    for s in series {
        let pts: Vec<(i64, i64)> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&p| to_px(p))
            .collect();
        let color = Rgb(s.color);
        for w in pts.windows(2) {
            draw_line(&mut img, w[0], w[1], color);
        }
        for &(x, y) in &pts {
            for d in -1..=1 {
                draw_line(&mut img, (x + d, y - 1), (x + d, y + 1), color);
            }
        }
    }
    img
}

pub fn save_chart(path: &Path, series: &[Series]) -> Result<()> {
    line_chart(series, 640, 400)
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}
