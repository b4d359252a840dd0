//! Image output: the blue-white-red heatmap colormap, PNG/PGM encoding and
//! small rasterized line and scatter plots.

use std::fs;
use std::path::Path;

use crate::attribution::AttributionMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Diverging blue-white-red colormap: 0 is blue, 0.5 white, 1 red, linear
/// in between, channels rounded half-to-even.
pub fn bwr(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let q = |c: f64| (c * 255.0).round_ties_even() as u8;
    if v <= 0.5 {
        let t = v / 0.5;
        [q(t), q(t), 255]
    } else {
        let t = (v - 0.5) / 0.5;
        [255, q(1.0 - t), q(1.0 - t)]
    }
}

/// A plain 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        let pixels = color.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, pixels }
    }

    pub fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        let at = (y as usize * self.width + x as usize) * 3;
        self.pixels[at..at + 3].copy_from_slice(&color);
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let at = (y * self.width + x) * 3;
        [self.pixels[at], self.pixels[at + 1], self.pixels[at + 2]]
    }

    /// Bresenham segment.
    pub fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.put(x, y, color);
            if x == x1 && y == y1 {
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

    /// Non-interlaced 8-bit RGB PNG with a single image-data stream.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_filter(png::Filter::NoFilter);
            enc.set_compression(png::Compression::Balanced);
            let mut w = enc.write_header()?;
            w.write_image_data(&self.pixels)?;
            w.finish()?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_png()?).map_err(|e| Error::io(path, e))
    }
}

fn normalized_plane(map: &AttributionMap) -> Result<(usize, usize, &[f64])> {
    let [h, w] = *map.values.shape() else {
        return Err(Error::InvalidTensor(format!("heatmap needs (h, w), got {:?}", map.values.shape())));
    };
    if let Some(&v) = map.values.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange { value: v });
    }
    Ok((h, w, map.values.data()))
}

/// Colors a normalized map, each cell drawn as a `scale x scale` block.
pub fn heatmap_image(map: &AttributionMap, scale: usize) -> Result<RgbImage> {
    let (h, w, values) = normalized_plane(map)?;
    let scale = scale.max(1);
    let mut img = RgbImage::filled(w * scale, h * scale, [0, 0, 0]);
    for (i, &v) in values.iter().enumerate() {
        let c = bwr(v);
        let (r, col) = (i / w, i % w);
        for dy in 0..scale {
            for dx in 0..scale {
                img.put((col * scale + dx) as i64, (r * scale + dy) as i64, c);
            }
        }
    }
    Ok(img)
}

/// Writes a normalized map as a colormapped PNG.
pub fn render_heatmap(map: &AttributionMap, out: &Path, scale: usize) -> Result<()> {
    heatmap_image(map, scale)?.write_png(out)
}

/// Binary PGM (P5) of a grayscale plane with values in `[0, 1]`.
pub fn pgm_bytes(plane: &Tensor) -> Result<Vec<u8>> {
    let [h, w] = *plane.shape() else {
        return Err(Error::InvalidTensor(format!("PGM needs (h, w), got {:?}", plane.shape())));
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for &v in plane.data() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { value: v });
        }
        out.push((v * 255.0).round_ties_even() as u8);
    }
    Ok(out)
}

pub fn render_pgm(map: &AttributionMap, out: &Path) -> Result<()> {
    normalized_plane(map)?;
    fs::write(out, pgm_bytes(&map.values)?).map_err(|e| Error::io(out, e))
}

const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
];

pub fn palette(i: usize) -> [u8; 3] {
    PALETTE[i % PALETTE.len()]
}

/// Maps data coordinates onto a square canvas with a fixed margin.
struct Frame {
    size: usize,
    margin: usize,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(size: usize, xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        Self {
            size,
            margin: size / 10,
            x: span(&mut xs.clone()),
            y: span(&mut ys.clone()),
        }
    }

    fn to_px(&self, x: f64, y: f64) -> (i64, i64) {
        let inner = (self.size - 2 * self.margin) as f64;
        let px = self.margin as f64 + (x - self.x.0) / (self.x.1 - self.x.0) * inner;
        let py = (self.size - self.margin) as f64 - (y - self.y.0) / (self.y.1 - self.y.0) * inner;
        (px.round() as i64, py.round() as i64)
    }

    fn axes(&self, img: &mut RgbImage) {
        let (lo, hi) = (self.margin as i64, (self.size - self.margin) as i64);
        img.line((lo, hi), (hi, hi), [0, 0, 0]);
        img.line((lo, hi), (lo, lo), [0, 0, 0]);
    }
}

/// Line chart of several series sharing one x grid; each series is scaled
/// to its own range so curves with different units stay comparable.
pub fn line_plot(xs: &[f64], series: &[Vec<f64>], size: usize) -> RgbImage {
    let mut img = RgbImage::filled(size, size, [255, 255, 255]);
    let base = Frame::new(size, xs.iter().copied(), [0.0, 1.0].into_iter());
    base.axes(&mut img);
    for (k, ys) in series.iter().enumerate() {
        let frame = Frame::new(size, xs.iter().copied(), ys.iter().copied());
        let pts: Vec<(i64, i64)> = xs.iter().zip(ys).map(|(&x, &y)| frame.to_px(x, y)).collect();
        for w in pts.windows(2) {
            img.line(w[0], w[1], palette(k));
        }
        for &(px, py) in &pts {
            for d in -2..=2 {
                img.put(px + d, py, palette(k));
                img.put(px, py + d, palette(k));
            }
        }
    }
    img
}

/// Scatter plot with one color per group and a `+` at each group centroid.
pub fn scatter_plot(points: &[[f64; 2]], groups: &[usize], centroids: &[[f64; 2]], size: usize) -> RgbImage {
    let mut img = RgbImage::filled(size, size, [255, 255, 255]);
    let frame = Frame::new(size, points.iter().map(|p| p[0]), points.iter().map(|p| p[1]));
    frame.axes(&mut img);
    for (p, &g) in points.iter().zip(groups) {
        let (px, py) = frame.to_px(p[0], p[1]);
        img.put(px, py, palette(g));
        img.put(px + 1, py, palette(g));
        img.put(px, py + 1, palette(g));
        img.put(px + 1, py + 1, palette(g));
    }
    for (g, c) in centroids.iter().enumerate() {
        let (px, py) = frame.to_px(c[0], c[1]);
        img.line((px - 6, py), (px + 6, py), [0, 0, 0]);
        img.line((px, py - 6), (px, py + 6), [0, 0, 0]);
        img.line((px - 5, py), (px + 5, py), palette(g));
        img.line((px, py - 5), (px, py + 5), palette(g));
    }
    img
}
