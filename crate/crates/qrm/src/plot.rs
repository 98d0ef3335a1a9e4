//! Raster plots and the gnuplot-style data files behind them.

use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::CliError;

const MARGIN: u32 = 40;
const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const MARKER: Rgb<u8> = Rgb([170, 170, 170]);
const PALETTE: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([214, 39, 40]),
    Rgb([44, 160, 44]),
    Rgb([148, 103, 189]),
    Rgb([255, 127, 14]),
    Rgb([23, 190, 207]),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinePlot {
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Vertical guide lines at these `x`.
    pub markers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub x_label: String,
    pub y_label: String,
    pub value_label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[iy][ix]`.
    pub values: Vec<Vec<f64>>,
    /// Symmetric range with zero at the colormap center.
    pub diverging: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Plot {
    Line(LinePlot),
    Heat(Heatmap),
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-300 {
        Some((lo - 0.5, hi + 0.5))
    } else {
        Some((lo, hi))
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
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

fn frame(img: &mut RgbImage) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let m = MARGIN as i64;
    line(img, (m, m), (w - m, m), AXIS);
    line(img, (m, h - m), (w - m, h - m), AXIS);
    line(img, (m, m), (m, h - m), AXIS);
    line(img, (w - m, m), (w - m, h - m), AXIS);
}

impl LinePlot {
    pub fn render(&self, width: u32, height: u32) -> Result<RgbImage, CliError> {
        let (x0, x1) = bounds(self.series.iter().flat_map(|s| s.xs.iter().copied()))
            .ok_or_else(|| CliError::Output("line plot has no data".into()))?;
        let (y0, y1) = bounds(self.series.iter().flat_map(|s| s.ys.iter().copied())).unwrap();
        let pad = 0.05 * (y1 - y0);
        let (y0, y1) = (y0 - pad, y1 + pad);
        let mut img = RgbImage::from_pixel(width, height, BG);
        let (pw, ph) = ((width - 2 * MARGIN) as f64, (height - 2 * MARGIN) as f64);
        let px = |x: f64| (MARGIN as f64 + (x - x0) / (x1 - x0) * pw).round() as i64;
        let py = |y: f64| (MARGIN as f64 + (y1 - y) / (y1 - y0) * ph).round() as i64;
        for &m in &self.markers {
            if m >= x0 && m <= x1 {
                let x = px(m);
                for y in (MARGIN as i64..(height - MARGIN) as i64).step_by(6) {
                    line(&mut img, (x, y), (x, y + 2), MARKER);
                }
            }
        }
        frame(&mut img);
        for (k, s) in self.series.iter().enumerate() {
            let c = PALETTE[k % PALETTE.len()];
            let pts: Vec<(i64, i64)> =
                s.xs.iter().zip(&s.ys).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(&x, &y)| (px(x), py(y))).collect();
            for w in pts.windows(2) {
                line(&mut img, w[0], w[1], c);
            }
            for &(x, y) in &pts {
                for d in -1..=1 {
                    put(&mut img, x + d, y, c);
                    put(&mut img, x, y + d, c);
                }
            }
        }
        Ok(img)
    }

    /// Columns `x y_1 y_2 ...`; series are listed in the header comment.
    pub fn dat(&self) -> String {
        let mut s = format!("# x: {}\n# y: {}\n", self.x_label, self.y_label);
        for (k, series) in self.series.iter().enumerate() {
            let _ = writeln!(s, "# series {}: {}", k + 1, series.label);
        }
        if !self.markers.is_empty() {
            let m: Vec<String> = self.markers.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(s, "# markers: {}", m.join(" "));
        }
        for (k, series) in self.series.iter().enumerate() {
            let _ = writeln!(s, "\n# index {k}");
            for (x, y) in series.xs.iter().zip(&series.ys) {
                let _ = writeln!(s, "{x} {y}");
            }
        }
        s
    }
}

/// Blue-white-red for `t ∈ [−1, 1]`, white at 0.
pub fn diverging(t: f64) -> Rgb<u8> {
    let t = t.clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (1.0, 1.0 - 0.85 * t, 1.0 - 0.85 * t)
    } else {
        (1.0 + 0.85 * t, 1.0 + 0.85 * t, 1.0)
    };
    Rgb([(255.0 * r).round() as u8, (255.0 * g).round() as u8, (255.0 * b).round() as u8])
}

/// Dark blue through green to yellow for `t ∈ [0, 1]`.
pub fn sequential(t: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let k = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - k as f64;
    let mix = |i: usize| (STOPS[k][i] + f * (STOPS[k + 1][i] - STOPS[k][i])).round() as u8;
    Rgb([mix(0), mix(1), mix(2)])
}

impl Heatmap {
    pub fn color_range(&self) -> Option<(f64, f64)> {
        let (lo, hi) = bounds(self.values.iter().flatten().copied())?;
        if self.diverging {
            let m = lo.abs().max(hi.abs()).max(1e-300);
            Some((-m, m))
        } else {
            Some((lo, hi))
        }
    }

    pub fn render(&self, width: u32, height: u32) -> Result<RgbImage, CliError> {
        let ny = self.values.len();
        let nx = self.values.first().map_or(0, Vec::len);
        if nx == 0 || ny == 0 {
            return Err(CliError::Output("heatmap has no data".into()));
        }
        let (lo, hi) = self.color_range().ok_or_else(|| CliError::Output("heatmap has no finite values".into()))?;
        let mut img = RgbImage::from_pixel(width, height, BG);
        let (pw, ph) = (width - 2 * MARGIN, height - 2 * MARGIN);
        for py in 0..ph {
            // row 0 of the image is the largest y
            let iy = ((ph - 1 - py) as usize * ny) / ph as usize;
            for px in 0..pw {
                let ix = (px as usize * nx) / pw as usize;
                let v = self.values[iy][ix];
                let c = if !v.is_finite() {
                    Rgb([128, 128, 128])
                } else if self.diverging {
                    diverging(v / hi)
                } else {
                    sequential((v - lo) / (hi - lo))
                };
                img.put_pixel(MARGIN + px, MARGIN + py, c);
            }
        }
        frame(&mut img);
        Ok(img)
    }

    /// gnuplot `splot` blocks: `x y value`, blank line between `x` rows.
    pub fn dat(&self) -> String {
        let mut s = format!("# x: {}\n# y: {}\n# value: {}\n", self.x_label, self.y_label, self.value_label);
        for (ix, x) in self.xs.iter().enumerate() {
            for (iy, y) in self.ys.iter().enumerate() {
                let _ = writeln!(s, "{x} {y} {}", self.values[iy][ix]);
            }
            s.push('\n');
        }
        s
    }
}

impl Plot {
    pub fn render(&self) -> Result<RgbImage, CliError> {
        match self {
            Plot::Line(p) => p.render(800, 500),
            Plot::Heat(h) => h.render(640, 640),
        }
    }

    pub fn dat(&self) -> String {
        match self {
            Plot::Line(p) => p.dat(),
            Plot::Heat(h) => h.dat(),
        }
    }

    /// Writes `<stem>.png` and `<stem>.dat` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), CliError> {
        let img = self.render()?;
        let png = dir.join(format!("{stem}.png"));
        img.save(&png).map_err(|e| CliError::Output(format!("{}: {e}", png.display())))?;
        let dat = dir.join(format!("{stem}.dat"));
        std::fs::write(&dat, self.dat()).map_err(|e| CliError::io(dat, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diverging_map_is_centered() {
        assert_eq!(diverging(0.0), Rgb([255, 255, 255]));
        let (r, b) = (diverging(1.0), diverging(-1.0));
        assert_eq!((r[0], r[2]), (b[2], b[0]));
    }

    #[test]
    fn diverging_heatmap_range_is_symmetric() {
        let h = Heatmap {
            x_label: "x".into(),
            y_label: "p".into(),
            value_label: "W".into(),
            xs: vec![0.0, 1.0],
            ys: vec![0.0, 1.0],
            values: vec![vec![-0.1, 0.3], vec![0.0, 0.2]],
            diverging: true,
        };
        assert_eq!(h.color_range(), Some((-0.3, 0.3)));
        let img = h.render(100, 100).unwrap();
        assert_eq!(img.dimensions(), (100, 100));
        assert_eq!(h.dat().lines().filter(|l| !l.starts_with('#') && !l.is_empty()).count(), 4);
    }

    #[test]
    fn empty_data_is_an_error() {
        let p = LinePlot { x_label: "x".into(), y_label: "y".into(), series: vec![], markers: vec![] };
        assert!(p.render(100, 100).is_err());
        let h = Heatmap {
            x_label: "x".into(),
            y_label: "y".into(),
            value_label: "v".into(),
            xs: vec![],
            ys: vec![],
            values: vec![],
            diverging: false,
        };
        assert!(h.render(100, 100).is_err());
    }

    #[test]
    fn line_plot_draws_series() {
        let p = LinePlot {
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series { label: "a".into(), xs: vec![0.0, 1.0, 2.0], ys: vec![0.0, 1.0, 0.0] }],
            markers: vec![1.0],
        };
        let img = p.render(200, 120).unwrap();
        assert!(img.pixels().any(|px| *px == PALETTE[0]));
        assert!(p.dat().contains("# markers: 1"));
    }
}
