use std::path::Path;

use image::{Rgb, RgbImage};
use physnet_core::trainer::ExperimentReport;
use physnet_core::{Error, Result};

const WIDTH: u32 = 640;
const HEIGHT: u32 = 400;
const MARGIN: u32 = 40;

pub const PALETTE: [[u8; 3]; 4] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [148, 103, 189]];

struct Canvas {
    img: RgbImage,
    x_max: f64,
}

impl Canvas {
    fn new(x_max: f64) -> Self {
        let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
        let axis = Rgb([0, 0, 0]);
        for x in MARGIN..WIDTH - MARGIN / 2 {
            img.put_pixel(x, HEIGHT - MARGIN, axis);
        }
        for y in MARGIN / 2..=HEIGHT - MARGIN {
            img.put_pixel(MARGIN, y, axis);
        }
        let grid = Rgb([225, 225, 225]);
        for k in 1..=4 {
            let y = Self::y_px(k as f64 / 4.0);
            for x in (MARGIN + 1..WIDTH - MARGIN / 2).step_by(3) {
                img.put_pixel(x, y, grid);
            }
        }
        Self { img, x_max: x_max.max(1.0) }
    }

    fn x_px(&self, x: f64) -> f64 {
        MARGIN as f64 + x / self.x_max * (WIDTH - MARGIN - MARGIN / 2) as f64
    }

    fn y_px(iou: f64) -> u32 {
        let h = (HEIGHT - MARGIN - MARGIN / 2) as f64;
        (HEIGHT - MARGIN) - (iou.clamp(0.0, 1.0) * h).round() as u32
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), colour: Rgb<u8>) {
        let (x0, y0) = (self.x_px(a.0), Self::y_px(a.1) as f64);
        let (x1, y1) = (self.x_px(b.0), Self::y_px(b.1) as f64);
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
            for (dx, dy) in [(0, 0), (1, 0), (0, 1)] {
                let (px, py) = (x.round() as i64 + dx, y.round() as i64 + dy);
                if px >= 0 && py >= 0 && (px as u32) < WIDTH && (py as u32) < HEIGHT {
                    self.img.put_pixel(px as u32, py as u32, colour);
                }
            }
        }
    }

    fn vertical_dashes(&mut self, x: f64) {
        let px = self.x_px(x).round() as u32;
        for y in (MARGIN / 2..HEIGHT - MARGIN).filter(|y| (y / 4) % 2 == 0) {
            self.img.put_pixel(px.min(WIDTH - 1), y, Rgb([120, 120, 120]));
        }
    }
}

/// Iteration against validation IOU, one colour per arm (in report order,
/// see [`PALETTE`]), one line per seed. A dashed line marks a phase boundary.
pub fn render_curves(report: &ExperimentReport, path: &Path) -> Result<()> {
    let x_max = report
        .arms
        .iter()
        .flat_map(|a| a.runs.iter().flat_map(|r| r.curve.iter().map(|p| p.iteration)))
        .max()
        .unwrap_or(report.iterations) as f64;
    let mut canvas = Canvas::new(x_max.max(report.iterations as f64));
    if let Some(b) = report.phase_boundary {
        canvas.vertical_dashes(b as f64);
    }
    for (arm, colour) in report.arms.iter().zip(PALETTE.iter().cycle()) {
        for run in &arm.runs {
            let points: Vec<(f64, f64)> = run
                .curve
                .iter()
                .filter(|p| p.validation_iou.is_finite())
                .map(|p| (p.iteration as f64, p.validation_iou))
                .collect();
            for w in points.windows(2) {
                canvas.line(w[0], w[1], Rgb(*colour));
            }
        }
    }
    canvas.img.save(path).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}
