//! Minimal box-plot rendering for report panels. Plots carry no text: the
//! file name identifies the panel and series order follows the panel list.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use super::report::MetricReport;
use super::risk::median;
use crate::error::Result;

const WIDTH: u32 = 480;
const HEIGHT: u32 = 320;
const MARGIN: u32 = 24;
const PALETTE: [[u8; 3]; 4] = [[66, 120, 200], [220, 110, 50], [80, 170, 90], [150, 90, 180]];

/// `(file stem, [(series label, field accessor)])` for every emitted panel.
type Accessor = fn(&super::report::ImageMetrics) -> Option<f64>;

fn panels() -> Vec<(&'static str, Vec<(&'static str, Accessor)>)> {
    vec![
        ("figure4_bd", vec![("source", |r| r.bd_source), ("translated", |r| r.bd)]),
        ("figure4_hc", vec![("source", |r| r.hc_source), ("translated", |r| r.hc)]),
        (
            "figure4_ssim_roi",
            vec![
                ("whole", |r| Some(r.ssim_whole)),
                ("lumen", |r| r.ssim_lumen),
                ("plaque_im", |r| r.ssim_plaque_im),
                ("adventitia", |r| r.ssim_adventitia),
            ],
        ),
        ("figure4_gsm", vec![("input", |r| r.gsm_in), ("output", |r| r.gsm_out)]),
        (
            "figure4_contrast",
            vec![("input", |r| r.contrast_in_db), ("output", |r| r.contrast_out_db)],
        ),
    ]
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn fill(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, color: [u8; 3]) {
    for y in y0.min(y1)..=y0.max(y1).min(HEIGHT - 1) {
        for x in x0.min(x1)..=x0.max(x1).min(WIDTH - 1) {
            img.put_pixel(x, y, Rgb(color));
        }
    }
}

/// Draws one box (quartiles), median bar and min-max whiskers per series.
pub fn box_plot(series: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let all: Vec<f64> = series.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = if all.is_empty() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let plot_h = (HEIGHT - 2 * MARGIN) as f64;
    let y_of = |v: f64| MARGIN + ((hi - v) / (hi - lo) * plot_h).round() as u32;

    for k in 0..=4 {
        let y = MARGIN + (plot_h * k as f64 / 4.0) as u32;
        fill(&mut img, MARGIN, y, WIDTH - MARGIN, y, [225, 225, 225]);
    }
    fill(&mut img, MARGIN, MARGIN, MARGIN, HEIGHT - MARGIN, [0, 0, 0]);
    fill(&mut img, MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, [0, 0, 0]);

    let slot = (WIDTH - 2 * MARGIN) / series.len().max(1) as u32;
    for (i, values) in series.iter().enumerate() {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            continue;
        }
        let med = median(&mut v).expect("non-empty");
        let color = PALETTE[i % PALETTE.len()];
        let cx = MARGIN + slot * i as u32 + slot / 2;
        let half = slot / 4;
        fill(&mut img, cx, y_of(v[v.len() - 1]), cx, y_of(v[0]), [60, 60, 60]);
        fill(&mut img, cx - half, y_of(quantile(&v, 0.75)), cx + half, y_of(quantile(&v, 0.25)), color);
        fill(&mut img, cx - half, y_of(med), cx + half, y_of(med), [0, 0, 0]);
    }
    img.save(path)?;
    Ok(())
}

/// Writes every panel of `report` into `dir` and returns the file paths.
pub fn write_figures(report: &MetricReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (stem, accessors) in panels() {
        let series: Vec<Vec<f64>> = accessors
            .iter()
            .map(|(_, get)| report.per_image.iter().filter_map(get).collect())
            .collect();
        let path = dir.join(format!("{stem}.png"));
        box_plot(&series, &path)?;
        written.push(path);
    }
    Ok(written)
}
