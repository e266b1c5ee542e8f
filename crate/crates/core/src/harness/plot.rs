//! CSV curves and plain raster line plots for a bundle of runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::blob;
use crate::error::{Error, Result};
use crate::harness::train::RunReport;

const WIDTH: u32 = 640;
const HEIGHT: u32 = 400;
const MARGIN: u32 = 40;
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

/// Runs found under `bundle/runs/*/report.toml`, sorted by directory name.
pub fn collect_runs(bundle: &Path) -> Result<Vec<(String, RunReport)>> {
    let runs = bundle.join("runs");
    if !runs.is_dir() {
        return Ok(Vec::new());
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&runs)
        .map_err(|e| Error::io(&runs, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("report.toml").exists())
        .collect();
    dirs.sort();
    dirs.into_iter()
        .map(|d| {
            let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, RunReport::load(&d)?))
        })
        .collect()
}

fn curves_csv(runs: &[(String, RunReport)], column: &str, value: impl Fn(&crate::harness::EpochRow) -> String) -> String {
    let mut s = format!("run,epoch,{column}\n");
    for (name, r) in runs {
        for row in &r.rows {
            let _ = writeln!(s, "{name},{},{}", row.epoch, value(row));
        }
    }
    s
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
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

/// One polyline per series on shared axes; y spans `[y_min, y_max]`.
pub fn render_plot(series: &[Vec<(f64, f64)>], y_min: f64, y_max: f64) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let axis = Rgb([0, 0, 0]);
    let (left, bottom, right, top) = (MARGIN as i64, (HEIGHT - MARGIN) as i64, (WIDTH - MARGIN / 2) as i64, (MARGIN / 2) as i64);
    draw_line(&mut img, (left, bottom), (right, bottom), axis);
    draw_line(&mut img, (left, bottom), (left, top), axis);
    let x_max = series.iter().flatten().map(|p| p.0).fold(1.0, f64::max);
    let span = if y_max > y_min { y_max - y_min } else { 1.0 };
    let to_px = |(x, y): (f64, f64)| {
        let px = left as f64 + x / x_max * (right - left) as f64;
        let py = bottom as f64 - (y - y_min) / span * (bottom - top) as f64;
        (px.round() as i64, py.round() as i64)
    };
    for (i, s) in series.iter().enumerate() {
        let color = Rgb(PALETTE[i % PALETTE.len()]);
        for w in s.windows(2) {
            draw_line(&mut img, to_px(w[0]), to_px(w[1]), color);
        }
        if let [only] = s.as_slice() {
            let (x, y) = to_px(*only);
            draw_line(&mut img, (x - 2, y), (x + 2, y), color);
        }
    }
    img
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png encoding: {e}")))?;
    blob::write_atomic(path, &bytes)
}

/// Writes accuracy and difficulty curves for every run of the bundle into
/// `bundle/plots`. Returns the files written; none for a bundle without runs.
pub fn emit_plots(bundle: &Path) -> Result<Vec<PathBuf>> {
    let runs = collect_runs(bundle)?;
    if runs.is_empty() {
        return Ok(Vec::new());
    }
    let dir = bundle.join("plots");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();

    let acc_csv = dir.join("accuracy.csv");
    blob::write_atomic(&acc_csv, curves_csv(&runs, "test_acc", |r| format!("{:.6}", r.test_acc)).as_bytes())?;
    written.push(acc_csv);
    let diff_csv = dir.join("difficulty.csv");
    blob::write_atomic(&diff_csv, curves_csv(&runs, "difficulty_t", |r| r.difficulty_t.to_string()).as_bytes())?;
    written.push(diff_csv);

    let acc: Vec<Vec<(f64, f64)>> =
        runs.iter().map(|(_, r)| r.rows.iter().map(|x| (x.epoch as f64, x.test_acc)).collect()).collect();
    let png = dir.join("accuracy.png");
    save_png(&render_plot(&acc, 0.0, 1.0), &png)?;
    written.push(png);

    let diff: Vec<Vec<(f64, f64)>> = runs
        .iter()
        .map(|(_, r)| r.rows.iter().map(|x| (x.epoch as f64, x.difficulty_t as f64)).collect())
        .collect();
    let t_max = diff.iter().flatten().map(|p| p.1).fold(1.0, f64::max);
    let png = dir.join("difficulty.png");
    save_png(&render_plot(&diff, 0.0, t_max), &png)?;
    written.push(png);
    Ok(written)
}
