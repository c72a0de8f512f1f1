//! Score plot: the score trace in black, the threshold in red, and labelled
//! truth regions shaded grey behind them.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::CliError;

const WIDTH: u32 = 1200;
const HEIGHT: u32 = 320;
const MARGIN: u32 = 10;

pub fn render(scores: &[f64], threshold: f64, truth: Option<&[u8]>, path: &Path) -> Result<(), CliError> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    if scores.is_empty() {
        return save(&img, path);
    }
    let plot_w = WIDTH - 2 * MARGIN;
    let plot_h = HEIGHT - 2 * MARGIN;
    let top = scores.iter().copied().fold(threshold, f64::max).max(f64::MIN_POSITIVE);
    let column = |t: usize| MARGIN + ((t as u64 * plot_w as u64) / scores.len() as u64) as u32;
    let row = |v: f64| {
        let frac = (v / top).clamp(0.0, 1.0);
        MARGIN + plot_h - 1 - (frac * (plot_h - 1) as f64).round() as u32
    };

    if let Some(truth) = truth {
        for (t, &l) in truth.iter().enumerate() {
            if l == 1 {
                let x = column(t);
                for y in MARGIN..MARGIN + plot_h {
                    img.put_pixel(x, y, Rgb([215, 215, 215]));
                }
            }
        }
    }

    // Per pixel column, draw the vertical extent of the scores it covers.
    let mut extent: Vec<Option<(f64, f64)>> = vec![None; plot_w as usize];
    for (t, &s) in scores.iter().enumerate() {
        let slot = &mut extent[(column(t) - MARGIN) as usize];
        *slot = Some(slot.map_or((s, s), |(lo, hi)| (lo.min(s), hi.max(s))));
    }
    let mut prev: Option<u32> = None;
    for (i, e) in extent.iter().enumerate() {
        let Some((lo, hi)) = *e else { continue };
        let (mut y0, mut y1) = (row(hi), row(lo));
        if let Some(p) = prev {
            y0 = y0.min(p);
            y1 = y1.max(p);
        }
        for y in y0..=y1 {
            img.put_pixel(MARGIN + i as u32, y, Rgb([0, 0, 0]));
        }
        prev = Some(row(lo));
    }

    let ty = row(threshold);
    for x in MARGIN..MARGIN + plot_w {
        img.put_pixel(x, ty, Rgb([220, 30, 30]));
    }
    save(&img, path)
}

fn save(img: &RgbImage, path: &Path) -> Result<(), CliError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}
