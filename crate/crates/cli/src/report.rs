//! Markdown tables and spectrogram images.

use anyhow::{ensure, Result};
use image::{GrayImage, Luma};
use lyricsep::dsp::BINS;

/// Dynamic range of the images, in dB below the loudest bin.
pub const RANGE_DB: f64 = 80.0;

/// Columns of blank pixels between panels.
const GAP: u32 = 4;

/// Renders a headed CSV as a Markdown table.
pub fn markdown_table(csv_text: &str) -> Result<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let head: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut s = format!("| {} |\n|{}\n", head.join(" | "), " --- |".repeat(head.len()));
    for row in r.records() {
        let row = row?;
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c.parse::<f64>() {
                Ok(v) if c.contains('.') => format!("{v:.3}"),
                _ => c.to_string(),
            })
            .collect();
        s += &format!("| {} |\n", cells.join(" | "));
    }
    Ok(s)
}

/// Side-by-side grayscale log-magnitude panels sharing one dB scale, low
/// frequencies at the bottom. Each panel is bin-major `[BINS x frames]`.
pub fn triptych(panels: &[&[f64]], frames: usize) -> Result<GrayImage> {
    ensure!(frames > 0, "no frames to draw");
    for p in panels {
        ensure!(p.len() == BINS * frames, "panel has {} values, expected {}", p.len(), BINS * frames);
    }
    let peak = panels.iter().flat_map(|p| p.iter()).fold(0.0f64, |m, &v| m.max(v));
    let floor = if peak > 0.0 { 20.0 * peak.log10() - RANGE_DB } else { 0.0 };
    let n = panels.len() as u32;
    let width = n * frames as u32 + (n.saturating_sub(1)) * GAP;
    let mut img = GrayImage::from_pixel(width, BINS as u32, Luma([255]));
    for (k, p) in panels.iter().enumerate() {
        let x0 = k as u32 * (frames as u32 + GAP);
        for f in 0..BINS {
            for t in 0..frames {
                let v = p[f * frames + t];
                let level = if v > 0.0 && peak > 0.0 {
                    ((20.0 * v.log10() - floor) / RANGE_DB).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                img.put_pixel(x0 + t as u32, (BINS - 1 - f) as u32, Luma([(255.0 * level).round() as u8]));
            }
        }
    }
    Ok(img)
}
