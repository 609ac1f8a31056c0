//! Asset production. The stub provider renders deterministic PNGs:
//! gradient placeholders for photographs and programmatic charts from
//! declarative specs.

use std::io::Cursor;

use chrono::{Datelike, NaiveDate};
use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AssetKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetRequest {
    pub path: String,
    pub kind: AssetKind,
    pub spec: AssetSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetSpec {
    Photo(PhotoSpec),
    Chart(ChartSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoSpec {
    pub prompt: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartSpec {
    Line(LineChart),
    Calendar(CalendarChart),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineChart {
    pub title: String,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub series: Vec<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<Threshold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tier {
    pub label: String,
    pub color: String,
    pub from_day: u32,
    pub to_day: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalendarChart {
    pub title: String,
    pub year: i32,
    pub month: u32,
    pub tiers: Vec<Tier>,
    #[serde(default)]
    pub booked_days: Vec<u32>,
}

/// Supplies the bytes of one requested asset.
pub trait AssetProvider: Send + Sync {
    fn produce(&self, request: &AssetRequest) -> Result<Vec<u8>, String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StubAssetProvider;

impl AssetProvider for StubAssetProvider {
    fn produce(&self, request: &AssetRequest) -> Result<Vec<u8>, String> {
        if !request.path.ends_with(".png") {
            return Err("the stub provider only renders .png files".into());
        }
        let img = match &request.spec {
            AssetSpec::Photo(p) => render_photo(p)?,
            AssetSpec::Chart(ChartSpec::Line(c)) => render_line(c)?,
            AssetSpec::Chart(ChartSpec::Calendar(c)) => render_calendar(c)?,
        };
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png).map_err(|e| e.to_string())?;
        Ok(out.into_inner())
    }
}

fn parse_color(hex: &str) -> Result<Rgb<u8>, String> {
    let h = hex.trim_start_matches('#');
    if h.len() != 6 {
        return Err(format!("bad color `{hex}`"));
    }
    let c = |i: usize| u8::from_str_radix(&h[i..i + 2], 16).map_err(|_| format!("bad color `{hex}`"));
    Ok(Rgb([c(0)?, c(2)?, c(4)?]))
}

fn mix(a: Rgb<u8>, b: Rgb<u8>, t: f64) -> Rgb<u8> {
    let f = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    Rgb([f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2])])
}

fn check_size(w: u32, h: u32) -> Result<(), String> {
    if w == 0 || h == 0 || w > 4096 || h > 4096 {
        return Err(format!("unsupported image size {w}x{h}"));
    }
    Ok(())
}

fn render_photo(spec: &PhotoSpec) -> Result<RgbImage, String> {
    check_size(spec.width, spec.height)?;
    let d = Sha256::digest(spec.prompt.as_bytes());
    let top = Rgb([d[0] / 2 + 96, d[1] / 2 + 96, d[2] / 2 + 96]);
    let bottom = Rgb([d[3] / 3, d[4] / 3, d[5] / 3]);
    let horizon = spec.height * (40 + d[6] as u32 % 30) / 100;
    let mut img = RgbImage::new(spec.width, spec.height);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let t = y as f64 / spec.height as f64;
        let mut c = mix(top, bottom, t);
        if y > horizon {
            c = mix(c, Rgb([d[7] / 2, d[8] / 2 + 64, d[9] / 3]), 0.35);
        }
        if (x + y) % 97 == 0 {
            c = mix(c, Rgb([255, 255, 255]), 0.2);
        }
        *px = c;
    }
    Ok(img)
}

/// 3x5 bitmap digits.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn draw_number(img: &mut RgbImage, mut x: i64, y: i64, n: u32, scale: i64, c: Rgb<u8>) {
    for ch in n.to_string().bytes() {
        let glyph = DIGITS[(ch - b'0') as usize];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    for dy in 0..scale {
                        for dx in 0..scale {
                            put(img, x + col * scale + dx, y + row as i64 * scale + dy, c);
                        }
                    }
                }
            }
        }
        x += 4 * scale;
    }
}

fn fill_rect(img: &mut RgbImage, x: i64, y: i64, w: i64, h: i64, c: Rgb<u8>) {
    for yy in y..y + h {
        for xx in x..x + w {
            put(img, xx, yy, c);
        }
    }
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>, thick: i64) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        fill_rect(img, x - thick / 2, y - thick / 2, thick, thick, c);
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

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const INK: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([220, 220, 220]);

fn render_line(spec: &LineChart) -> Result<RgbImage, String> {
    if spec.x_max <= spec.x_min || spec.y_max <= spec.y_min {
        return Err("chart axis range is empty".into());
    }
    let (w, h) = (560i64, 340i64);
    let (left, right, top, bottom) = (40i64, 20i64, 20i64, 70i64);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let mut img = RgbImage::from_pixel(w as u32, h as u32, WHITE);
    let sx = |x: f64| left + ((x - spec.x_min) / (spec.x_max - spec.x_min) * pw as f64).round() as i64;
    let sy = |y: f64| top + ph - ((y - spec.y_min) / (spec.y_max - spec.y_min) * ph as f64).round() as i64;
    let mut tick = spec.x_min.ceil() as u32;
    while tick as f64 <= spec.x_max {
        let x = sx(tick as f64);
        draw_line(&mut img, (x, top), (x, top + ph), GRID, 1);
        if tick == 1 || tick % 5 == 0 {
            draw_number(&mut img, x - 3, top + ph + 6, tick, 2, INK);
        }
        tick += 1;
    }
    if let Some(th) = &spec.threshold {
        let y = sy(th.value);
        let mut x = left;
        while x < left + pw {
            draw_line(&mut img, (x, y), ((x + 6).min(left + pw), y), Rgb([150, 150, 150]), 1);
            x += 12;
        }
    }
    draw_line(&mut img, (left, top), (left, top + ph), INK, 2);
    draw_line(&mut img, (left, top + ph), (left + pw, top + ph), INK, 2);
    for (i, s) in spec.series.iter().enumerate() {
        let c = parse_color(&s.color)?;
        for pair in s.points.windows(2) {
            draw_line(&mut img, (sx(pair[0].0), sy(pair[0].1)), (sx(pair[1].0), sy(pair[1].1)), c, 3);
        }
        let lx = left + i as i64 * (pw / spec.series.len().max(1) as i64);
        fill_rect(&mut img, lx, h - 28, 24, 12, c);
    }
    Ok(img)
}

fn render_calendar(spec: &CalendarChart) -> Result<RgbImage, String> {
    let first = NaiveDate::from_ymd_opt(spec.year, spec.month, 1)
        .ok_or_else(|| format!("invalid month {}-{}", spec.year, spec.month))?;
    let next = if spec.month == 12 {
        NaiveDate::from_ymd_opt(spec.year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(spec.year, spec.month + 1, 1)
    }
    .expect("valid date");
    let days = (next - first).num_days() as u32;
    let offset = first.weekday().num_days_from_sunday();
    let rows = (offset + days).div_ceil(7) as i64;
    let cell = 60i64;
    let margin = 20i64;
    let legend = 30 * spec.tiers.len() as i64 + 20;
    let (w, h) = (7 * cell + 2 * margin, rows * cell + 2 * margin + legend);
    let mut img = RgbImage::from_pixel(w as u32, h as u32, WHITE);
    let tier_color = |day: u32| -> Result<Option<Rgb<u8>>, String> {
        for t in &spec.tiers {
            if (t.from_day..=t.to_day).contains(&day) {
                return Ok(Some(parse_color(&t.color)?));
            }
        }
        Ok(None)
    };
    for day in 1..=days {
        let pos = (offset + day - 1) as i64;
        let (x, y) = (margin + (pos % 7) * cell, margin + (pos / 7) * cell);
        let fill = tier_color(day)?.unwrap_or(GRID);
        fill_rect(&mut img, x + 1, y + 1, cell - 2, cell - 2, fill);
        draw_number(&mut img, x + 6, y + 6, day, 3, INK);
        if spec.booked_days.contains(&day) {
            draw_line(&mut img, (x + 8, y + 8), (x + cell - 8, y + cell - 8), INK, 3);
            draw_line(&mut img, (x + cell - 8, y + 8), (x + 8, y + cell - 8), INK, 3);
        }
    }
    for (i, t) in spec.tiers.iter().enumerate() {
        let y = margin + rows * cell + 20 + 30 * i as i64;
        fill_rect(&mut img, margin, y, 40, 20, parse_color(&t.color)?);
        draw_number(&mut img, margin + 50, y + 3, t.from_day, 2, INK);
        draw_line(&mut img, (margin + 50 + 4 * 2 * 2 + 4, y + 8), (margin + 50 + 4 * 2 * 2 + 12, y + 8), INK, 2);
        draw_number(&mut img, margin + 50 + 4 * 2 * 2 + 16, y + 3, t.to_day, 2, INK);
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn photo(prompt: &str) -> AssetRequest {
        AssetRequest {
            path: "assets/p.png".into(),
            kind: AssetKind::Image,
            spec: AssetSpec::Photo(PhotoSpec {
                prompt: prompt.into(),
                width: 64,
                height: 48,
            }),
        }
    }

    #[test]
    fn rendering_is_deterministic_png() {
        let a = StubAssetProvider.produce(&photo("rose")).unwrap();
        let b = StubAssetProvider.produce(&photo("rose")).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a[1..4], b"PNG");
        assert_ne!(a, StubAssetProvider.produce(&photo("lily")).unwrap());
    }

    #[test]
    fn calendar_renders() {
        let req = AssetRequest {
            path: "assets/c.png".into(),
            kind: AssetKind::Chart,
            spec: AssetSpec::Chart(ChartSpec::Calendar(CalendarChart {
                title: "May".into(),
                year: 2026,
                month: 5,
                tiers: vec![Tier {
                    label: "x".into(),
                    color: "#ff0000".into(),
                    from_day: 1,
                    to_day: 31,
                }],
                booked_days: vec![3],
            })),
        };
        let png = StubAssetProvider.produce(&req).unwrap();
        let img = image::load_from_memory(&png).unwrap();
        // May 2026 starts on a Friday: 5 blank cells, 31 days, 6 rows.
        assert_eq!(img.height(), 6 * 60 + 40 + 50);
    }

    #[test]
    fn bad_specs_fail() {
        let mut req = photo("x");
        req.path = "assets/p.jpg".into();
        assert!(StubAssetProvider.produce(&req).is_err());
        let mut req = photo("x");
        req.spec = AssetSpec::Photo(PhotoSpec {
            prompt: "x".into(),
            width: 0,
            height: 10,
        });
        assert!(StubAssetProvider.produce(&req).is_err());
    }
}
