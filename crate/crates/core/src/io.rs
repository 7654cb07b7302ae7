//! Image, depth, label and JSON file formats.
//!
//! Images load from PNG (8 or 16 bit) and binary PNM, normalized to `[0, 1]`.
//! Depth maps use PFM (little-endian 32-bit float, rows stored bottom to top);
//! non-positive or non-finite values read back as invalid pixels. Label maps
//! are 16-bit grayscale PNGs.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Image};
use crate::keypoints::{KeypointSet, Origin};
use crate::superpixels::LabelMap;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Loads a grayscale or color image; alpha is dropped.
pub fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(image_err(path))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = !img.color().has_color();
    let data: Vec<f64> = if gray {
        img.into_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
    } else {
        img.into_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
    };
    Image::new(w, h, if gray { 1 } else { 3 }, data).map_err(|e| format_err(path, e.to_string()))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Saves an image as an 8-bit PNG.
pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    let dynimg = if img.channels() == 1 {
        DynamicImage::ImageLuma8(ImageBuffer::from_raw(w, h, bytes).expect("buffer size matches"))
    } else {
        DynamicImage::ImageRgb8(ImageBuffer::from_raw(w, h, bytes).expect("buffer size matches"))
    };
    dynimg.save(path).map_err(image_err(path))
}

/// Saves an image as a 16-bit PNG.
pub fn save_png16(img: &Image, path: &Path) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let words: Vec<u16> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let dynimg = if img.channels() == 1 {
        DynamicImage::ImageLuma16(ImageBuffer::from_raw(w, h, words).expect("buffer size matches"))
    } else {
        DynamicImage::ImageRgb16(ImageBuffer::from_raw(w, h, words).expect("buffer size matches"))
    };
    dynimg.save(path).map_err(image_err(path))
}

/// Writes a single-channel little-endian PFM; invalid pixels are stored as 0.
pub fn write_pfm(depth: &DepthMap, path: &Path) -> Result<()> {
    let (w, h) = (depth.width(), depth.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h);
    for y in (0..h).rev() {
        for x in 0..w {
            let i = y * w + x;
            let v = if depth.is_valid_index(i) { depth.data()[i] as f32 } else { 0.0 };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Reads a PFM depth map. Color PFMs use their first channel.
pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    // Three whitespace-separated header tokens, then one whitespace byte.
    let mut tokens = Vec::with_capacity(4);
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "truncated PFM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match tokens[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format_err(path, format!("not a PFM file (magic {other:?})"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format_err(path, format!("bad PFM size {s:?}")));
    let (w, h) = (parse(&tokens[1])?, parse(&tokens[2])?);
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| format_err(path, format!("bad PFM scale {:?}", tokens[3])))?;
    let little = scale < 0.0;
    let need = 4 * w * h * channels;
    if w == 0 || h == 0 || bytes.len() < pos + need {
        return Err(format_err(path, "PFM data is truncated"));
    }
    let mut data = vec![0.0; w * h];
    let mut mask = vec![true; w * h];
    for row in 0..h {
        let y = h - 1 - row;
        for x in 0..w {
            let o = pos + 4 * channels * (row * w + x);
            let raw: [u8; 4] = bytes[o..o + 4].try_into().expect("four bytes");
            let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) } as f64;
            let i = y * w + x;
            if v.is_finite() && v > 0.0 {
                data[i] = v;
            } else {
                mask[i] = false;
            }
        }
    }
    if mask.iter().all(|&m| m) {
        DepthMap::new(w, h, data)
    } else {
        DepthMap::with_mask(w, h, data, mask)
    }
}

pub fn save_labels_png(labels: &LabelMap, path: &Path) -> Result<()> {
    if labels.segment_count() > u16::MAX as usize + 1 {
        return Err(format_err(path, "too many segments for a 16-bit label image"));
    }
    let raw: Vec<u16> = labels.labels.iter().map(|&l| l as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(labels.width as u32, labels.height as u32, raw).expect("buffer size matches");
    buf.save(path).map_err(image_err(path))
}

/// Reads a grayscale label image; ids are renumbered by first appearance.
pub fn load_labels_png(path: &Path) -> Result<LabelMap> {
    let img = image::open(path).map_err(image_err(path))?;
    if img.color().has_color() {
        return Err(format_err(path, "label image must be grayscale"));
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw: Vec<u32> = img.into_luma16().into_raw().into_iter().map(u32::from).collect();
    LabelMap::from_raw(w, h, &raw)
}

/// Polynomial fit of the turbo colormap, `t` in `[0, 1]`.
fn turbo(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    let poly = |c: [f64; 6]| c.iter().rev().fold(0.0, |acc, &k| acc * t + k).clamp(0.0, 1.0);
    [
        poly([0.13572138, 4.61539260, -42.66032258, 132.13108234, -152.94239396, 59.28637943]),
        poly([0.09140261, 2.19418839, 4.84296658, -14.18503333, 4.27729857, 2.82956604]),
        poly([0.10667330, 12.64194608, -60.58204836, 110.36276771, -89.90310912, 27.34824973]),
    ]
}

/// Color preview of a depth map, log-scaled over `[d_min, d_max]` from red
/// (near) to blue (far); invalid pixels are black.
pub fn depth_preview(depth: &DepthMap, d_min: f64, d_max: f64) -> Image {
    let span = (d_max / d_min).ln();
    let data = (0..depth.data().len())
        .flat_map(|i| {
            if depth.is_valid_index(i) {
                turbo(1.0 - (depth.data()[i] / d_min).ln() / span)
            } else {
                [0.0; 3]
            }
        })
        .collect();
    Image::new(depth.width(), depth.height(), 3, data).expect("colormap stays in [0, 1]")
}

fn as_rgb(img: &Image) -> Vec<f64> {
    if img.channels() == 3 {
        img.data().to_vec()
    } else {
        img.data().iter().flat_map(|&v| [v, v, v]).collect()
    }
}

/// Image blended half-and-half with a seeded random color per segment.
pub fn label_overlay(img: &Image, labels: &LabelMap, seed: u64) -> Result<Image> {
    if (img.width(), img.height()) != (labels.width, labels.height) {
        return Err(Error::precondition("label map and image differ in size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let colors: Vec<[f64; 3]> = (0..labels.segment_count())
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect();
    let mut data = as_rgb(img);
    for (i, &l) in labels.labels.iter().enumerate() {
        for c in 0..3 {
            data[3 * i + c] = 0.5 * data[3 * i + c] + 0.5 * colors[l as usize][c];
        }
    }
    Image::new(img.width(), img.height(), 3, data)
}

/// Marks gradient keypoints in red and random fill in green.
pub fn keypoint_overlay(img: &Image, kps: &KeypointSet) -> Result<Image> {
    let mut data = as_rgb(img);
    let w = img.width();
    for k in &kps.points {
        if k.x >= w || k.y >= img.height() {
            return Err(Error::precondition("keypoint outside the image"));
        }
        let color = match k.origin {
            Origin::Gradient => [1.0, 0.0, 0.0],
            Origin::RandomFill => [0.0, 1.0, 0.0],
        };
        data[3 * (k.y * w + k.x)..3 * (k.y * w + k.x) + 3].copy_from_slice(&color);
    }
    Image::new(w, img.height(), 3, data)
}
