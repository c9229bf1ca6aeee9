//! Linear RGB images and their file formats (PNG out, PFM in/out, HDR in).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::diff::Rgb;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image format error: {0}")]
    Format(String),
    #[error("image contains non-finite pixels")]
    NonFinite,
}

/// Row-major RGB image, row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Rgb>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count mismatch");
        Self { width, height, pixels }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> Rgb {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Rgb) {
        self.pixels[row * self.width + col] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.pixels.iter().all(|p| p.is_finite())
    }

    pub fn map(&self, f: impl Fn(Rgb) -> Rgb) -> Image {
        Image::from_pixels(self.width, self.height, self.pixels.iter().map(|&p| f(p)).collect())
    }

    /// Places `tiles` (all the same size) on a `cols`-wide grid.
    pub fn grid(tiles: &[Image], cols: usize) -> Image {
        assert!(!tiles.is_empty() && cols > 0);
        let (w, h) = (tiles[0].width, tiles[0].height);
        let rows = tiles.len().div_ceil(cols);
        let mut out = Image::new(w * cols, h * rows, Rgb::ZERO);
        for (i, t) in tiles.iter().enumerate() {
            assert_eq!((t.width, t.height), (w, h), "grid tiles differ in size");
            let (r0, c0) = ((i / cols) * h, (i % cols) * w);
            for r in 0..h {
                for c in 0..w {
                    out.set(r0 + r, c0 + c, t.get(r, c));
                }
            }
        }
        out
    }

    /// Box-filtered downsample by an integer factor.
    pub fn downsample(&self, factor: usize) -> Image {
        let factor = factor.max(1);
        let (w, h) = (self.width / factor, self.height / factor);
        Image::from_fn(w.max(1), h.max(1), |r, c| {
            let mut acc = Rgb::ZERO;
            for dr in 0..factor {
                for dc in 0..factor {
                    let rr = (r * factor + dr).min(self.height - 1);
                    let cc = (c * factor + dc).min(self.width - 1);
                    acc = acc + self.get(rr, cc);
                }
            }
            acc * (1.0 / (factor * factor) as f64)
        })
    }
}

/// Writes an 8-bit PNG of values clamped to `[0, 1]` (no tonemapping).
pub fn write_png(path: impl AsRef<Path>, img: &Image) -> Result<(), ImageError> {
    let mut buf = Vec::with_capacity(img.width * img.height * 3);
    for p in &img.pixels {
        for v in p.to_array() {
            buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    image::save_buffer(
        path.as_ref(),
        &buf,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => ImageError::Io(io),
        other => ImageError::Format(other.to_string()),
    })
}

/// Writes a little-endian color PFM (rows stored bottom-up).
pub fn write_pfm(path: impl AsRef<Path>, img: &Image) -> Result<(), ImageError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "PF\n{} {}\n-1.0\n", img.width, img.height)?;
    for r in (0..img.height).rev() {
        for c in 0..img.width {
            for v in img.get(r, c).to_array() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn pfm_token(reader: &mut impl BufRead) -> Result<String, ImageError> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
    }
    String::from_utf8(tok).map_err(|_| ImageError::Format("bad PFM header".into()))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let mut reader = BufReader::new(File::open(path)?);
    let magic = pfm_token(&mut reader)?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(ImageError::Format(format!("not a PFM file (magic {magic:?})"))),
    };
    let parse = |s: String| s.parse::<f64>().map_err(|_| ImageError::Format(format!("bad PFM header field {s:?}")));
    let width = parse(pfm_token(&mut reader)?)? as usize;
    let height = parse(pfm_token(&mut reader)?)? as usize;
    let scale = parse(pfm_token(&mut reader)?)?;
    if width == 0 || height == 0 || scale == 0.0 {
        return Err(ImageError::Format("bad PFM dimensions".into()));
    }
    let little = scale < 0.0;
    let mut data = vec![0u8; width * height * channels * 4];
    reader.read_exact(&mut data)?;
    let vals: Vec<f64> = data
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
        })
        .collect();
    let mut img = Image::new(width, height, Rgb::ZERO);
    for r in 0..height {
        for c in 0..width {
            let i = ((height - 1 - r) * width + c) * channels;
            let px = if channels == 3 {
                Rgb::new(vals[i], vals[i + 1], vals[i + 2])
            } else {
                Rgb::splat(vals[i])
            };
            img.set(r, c, px);
        }
    }
    Ok(img)
}

/// Reads PFM natively and anything else (Radiance HDR, PNG, ...) through
/// the `image` crate as linear floats.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let img = if ext == "pfm" {
        read_pfm(path)?
    } else {
        let dynamic = image::ImageReader::open(path)?
            .with_guessed_format()?
            .decode()
            .map_err(|e| ImageError::Format(e.to_string()))?;
        let rgb = dynamic.to_rgb32f();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let pixels = rgb
            .pixels()
            .map(|p| Rgb::new(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64))
            .collect();
        Image::from_pixels(w, h, pixels)
    };
    if !img.is_finite() {
        return Err(ImageError::NonFinite);
    }
    Ok(img)
}
