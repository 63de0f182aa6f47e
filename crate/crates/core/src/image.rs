//! RGB float images, 8-bit encoders, and resize/crop preprocessing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Rgb;

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| p.iter().any(|c| !(0.0..=1.0).contains(c))) {
            return Err(Error::invalid(format!(
                "pixel {i} has channel outside [0, 1]: {:?}",
                pixels[i]
            )));
        }
        Ok(ImageBuffer { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        ImageBuffer::new(width, height, vec![color; width * height])
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

    pub fn get(&self, row: usize, col: usize) -> Rgb {
        self.pixels[row * self.width + col]
    }

    /// Channel values in `r, g, b` interleaved row-major order.
    pub fn flatten(&self) -> Vec<f64> {
        self.pixels.iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn mean_color(&self) -> Rgb {
        let mut acc = [0.0; 3];
        for p in &self.pixels {
            for c in 0..3 {
                acc[c] += p[c];
            }
        }
        acc.map(|c| c / self.pixels.len() as f64)
    }

    /// 8-bit quantization, round-half-to-even on `value·255`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.iter().map(|&c| quantize(c)))
            .collect()
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_rgb8());
        out
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc
                .write_header()
                .map_err(|e| Error::Internal(format!("png header: {e}")))?;
            w.write_image_data(&self.to_rgb8())
                .map_err(|e| Error::Internal(format!("png data: {e}")))?;
        }
        Ok(out)
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let dec = png::Decoder::new(bytes);
        let mut reader = dec.read_info().map_err(|e| Error::Parse {
            offset: 0,
            message: format!("png: {e}"),
        })?;
        let mut buf = vec![0u8; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Parse {
            offset: 0,
            message: format!("png: {e}"),
        })?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Parse {
                offset: 0,
                message: "expected 8-bit RGB png".into(),
            });
        }
        let pixels = buf[..info.buffer_size()]
            .chunks_exact(3)
            .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
            .collect();
        ImageBuffer::new(info.width as usize, info.height as usize, pixels)
    }

    /// Writes PNG, or binary PPM when the extension is `.ppm`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => self.to_ppm(),
            _ => self.to_png()?,
        };
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Bilinear resize (pixel-center aligned).
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<ImageBuffer> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("resize target must be nonempty"));
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = Vec::with_capacity(width * height);
        for r in 0..height {
            let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for c in 0..width {
                let fx = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let mut px = [0.0; 3];
                for ch in 0..3 {
                    let top = self.get(y0, x0)[ch] * (1.0 - wx) + self.get(y0, x1)[ch] * wx;
                    let bot = self.get(y1, x0)[ch] * (1.0 - wx) + self.get(y1, x1)[ch] * wx;
                    px[ch] = (top * (1.0 - wy) + bot * wy).clamp(0.0, 1.0);
                }
                out.push(px);
            }
        }
        ImageBuffer::new(width, height, out)
    }

    pub fn center_crop(&self, width: usize, height: usize) -> Result<ImageBuffer> {
        if width > self.width || height > self.height || width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "cannot crop {}x{} to {width}x{height}",
                self.width, self.height
            )));
        }
        let x0 = (self.width - width) / 2;
        let y0 = (self.height - height) / 2;
        let mut out = Vec::with_capacity(width * height);
        for r in y0..y0 + height {
            out.extend_from_slice(&self.pixels[r * self.width + x0..r * self.width + x0 + width]);
        }
        ImageBuffer::new(width, height, out)
    }

    /// Scales so the image covers `width×height` with aspect preserved, then
    /// center-crops the excess.
    pub fn resize_and_crop(&self, width: usize, height: usize) -> Result<ImageBuffer> {
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let scale = (width as f64 / self.width as f64).max(height as f64 / self.height as f64);
        let rw = ((self.width as f64 * scale).round() as usize).max(width);
        let rh = ((self.height as f64 * scale).round() as usize).max(height);
        self.resize_bilinear(rw, rh)?.center_crop(width, height)
    }
}

pub fn quantize(c: f64) -> u8 {
    (c * 255.0).round_ties_even().clamp(0.0, 255.0) as u8
}
