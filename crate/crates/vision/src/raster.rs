//! Grey-level images with an optional depth channel, and their file formats.
//!
//! Intensity is written as binary PGM (`P5`, maxval 255). Depth is written
//! as a little-endian float32 raster:
//!
//! ```text
//! offset  size   content
//! 0       8      magic b"PFDEPTH1"
//! 8       4      width  (u32 LE)
//! 12      4      height (u32 LE)
//! 16      4·w·h  depth in metres along the optical axis, row-major (f32 LE)
//! ```
//!
//! Pixels without a surface hold NaN.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Result, VisionError};

const DEPTH_MAGIC: &[u8; 8] = b"PFDEPTH1";

#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensity in `[0, 1]`.
    pub pixels: Vec<f64>,
    /// Row-major optical-axis depth [m]; NaN where nothing was hit.
    pub depth: Option<Vec<f64>>,
}

impl RasterImage {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, pixels: vec![value; width * height], depth: None }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        let img = Self { width, height, pixels, depth: None };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pixels.len() != self.width * self.height {
            return Err(VisionError::InvalidArgument(format!(
                "{} pixels for a {}x{} image",
                self.pixels.len(),
                self.width,
                self.height
            )));
        }
        if !self.pixels.iter().all(|p| p.is_finite()) {
            return Err(VisionError::InvalidArgument("non-finite intensity".into()));
        }
        if let Some(d) = &self.depth {
            if d.len() != self.pixels.len() {
                return Err(VisionError::InvalidArgument("depth channel size mismatch".into()));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: f64) {
        self.pixels[row * self.width + col] = value;
    }

    /// Valid depth at a pixel, if any.
    pub fn depth_at(&self, col: usize, row: usize) -> Option<f64> {
        let d = self.depth.as_ref()?[row * self.width + col];
        (d.is_finite() && d > 0.0).then_some(d)
    }

    pub fn write_pgm(&self, mut out: impl Write) -> Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        out.write_all(&bytes)?;
        Ok(())
    }

    /// Reads an 8- or 16-bit binary PGM; intensities are scaled to `[0, 1]`.
    pub fn read_pgm(input: impl Read) -> Result<Self> {
        let mut r = BufReader::new(input);
        let mut header = Vec::new();
        while header.len() < 4 {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(VisionError::Format("truncated PGM header".into()));
            }
            let line = line.split('#').next().unwrap_or("");
            header.extend(line.split_whitespace().map(str::to_owned));
        }
        if header[0] != "P5" {
            return Err(VisionError::Format(format!("expected P5, found {}", header[0])));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| VisionError::Format(format!("bad PGM field '{s}'")));
        let (width, height, maxval) = (parse(&header[1])?, parse(&header[2])?, parse(&header[3])?);
        if maxval == 0 || maxval > 65535 {
            return Err(VisionError::Format(format!("maxval {maxval} out of range")));
        }
        let bpp = if maxval < 256 { 1 } else { 2 };
        let mut raw = vec![0u8; width * height * bpp];
        r.read_exact(&mut raw).map_err(|_| VisionError::Format("truncated PGM data".into()))?;
        let pixels = if bpp == 1 {
            raw.iter().map(|&b| b as f64 / maxval as f64).collect()
        } else {
            raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64).collect()
        };
        Self::from_pixels(width, height, pixels)
    }

    pub fn write_depth(&self, mut out: impl Write) -> Result<()> {
        let depth = self.depth.as_ref().ok_or_else(|| VisionError::InvalidArgument("image has no depth channel".into()))?;
        out.write_all(DEPTH_MAGIC)?;
        out.write_all(&(self.width as u32).to_le_bytes())?;
        out.write_all(&(self.height as u32).to_le_bytes())?;
        for &d in depth {
            out.write_all(&(d as f32).to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a depth raster into the depth channel of a blank image.
    pub fn read_depth(mut input: impl Read) -> Result<Self> {
        let mut head = [0u8; 16];
        input.read_exact(&mut head).map_err(|_| VisionError::Format("truncated depth header".into()))?;
        if &head[..8] != DEPTH_MAGIC {
            return Err(VisionError::Format("bad depth magic".into()));
        }
        let width = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
        let mut raw = vec![0u8; width * height * 4];
        input.read_exact(&mut raw).map_err(|_| VisionError::Format("truncated depth data".into()))?;
        let depth = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        let mut img = Self::filled(width, height, 0.0);
        img.depth = Some(depth);
        Ok(img)
    }
}
