use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DMAP";
const VERSION: u32 = 1;

/// Dense single-channel image of `f64`, row-major.
///
/// On disk: `DMAP`, then little-endian `u32` version, width and height,
/// then `width * height` little-endian `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f64) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self { width, height, data }
    }

    pub fn get(&self, u: u32, v: u32) -> f64 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    /// Value at the nearest pixel, clamped to the image.
    pub fn sample(&self, pixel: &Vector2<f64>) -> f64 {
        let clamp = |x: f64, n: u32| (x.round().max(0.0) as u32).min(n - 1);
        self.get(clamp(pixel.x, self.width), clamp(pixel.y, self.height))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [VERSION, self.width, self.height] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head).map_err(|_| Error::Config("depth map header truncated".into()))?;
        if &head[0..4] != MAGIC {
            return Err(Error::Config("not a DMAP depth map".into()));
        }
        let word = |i: usize| u32::from_le_bytes([head[i], head[i + 1], head[i + 2], head[i + 3]]);
        if word(4) != VERSION {
            return Err(Error::Config(format!("unsupported depth map version {}", word(4))));
        }
        let (width, height) = (word(8), word(12));
        if width == 0 || height == 0 {
            return Err(Error::Config("depth map has zero size".into()));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let n = width as usize * height as usize;
        if bytes.len() != n * 8 {
            return Err(Error::Config(format!("depth map expects {n} values, found {} bytes", bytes.len())));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { width, height, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::read(std::io::BufReader::new(f))
    }

    /// Conventional file name of frame `t` inside a baseline directory.
    pub fn frame_path(dir: &Path, t: usize) -> PathBuf {
        dir.join(format!("frame_{t:05}.dmap"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_sampling() {
        let img = DepthImage::from_fn(4, 3, |u, v| u as f64 + 10.0 * v as f64 + 0.125);
        let mut buf = Vec::new();
        img.write(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 12 * 8);
        let back = DepthImage::read(buf.as_slice()).unwrap();
        assert_eq!(back, img);
        assert_eq!(img.sample(&Vector2::new(2.4, 1.6)), 22.125);
        assert_eq!(img.sample(&Vector2::new(-5.0, 99.0)), 20.125);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(DepthImage::read(&b"NOPE"[..]).is_err());
        let mut buf = Vec::new();
        DepthImage::from_fn(2, 2, |_, _| 1.0).write(&mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(DepthImage::read(buf.as_slice()).is_err());
    }
}
