use std::io::{BufReader, BufWriter, Cursor};
use std::path::Path;

use hat_tensor::{Element, Tensor};

use crate::error::{Error, Result};

/// Interleaved `H x W x C` image with samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::data(format!("{channels} channels; only 1 or 3 are supported")));
        }
        if data.len() != height * width * channels {
            return Err(Error::data(format!("{} samples for a {height}x{width}x{channels} image", data.len())));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, channels, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Rounds to 8-bit codes, clamping out-of-range samples.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    /// Snaps samples to the nearest 8-bit level.
    pub fn quantized(&self) -> Self {
        Self::from_u8(self.height, self.width, self.channels, &self.to_u8()).expect("same extents")
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::data(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Self::from_fn(height, width, self.channels, |y, x, c| self.get(top + y, left + x, c))
    }

    /// `[1, C, H, W]` tensor.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        let (h, w, c) = (self.height, self.width, self.channels);
        Tensor::from_fn([1, c, h, w], |i| {
            let (ch, rest) = (i / (h * w), i % (h * w));
            T::of(self.data[rest * c + ch])
        })
    }

    /// Inverse of [`ImageBuffer::to_tensor`] for one batch item; values are
    /// clamped to `[0, 1]`.
    pub fn from_tensor<T: Element>(t: &Tensor<T>, item: usize) -> Result<Self> {
        let &[n, c, h, w] = t.shape() else {
            return Err(Error::data(format!("expected [N, C, H, W], got {:?}", t.shape())));
        };
        if item >= n {
            return Err(Error::data(format!("batch item {item} of {n}")));
        }
        let d = t.data();
        let base = item * c * h * w;
        Self::from_fn(h, w, c, |y, x, ch| d[base + (ch * h + y) * w + x].as_f64().clamp(0.0, 1.0))
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::normalize_to_color8());
        let mut reader = decoder.read_info().map_err(|e| Error::data(format!("png: {e}")))?;
        let size = reader.output_buffer_size().ok_or_else(|| Error::data("png: image too large"))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::data(format!("png: {e}")))?;
        let (h, w) = (info.height as usize, info.width as usize);
        buf.truncate(info.buffer_size());
        let (channels, keep): (usize, &[usize]) = match info.color_type {
            png::ColorType::Grayscale => (1, &[0]),
            png::ColorType::GrayscaleAlpha => (1, &[0]),
            png::ColorType::Rgb => (3, &[0, 1, 2]),
            png::ColorType::Rgba => (3, &[0, 1, 2]),
            other => return Err(Error::data(format!("png: unsupported color type {other:?}"))),
        };
        let stride = info.color_type.samples();
        let samples: Vec<u8> = buf.chunks_exact(stride).flat_map(|px| keep.iter().map(move |&k| px[k])).collect();
        Self::from_u8(h, w, channels, &samples)
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_png(&bytes).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(BufWriter::new(&mut out), self.width as u32, self.height as u32);
            enc.set_color(if self.channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(|e| Error::data(format!("png: {e}")))?;
            writer.write_image_data(&self.to_u8()).map_err(|e| Error::data(format!("png: {e}")))?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Writes `values` (row-major, `[0, 1]`) as a 16-bit grayscale PNG.
pub fn write_png16(path: &Path, height: usize, width: usize, values: &[f64]) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::data("16-bit image: sample count does not match extents"));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(|e| Error::data(format!("png: {e}")))?;
    let bytes: Vec<u8> =
        values.iter().flat_map(|&v| ((v.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes()).collect();
    writer.write_image_data(&bytes).map_err(|e| Error::data(format!("png: {e}")))
}

/// Reads a 16-bit grayscale PNG back to `[0, 1]` samples.
pub fn read_png16(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| Error::data(format!("png: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::data("png: too large"))?];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::data(format!("png: {e}")))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::data("expected a 16-bit grayscale png"));
    }
    let values =
        buf[..info.buffer_size()].chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0).collect();
    Ok((info.height as usize, info.width as usize, values))
}
