//! Unit-interval image container and PNG I/O.

use std::path::Path;

use crate::error::{Error, Result};

/// H×W×C array of 64-bit intensities in `[0, 1]`, row-major, C ∈ {1, 3}.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension("image dimensions must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Dimension(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "image buffer holds {} values, expected {}x{}x{} = {}",
                data.len(),
                height,
                width,
                channels,
                height * width * channels
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.idx(y, x, c)]
    }

    /// One channel as a contiguous H×W plane.
    pub fn channel_plane(&self, c: usize) -> Vec<f64> {
        let mut plane = Vec::with_capacity(self.height * self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                plane.push(self.at(y, x, c));
            }
        }
        plane
    }

    /// Rebuild an image from per-channel planes of identical size.
    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        let mut data = vec![0.0; height * width * channels];
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != height * width {
                return Err(Error::Dimension("channel plane size mismatch".into()));
            }
            for (i, &v) in plane.iter().enumerate() {
                data[i * channels + c] = v;
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn clamp_unit(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// Grayscale copy (luma weights); identity for single-channel images.
    pub fn to_gray(&self) -> ImageTensor {
        if self.channels == 1 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.height * self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = 0.299 * self.at(y, x, 0) + 0.587 * self.at(y, x, 1) + 0.114 * self.at(y, x, 2);
                data.push(v);
            }
        }
        ImageTensor::new(self.height, self.width, 1, data).expect("gray shape")
    }

    /// Promote a grayscale image to RGB by channel replication.
    pub fn to_rgb(&self) -> ImageTensor {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.height * self.width * 3);
        for &v in &self.data {
            data.extend_from_slice(&[v, v, v]);
        }
        ImageTensor::new(self.height, self.width, 3, data).expect("rgb shape")
    }

    /// Bilinear resize to `(height, width)`.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Result<ImageTensor> {
        if height == 0 || width == 0 {
            return Err(Error::Parameter("resize target must be positive".into()));
        }
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let mut data = vec![0.0; height * width * self.channels];
        for y in 0..height {
            // Sample at pixel centers so the grid stays alignment-free.
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                for c in 0..self.channels {
                    let v00 = self.at(y0, x0, c);
                    let v01 = self.at(y0, x1, c);
                    let v10 = self.at(y1, x0, c);
                    let v11 = self.at(y1, x1, c);
                    let top = v00 + (v01 - v00) * wx;
                    let bot = v10 + (v11 - v10) * wx;
                    data[(y * width + x) * self.channels + c] = top + (bot - top) * wy;
                }
            }
        }
        ImageTensor::new(height, width, self.channels, data)
    }

    /// Decode an 8-bit PNG; grayscale inputs are promoted to RGB.
    pub fn load_png(path: &Path) -> Result<ImageTensor> {
        let img = ::image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let data = rgb
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect();
        ImageTensor::new(h, w, 3, data)
    }

    /// Write as an 8-bit PNG (rounded quantization after clamping).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let quant = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let ok = match self.channels {
            1 => {
                let buf: Vec<u8> = self.data.iter().map(|&v| quant(v)).collect();
                ::image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
                    .map(|img| img.save(path))
            }
            _ => {
                let buf: Vec<u8> = self.data.iter().map(|&v| quant(v)).collect();
                ::image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
                    .map(|img| img.save(path))
            }
        };
        match ok {
            Some(Ok(())) => Ok(()),
            Some(Err(e)) => Err(Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            }),
            None => Err(Error::Dimension("pixel buffer does not match size".into())),
        }
    }
}
