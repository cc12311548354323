//! Camera front end: demosaicing, gray-world white balance and resampling.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Arrangement of the 2×2 color filter tile, read row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfaPattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaPattern {
    /// Channel index (0 = R, 1 = G, 2 = B) sampled at `(x, y)`.
    pub fn channel_at(self, x: usize, y: usize) -> usize {
        let tile = match self {
            CfaPattern::Rggb => [0, 1, 1, 2],
            CfaPattern::Bggr => [2, 1, 1, 0],
            CfaPattern::Grbg => [1, 0, 2, 1],
            CfaPattern::Gbrg => [1, 2, 0, 1],
        };
        tile[(y & 1) * 2 + (x & 1)]
    }
}

impl fmt::Display for CfaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CfaPattern::Rggb => "RGGB",
            CfaPattern::Bggr => "BGGR",
            CfaPattern::Grbg => "GRBG",
            CfaPattern::Gbrg => "GBRG",
        })
    }
}

impl FromStr for CfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(CfaPattern::Rggb),
            "BGGR" => Ok(CfaPattern::Bggr),
            "GRBG" => Ok(CfaPattern::Grbg),
            "GBRG" => Ok(CfaPattern::Gbrg),
            _ => Err(Error::domain(format!("unknown Bayer pattern `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawBayerImage {
    width: usize,
    height: usize,
    mosaic: Vec<u8>,
    pattern: CfaPattern,
}

impl RawBayerImage {
    pub fn new(width: usize, height: usize, mosaic: Vec<u8>, pattern: CfaPattern) -> Result<Self> {
        if width < 2 || height < 2 || !width.is_multiple_of(2) || !height.is_multiple_of(2) {
            return Err(Error::domain(format!(
                "Bayer mosaic dimensions must be even and at least 2, got {width}x{height}"
            )));
        }
        if mosaic.len() != width * height {
            return Err(Error::domain(format!(
                "mosaic holds {} samples, expected {}",
                mosaic.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            mosaic,
            pattern,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    pub fn mosaic(&self) -> &[u8] {
        &self.mosaic
    }

    fn at(&self, x: isize, y: isize) -> u32 {
        let x = reflect(x, self.width);
        let y = reflect(y, self.height);
        self.mosaic[y * self.width + x] as u32
    }
}

/// Planar 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    planes: [Vec<u8>; 3],
}

impl RgbImage {
    pub fn new(width: usize, height: usize, planes: [Vec<u8>; 3]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("an RGB image needs at least one pixel"));
        }
        if planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::domain(format!(
                "every plane must hold {} samples",
                width * height
            )));
        }
        Ok(Self { width, height, planes })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let n = width * height;
        Self::new(width, height, rgb.map(|v| vec![v; n]))
    }

    /// Build from interleaved `RGBRGB...` samples.
    pub fn from_interleaved(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::domain("interleaved buffer has the wrong length"));
        }
        let mut planes: [Vec<u8>; 3] = Default::default();
        for (c, plane) in planes.iter_mut().enumerate() {
            *plane = data.iter().skip(c).step_by(3).copied().collect();
        }
        Self::new(width, height, planes)
    }

    pub fn to_interleaved(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height * 3);
        for i in 0..self.width * self.height {
            out.extend(self.planes.iter().map(|p| p[i]));
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane(&self, channel: usize) -> &[u8] {
        &self.planes[channel]
    }

    pub fn get(&self, channel: usize, x: usize, y: usize) -> u8 {
        self.planes[channel][y * self.width + x]
    }

    pub fn channel_mean(&self, channel: usize) -> f64 {
        let sum: u64 = self.planes[channel].iter().map(|&v| v as u64).sum();
        sum as f64 / (self.width * self.height) as f64
    }
}

/// Mirror an index into `0..len` without repeating the edge sample, which
/// keeps the CFA parity of the neighbour intact.
fn reflect(i: isize, len: usize) -> usize {
    let len = len as isize;
    let r = if i < 0 {
        -i
    } else if i >= len {
        2 * (len - 1) - i
    } else {
        i
    };
    r.clamp(0, len - 1) as usize
}

/// `num / den` rounded half to even; both nonnegative.
pub(crate) fn div_round_half_even(num: u32, den: u32) -> u32 {
    let q = num / den;
    let r = num % den;
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    }
}

/// Bilinear demosaic. Each missing sample is the mean of the nearest
/// same-color neighbours: two (horizontal or vertical) for red/blue at green
/// sites, four diagonal for red/blue at blue/red sites, four orthogonal for
/// green. Borders are mirrored.
pub fn debayer(raw: &RawBayerImage) -> Result<RgbImage> {
    let (w, h) = (raw.width, raw.height);
    let mut planes: [Vec<u8>; 3] = [vec![0; w * h], vec![0; w * h], vec![0; w * h]];
    let pattern = raw.pattern;
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let here = pattern.channel_at(x, y);
            let orth = || raw.at(xi - 1, yi) + raw.at(xi + 1, yi) + raw.at(xi, yi - 1) + raw.at(xi, yi + 1);
            let diag =
                || raw.at(xi - 1, yi - 1) + raw.at(xi + 1, yi - 1) + raw.at(xi - 1, yi + 1) + raw.at(xi + 1, yi + 1);
            let horiz = || raw.at(xi - 1, yi) + raw.at(xi + 1, yi);
            let vert = || raw.at(xi, yi - 1) + raw.at(xi, yi + 1);
            let mut px = [0u32; 3];
            px[here] = raw.at(xi, yi);
            match here {
                1 => {
                    // Horizontal neighbours of a green site carry one chroma
                    // channel, vertical neighbours the other.
                    let horiz_channel = pattern.channel_at(x + 1, y);
                    let vert_channel = 2 - horiz_channel;
                    px[horiz_channel] = div_round_half_even(horiz(), 2);
                    px[vert_channel] = div_round_half_even(vert(), 2);
                }
                c => {
                    px[1] = div_round_half_even(orth(), 4);
                    px[2 - c] = div_round_half_even(diag(), 4);
                }
            }
            for c in 0..3 {
                planes[c][y * w + x] = px[c] as u8;
            }
        }
    }
    RgbImage::new(w, h, planes)
}

pub const AWB_MIN_GAIN: f64 = 0.25;
pub const AWB_MAX_GAIN: f64 = 4.0;

/// Per-channel gains applied by [`auto_white_balance`].
pub fn gray_world_gains(img: &RgbImage) -> [f64; 3] {
    let means = [0, 1, 2].map(|c| img.channel_mean(c));
    let target = means.iter().sum::<f64>() / 3.0;
    means.map(|m| {
        if target == 0.0 {
            1.0
        } else if m == 0.0 {
            AWB_MAX_GAIN
        } else {
            (target / m).clamp(AWB_MIN_GAIN, AWB_MAX_GAIN)
        }
    })
}

/// Gray-world white balance: scale every channel so its mean matches the
/// mean over all three channels.
pub fn auto_white_balance(img: &RgbImage) -> Result<RgbImage> {
    let gains = gray_world_gains(img);
    let mut planes: [Vec<u8>; 3] = Default::default();
    for (c, plane) in planes.iter_mut().enumerate() {
        *plane = img.planes[c]
            .iter()
            .map(|&v| (v as f64 * gains[c]).round_ties_even().clamp(0.0, 255.0) as u8)
            .collect();
    }
    RgbImage::new(img.width, img.height, planes)
}

/// Bilinear resampling to `side × side` with pixel-center alignment.
pub fn downscale(img: &RgbImage, side: usize) -> Result<RgbImage> {
    if side == 0 || side > img.width.min(img.height) {
        return Err(Error::domain(format!(
            "cannot resample {}x{} to {side}x{side}",
            img.width, img.height
        )));
    }
    let taps = |dst: usize, src_len: usize| -> Vec<(usize, usize, f64)> {
        let ratio = src_len as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src_len - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(src_len - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let xs = taps(side, img.width);
    let ys = taps(side, img.height);
    let mut planes: [Vec<u8>; 3] = Default::default();
    for (c, plane) in planes.iter_mut().enumerate() {
        let src = &img.planes[c];
        let at = |x: usize, y: usize| src[y * img.width + x] as f64;
        plane.reserve(side * side);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                plane.push(v.round_ties_even().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbImage::new(side, side, planes)
}
