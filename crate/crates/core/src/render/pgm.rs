//! 16-bit binary PGM output, JSON sidecars and raw float dumps.

use serde::{Deserialize, Serialize};

use super::ImageGrid;
use crate::error::{Error, Result};

/// Written next to every image so that pixel values can be mapped back to
/// intensities (`value = level / 65535 * v_max`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetadata {
    pub width: usize,
    pub height: usize,
    pub pixel_size_nm: f64,
    pub v_max: f64,
    pub seed: u64,
    pub theta: Option<String>,
    pub config_hash: String,
}

impl ImageMetadata {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }
}

/// Scale value for [`encode_pgm16`]: the image maximum, or 1 for an all-zero image.
pub fn scale_max(img: &ImageGrid) -> f64 {
    let m = img.max();
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

/// Encodes `[0, v_max]` linearly to 0..=65535, big-endian, clamping outliers.
pub fn encode_pgm16(img: &ImageGrid, v_max: f64) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
    out.reserve(img.values.len() * 2);
    for &v in &img.values {
        let level = (v / v_max * 65535.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&level.to_be_bytes());
    }
    out
}

/// Inverse of [`encode_pgm16`] up to quantization. Pixel size and origin are
/// not stored in the file and come back as 1 and 0.
pub fn decode_pgm16(bytes: &[u8], v_max: f64) -> Result<ImageGrid> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(0, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::parse(1, format!("expected P5 magic, got {:?}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(1, format!("bad header field {s:?}")));
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 65535 {
        return Err(Error::parse(1, format!("expected maxval 65535, got {maxval}")));
    }
    let data = &bytes[pos.min(bytes.len())..];
    if data.len() != width * height * 2 {
        return Err(Error::parse(0, format!("expected {} data bytes, got {}", width * height * 2, data.len())));
    }
    let values = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0 * v_max)
        .collect();
    Ok(ImageGrid { width, height, pixel_size: 1.0, origin: [0.0, 0.0], values })
}

/// Row-major little-endian f32 values, no header.
pub fn encode_raw_f32(img: &ImageGrid) -> Vec<u8> {
    img.values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_within_one_level() {
        let values: Vec<f64> = (0..35).map(|k| (k as f64 * 0.37).sin().abs() * 2.5).collect();
        let img = ImageGrid { width: 7, height: 5, pixel_size: 1.0, origin: [0.0; 2], values };
        let v_max = scale_max(&img);
        let bytes = encode_pgm16(&img, v_max);
        assert!(bytes.starts_with(b"P5\n7 5\n65535\n"));
        let back = decode_pgm16(&bytes, v_max).unwrap();
        assert_eq!((back.width, back.height), (7, 5));
        for (a, b) in img.values.iter().zip(&back.values) {
            assert!((a - b).abs() <= 0.5 * v_max / 65535.0 + 1e-15);
        }
        assert_eq!(back.max(), v_max);
    }

    #[test]
    fn big_endian_levels() {
        let img = ImageGrid { width: 2, height: 1, pixel_size: 1.0, origin: [0.0; 2], values: vec![1.0, 0.0] };
        let bytes = encode_pgm16(&img, 1.0);
        assert_eq!(&bytes[bytes.len() - 4..], &[0xff, 0xff, 0, 0]);
        assert!(decode_pgm16(b"P2\n1 1\n65535\n\0\0", 1.0).is_err());
        assert!(decode_pgm16(b"P5\n2 2\n65535\n\0\0", 1.0).is_err());
    }

    #[test]
    fn raw_dump_and_metadata() {
        let img = ImageGrid { width: 1, height: 2, pixel_size: 1.0, origin: [0.0; 2], values: vec![0.5, -1.0] };
        assert_eq!(encode_raw_f32(&img), [0.5f32.to_le_bytes(), (-1.0f32).to_le_bytes()].concat());
        let meta = ImageMetadata {
            width: 1,
            height: 2,
            pixel_size_nm: 1.0,
            v_max: 0.5,
            seed: 7,
            theta: Some("2,0.5,3,4".into()),
            config_hash: "ab".into(),
        };
        assert_eq!(ImageMetadata::from_json(&meta.to_json()).unwrap(), meta);
    }
}
