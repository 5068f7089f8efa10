//! JPEG container access.
//!
//! The segment scanner and container parser are self-contained and define
//! the structural semantics used by the container descriptors. Pixel
//! decoding is delegated to `jpeg-decoder` after the container has been
//! validated.

mod container;
pub mod markers;
mod scan;
pub mod tables;

pub use container::{parse_container, ComponentInfo, HuffmanDefinition, JpegContainer};
pub use markers::SegmentKind;
pub use scan::{scan_segments, JpegSegment, SegmentMap};

use jpeg_decoder::{ColorTransform, Decoder, PixelFormat};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JpegError {
    #[error("missing SOI marker")]
    MissingSoi,
    #[error("truncated marker segment at offset {offset}")]
    Truncated { offset: usize },
    #[error("invalid segment length {length} at offset {offset}")]
    InvalidLength { offset: usize, length: u16 },
    #[error("segment at offset {offset} declares {declared} bytes but only {available} remain")]
    PayloadOverrun {
        offset: usize,
        declared: u16,
        available: usize,
    },
    #[error("malformed {what} at offset {offset}")]
    Malformed { offset: usize, what: &'static str },
    #[error("unsupported coding process (marker 0xFF{marker:02X})")]
    UnsupportedCoding { marker: u8 },
    #[error("no frame header (SOF) found")]
    MissingFrame,
    #[error("entropy-coded data is truncated (no EOI)")]
    TruncatedEntropy,
    #[error("decode error: {0}")]
    Decode(String),
}

/// Full-resolution 8-bit luminance plane, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LumaPlane {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u8>,
}

impl LumaPlane {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Self {
        assert_eq!(samples.len(), width * height, "plane size mismatch");
        Self {
            width,
            height,
            samples,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }
}

/// Decoded pixels: 1 channel (gray) or 3 channels (RGB), interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

fn check_decodable(bytes: &[u8]) -> Result<JpegContainer, JpegError> {
    let container = parse_container(bytes)?;
    if !matches!(container.frame_type, 0..=2) {
        return Err(JpegError::UnsupportedCoding {
            marker: markers::SOF0 + container.frame_type,
        });
    }
    if container.precision != 8 {
        return Err(JpegError::Decode(format!(
            "unsupported sample precision {}",
            container.precision
        )));
    }
    if !matches!(container.components.len(), 1 | 3) {
        return Err(JpegError::Decode(format!(
            "unsupported component count {}",
            container.components.len()
        )));
    }
    if !container.map.has_eoi() {
        return Err(JpegError::TruncatedEntropy);
    }
    Ok(container)
}

fn run_decoder(bytes: &[u8], transform: Option<ColorTransform>) -> Result<(Vec<u8>, PixelFormat, usize, usize), JpegError> {
    let run = || {
        let mut decoder = Decoder::new(bytes);
        if let Some(t) = transform {
            decoder.set_color_transform(t);
        }
        let data = decoder
            .decode()
            .map_err(|e| JpegError::Decode(e.to_string()))?;
        let info = decoder
            .info()
            .ok_or_else(|| JpegError::Decode("no image info".into()))?;
        Ok((data, info.pixel_format, info.width as usize, info.height as usize))
    };
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
        .unwrap_or_else(|_| Err(JpegError::Decode("decoder panicked on malformed input".into())))
}

/// Decodes the luminance plane: the single component of grayscale files or
/// the Y component of YCbCr files.
pub fn decode_luma(bytes: &[u8]) -> Result<LumaPlane, JpegError> {
    let container = check_decodable(bytes)?;
    // RGB passes the decoded YCbCr samples through unconverted.
    let transform = (container.components.len() == 3).then_some(ColorTransform::RGB);
    let (data, format, width, height) = run_decoder(bytes, transform)?;
    let channels = match format {
        PixelFormat::L8 => 1,
        PixelFormat::RGB24 => 3,
        other => {
            return Err(JpegError::Decode(format!("unsupported pixel format {other:?}")));
        }
    };
    if container.components.len() != channels || data.len() != width * height * channels {
        return Err(JpegError::Decode("unexpected decoder output size".into()));
    }
    let samples = data.iter().step_by(channels).copied().collect();
    Ok(LumaPlane::new(width, height, samples))
}

/// Decodes to gray or RGB pixels.
pub fn decode_pixels(bytes: &[u8]) -> Result<Raster, JpegError> {
    check_decodable(bytes)?;
    let (data, format, width, height) = run_decoder(bytes, None)?;
    let channels = match format {
        PixelFormat::L8 => 1,
        PixelFormat::RGB24 => 3,
        other => {
            return Err(JpegError::Decode(format!("unsupported pixel format {other:?}")));
        }
    };
    if data.len() != width * height * channels {
        return Err(JpegError::Decode("unexpected decoder output size".into()));
    }
    Ok(Raster {
        width,
        height,
        channels,
        data,
    })
}
