//! Synthetic sharing platforms and the labelled dataset builder.
//!
//! A platform is emulated by a [`PlatformProfile`]: the uploaded JPEG is
//! decoded, optionally downscaled, re-encoded with the profile's settings,
//! and its metadata segments are stripped and/or injected.

pub mod dataset;
pub mod encoder;
pub mod profile;
pub mod resize;
pub mod synth;

pub use dataset::{
    build_dataset, build_dataset_in_memory, load_manifest, DatasetItem, DatasetManifest,
    DatasetOptions, ManifestEntry, Split,
};
pub use encoder::{encode, EncodeOptions, QuantTables};
pub use profile::{Injection, PlatformProfile, Quantization, Subsampling};

use crate::jpeg::{self, markers, JpegError, Raster, SegmentKind};
use crate::seeds::derive_seed;

#[derive(Debug, thiserror::Error)]
pub enum SimulatorError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("no profile for platform `{0}`")]
    MissingProfile(String),
    #[error("cannot decode input: {0}")]
    Decode(#[from] JpegError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("source image `{path}`: {message}")]
    Source { path: String, message: String },
    #[error("I/O error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
}

fn app2_payload(seed: u64) -> Vec<u8> {
    let mut p = b"ICC_PROFILE\0".to_vec();
    p.extend_from_slice(&[1, 1]);
    let mut icc = vec![0u8; 128];
    icc[0..4].copy_from_slice(&128u32.to_be_bytes());
    icc[12..16].copy_from_slice(b"mntr");
    icc[16..20].copy_from_slice(b"RGB ");
    icc[20..24].copy_from_slice(b"XYZ ");
    icc[36..40].copy_from_slice(b"acsp");
    icc[84..92].copy_from_slice(&seed.to_be_bytes());
    p.extend_from_slice(&icc);
    p
}

fn app13_payload(seed: u64) -> Vec<u8> {
    let mut iptc = vec![0x1C, 0x02, 0x00, 0x00, 0x02, 0x00, 0x04];
    let id = format!("{seed:016x}");
    iptc.extend_from_slice(&[0x1C, 0x02, 0x05]);
    iptc.extend_from_slice(&(id.len() as u16).to_be_bytes());
    iptc.extend_from_slice(id.as_bytes());
    let mut p = b"Photoshop 3.0\0".to_vec();
    p.extend_from_slice(b"8BIM");
    p.extend_from_slice(&0x0404u16.to_be_bytes());
    p.extend_from_slice(&[0, 0]);
    p.extend_from_slice(&(iptc.len() as u32).to_be_bytes());
    p.extend_from_slice(&iptc);
    if iptc.len() % 2 == 1 {
        p.push(0);
    }
    p
}

fn com_payload(profile: &str, seed: u64) -> Vec<u8> {
    format!("{profile} {seed:016x}").into_bytes()
}

/// A minimal EXIF block as written by a camera.
pub fn exif_stub() -> Vec<u8> {
    let mut p = b"Exif\0\0".to_vec();
    // little-endian TIFF header with an empty IFD0
    p.extend_from_slice(&[b'I', b'I', 42, 0, 8, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
    p
}

/// Encodes a source raster as the "original" camera JPEG.
pub fn camera_encode(raster: &Raster, quality: u8) -> Vec<u8> {
    let mut opts = EncodeOptions::baseline(quality);
    opts.extra_segments.push((markers::APP0 + 1, exif_stub()));
    encode(raster, &opts)
}

/// Emulates one upload/download through `profile`.
pub fn apply_platform(bytes: &[u8], profile: &PlatformProfile, seed: u64) -> Result<Vec<u8>, SimulatorError> {
    profile.validate()?;
    let container = jpeg::parse_container(bytes)?;
    let mut raster = jpeg::decode_pixels(bytes)?;
    if let Some(max) = profile.max_dimension {
        if let Some((w, h)) = resize::target_dimensions(raster.width, raster.height, max as usize) {
            raster = resize::resize_bilinear(&raster, w, h);
        }
    }

    let mut extra = Vec::new();
    if !profile.strip_app_segments {
        for seg in &container.map.segments {
            let keep = matches!(seg.kind, SegmentKind::App(n) if n > 0) || seg.kind == SegmentKind::Com;
            if keep {
                extra.push((seg.marker, seg.payload(bytes).to_vec()));
            }
        }
    }
    let mut injections = profile.inject.clone();
    injections.sort();
    for (k, inj) in injections.iter().enumerate() {
        let s = derive_seed(seed, k as u64);
        match inj {
            Injection::App13 => extra.push((markers::APP0 + 13, app13_payload(s))),
            Injection::App2 => extra.push((markers::APP0 + 2, app2_payload(s))),
            Injection::Com => extra.push((markers::COM, com_payload(&profile.name, s))),
            Injection::Dri(_) => {}
        }
    }

    let opts = EncodeOptions {
        tables: profile.quantization.tables()?,
        subsampling: profile.chroma_subsampling,
        progressive: profile.progressive,
        restart_interval: profile.restart_interval(),
        extra_segments: extra,
    };
    Ok(encode(&raster, &opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpeg::parse_container;

    fn source(w: usize, h: usize) -> Raster {
        synth::generate_source(w, h, 3)
    }

    #[test]
    fn injected_segments_are_present() {
        let input = camera_encode(&source(64, 48), 90);
        let mut p = PlatformProfile::fb_like();
        p.inject = vec![Injection::App13];
        let out = apply_platform(&input, &p, 1).unwrap();
        let c = parse_container(&out).unwrap();
        assert_eq!(c.map.count(SegmentKind::App(13)), 1);
        assert_eq!(c.map.count(SegmentKind::App(1)), 0);
    }

    #[test]
    fn quality_50_tables_are_written() {
        let input = camera_encode(&source(32, 32), 90);
        let mut p = PlatformProfile::fl_like();
        p.quantization = Quantization::Quality(50);
        let out = apply_platform(&input, &p, 0).unwrap();
        let c = parse_container(&out).unwrap();
        let t = QuantTables::from_quality(50);
        assert_eq!(c.quant_tables[0], Some(t.luma));
        assert_eq!(c.quant_tables[1], Some(t.chroma));
        assert_eq!(c.restart_interval, Some(8));
    }

    #[test]
    fn resize_bounds_longest_side() {
        let input = camera_encode(&source(120, 60), 90);
        let mut p = PlatformProfile::tw_like();
        p.max_dimension = Some(40);
        let c = parse_container(&apply_platform(&input, &p, 0).unwrap()).unwrap();
        assert_eq!((c.width, c.height), (40, 20));
        assert!(c.progressive);
    }

    #[test]
    fn non_stripping_profile_keeps_metadata() {
        let input = camera_encode(&source(32, 32), 90);
        let mut p = PlatformProfile::fb_like();
        p.strip_app_segments = false;
        let once = apply_platform(&input, &p, 0).unwrap();
        let c = parse_container(&once).unwrap();
        assert_eq!(c.map.count(SegmentKind::App(1)), 1);
        assert_eq!(c.map.count(SegmentKind::App(2)), 1);
        let twice = apply_platform(&once, &p, 0).unwrap();
        assert_eq!(parse_container(&twice).unwrap().map.count(SegmentKind::App(2)), 2);
    }

    #[test]
    fn deterministic_for_equal_seed() {
        let input = camera_encode(&source(40, 40), 70);
        let p = PlatformProfile::tw_like();
        assert_eq!(apply_platform(&input, &p, 9).unwrap(), apply_platform(&input, &p, 9).unwrap());
        assert_ne!(apply_platform(&input, &p, 9).unwrap(), apply_platform(&input, &p, 10).unwrap());
    }

    #[test]
    fn undecodable_input_errors() {
        assert!(apply_platform(b"not a jpeg", &PlatformProfile::fb_like(), 0).is_err());
    }
}
