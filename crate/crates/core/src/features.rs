//! Fixed-width descriptors computed from a JPEG file.
//!
//! * `dct`: 369 values, normalized histograms of recomputed luma block-DCT
//!   coefficients (9 zigzag AC frequencies x 41 integer bins).
//! * `meta`: 152 values describing compression settings.
//! * `header`: 8 marker frequencies.
//!
//! `meta` and `header` only read the container; `dct` decodes the image.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dct;
use crate::jpeg::tables::ZIGZAG;
use crate::jpeg::{self, JpegContainer, JpegError, LumaPlane, SegmentKind, SegmentMap};

pub const DCT_FREQUENCIES: usize = 9;
pub const DCT_BIN_MIN: i32 = -20;
pub const DCT_BIN_MAX: i32 = 20;
pub const DCT_BINS: usize = (DCT_BIN_MAX - DCT_BIN_MIN + 1) as usize;
pub const DCT_LEN: usize = DCT_FREQUENCIES * DCT_BINS;
pub const META_LEN: usize = 152;
pub const HEADER_LEN: usize = 8;

/// Offsets into the META vector.
pub mod meta_layout {
    pub const QUANT_LUMA: usize = 0;
    pub const QUANT_CHROMA: usize = 64;
    pub const HUFFMAN_DC_COUNT: usize = 128;
    pub const HUFFMAN_AC_COUNT: usize = 129;
    pub const COMPONENTS: usize = 130;
    pub const FIELDS_PER_COMPONENT: usize = 6;
    pub const OPTIMIZED: usize = 148;
    pub const PROGRESSIVE: usize = 149;
    pub const WIDTH: usize = 150;
    pub const HEIGHT: usize = 151;
}

/// Slot order of the HEADER vector.
pub const HEADER_SLOTS: [&str; HEADER_LEN] = ["DHT", "unused", "APP13", "APP2", "SOF0", "SOF2", "COM", "DRI"];

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{kind} descriptor: {source}")]
    Descriptor {
        kind: FeatureKind,
        #[source]
        source: JpegError,
    },
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Dct,
    Meta,
    Header,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Dct, FeatureKind::Meta, FeatureKind::Header];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Dct => "dct",
            FeatureKind::Meta => "meta",
            FeatureKind::Header => "header",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            FeatureKind::Dct => DCT_LEN,
            FeatureKind::Meta => META_LEN,
            FeatureKind::Header => HEADER_LEN,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dct" => Ok(FeatureKind::Dct),
            "meta" => Ok(FeatureKind::Meta),
            "header" => Ok(FeatureKind::Header),
            other => Err(FeatureError::InvalidArgument(format!("unknown feature `{other}`"))),
        }
    }
}

/// A nonempty set of descriptors, iterated in `dct, meta, header` order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureSubset(BTreeSet<FeatureKind>);

impl FeatureSubset {
    pub fn new<I: IntoIterator<Item = FeatureKind>>(kinds: I) -> Result<Self, FeatureError> {
        let set: BTreeSet<_> = kinds.into_iter().collect();
        if set.is_empty() {
            return Err(FeatureError::InvalidArgument("feature subset is empty".into()));
        }
        Ok(Self(set))
    }

    pub fn all() -> Self {
        Self(FeatureKind::ALL.into_iter().collect())
    }

    pub fn contains(&self, kind: FeatureKind) -> bool {
        self.0.contains(&kind)
    }

    pub fn iter(&self) -> impl Iterator<Item = FeatureKind> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_vec(&self) -> Vec<FeatureKind> {
        self.iter().collect()
    }
}

impl FromStr for FeatureSubset {
    type Err = FeatureError;

    /// Comma-separated names, e.g. `dct,meta,header`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kinds = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(kinds)
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(FeatureKind::name).collect();
        f.write_str(&names.join(","))
    }
}

pub fn extract_dct(plane: &LumaPlane) -> Result<Vec<f64>, FeatureError> {
    let (bw, bh) = (plane.width / 8, plane.height / 8);
    if bw == 0 || bh == 0 {
        return Err(FeatureError::InvalidArgument(format!(
            "plane {}x{} is smaller than one 8x8 block",
            plane.width, plane.height
        )));
    }
    let mut counts = vec![0u64; DCT_LEN];
    let mut block = [0.0; 64];
    for by in 0..bh {
        for bx in 0..bw {
            for y in 0..8 {
                let row = (by * 8 + y) * plane.width + bx * 8;
                for x in 0..8 {
                    block[y * 8 + x] = plane.samples[row + x] as f64 - 128.0;
                }
            }
            let coeffs = dct::forward(&block);
            for f in 0..DCT_FREQUENCIES {
                let c = coeffs[ZIGZAG[f + 1]].round();
                if (DCT_BIN_MIN as f64..=DCT_BIN_MAX as f64).contains(&c) {
                    counts[f * DCT_BINS + (c as i32 - DCT_BIN_MIN) as usize] += 1;
                }
            }
        }
    }
    let blocks = (bw * bh) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / blocks).collect())
}

pub fn extract_meta(container: &JpegContainer) -> Vec<f64> {
    use meta_layout::*;
    let mut v = vec![0.0; META_LEN];
    for (slot, dest) in [(QUANT_LUMA, 0), (QUANT_CHROMA, 1)] {
        if let Some(table) = &container.quant_tables[dest] {
            for (k, &q) in table.iter().enumerate() {
                v[slot + k] = q as f64;
            }
        }
    }
    v[HUFFMAN_DC_COUNT] = container.huffman_table_count_dc as f64;
    v[HUFFMAN_AC_COUNT] = container.huffman_table_count_ac as f64;
    for (i, c) in container.components.iter().take(3).enumerate() {
        let base = COMPONENTS + i * FIELDS_PER_COMPONENT;
        let fields = [c.id, c.h_sampling, c.v_sampling, c.quant_table_index, c.dc_table_index, c.ac_table_index];
        for (j, f) in fields.into_iter().enumerate() {
            v[base + j] = f as f64;
        }
    }
    v[OPTIMIZED] = container.optimized_coding as u8 as f64;
    v[PROGRESSIVE] = container.progressive as u8 as f64;
    v[WIDTH] = container.width as f64;
    v[HEIGHT] = container.height as f64;
    v
}

pub fn extract_header(map: &SegmentMap) -> Vec<u32> {
    let count = |k| map.count(k) as u32;
    vec![
        count(SegmentKind::Dht),
        map.unused_regions.len() as u32,
        count(SegmentKind::App(13)),
        count(SegmentKind::App(2)),
        count(SegmentKind::Sof(0)),
        count(SegmentKind::Sof(2)),
        count(SegmentKind::Com),
        count(SegmentKind::Dri),
    ]
}

/// Descriptors of one file. Absent descriptors were not requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: String,
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dct: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<Vec<u32>>,
}

impl FeatureRecord {
    /// The descriptor as reals, if present.
    pub fn vector(&self, kind: FeatureKind) -> Option<Vec<f64>> {
        match kind {
            FeatureKind::Dct => self.dct.clone(),
            FeatureKind::Meta => self.meta.clone(),
            FeatureKind::Header => self.header.as_ref().map(|h| h.iter().map(|&x| x as f64).collect()),
        }
    }

    pub fn has(&self, kind: FeatureKind) -> bool {
        match kind {
            FeatureKind::Dct => self.dct.is_some(),
            FeatureKind::Meta => self.meta.is_some(),
            FeatureKind::Header => self.header.is_some(),
        }
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        FeatureKind::ALL.into_iter().filter(|&k| self.has(k)).collect()
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.kinds().is_empty() {
            return Err(FeatureError::InvalidArgument(format!("record `{}` has no descriptor", self.id)));
        }
        let lens = [
            (FeatureKind::Dct, self.dct.as_ref().map(Vec::len)),
            (FeatureKind::Meta, self.meta.as_ref().map(Vec::len)),
            (FeatureKind::Header, self.header.as_ref().map(Vec::len)),
        ];
        for (kind, len) in lens {
            if let Some(len) = len {
                if len != kind.dim() {
                    return Err(FeatureError::InvalidArgument(format!(
                        "record `{}`: {kind} has {len} values, expected {}",
                        self.id,
                        kind.dim()
                    )));
                }
            }
        }
        if let Some(d) = &self.dct {
            if d.iter().any(|x| !x.is_finite()) {
                return Err(FeatureError::InvalidArgument(format!("record `{}`: non-finite dct value", self.id)));
            }
        }
        if let Some(m) = &self.meta {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(FeatureError::InvalidArgument(format!("record `{}`: non-finite meta value", self.id)));
            }
        }
        Ok(())
    }
}

/// Computes the requested descriptors. The entropy-coded data is decoded
/// only when `dct` is requested.
pub fn extract_all(bytes: &[u8], subset: &FeatureSubset) -> Result<FeatureRecord, FeatureError> {
    if subset.is_empty() {
        return Err(FeatureError::InvalidArgument("feature subset is empty".into()));
    }
    let tag = |kind| move |source| FeatureError::Descriptor { kind, source };
    let mut record = FeatureRecord {
        id: String::new(),
        label: None,
        dct: None,
        meta: None,
        header: None,
    };
    if subset.contains(FeatureKind::Header) {
        let map = jpeg::scan_segments(bytes).map_err(tag(FeatureKind::Header))?;
        record.header = Some(extract_header(&map));
    }
    if subset.contains(FeatureKind::Meta) {
        let container = jpeg::parse_container(bytes).map_err(tag(FeatureKind::Meta))?;
        record.meta = Some(extract_meta(&container));
    }
    if subset.contains(FeatureKind::Dct) {
        let plane = jpeg::decode_luma(bytes).map_err(tag(FeatureKind::Dct))?;
        record.dct = Some(extract_dct(&plane)?);
    }
    Ok(record)
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[FeatureRecord]) -> Result<(), FeatureError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| FeatureError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records, skipping blank lines. Every record is validated.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<FeatureRecord>, FeatureError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FeatureRecord = serde_json::from_str(&line).map_err(|e| FeatureError::Jsonl {
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|e| FeatureError::Jsonl {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
