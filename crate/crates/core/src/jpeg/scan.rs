use std::ops::Range;

use super::markers::{self, SegmentKind};
use super::JpegError;

/// One marker segment. `declared_length` is the value of the 2-byte length
/// field (which counts itself), or 0 for standalone markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JpegSegment {
    pub marker: u8,
    pub offset: usize,
    pub declared_length: u16,
    pub kind: SegmentKind,
}

impl JpegSegment {
    /// Bytes occupied by marker, length field and payload.
    pub fn total_len(&self) -> usize {
        2 + self.declared_length as usize
    }

    /// Byte range of the payload (after the length field).
    pub fn payload_range(&self) -> Range<usize> {
        if self.declared_length == 0 {
            self.offset + 2..self.offset + 2
        } else {
            self.offset + 4..self.offset + 2 + self.declared_length as usize
        }
    }

    pub fn payload<'a>(&self, bytes: &'a [u8]) -> &'a [u8] {
        &bytes[self.payload_range()]
    }
}

/// Result of a structural scan over a JPEG file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SegmentMap {
    pub segments: Vec<JpegSegment>,
    /// Maximal runs of bytes outside any segment or entropy-coded span
    /// (padding, garbage, fill bytes, trailing data after EOI).
    pub unused_regions: Vec<Range<usize>>,
    /// Entropy-coded data following each SOS header.
    pub entropy_spans: Vec<Range<usize>>,
}

impl SegmentMap {
    pub fn has_eoi(&self) -> bool {
        self.segments.iter().any(|s| s.kind == SegmentKind::Eoi)
    }

    pub fn count(&self, kind: SegmentKind) -> usize {
        self.segments.iter().filter(|s| s.kind == kind).count()
    }

    pub fn iter_kind(&self, kind: SegmentKind) -> impl Iterator<Item = &JpegSegment> {
        self.segments.iter().filter(move |s| s.kind == kind)
    }
}

/// Walks the marker structure of `bytes`.
///
/// Entropy-coded data after each SOS (including stuffed `FF00` and RSTn) is
/// skipped and recorded as a span. Bytes that cannot start a segment are
/// collected into unused regions up to the next valid marker.
pub fn scan_segments(bytes: &[u8]) -> Result<SegmentMap, JpegError> {
    if bytes.len() < 2 || bytes[0] != 0xFF || bytes[1] != markers::SOI {
        return Err(JpegError::MissingSoi);
    }
    let mut map = SegmentMap::default();
    map.segments.push(JpegSegment {
        marker: markers::SOI,
        offset: 0,
        declared_length: 0,
        kind: SegmentKind::Soi,
    });

    let len = bytes.len();
    let mut pos = 2;
    while pos < len {
        if !starts_marker(bytes, pos) {
            let end = next_marker(bytes, pos + 1).unwrap_or(len);
            map.unused_regions.push(pos..end);
            pos = end;
            continue;
        }

        let code = bytes[pos + 1];
        let kind = SegmentKind::from_marker(code);
        if markers::is_standalone(code) {
            map.segments.push(JpegSegment {
                marker: code,
                offset: pos,
                declared_length: 0,
                kind,
            });
            pos += 2;
            if code == markers::EOI && pos < len {
                map.unused_regions.push(pos..len);
                pos = len;
            }
            continue;
        }

        if pos + 4 > len {
            return Err(JpegError::Truncated { offset: pos });
        }
        let declared = u16::from_be_bytes([bytes[pos + 2], bytes[pos + 3]]);
        if declared < 2 {
            return Err(JpegError::InvalidLength {
                offset: pos,
                length: declared,
            });
        }
        let end = pos + 2 + declared as usize;
        if end > len {
            return Err(JpegError::PayloadOverrun {
                offset: pos,
                declared,
                available: len - pos - 2,
            });
        }
        map.segments.push(JpegSegment {
            marker: code,
            offset: pos,
            declared_length: declared,
            kind,
        });
        pos = end;

        if kind == SegmentKind::Sos {
            let stop = entropy_end(bytes, pos);
            if stop > pos {
                map.entropy_spans.push(pos..stop);
            }
            pos = stop;
        }
    }
    Ok(map)
}

fn starts_marker(bytes: &[u8], pos: usize) -> bool {
    pos + 1 < bytes.len() && bytes[pos] == 0xFF && markers::is_segment_marker(bytes[pos + 1])
}

fn next_marker(bytes: &[u8], from: usize) -> Option<usize> {
    (from..bytes.len().saturating_sub(1)).find(|&i| starts_marker(bytes, i))
}

/// First offset at or after `from` holding a marker that terminates
/// entropy-coded data, or the end of input.
fn entropy_end(bytes: &[u8], from: usize) -> usize {
    let mut i = from;
    while i + 1 < bytes.len() {
        if bytes[i] == 0xFF {
            let next = bytes[i + 1];
            if next == 0x00 || (markers::RST0..=markers::RST7).contains(&next) {
                i += 2;
                continue;
            }
            if markers::is_segment_marker(next) {
                return i;
            }
        }
        i += 1;
    }
    bytes.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(code: u8, payload: &[u8]) -> Vec<u8> {
        let mut out = vec![0xFF, code];
        out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
        out.extend_from_slice(payload);
        out
    }

    fn accounted(map: &SegmentMap) -> usize {
        map.segments.iter().map(JpegSegment::total_len).sum::<usize>()
            + map.unused_regions.iter().map(|r| r.len()).sum::<usize>()
            + map.entropy_spans.iter().map(|r| r.len()).sum::<usize>()
    }

    #[test]
    fn missing_soi() {
        assert_eq!(scan_segments(b"\x89PNG"), Err(JpegError::MissingSoi));
        assert_eq!(scan_segments(&[]), Err(JpegError::MissingSoi));
        assert_eq!(scan_segments(&[0xFF]), Err(JpegError::MissingSoi));
    }

    #[test]
    fn structural_counts_and_entropy_skipping() {
        let mut f = vec![0xFF, 0xD8];
        f.extend(seg(0xDB, &[0; 65]));
        f.extend(seg(0xDB, &[1; 65]));
        f.extend(seg(0xC4, &[0; 17]));
        f.extend(seg(0xC4, &[0x10; 17]));
        f.extend(seg(0xC0, &[8, 0, 8, 0, 8, 1, 1, 0x11, 0]));
        f.extend(seg(0xDA, &[1, 1, 0, 0, 63, 0]));
        // entropy data with a stuffed byte and a restart marker
        f.extend([0x12, 0xFF, 0x00, 0x34, 0xFF, 0xD0, 0x56]);
        f.extend([0xFF, 0xD9]);
        let map = scan_segments(&f).unwrap();
        assert_eq!(map.count(SegmentKind::Dqt), 2);
        assert_eq!(map.count(SegmentKind::Dht), 2);
        assert_eq!(map.count(SegmentKind::Sof(0)), 1);
        assert_eq!(map.count(SegmentKind::Sos), 1);
        assert!(map.has_eoi());
        assert_eq!(map.entropy_spans.len(), 1);
        assert_eq!(map.entropy_spans[0].len(), 7);
        assert!(map.unused_regions.is_empty());
        assert_eq!(accounted(&map), f.len());
        assert!(map.segments.windows(2).all(|w| w[0].offset < w[1].offset));
    }

    #[test]
    fn padding_after_app1_is_one_unused_region() {
        let mut f = vec![0xFF, 0xD8];
        f.extend(seg(0xE1, b"Exif\0\0abcdef"));
        let pad_start = f.len();
        f.extend([0u8; 16]);
        let dqt_offset = f.len();
        f.extend(seg(0xDB, &[0; 65]));
        f.extend([0xFF, 0xD9]);
        let map = scan_segments(&f).unwrap();
        assert_eq!(map.unused_regions, vec![pad_start..pad_start + 16]);
        assert_eq!(dqt_offset - pad_start, 16);
        assert_eq!(map.segments[2].offset, dqt_offset);
        assert_eq!(accounted(&map), f.len());
    }

    #[test]
    fn fill_bytes_and_trailing_data_are_unused() {
        let mut f = vec![0xFF, 0xD8, 0xFF, 0xFF];
        f.extend(seg(0xFE, b"hi"));
        f.extend([0xFF, 0xD9, 1, 2, 3]);
        let map = scan_segments(&f).unwrap();
        assert_eq!(map.unused_regions, vec![2..4, f.len() - 3..f.len()]);
        assert_eq!(map.count(SegmentKind::Com), 1);
        assert_eq!(accounted(&map), f.len());
    }

    #[test]
    fn truncated_and_overrun_errors() {
        let f = [0xFF, 0xD8, 0xFF, 0xDB, 0x00];
        assert_eq!(scan_segments(&f), Err(JpegError::Truncated { offset: 2 }));
        let f = [0xFF, 0xD8, 0xFF, 0xDB, 0x00, 0x10, 1, 2];
        assert!(matches!(
            scan_segments(&f),
            Err(JpegError::PayloadOverrun { offset: 2, declared: 16, .. })
        ));
        let f = [0xFF, 0xD8, 0xFF, 0xDB, 0x00, 0x01];
        assert!(matches!(scan_segments(&f), Err(JpegError::InvalidLength { .. })));
    }

    #[test]
    fn entropy_to_eof_without_eoi() {
        let mut f = vec![0xFF, 0xD8];
        f.extend(seg(0xDA, &[1, 1, 0, 0, 63, 0]));
        f.extend([1, 2, 3, 0xFF]);
        let map = scan_segments(&f).unwrap();
        assert!(!map.has_eoi());
        assert_eq!(accounted(&map), f.len());
    }

    proptest! {
        #[test]
        fn scan_is_total_and_accounts_for_every_byte(tail in proptest::collection::vec(any::<u8>(), 0..512)) {
            let mut f = vec![0xFF, 0xD8];
            f.extend(tail);
            if let Ok(map) = scan_segments(&f) {
                prop_assert_eq!(accounted(&map), f.len());
                prop_assert!(map.segments.windows(2).all(|w| w[0].offset < w[1].offset));
            }
        }
    }
}
