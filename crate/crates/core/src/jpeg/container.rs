use super::markers::{self, SegmentKind};
use super::scan::{scan_segments, SegmentMap};
use super::tables::HuffmanSpec;
use super::JpegError;

/// Frame component as declared in SOF, with the entropy table selectors of
/// the first scan that references it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentInfo {
    pub id: u8,
    pub h_sampling: u8,
    pub v_sampling: u8,
    pub quant_table_index: u8,
    pub dc_table_index: u8,
    pub ac_table_index: u8,
}

/// A DHT table definition in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanDefinition {
    pub ac: bool,
    pub destination: u8,
    pub spec: HuffmanSpec,
}

/// The parsed container of a JPEG file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JpegContainer {
    pub map: SegmentMap,
    /// Quantization tables by destination id, zigzag order.
    pub quant_tables: [Option<[u16; 64]>; 4],
    pub huffman_tables: Vec<HuffmanDefinition>,
    pub huffman_table_count_dc: usize,
    pub huffman_table_count_ac: usize,
    pub components: Vec<ComponentInfo>,
    /// SOF number of the frame header (0 baseline, 1 extended, 2 progressive).
    pub frame_type: u8,
    pub precision: u8,
    pub progressive: bool,
    pub optimized_coding: bool,
    pub width: u16,
    pub height: u16,
    pub restart_interval: Option<u16>,
}

impl JpegContainer {
    pub fn parse(bytes: &[u8]) -> Result<Self, JpegError> {
        parse_container(bytes)
    }

    pub fn segments(&self) -> &[super::JpegSegment] {
        &self.map.segments
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8], base: usize) -> Self {
        Self { data, pos: 0, base }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn malformed(&self, what: &'static str) -> JpegError {
        JpegError::Malformed {
            offset: self.base + self.pos,
            what,
        }
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, JpegError> {
        let b = *self.data.get(self.pos).ok_or_else(|| self.malformed(what))?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, JpegError> {
        let hi = self.u8(what)?;
        let lo = self.u8(what)?;
        Ok(u16::from_be_bytes([hi, lo]))
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], JpegError> {
        if self.remaining() < n {
            return Err(self.malformed(what));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// Parses quantization, Huffman, frame, scan and restart information.
pub fn parse_container(bytes: &[u8]) -> Result<JpegContainer, JpegError> {
    let map = scan_segments(bytes)?;

    let mut quant_tables: [Option<[u16; 64]>; 4] = [None; 4];
    let mut huffman_tables = Vec::new();
    let mut frame: Option<(u8, u8, u16, u16, Vec<ComponentInfo>)> = None;
    let mut dc_assigned: Vec<bool> = Vec::new();
    let mut ac_assigned: Vec<bool> = Vec::new();
    let mut restart_interval = None;

    for seg in &map.segments {
        let base = seg.offset + 4;
        match seg.kind {
            SegmentKind::Dqt => {
                let mut c = Cursor::new(seg.payload(bytes), base);
                while c.remaining() > 0 {
                    let pq_tq = c.u8("DQT header")?;
                    let (precision, dest) = (pq_tq >> 4, pq_tq & 0x0F);
                    if precision > 1 || dest > 3 {
                        return Err(c.malformed("DQT precision/destination"));
                    }
                    let mut table = [0u16; 64];
                    for entry in table.iter_mut() {
                        *entry = if precision == 0 {
                            c.u8("DQT entries")? as u16
                        } else {
                            c.u16("DQT entries")?
                        };
                        if *entry == 0 {
                            return Err(c.malformed("zero quantization entry"));
                        }
                    }
                    quant_tables[dest as usize] = Some(table);
                }
            }
            SegmentKind::Dht => {
                let mut c = Cursor::new(seg.payload(bytes), base);
                while c.remaining() > 0 {
                    let tc_th = c.u8("DHT header")?;
                    let (class, dest) = (tc_th >> 4, tc_th & 0x0F);
                    if class > 1 || dest > 3 {
                        return Err(c.malformed("DHT class/destination"));
                    }
                    let mut bits = [0u8; 16];
                    bits.copy_from_slice(c.take(16, "DHT code counts")?);
                    let total: usize = bits.iter().map(|&b| b as usize).sum();
                    if total > 256 {
                        return Err(c.malformed("DHT symbol count"));
                    }
                    let values = c.take(total, "DHT symbols")?.to_vec();
                    huffman_tables.push(HuffmanDefinition {
                        ac: class == 1,
                        destination: dest,
                        spec: HuffmanSpec { bits, values },
                    });
                }
            }
            SegmentKind::Sof(n) => {
                let code = markers::SOF0 + n;
                if markers::is_arithmetic_sof(code) {
                    return Err(JpegError::UnsupportedCoding { marker: code });
                }
                if frame.is_some() {
                    return Err(JpegError::Malformed {
                        offset: seg.offset,
                        what: "multiple frame headers",
                    });
                }
                let mut c = Cursor::new(seg.payload(bytes), base);
                let precision = c.u8("SOF precision")?;
                let height = c.u16("SOF height")?;
                let width = c.u16("SOF width")?;
                let count = c.u8("SOF component count")?;
                if !(1..=4).contains(&count) {
                    return Err(c.malformed("component count"));
                }
                if width == 0 || height == 0 {
                    return Err(c.malformed("zero image dimension"));
                }
                let mut comps = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let id = c.u8("SOF component")?;
                    let hv = c.u8("SOF sampling")?;
                    let tq = c.u8("SOF quant selector")?;
                    let (h, v) = (hv >> 4, hv & 0x0F);
                    if !(1..=4).contains(&h) || !(1..=4).contains(&v) {
                        return Err(c.malformed("sampling factor"));
                    }
                    if tq > 3 {
                        return Err(c.malformed("quant table selector"));
                    }
                    comps.push(ComponentInfo {
                        id,
                        h_sampling: h,
                        v_sampling: v,
                        quant_table_index: tq,
                        dc_table_index: 0,
                        ac_table_index: 0,
                    });
                }
                dc_assigned = vec![false; comps.len()];
                ac_assigned = vec![false; comps.len()];
                frame = Some((n, precision, width, height, comps));
            }
            SegmentKind::Sos => {
                let mut c = Cursor::new(seg.payload(bytes), base);
                let count = c.u8("SOS component count")?;
                let mut selectors = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let id = c.u8("SOS component")?;
                    let tables = c.u8("SOS table selectors")?;
                    selectors.push((id, tables >> 4, tables & 0x0F));
                }
                let ss = c.u8("SOS spectral start")?;
                let se = c.u8("SOS spectral end")?;
                let Some((_, _, _, _, comps)) = frame.as_mut() else {
                    return Err(JpegError::MissingFrame);
                };
                for (id, td, ta) in selectors {
                    if let Some(k) = comps.iter().position(|cmp| cmp.id == id) {
                        if ss == 0 && !dc_assigned[k] {
                            comps[k].dc_table_index = td;
                            dc_assigned[k] = true;
                        }
                        if se > 0 && !ac_assigned[k] {
                            comps[k].ac_table_index = ta;
                            ac_assigned[k] = true;
                        }
                    }
                }
            }
            SegmentKind::Dri => {
                let mut c = Cursor::new(seg.payload(bytes), base);
                restart_interval = Some(c.u16("DRI interval")?);
            }
            _ => {}
        }
    }

    let (frame_type, precision, width, height, components) =
        frame.ok_or(JpegError::MissingFrame)?;
    let huffman_table_count_dc = huffman_tables.iter().filter(|t| !t.ac).count();
    let huffman_table_count_ac = huffman_tables.len() - huffman_table_count_dc;
    let optimized_coding = huffman_tables.iter().any(|t| !t.spec.is_standard(t.ac));

    Ok(JpegContainer {
        map,
        quant_tables,
        huffman_tables,
        huffman_table_count_dc,
        huffman_table_count_ac,
        components,
        frame_type,
        precision,
        progressive: matches!(frame_type, 2 | 6),
        optimized_coding,
        width,
        height,
        restart_interval,
    })
}
