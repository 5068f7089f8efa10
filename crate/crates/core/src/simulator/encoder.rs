//! Baseline and spectral-selection progressive JPEG encoder using the
//! Annex K typical Huffman tables.

use crate::dct;
use crate::jpeg::markers;
use crate::jpeg::tables::{HuffmanSpec, ZIGZAG};
use crate::jpeg::Raster;

use super::profile::Subsampling;

/// Quantization tables in zigzag order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTables {
    pub luma: [u16; 64],
    pub chroma: [u16; 64],
}

impl QuantTables {
    pub fn from_quality(quality: u8) -> Self {
        use crate::jpeg::tables::{scaled_quant_table, STD_CHROMA_QUANT, STD_LUMA_QUANT};
        Self {
            luma: scaled_quant_table(&STD_LUMA_QUANT, quality),
            chroma: scaled_quant_table(&STD_CHROMA_QUANT, quality),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncodeOptions {
    pub tables: QuantTables,
    pub subsampling: Subsampling,
    pub progressive: bool,
    pub restart_interval: Option<u16>,
    /// Extra marker segments `(marker, payload)` written after APP0.
    pub extra_segments: Vec<(u8, Vec<u8>)>,
}

impl EncodeOptions {
    pub fn baseline(quality: u8) -> Self {
        Self {
            tables: QuantTables::from_quality(quality),
            subsampling: Subsampling::S420,
            progressive: false,
            restart_interval: None,
            extra_segments: Vec::new(),
        }
    }
}

struct Component {
    id: u8,
    h: usize,
    v: usize,
    table: usize,
    /// Blocks in the padded (interleaved) grid.
    blocks_w: usize,
    /// Blocks covering the component's own dimensions (non-interleaved scans).
    own_w: usize,
    own_h: usize,
    /// Quantized coefficients per block, natural order.
    coeffs: Vec<[i32; 64]>,
}

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new(out: Vec<u8>) -> Self {
        Self { out, acc: 0, nbits: 0 }
    }

    fn put(&mut self, code: u32, len: u8) {
        if len == 0 {
            return;
        }
        self.acc = (self.acc << len) | (code & ((1u32 << len) - 1));
        self.nbits += len as u32;
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.out.push(byte);
            if byte == 0xFF {
                self.out.push(0x00);
            }
            self.nbits -= 8;
        }
        self.acc &= (1u32 << self.nbits).wrapping_sub(1);
    }

    /// Pads the final partial byte with one bits.
    fn flush(&mut self) {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.put((1u32 << pad) - 1, pad as u8);
        }
    }

    fn raw(&mut self, bytes: &[u8]) {
        debug_assert_eq!(self.nbits, 0);
        self.out.extend_from_slice(bytes);
    }
}

fn magnitude(v: i32) -> (u8, u32) {
    if v == 0 {
        return (0, 0);
    }
    let abs = v.unsigned_abs();
    let size = 32 - abs.leading_zeros();
    let bits = if v < 0 { (v - 1) as u32 } else { v as u32 };
    (size as u8, bits & ((1u32 << size) - 1))
}

fn segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.push(0xFF);
    out.push(marker);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

fn dht_payload(tables: &[(u8, &HuffmanSpec)]) -> Vec<u8> {
    let mut p = Vec::new();
    for (class_dest, spec) in tables {
        p.push(*class_dest);
        p.extend_from_slice(&spec.bits);
        p.extend_from_slice(&spec.values);
    }
    p
}

fn rgb_to_ycbcr(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = -0.168_735_892 * r - 0.331_264_108 * g + 0.5 * b + 128.0;
    let cr = 0.5 * r - 0.418_687_589 * g - 0.081_312_411 * b + 128.0;
    (y, cb, cr)
}

/// Component planes at full resolution.
fn planes(raster: &Raster) -> Vec<Vec<f64>> {
    let n = raster.width * raster.height;
    if raster.channels == 1 {
        return vec![raster.data.iter().map(|&v| v as f64).collect()];
    }
    let mut y = Vec::with_capacity(n);
    let mut cb = Vec::with_capacity(n);
    let mut cr = Vec::with_capacity(n);
    for px in raster.data.chunks_exact(raster.channels) {
        let (a, b, c) = rgb_to_ycbcr(px[0] as f64, px[1] as f64, px[2] as f64);
        y.push(a);
        cb.push(b);
        cr.push(c);
    }
    vec![y, cb, cr]
}

/// 2x2 box downsampling with edge replication.
fn downsample(plane: &[f64], w: usize, h: usize, fx: usize, fy: usize) -> (Vec<f64>, usize, usize) {
    let ow = w.div_ceil(fx);
    let oh = h.div_ceil(fy);
    let mut out = Vec::with_capacity(ow * oh);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut s = 0.0;
            for dy in 0..fy {
                for dx in 0..fx {
                    let x = (ox * fx + dx).min(w - 1);
                    let y = (oy * fy + dy).min(h - 1);
                    s += plane[y * w + x];
                }
            }
            out.push(s / (fx * fy) as f64);
        }
    }
    (out, ow, oh)
}

fn quantize_blocks(
    plane: &[f64],
    w: usize,
    h: usize,
    blocks_w: usize,
    blocks_h: usize,
    table: &[u16; 64],
) -> Vec<[i32; 64]> {
    let mut natural_q = [0f64; 64];
    for (k, &n) in ZIGZAG.iter().enumerate() {
        natural_q[n] = table[k] as f64;
    }
    let mut out = Vec::with_capacity(blocks_w * blocks_h);
    for by in 0..blocks_h {
        for bx in 0..blocks_w {
            let mut block = [0.0; 64];
            for y in 0..8 {
                let sy = (by * 8 + y).min(h - 1);
                for x in 0..8 {
                    let sx = (bx * 8 + x).min(w - 1);
                    block[y * 8 + x] = plane[sy * w + sx] - 128.0;
                }
            }
            let c = dct::forward(&block);
            let mut q = [0i32; 64];
            for i in 0..64 {
                let limit = if i == 0 { 2047.0 } else { 1023.0 };
                q[i] = (c[i] / natural_q[i]).round().clamp(-limit, limit) as i32;
            }
            out.push(q);
        }
    }
    out
}

struct ScanSpec {
    components: Vec<usize>,
    ss: u8,
    se: u8,
}

/// Encodes `raster` (gray or RGB) to a complete JFIF byte stream.
pub fn encode(raster: &Raster, opts: &EncodeOptions) -> Vec<u8> {
    assert!(raster.width > 0 && raster.height > 0, "empty raster");
    assert!(raster.width <= u16::MAX as usize && raster.height <= u16::MAX as usize);
    let (w, h) = (raster.width, raster.height);
    let gray = raster.channels == 1;
    let (hmax, vmax) = match (gray, opts.subsampling) {
        (true, _) | (false, Subsampling::S444) => (1, 1),
        (false, Subsampling::S420) => (2, 2),
    };
    let mcux = w.div_ceil(8 * hmax);
    let mcuy = h.div_ceil(8 * vmax);

    let full = planes(raster);
    let mut comps = Vec::with_capacity(full.len());
    for (i, plane) in full.iter().enumerate() {
        let (hs, vs, table) = if i == 0 { (hmax, vmax, 0) } else { (1, 1, 1) };
        let (data, cw, ch) = if hs == hmax && vs == vmax {
            (plane.clone(), w, h)
        } else {
            downsample(plane, w, h, hmax / hs, vmax / vs)
        };
        let blocks_w = mcux * hs;
        let blocks_h = mcuy * vs;
        let qt = if table == 0 { &opts.tables.luma } else { &opts.tables.chroma };
        comps.push(Component {
            id: i as u8 + 1,
            h: hs,
            v: vs,
            table,
            blocks_w,
            own_w: cw.div_ceil(8),
            own_h: ch.div_ceil(8),
            coeffs: quantize_blocks(&data, cw, ch, blocks_w, blocks_h, qt),
        });
    }

    let dc_specs = [HuffmanSpec::std_dc_luma(), HuffmanSpec::std_dc_chroma()];
    let ac_specs = [HuffmanSpec::std_ac_luma(), HuffmanSpec::std_ac_chroma()];
    let dc_codes = [dc_specs[0].code_table(), dc_specs[1].code_table()];
    let ac_codes = [ac_specs[0].code_table(), ac_specs[1].code_table()];

    let mut out = vec![0xFF, markers::SOI];
    segment(
        &mut out,
        markers::APP0,
        &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0],
    );
    for (marker, payload) in &opts.extra_segments {
        segment(&mut out, *marker, payload);
    }
    let n_tables = if gray { 1 } else { 2 };
    for (dest, table) in [&opts.tables.luma, &opts.tables.chroma]
        .iter()
        .enumerate()
        .take(n_tables)
    {
        let mut p = vec![dest as u8];
        p.extend(table.iter().map(|&v| v.min(255) as u8));
        segment(&mut out, markers::DQT, &p);
    }
    let mut sof = vec![8];
    sof.extend_from_slice(&(h as u16).to_be_bytes());
    sof.extend_from_slice(&(w as u16).to_be_bytes());
    sof.push(comps.len() as u8);
    for c in &comps {
        sof.extend_from_slice(&[c.id, ((c.h as u8) << 4) | c.v as u8, c.table as u8]);
    }
    let sof_marker = if opts.progressive { markers::SOF0 + 2 } else { markers::SOF0 };
    segment(&mut out, sof_marker, &sof);

    let all: Vec<usize> = (0..comps.len()).collect();
    let scans: Vec<ScanSpec> = if opts.progressive {
        let mut s = vec![ScanSpec {
            components: all.clone(),
            ss: 0,
            se: 0,
        }];
        for &c in &all {
            s.push(ScanSpec { components: vec![c], ss: 1, se: 5 });
            s.push(ScanSpec { components: vec![c], ss: 6, se: 63 });
        }
        s
    } else {
        vec![ScanSpec {
            components: all.clone(),
            ss: 0,
            se: 63,
        }]
    };

    if !opts.progressive {
        for t in 0..n_tables {
            segment(&mut out, markers::DHT, &dht_payload(&[(t as u8, &dc_specs[t])]));
            segment(&mut out, markers::DHT, &dht_payload(&[(0x10 | t as u8, &ac_specs[t])]));
        }
    }
    if let Some(ri) = opts.restart_interval {
        segment(&mut out, markers::DRI, &ri.to_be_bytes());
    }

    let mut ac_emitted = [false; 2];
    for scan in &scans {
        if opts.progressive {
            if scan.ss == 0 {
                let specs: Vec<(u8, &HuffmanSpec)> =
                    (0..n_tables).map(|t| (t as u8, &dc_specs[t])).collect();
                segment(&mut out, markers::DHT, &dht_payload(&specs));
            } else {
                let t = comps[scan.components[0]].table;
                if !ac_emitted[t] {
                    ac_emitted[t] = true;
                    segment(&mut out, markers::DHT, &dht_payload(&[(0x10 | t as u8, &ac_specs[t])]));
                }
            }
        }
        let mut sos = vec![scan.components.len() as u8];
        for &ci in &scan.components {
            let t = comps[ci].table as u8;
            sos.extend_from_slice(&[comps[ci].id, (t << 4) | t]);
        }
        sos.extend_from_slice(&[scan.ss, scan.se, 0]);
        segment(&mut out, markers::SOS, &sos);
        out = encode_scan(out, &comps, scan, mcux, mcuy, opts.restart_interval, &dc_codes, &ac_codes);
    }
    out.extend_from_slice(&[0xFF, markers::EOI]);
    out
}

#[allow(clippy::too_many_arguments)]
fn encode_scan(
    out: Vec<u8>,
    comps: &[Component],
    scan: &ScanSpec,
    mcux: usize,
    mcuy: usize,
    restart_interval: Option<u16>,
    dc_codes: &[[(u16, u8); 256]; 2],
    ac_codes: &[[(u16, u8); 256]; 2],
) -> Vec<u8> {
    let mut bw = BitWriter::new(out);
    let mut pred = vec![0i32; comps.len()];
    let ri = restart_interval.unwrap_or(0) as usize;
    let mut units = 0usize;
    let mut rst = 0u8;

    let emit_block = |bw: &mut BitWriter, ci: usize, block: &[i32; 64], pred: &mut [i32]| {
        let t = comps[ci].table;
        if scan.ss == 0 {
            let diff = block[0] - pred[ci];
            pred[ci] = block[0];
            let (size, bits) = magnitude(diff);
            let (code, len) = dc_codes[t][size as usize];
            bw.put(code as u32, len);
            bw.put(bits, size);
        }
        if scan.se > 0 {
            let start = scan.ss.max(1) as usize;
            let mut run = 0u32;
            for k in start..=scan.se as usize {
                let v = block[ZIGZAG[k]];
                if v == 0 {
                    run += 1;
                    continue;
                }
                while run > 15 {
                    let (code, len) = ac_codes[t][0xF0];
                    bw.put(code as u32, len);
                    run -= 16;
                }
                let (size, bits) = magnitude(v);
                let sym = ((run as usize) << 4) | size as usize;
                let (code, len) = ac_codes[t][sym];
                bw.put(code as u32, len);
                bw.put(bits, size);
                run = 0;
            }
            if run > 0 {
                let (code, len) = ac_codes[t][0x00];
                bw.put(code as u32, len);
            }
        }
    };

    let restart = |bw: &mut BitWriter, pred: &mut [i32], units: &mut usize, rst: &mut u8| {
        if ri > 0 && *units > 0 && *units % ri == 0 {
            bw.flush();
            bw.raw(&[0xFF, markers::RST0 + *rst]);
            *rst = (*rst + 1) % 8;
            pred.iter_mut().for_each(|p| *p = 0);
        }
    };

    if scan.components.len() == 1 {
        let ci = scan.components[0];
        let c = &comps[ci];
        for by in 0..c.own_h {
            for bx in 0..c.own_w {
                restart(&mut bw, &mut pred, &mut units, &mut rst);
                emit_block(&mut bw, ci, &c.coeffs[by * c.blocks_w + bx], &mut pred);
                units += 1;
            }
        }
    } else {
        for my in 0..mcuy {
            for mx in 0..mcux {
                restart(&mut bw, &mut pred, &mut units, &mut rst);
                for &ci in &scan.components {
                    let c = &comps[ci];
                    for v in 0..c.v {
                        for hh in 0..c.h {
                            let by = my * c.v + v;
                            let bx = mx * c.h + hh;
                            emit_block(&mut bw, ci, &c.coeffs[by * c.blocks_w + bx], &mut pred);
                        }
                    }
                }
                units += 1;
            }
        }
    }
    bw.flush();
    bw.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpeg::{decode_luma, decode_pixels, parse_container, SegmentKind};

    fn gradient(w: usize, h: usize, channels: usize) -> Raster {
        let mut data = Vec::with_capacity(w * h * channels);
        for y in 0..h {
            for x in 0..w {
                for c in 0..channels {
                    data.push(((x * 7 + y * 3 + c * 40) % 256) as u8);
                }
            }
        }
        Raster { width: w, height: h, channels, data }
    }

    #[test]
    fn magnitude_categories() {
        assert_eq!(magnitude(0), (0, 0));
        assert_eq!(magnitude(1), (1, 1));
        assert_eq!(magnitude(-1), (1, 0));
        assert_eq!(magnitude(-3), (2, 0b00));
        assert_eq!(magnitude(5), (3, 0b101));
        assert_eq!(magnitude(-5), (3, 0b010));
    }

    #[test]
    fn constant_plane_quality_100_decodes_to_128() {
        let r = Raster { width: 8, height: 8, channels: 1, data: vec![128; 64] };
        let bytes = encode(&r, &EncodeOptions::baseline(100));
        let plane = decode_luma(&bytes).unwrap();
        assert_eq!((plane.width, plane.height), (8, 8));
        assert!(plane.samples.iter().all(|&v| (v as i32 - 128).abs() <= 1));
    }

    #[test]
    fn two_block_gradient_round_trip_at_quality_100() {
        let mut data = Vec::new();
        for y in 0..8 {
            for x in 0..16 {
                data.push((x * 14 + y * 2) as u8);
            }
        }
        let r = Raster { width: 16, height: 8, channels: 1, data: data.clone() };
        let plane = decode_luma(&encode(&r, &EncodeOptions::baseline(100))).unwrap();
        let max_err = plane
            .samples
            .iter()
            .zip(&data)
            .map(|(&a, &b)| (a as i32 - b as i32).abs())
            .max()
            .unwrap();
        assert!(max_err <= 2, "max error {max_err}");
    }

    #[test]
    fn every_mode_decodes_with_matching_dimensions() {
        for &(w, h) in &[(1, 1), (17, 9), (40, 33)] {
            for channels in [1, 3] {
                for sub in [Subsampling::S420, Subsampling::S444] {
                    for progressive in [false, true] {
                        for ri in [None, Some(1), Some(3)] {
                            let r = gradient(w, h, channels);
                            let mut o = EncodeOptions::baseline(90);
                            o.subsampling = sub;
                            o.progressive = progressive;
                            o.restart_interval = ri;
                            let bytes = encode(&r, &o);
                            let px = decode_pixels(&bytes).unwrap_or_else(|e| {
                                panic!("{w}x{h} c{channels} {sub:?} p{progressive} {ri:?}: {e}")
                            });
                            assert_eq!((px.width, px.height, px.channels), (w, h, channels));
                            let err: f64 = px
                                .data
                                .iter()
                                .zip(&r.data)
                                .map(|(&a, &b)| (a as f64 - b as f64).abs())
                                .sum::<f64>()
                                / r.data.len() as f64;
                            assert!(err < 12.0, "mean abs error {err}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn progressive_and_baseline_luma_agree() {
        let r = gradient(48, 40, 3);
        let mut o = EncodeOptions::baseline(80);
        let base = decode_luma(&encode(&r, &o)).unwrap();
        o.progressive = true;
        let prog = decode_luma(&encode(&r, &o)).unwrap();
        assert_eq!(base, prog);
    }

    #[test]
    fn container_reflects_options() {
        let r = gradient(32, 16, 3);
        let mut o = EncodeOptions::baseline(50);
        o.restart_interval = Some(8);
        o.extra_segments.push((0xFE, b"hello".to_vec()));
        let bytes = encode(&r, &o);
        let c = parse_container(&bytes).unwrap();
        assert_eq!(c.quant_tables[0].unwrap(), QuantTables::from_quality(50).luma);
        assert_eq!(c.quant_tables[1].unwrap(), QuantTables::from_quality(50).chroma);
        assert_eq!(c.restart_interval, Some(8));
        assert_eq!(c.map.count(SegmentKind::Dht), 4);
        assert_eq!(c.map.count(SegmentKind::Com), 1);
        assert!(!c.optimized_coding);
        assert_eq!(c.components[0].h_sampling, 2);
        assert_eq!(c.components[1].ac_table_index, 1);
        assert!(c.map.unused_regions.is_empty());
    }
}
