// Marker codes (second byte after 0xFF).

pub const SOF0: u8 = 0xC0;
pub const SOF1: u8 = 0xC1;
pub const SOF2: u8 = 0xC2;
pub const DHT: u8 = 0xC4;
pub const DAC: u8 = 0xCC;
pub const RST0: u8 = 0xD0;
pub const RST7: u8 = 0xD7;
pub const SOI: u8 = 0xD8;
pub const EOI: u8 = 0xD9;
pub const SOS: u8 = 0xDA;
pub const DQT: u8 = 0xDB;
pub const DNL: u8 = 0xDC;
pub const DRI: u8 = 0xDD;
pub const APP0: u8 = 0xE0;
pub const APP15: u8 = 0xEF;
pub const COM: u8 = 0xFE;
pub const TEM: u8 = 0x01;

use serde::{Deserialize, Serialize};

/// Classified segment marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    Soi,
    Eoi,
    /// Start of frame; the payload is the SOF number (0 = baseline,
    /// 2 = progressive, ...).
    Sof(u8),
    Dht,
    Dac,
    Sos,
    Dqt,
    Dnl,
    Dri,
    /// Application segment APPn, n in 0..=15.
    App(u8),
    Com,
    Unknown(u8),
}

impl SegmentKind {
    pub fn from_marker(code: u8) -> Self {
        match code {
            SOI => Self::Soi,
            EOI => Self::Eoi,
            DHT => Self::Dht,
            DAC => Self::Dac,
            SOS => Self::Sos,
            DQT => Self::Dqt,
            DNL => Self::Dnl,
            DRI => Self::Dri,
            COM => Self::Com,
            0xC8 => Self::Unknown(0xC8),
            0xC0..=0xCF => Self::Sof(code - 0xC0),
            APP0..=APP15 => Self::App(code - APP0),
            other => Self::Unknown(other),
        }
    }
}

/// Markers that carry no length field.
pub fn is_standalone(code: u8) -> bool {
    matches!(code, SOI | EOI | TEM | RST0..=RST7)
}

/// Whether `code` may start a segment outside entropy-coded data.
pub fn is_segment_marker(code: u8) -> bool {
    code == TEM || ((0xC0..=0xFE).contains(&code) && !(RST0..=RST7).contains(&code))
}

/// Arithmetic-coded frame types (SOF9..11, SOF13..15).
pub fn is_arithmetic_sof(code: u8) -> bool {
    matches!(code, 0xC9..=0xCB | 0xCD..=0xCF)
}
