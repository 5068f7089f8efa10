use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::encoder::QuantTables;
use super::SimulatorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsampling {
    #[serde(rename = "4:4:4")]
    S444,
    #[serde(rename = "4:2:0")]
    S420,
}

/// A container segment a platform adds to every file it serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Injection {
    App13,
    App2,
    Com,
    /// Restart interval in MCUs.
    Dri(u16),
}

impl fmt::Display for Injection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Injection::App13 => write!(f, "APP13"),
            Injection::App2 => write!(f, "APP2"),
            Injection::Com => write!(f, "COM"),
            Injection::Dri(n) => write!(f, "DRI({n})"),
        }
    }
}

impl FromStr for Injection {
    type Err = SimulatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t.to_ascii_uppercase().as_str() {
            "APP13" => return Ok(Self::App13),
            "APP2" => return Ok(Self::App2),
            "COM" => return Ok(Self::Com),
            _ => {}
        }
        let upper = t.to_ascii_uppercase();
        if let Some(arg) = upper.strip_prefix("DRI(").and_then(|r| r.strip_suffix(')')) {
            let n: u16 = arg
                .trim()
                .parse()
                .map_err(|_| SimulatorError::InvalidProfile(format!("bad DRI interval in `{s}`")))?;
            if n == 0 {
                return Err(SimulatorError::InvalidProfile("DRI interval must be > 0".into()));
            }
            return Ok(Self::Dri(n));
        }
        Err(SimulatorError::InvalidProfile(format!("unknown injected segment `{s}`")))
    }
}

impl Serialize for Injection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Injection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Quantization used when a platform re-encodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantization {
    Quality(u8),
    /// Explicit zigzag-order tables.
    Tables {
        luma: Vec<u16>,
        chroma: Vec<u16>,
    },
}

impl Quantization {
    pub fn tables(&self) -> Result<QuantTables, SimulatorError> {
        match self {
            Quantization::Quality(q) => Ok(QuantTables::from_quality(*q)),
            Quantization::Tables { luma, chroma } => {
                let conv = |v: &Vec<u16>| -> Result<[u16; 64], SimulatorError> {
                    let arr: [u16; 64] = v.as_slice().try_into().map_err(|_| {
                        SimulatorError::InvalidProfile("quantization tables need 64 entries".into())
                    })?;
                    if arr.iter().any(|&x| x == 0 || x > 255) {
                        return Err(SimulatorError::InvalidProfile(
                            "quantization entries must be in 1..=255".into(),
                        ));
                    }
                    Ok(arr)
                };
                Ok(QuantTables {
                    luma: conv(luma)?,
                    chroma: conv(chroma)?,
                })
            }
        }
    }
}

/// How one emulated platform transforms an uploaded JPEG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformProfile {
    pub name: String,
    #[serde(alias = "quality")]
    pub quantization: Quantization,
    #[serde(default)]
    pub max_dimension: Option<u32>,
    #[serde(default)]
    pub progressive: bool,
    #[serde(default)]
    pub strip_app_segments: bool,
    #[serde(default)]
    pub inject: Vec<Injection>,
    #[serde(default = "default_subsampling")]
    pub chroma_subsampling: Subsampling,
}

fn default_subsampling() -> Subsampling {
    Subsampling::S420
}

impl PlatformProfile {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        if let Quantization::Quality(q) = self.quantization {
            if !(1..=100).contains(&q) {
                return Err(SimulatorError::InvalidProfile(format!(
                    "{}: quality {q} outside 1..=100",
                    self.name
                )));
            }
        }
        self.quantization.tables()?;
        if let Some(m) = self.max_dimension {
            if m < 16 {
                return Err(SimulatorError::InvalidProfile(format!(
                    "{}: max_dimension must be at least 16",
                    self.name
                )));
            }
        }
        if self.inject.iter().filter(|i| matches!(i, Injection::Dri(_))).count() > 1 {
            return Err(SimulatorError::InvalidProfile(format!(
                "{}: at most one DRI injection",
                self.name
            )));
        }
        Ok(())
    }

    pub fn restart_interval(&self) -> Option<u16> {
        self.inject.iter().find_map(|i| match i {
            Injection::Dri(n) => Some(*n),
            _ => None,
        })
    }

    /// Facebook-like: medium quality, large resize bound, ICC profile kept.
    pub fn fb_like() -> Self {
        Self {
            name: "fb-like".into(),
            quantization: Quantization::Quality(71),
            max_dimension: Some(2048),
            progressive: false,
            strip_app_segments: true,
            inject: vec![Injection::App2],
            chroma_subsampling: Subsampling::S420,
        }
    }

    /// Flickr-like: high quality, no resize, IPTC block and restart markers.
    pub fn fl_like() -> Self {
        Self {
            name: "fl-like".into(),
            quantization: Quantization::Quality(87),
            max_dimension: None,
            progressive: false,
            strip_app_segments: true,
            inject: vec![Injection::App13, Injection::Dri(8)],
            chroma_subsampling: Subsampling::S444,
        }
    }

    /// Twitter-like: progressive, comment tag, 1200 px bound.
    pub fn tw_like() -> Self {
        Self {
            name: "tw-like".into(),
            quantization: Quantization::Quality(85),
            max_dimension: Some(1200),
            progressive: true,
            strip_app_segments: true,
            inject: vec![Injection::Com],
            chroma_subsampling: Subsampling::S420,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "fb-like" => Some(Self::fb_like()),
            "fl-like" => Some(Self::fl_like()),
            "tw-like" => Some(Self::tw_like()),
            _ => None,
        }
    }
}
