use serde::Deserialize;

use super::{HdMode, HdPipeConfig, NetworkShape, PerfError, SystolicConfig};

/// Key-value accelerator description (TOML syntax).
///
/// ```toml
/// clock_mhz = 344.0
/// pe_budget = 1024
/// layers = [617, 561, 561]
/// # w_sys/h_sys pin the array; omitted, the compiler searches.
///
/// [hd]
/// dh = 16
/// dl = 561
/// classes = 26
/// mode = "parallel"
/// ```
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerfConfig {
    #[serde(default = "default_clock")]
    pub clock_mhz: f64,
    #[serde(default = "default_budget")]
    pub pe_budget: usize,
    #[serde(default)]
    pub dram_bandwidth: Option<f64>,
    #[serde(default)]
    pub w_sys: Option<usize>,
    #[serde(default)]
    pub h_sys: Option<usize>,
    #[serde(default)]
    pub layers: Vec<usize>,
    #[serde(default)]
    pub hd: Option<HdSection>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdSection {
    pub dh: usize,
    pub dl: usize,
    pub classes: usize,
    #[serde(default = "default_fanin")]
    pub fanin: usize,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub chunk_width: Option<usize>,
    #[serde(default)]
    pub adder_limit: Option<usize>,
}

fn default_clock() -> f64 {
    344.0
}

fn default_budget() -> usize {
    1024
}

fn default_fanin() -> usize {
    16
}

fn default_mode() -> String {
    "parallel".into()
}

impl PerfConfig {
    pub fn parse(text: &str) -> Result<Self, PerfError> {
        Ok(toml::from_str(text)?)
    }

    pub fn shape(&self) -> Result<NetworkShape, PerfError> {
        NetworkShape::new(self.layers.clone())
    }

    /// Array settings; `w_sys`/`h_sys` are placeholders when unpinned.
    pub fn systolic(&self) -> SystolicConfig {
        SystolicConfig {
            w_sys: self.w_sys.unwrap_or(1),
            h_sys: self.h_sys.unwrap_or(1),
            clock_mhz: self.clock_mhz,
            pe_budget: self.pe_budget,
            dram_bandwidth: self.dram_bandwidth,
        }
    }

    /// `Some` when both array dimensions are given.
    pub fn pinned(&self) -> Result<Option<SystolicConfig>, PerfError> {
        match (self.w_sys, self.h_sys) {
            (Some(_), Some(_)) => {
                let cfg = self.systolic();
                cfg.validate()?;
                Ok(Some(cfg))
            }
            (None, None) => Ok(None),
            _ => Err(PerfError::Invalid("w_sys and h_sys must be given together".into())),
        }
    }

    pub fn hd_pipe(&self) -> Result<Option<HdPipeConfig>, PerfError> {
        let Some(hd) = &self.hd else { return Ok(None) };
        let mode = match (hd.mode.as_str(), hd.chunk_width) {
            ("parallel", _) => HdMode::Parallel,
            ("sequential", Some(chunk_width)) => HdMode::Sequential { chunk_width },
            ("sequential", None) => return Err(PerfError::Invalid("sequential mode needs chunk_width".into())),
            (other, _) => return Err(PerfError::Invalid(format!("unknown HD mode {other:?}"))),
        };
        let cfg = HdPipeConfig {
            dh: hd.dh,
            dl: hd.dl,
            classes: hd.classes,
            fanin: hd.fanin,
            mode,
            adder_limit: hd.adder_limit,
        };
        cfg.validate()?;
        Ok(Some(cfg))
    }
}
