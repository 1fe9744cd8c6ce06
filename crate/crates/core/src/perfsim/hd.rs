use serde::{Deserialize, Serialize};

use super::{ceil_log, PerfError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum HdMode {
    /// All `d^h` positions in flight at once.
    Parallel,
    /// `chunk_width` positions per pass, `ceil(d^h / chunk_width)` passes.
    Sequential { chunk_width: usize },
}

/// HD inference pipeline: level LUT, binding, bundling trees over the
/// `d^l` features, comparators, distance tree adders over `d^h` positions
/// for each of `c` classes, then a binary tree comparator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdPipeConfig {
    pub dh: usize,
    pub dl: usize,
    pub classes: usize,
    /// Inputs per adder.
    pub fanin: usize,
    pub mode: HdMode,
    /// Adders available to each tree stage; a stage needing more is
    /// time-multiplexed. `None` instantiates every adder.
    pub adder_limit: Option<usize>,
}

impl HdPipeConfig {
    pub fn parallel(dh: usize, dl: usize, classes: usize) -> Self {
        Self { dh, dl, classes, fanin: 16, mode: HdMode::Parallel, adder_limit: None }
    }

    pub fn validate(&self) -> Result<(), PerfError> {
        for (name, v) in [("d^h", self.dh), ("d^l", self.dl), ("classes", self.classes)] {
            if v == 0 {
                return Err(PerfError::Zero(name));
            }
        }
        if self.fanin < 2 {
            return Err(PerfError::Invalid(format!("fanin must be at least 2, got {}", self.fanin)));
        }
        if let HdMode::Sequential { chunk_width } = self.mode {
            if chunk_width == 0 || chunk_width > self.dh {
                return Err(PerfError::Invalid(format!("chunk_width must be in 1..={}, got {chunk_width}", self.dh)));
            }
        }
        if self.adder_limit == Some(0) {
            return Err(PerfError::Zero("adder_limit"));
        }
        Ok(())
    }

    /// Cycles through a forest of `trees` reduction trees with `leaves`
    /// inputs each; one cycle per stage unless the stage is adder-limited.
    fn tree_cycles(&self, trees: usize, leaves: usize) -> (u64, u64) {
        let (mut total, mut widest) = (0u64, 0u64);
        let mut n = leaves;
        while n > 1 {
            n = n.div_ceil(self.fanin);
            let stage = match self.adder_limit {
                None => 1,
                Some(limit) => (trees * n).div_ceil(limit).max(1) as u64,
            };
            total += stage;
            widest = widest.max(stage);
        }
        (total, widest)
    }

    /// `(latency, slowest stage)` for one pass over `width` positions.
    fn pass(&self, width: usize) -> (u64, u64) {
        let (bundle, bundle_stage) = self.tree_cycles(width, self.dl);
        let (distance, distance_stage) = self.tree_cycles(self.classes, width);
        let argmin = ceil_log(2, self.classes) as u64;
        // LUT read, bind and threshold compare are one cycle each.
        (3 + bundle + distance + argmin, bundle_stage.max(distance_stage).max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HdLatency {
    /// Cycles from sample in to prediction out.
    pub depth: u64,
    /// Cycles between successive predictions.
    pub interval: u64,
    /// Predictions per cycle.
    pub throughput: f64,
}

pub fn hd_latency(cfg: &HdPipeConfig) -> Result<HdLatency, PerfError> {
    cfg.validate()?;
    let (depth, interval) = match cfg.mode {
        HdMode::Parallel => cfg.pass(cfg.dh),
        HdMode::Sequential { chunk_width } => {
            let passes = cfg.dh.div_ceil(chunk_width) as u64;
            let total = passes * cfg.pass(chunk_width).0;
            (total, total)
        }
    };
    Ok(HdLatency { depth, interval, throughput: 1.0 / interval as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parallel_depth_by_hand() {
        // 1 + 1 + ceil(log16 617)=3 + 1 + ceil(log16 10240)=4 + ceil(log2 26)=5
        let lat = hd_latency(&HdPipeConfig::parallel(10_240, 617, 26)).unwrap();
        assert_eq!(lat.depth, 15);
        assert_eq!(lat.interval, 1);
        assert_eq!(lat.throughput, 1.0);
        // d^h = 16 needs a single distance stage.
        assert_eq!(hd_latency(&HdPipeConfig::parallel(16, 561, 26)).unwrap().depth, 1 + 1 + 3 + 1 + 1 + 5);
    }

    #[test]
    fn parallel_depth_moves_only_through_log_term() {
        let a = hd_latency(&HdPipeConfig::parallel(17, 10, 4)).unwrap().depth;
        let b = hd_latency(&HdPipeConfig::parallel(256, 10, 4)).unwrap().depth;
        let c = hd_latency(&HdPipeConfig::parallel(257, 10, 4)).unwrap().depth;
        assert_eq!(a, b);
        assert_eq!(c, b + 1);
    }

    #[test]
    fn sequential_is_passes_times_chunk_depth() {
        let cfg =
            HdPipeConfig { mode: HdMode::Sequential { chunk_width: 64 }, ..HdPipeConfig::parallel(10_240, 617, 26) };
        let chunk = hd_latency(&HdPipeConfig::parallel(64, 617, 26)).unwrap().depth;
        let lat = hd_latency(&cfg).unwrap();
        assert_eq!(lat.depth, 160 * chunk);
        assert_eq!(lat.interval, lat.depth);
    }

    #[test]
    fn adder_limit_multiplexes_wide_stages() {
        let cfg = HdPipeConfig { adder_limit: Some(16), ..HdPipeConfig::parallel(64, 16, 2) };
        // bundling: 64 trees x 1 adder = 4 cycles; distance: 2 x 4 adders = 1, then 2 x 1 = 1.
        let lat = hd_latency(&cfg).unwrap();
        assert_eq!(lat.depth, 3 + 4 + 2 + 1);
        assert_eq!(lat.interval, 4);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = HdPipeConfig::parallel(64, 8, 2);
        assert!(hd_latency(&HdPipeConfig { fanin: 1, ..base }).is_err());
        assert!(hd_latency(&HdPipeConfig { dh: 0, ..base }).is_err());
        assert!(hd_latency(&HdPipeConfig { mode: HdMode::Sequential { chunk_width: 65 }, ..base }).is_err());
        assert!(hd_latency(&HdPipeConfig { adder_limit: Some(0), ..base }).is_err());
    }

    proptest! {
        #[test]
        fn sequential_never_faster(
            dh in 1usize..20_000,
            dl in 1usize..1000,
            classes in 1usize..40,
            fanin in 2usize..33,
            chunk_frac in 0.0f64..1.0,
            limit in proptest::option::of(1usize..64),
        ) {
            let chunk_width = ((dh as f64 * chunk_frac) as usize).clamp(1, dh);
            let par = HdPipeConfig { dh, dl, classes, fanin, mode: HdMode::Parallel, adder_limit: limit };
            let seq = HdPipeConfig { mode: HdMode::Sequential { chunk_width }, ..par };
            let (p, s) = (hd_latency(&par).unwrap(), hd_latency(&seq).unwrap());
            prop_assert!(s.depth >= p.depth, "{} < {}", s.depth, p.depth);
            prop_assert!(s.throughput <= p.throughput);
        }
    }
}
