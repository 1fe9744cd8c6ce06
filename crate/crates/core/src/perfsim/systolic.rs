use serde::{Deserialize, Serialize};

use super::PerfError;

/// Systolic array geometry and memory interface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystolicConfig {
    /// Columns; one tree adder of depth `log2 w_sys` per row.
    pub w_sys: usize,
    /// Rows.
    pub h_sys: usize,
    pub clock_mhz: f64,
    pub pe_budget: usize,
    /// DRAM words per cycle; `None` is unlimited.
    pub dram_bandwidth: Option<f64>,
}

impl SystolicConfig {
    pub fn new(w_sys: usize, h_sys: usize, clock_mhz: f64) -> Self {
        Self { w_sys, h_sys, clock_mhz, pe_budget: w_sys * h_sys, dram_bandwidth: None }
    }

    pub fn validate(&self) -> Result<(), PerfError> {
        if self.w_sys == 0 {
            return Err(PerfError::Zero("w_sys"));
        }
        if self.h_sys == 0 {
            return Err(PerfError::Zero("h_sys"));
        }
        if !self.w_sys.is_power_of_two() {
            return Err(PerfError::NotPowerOfTwo(self.w_sys));
        }
        if self.w_sys.saturating_mul(self.h_sys) > self.pe_budget {
            return Err(PerfError::OverBudget { w: self.w_sys, h: self.h_sys, budget: self.pe_budget });
        }
        if !(self.clock_mhz.is_finite() && self.clock_mhz > 0.0) {
            return Err(PerfError::Invalid(format!("clock_mhz must be positive, got {}", self.clock_mhz)));
        }
        if let Some(bw) = self.dram_bandwidth {
            if bw.is_nan() || bw <= 0.0 {
                return Err(PerfError::Invalid(format!("dram_bandwidth must be positive, got {bw}")));
            }
        }
        Ok(())
    }

    pub fn tree_depth(&self) -> usize {
        self.w_sys.trailing_zeros() as usize
    }

    /// DRAM cycles to move `words`; 0 with unlimited bandwidth.
    pub fn transfer_cycles(&self, words: usize) -> u64 {
        match self.dram_bandwidth {
            None => 0,
            Some(bw) => (words as f64 / bw).ceil() as u64,
        }
    }

    pub fn micros(&self, cycles: u64) -> f64 {
        cycles as f64 / self.clock_mhz
    }
}

/// Layer widths `[d_0, d_1, …, d_L]`; layer `i` maps `d_i → d_{i+1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub widths: Vec<usize>,
}

impl NetworkShape {
    pub fn new(widths: Vec<usize>) -> Result<Self, PerfError> {
        if widths.contains(&0) {
            return Err(PerfError::Zero("layer width"));
        }
        Ok(Self { widths })
    }

    /// `(d_in, d_out)` per layer; empty for fewer than two widths.
    pub fn layers(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.widths.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }
}

/// `(ceil(d_in/w_sys) + log2 w_sys) · ceil(d_out/h_sys)`.
pub fn layer_cycles(d_in: usize, d_out: usize, cfg: &SystolicConfig) -> Result<u64, PerfError> {
    cfg.validate()?;
    if d_in == 0 || d_out == 0 {
        return Err(PerfError::Zero("layer width"));
    }
    let passes = d_in.div_ceil(cfg.w_sys) + cfg.tree_depth();
    Ok((passes * d_out.div_ceil(cfg.h_sys)) as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCycles {
    /// Per layer `max(compute, weight transfer)`.
    pub per_layer: Vec<u64>,
    pub compute: Vec<u64>,
    pub transfer: Vec<u64>,
    pub total: u64,
    pub micros: f64,
}

/// Per-layer cycles with weight transfers overlapped by double buffering.
pub fn network_cycles(shape: &NetworkShape, cfg: &SystolicConfig) -> Result<NetworkCycles, PerfError> {
    cfg.validate()?;
    let mut out = NetworkCycles { per_layer: vec![], compute: vec![], transfer: vec![], total: 0, micros: 0.0 };
    for (d_in, d_out) in shape.layers() {
        let compute = layer_cycles(d_in, d_out, cfg)?;
        let transfer = cfg.transfer_cycles(d_in * d_out);
        out.compute.push(compute);
        out.transfer.push(transfer);
        out.per_layer.push(compute.max(transfer));
    }
    out.total = out.per_layer.iter().sum();
    out.micros = cfg.micros(out.total);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(w: usize, h: usize) -> SystolicConfig {
        SystolicConfig::new(w, h, 344.0)
    }

    /// Brute-force count: each output tile streams its input blocks one per
    /// cycle, then drains the adder tree.
    fn tile_walk(d_in: usize, d_out: usize, w: usize, h: usize) -> u64 {
        let mut cycles = 0;
        let mut o = 0;
        while o < d_out {
            let mut i = 0;
            while i < d_in {
                cycles += 1;
                i += w;
            }
            let mut depth = 0;
            let mut lanes = w;
            while lanes > 1 {
                lanes /= 2;
                depth += 1;
            }
            cycles += depth;
            o += h;
        }
        cycles
    }

    #[test]
    fn isolet_first_layer_on_32x32() {
        assert_eq!(layer_cycles(617, 561, &cfg(32, 32)).unwrap(), 450);
    }

    #[test]
    fn single_tile_and_unit_width() {
        for w in [1, 2, 8, 64] {
            assert_eq!(layer_cycles(w, 16, &cfg(w, 16)).unwrap(), 1 + w.trailing_zeros() as u64);
        }
        assert_eq!(layer_cycles(617, 561, &cfg(1, 32)).unwrap(), 617 * 18);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(layer_cycles(10, 10, &cfg(12, 4)), Err(PerfError::NotPowerOfTwo(12))));
        let mut c = cfg(8, 8);
        c.pe_budget = 32;
        assert!(matches!(c.validate(), Err(PerfError::OverBudget { .. })));
    }

    #[test]
    fn network_reduces_to_layer_and_transfer_bound() {
        let shape = NetworkShape::new(vec![617, 561, 561]).unwrap();
        let c = cfg(32, 32);
        let net = network_cycles(&shape, &c).unwrap();
        assert_eq!(net.per_layer, vec![450, (18 + 5) * 18]);
        assert_eq!(net.total, 864);
        assert_eq!(net.micros, 864.0 / 344.0);

        let single = NetworkShape::new(vec![100, 40]).unwrap();
        assert_eq!(network_cycles(&single, &c).unwrap().total, layer_cycles(100, 40, &c).unwrap());

        let slow = SystolicConfig { dram_bandwidth: Some(4.0), ..c };
        let net = network_cycles(&shape, &slow).unwrap();
        assert_eq!(net.transfer, vec![(617 * 561u64).div_ceil(4), (561 * 561u64).div_ceil(4)]);
        assert_eq!(net.per_layer, net.transfer);
    }

    proptest! {
        #[test]
        fn formula_matches_tile_walk(d_in in 1usize..300, d_out in 1usize..300, lw in 0u32..7, h in 1usize..40) {
            let w = 1 << lw;
            prop_assert_eq!(layer_cycles(d_in, d_out, &cfg(w, h)).unwrap(), tile_walk(d_in, d_out, w, h));
        }

        #[test]
        fn monotone_in_widths(d_in in 1usize..500, d_out in 1usize..500, lw in 0u32..7, h in 1usize..40) {
            let c = cfg(1 << lw, h);
            let base = layer_cycles(d_in, d_out, &c).unwrap();
            prop_assert!(layer_cycles(d_in + 1, d_out, &c).unwrap() >= base);
            prop_assert!(layer_cycles(d_in, d_out + 1, &c).unwrap() >= base);
        }
    }
}
