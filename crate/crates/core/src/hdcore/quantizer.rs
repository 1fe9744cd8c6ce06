//! Per-feature uniform quantization into `q` levels.

use log::warn;
use ndarray::ArrayView2;

use super::HdError;

/// Half-width used to widen a constant feature column.
pub const CONSTANT_COLUMN_EPS: f64 = 1e-6;

/// Level indices of one sample, each in `1..=q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedSample(Vec<u32>);

impl QuantizedSample {
    pub fn new(levels: Vec<u32>, q: usize) -> Result<Self, HdError> {
        if let Some((feature, &level)) = levels.iter().enumerate().find(|(_, &l)| l == 0 || l as usize > q) {
            return Err(HdError::LevelOutOfRange { feature, level, q });
        }
        Ok(Self(levels))
    }

    pub(crate) fn from_raw(levels: Vec<u32>) -> Self {
        Self(levels)
    }

    pub fn levels(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Quantizer {
    ranges: Vec<(f64, f64)>,
    levels: usize,
}

impl Quantizer {
    pub fn new(ranges: Vec<(f64, f64)>, levels: usize) -> Result<Self, HdError> {
        if levels < 2 {
            return Err(HdError::InvalidParameter(format!("need at least 2 quantization levels, got {levels}")));
        }
        if ranges.is_empty() {
            return Err(HdError::InvalidParameter("quantizer needs at least one feature".into()));
        }
        for (j, &(lo, hi)) in ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(HdError::InvalidParameter(format!("feature {j}: bad range [{lo}, {hi}]")));
            }
        }
        Ok(Self { ranges, levels })
    }

    /// Every feature shares the range `[lo, hi]`.
    pub fn uniform(features: usize, lo: f64, hi: f64, levels: usize) -> Result<Self, HdError> {
        Self::new(vec![(lo, hi); features], levels)
    }

    /// Column-wise min/max over `x`. Constant columns are widened by
    /// [`CONSTANT_COLUMN_EPS`] on each side and logged.
    pub fn fit(x: ArrayView2<'_, f64>, levels: usize) -> Result<Self, HdError> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(HdError::InvalidParameter("cannot fit a quantizer on an empty matrix".into()));
        }
        let mut widened = 0usize;
        let ranges = x
            .columns()
            .into_iter()
            .map(|col| {
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi > lo {
                    (lo, hi)
                } else {
                    widened += 1;
                    (lo - CONSTANT_COLUMN_EPS, lo + CONSTANT_COLUMN_EPS)
                }
            })
            .collect();
        if widened > 0 {
            warn!("{widened} constant feature column(s) widened by ±{CONSTANT_COLUMN_EPS}");
        }
        Self::new(ranges, levels)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn features(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    /// Level of a single value under feature `j`'s range.
    #[inline]
    pub fn level_of(&self, j: usize, value: f64) -> u32 {
        let (lo, hi) = self.ranges[j];
        level_in(value, lo, hi, self.levels)
    }

    pub fn quantize(&self, x: &[f64]) -> Result<QuantizedSample, HdError> {
        if x.len() != self.ranges.len() {
            return Err(HdError::DimensionMismatch { expected: self.ranges.len(), found: x.len() });
        }
        Ok(QuantizedSample(x.iter().enumerate().map(|(j, &v)| self.level_of(j, v)).collect()))
    }

    /// Bin midpoints.
    pub fn dequantize(&self, sample: &QuantizedSample) -> Result<Vec<f64>, HdError> {
        if sample.len() != self.ranges.len() {
            return Err(HdError::DimensionMismatch { expected: self.ranges.len(), found: sample.len() });
        }
        sample
            .levels()
            .iter()
            .zip(&self.ranges)
            .enumerate()
            .map(|(feature, (&level, &(lo, hi)))| {
                if level == 0 || level as usize > self.levels {
                    return Err(HdError::LevelOutOfRange { feature, level, q: self.levels });
                }
                Ok(midpoint(level, lo, hi, self.levels))
            })
            .collect()
    }
}

/// `1 + floor(q·(clamp(x) − lo)/(hi − lo))`, clamped into `1..=q`.
#[inline]
pub(crate) fn level_in(value: f64, lo: f64, hi: f64, q: usize) -> u32 {
    let t = (value.clamp(lo, hi) - lo) / (hi - lo);
    let bin = (q as f64 * t).floor();
    // NaN casts to 0 and lands in level 1.
    (bin as u32).saturating_add(1).clamp(1, q as u32)
}

#[inline]
pub(crate) fn midpoint(level: u32, lo: f64, hi: f64, q: usize) -> f64 {
    lo + (level as f64 - 0.5) * (hi - lo) / q as f64
}
