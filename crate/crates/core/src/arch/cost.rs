use serde::{Deserialize, Serialize};

use super::{
    enumerate_block_choices, Attention, BlockChoice, DetectorArchitecture, Kernel, Ratio,
    NUM_SLOTS,
};
use crate::error::{Error, Result};

/// Synthetic per-block cost: `channels² / ratio · kernel² · attn`, with
/// attn = 1.0 for lite and 1.25 for full attention.
///
/// Only the monotonicities are meaningful: cost rises with kernel size,
/// channel count and full attention, and falls with the compression ratio.
pub fn analytic_block_cost(b: BlockChoice, channels: u32) -> f64 {
    let c = channels as f64;
    let k = b.kernel.size() as f64;
    let attn = match b.attention {
        Attention::Lite => 1.0,
        Attention::Full => 1.25,
    };
    c * c / b.ratio.value() * k * k * attn
}

/// Reference channel counts and repeats per block slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub channels: Vec<u32>,
    pub repeats: Vec<u32>,
}

impl Default for ReferenceTable {
    fn default() -> Self {
        ReferenceTable {
            channels: vec![128, 256, 64, 128, 128, 256, 64, 128, 128, 256],
            repeats: vec![1; NUM_SLOTS],
        }
    }
}

impl ReferenceTable {
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != NUM_SLOTS || self.repeats.len() != NUM_SLOTS {
            return Err(Error::Config(format!(
                "reference table needs {NUM_SLOTS} channel and repeat entries"
            )));
        }
        if self.channels.iter().chain(&self.repeats).any(|&x| x == 0) {
            return Err(Error::Config("reference channels and repeats must be positive".into()));
        }
        Ok(())
    }

    /// Total analytic cost of `a` at the given per-slot channels and repeats.
    pub fn cost_with(a: &DetectorArchitecture, channels: &[u32], repeats: &[u32]) -> f64 {
        a.slots()
            .zip(channels.iter().zip(repeats))
            .map(|(b, (&c, &r))| r as f64 * analytic_block_cost(b, c))
            .sum()
    }

    pub fn total_cost(&self, a: &DetectorArchitecture) -> f64 {
        Self::cost_with(a, &self.channels, &self.repeats)
    }

    pub fn bounds(&self) -> CostBounds {
        let all = enumerate_block_choices();
        // Separable: the extreme design picks the extreme block in every slot.
        let (mut min, mut max) = (0.0, 0.0);
        for (&c, &r) in self.channels.iter().zip(&self.repeats) {
            let costs = all.iter().map(|&b| r as f64 * analytic_block_cost(b, c));
            min += costs.clone().fold(f64::INFINITY, f64::min);
            max += costs.fold(f64::NEG_INFINITY, f64::max);
        }
        CostBounds { min, max }
    }
}

/// Minimum and maximum total cost over the whole search space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBounds {
    pub min: f64,
    pub max: f64,
}

impl CostBounds {
    /// Maps a total cost onto `[0, 1]`.
    pub fn normalize(&self, cost: f64) -> f64 {
        (cost - self.min) / (self.max - self.min)
    }

    pub fn cheapest_block() -> BlockChoice {
        BlockChoice::new(Ratio::One, Kernel::K1, Attention::Lite)
    }

    pub fn costliest_block() -> BlockChoice {
        BlockChoice::new(Ratio::Quarter, Kernel::K5, Attention::Full)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::sample_uniform;

    #[test]
    fn monotone_in_kernel_ratio_and_attention() {
        for c in [1, 8, 64, 256] {
            for &r in &Ratio::ALL {
                for &t in &Attention::ALL {
                    let k5 = analytic_block_cost(BlockChoice::new(r, Kernel::K5, t), c);
                    let k3 = analytic_block_cost(BlockChoice::new(r, Kernel::K3, t), c);
                    let k1 = analytic_block_cost(BlockChoice::new(r, Kernel::K1, t), c);
                    assert!(k5 > k3 && k3 > k1);
                }
            }
            for &k in &Kernel::ALL {
                for &t in &Attention::ALL {
                    let q = analytic_block_cost(BlockChoice::new(Ratio::Quarter, k, t), c);
                    let h = analytic_block_cost(BlockChoice::new(Ratio::Half, k, t), c);
                    let o = analytic_block_cost(BlockChoice::new(Ratio::One, k, t), c);
                    assert!(q > h && h > o);
                }
                for &r in &Ratio::ALL {
                    let full = analytic_block_cost(BlockChoice::new(r, k, Attention::Full), c);
                    let lite = analytic_block_cost(BlockChoice::new(r, k, Attention::Lite), c);
                    assert!(full > lite);
                }
            }
        }
    }

    #[test]
    fn total_is_sum_of_block_costs() {
        let table = ReferenceTable::default();
        for a in sample_uniform(5, 20).unwrap() {
            let by_hand: f64 = a
                .slots()
                .enumerate()
                .map(|(i, b)| analytic_block_cost(b, table.channels[i]))
                .sum();
            assert_eq!(table.total_cost(&a), by_hand);
        }
    }

    #[test]
    fn per_slot_argmin_is_global_minimum() {
        let table = ReferenceTable::default();
        // Per-slot brute force over the 18 choices; separability composes them.
        let all = enumerate_block_choices();
        let mut argmin_slots = Vec::new();
        for &c in &table.channels {
            let best = all
                .iter()
                .copied()
                .min_by(|a, b| analytic_block_cost(*a, c).total_cmp(&analytic_block_cost(*b, c)))
                .unwrap();
            argmin_slots.push(best);
        }
        let argmin = DetectorArchitecture::from_slots(&argmin_slots).unwrap();
        assert_eq!(argmin, DetectorArchitecture::uniform(CostBounds::cheapest_block()));
        let min = table.total_cost(&argmin);
        assert_eq!(min, table.bounds().min);
        for a in sample_uniform(17, 2000).unwrap() {
            assert!(table.total_cost(&a) >= min);
        }
        let max = table.total_cost(&DetectorArchitecture::uniform(CostBounds::costliest_block()));
        assert_eq!(max, table.bounds().max);
    }

    #[test]
    fn reference_table_validation() {
        assert!(ReferenceTable::default().validate().is_ok());
        let mut t = ReferenceTable::default();
        t.channels[3] = 0;
        assert!(t.validate().is_err());
        t.channels.pop();
        assert!(t.validate().is_err());
    }
}
