use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel compression ratio inside a block. Smaller ratios keep more channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ratio {
    Quarter,
    Half,
    One,
}

impl Ratio {
    pub const ALL: [Ratio; 3] = [Ratio::Quarter, Ratio::Half, Ratio::One];

    pub fn value(self) -> f64 {
        match self {
            Ratio::Quarter => 0.25,
            Ratio::Half => 0.5,
            Ratio::One => 1.0,
        }
    }

    pub fn from_value(v: f64) -> Result<Self> {
        // Exact matches only; 0.25, 0.5 and 1.0 are all representable.
        if v == 0.25 {
            Ok(Ratio::Quarter)
        } else if v == 0.5 {
            Ok(Ratio::Half)
        } else if v == 1.0 {
            Ok(Ratio::One)
        } else {
            Err(Error::InvalidBlock(format!("ratio {v} not in {{0.25, 0.5, 1.0}}")))
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kernel {
    K1,
    K3,
    K5,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::K1, Kernel::K3, Kernel::K5];

    pub fn size(self) -> u32 {
        match self {
            Kernel::K1 => 1,
            Kernel::K3 => 3,
            Kernel::K5 => 5,
        }
    }

    pub fn from_size(k: u32) -> Result<Self> {
        match k {
            1 => Ok(Kernel::K1),
            3 => Ok(Kernel::K3),
            5 => Ok(Kernel::K5),
            _ => Err(Error::InvalidBlock(format!("kernel {k} not in {{1, 3, 5}}"))),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attention {
    Lite,
    Full,
}

impl Attention {
    pub const ALL: [Attention; 2] = [Attention::Lite, Attention::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Attention::Lite => "lite",
            Attention::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lite" => Ok(Attention::Lite),
            "full" => Ok(Attention::Full),
            _ => Err(Error::InvalidBlock(format!(
                "attention `{s}` not in {{lite, full}}"
            ))),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// One elastic block configuration: compression ratio, kernel size, attention type.
///
/// The derived `Ord` is the canonical order used everywhere: ratio ascending,
/// then kernel ascending, then `Lite` before `Full`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(f64, u32, String)", into = "(f64, u32, String)")]
pub struct BlockChoice {
    pub ratio: Ratio,
    pub kernel: Kernel,
    pub attention: Attention,
}

/// Number of distinct block configurations.
pub const NUM_BLOCK_CHOICES: usize = 18;

impl BlockChoice {
    pub const fn new(ratio: Ratio, kernel: Kernel, attention: Attention) -> Self {
        BlockChoice {
            ratio,
            kernel,
            attention,
        }
    }

    /// Position in the canonical order, `0..18`.
    pub fn index(self) -> usize {
        self.ratio.index() * 6 + self.kernel.index() * 2 + self.attention.index()
    }

    pub fn from_index(idx: usize) -> Result<Self> {
        if idx >= NUM_BLOCK_CHOICES {
            return Err(Error::InvalidBlock(format!("block index {idx} out of range")));
        }
        Ok(BlockChoice {
            ratio: Ratio::ALL[idx / 6],
            kernel: Kernel::ALL[(idx / 2) % 3],
            attention: Attention::ALL[idx % 2],
        })
    }
}

impl fmt::Display for BlockChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {})",
            self.ratio.value(),
            self.kernel.size(),
            self.attention.as_str()
        )
    }
}

impl TryFrom<(f64, u32, String)> for BlockChoice {
    type Error = Error;

    fn try_from((r, k, t): (f64, u32, String)) -> Result<Self> {
        Ok(BlockChoice {
            ratio: Ratio::from_value(r)?,
            kernel: Kernel::from_size(k)?,
            attention: Attention::parse(&t)?,
        })
    }
}

impl From<BlockChoice> for (f64, u32, String) {
    fn from(b: BlockChoice) -> Self {
        (
            b.ratio.value(),
            b.kernel.size(),
            b.attention.as_str().to_string(),
        )
    }
}

/// All 18 block choices in canonical order.
pub fn enumerate_block_choices() -> Vec<BlockChoice> {
    (0..NUM_BLOCK_CHOICES)
        .map(|i| BlockChoice::from_index(i).expect("index in range"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eighteen_choices_in_canonical_order() {
        let all = enumerate_block_choices();
        assert_eq!(all.len(), 18);
        assert_eq!(
            all[0],
            BlockChoice::new(Ratio::Quarter, Kernel::K1, Attention::Lite)
        );
        assert_eq!(
            all[17],
            BlockChoice::new(Ratio::One, Kernel::K5, Attention::Full)
        );
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, all);
        for (i, b) in all.iter().enumerate() {
            assert_eq!(b.index(), i);
        }
    }

    #[test]
    fn rejects_values_outside_choice_sets() {
        assert!(Ratio::from_value(0.75).is_err());
        assert!(Kernel::from_size(7).is_err());
        assert!(Attention::parse("Full").is_err());
        assert!(BlockChoice::from_index(18).is_err());
        let bad: std::result::Result<BlockChoice, _> = serde_json::from_str("[0.3, 3, \"lite\"]");
        assert!(bad.is_err());
    }

    #[test]
    fn json_form() {
        let b = BlockChoice::new(Ratio::One, Kernel::K3, Attention::Full);
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1.0,3,\"full\"]");
        let q = BlockChoice::new(Ratio::Quarter, Kernel::K5, Attention::Lite);
        assert_eq!(serde_json::to_string(&q).unwrap(), "[0.25,5,\"lite\"]");
        let back: BlockChoice = serde_json::from_str("[0.5, 1, \"lite\"]").unwrap();
        assert_eq!(back.ratio, Ratio::Half);
    }
}
