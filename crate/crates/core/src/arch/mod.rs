//! The elastic detector search space.
//!
//! A detector is three searchable stages (backbone, FPN, PAN) of 2, 4 and 4
//! blocks. Every block independently picks one of 18 [`BlockChoice`]s.

mod block;
mod cost;
mod encoding;
mod scaling;

pub use block::{enumerate_block_choices, Attention, BlockChoice, Kernel, Ratio, NUM_BLOCK_CHOICES};
pub use cost::{analytic_block_cost, CostBounds, ReferenceTable};
pub use encoding::{
    decode_architecture, encode_architecture, encode_with_device, hot_indices, EncodingVector,
    ARCH_ENCODING_LEN, SLOTS_PER_BLOCK,
};
pub use scaling::{scale_architecture, ScaleLabel, ScaledDetector, ScalingFactor, CHANNEL_GRANULARITY};

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total number of searchable block slots in a detector.
pub const NUM_SLOTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Backbone,
    Fpn,
    Pan,
}

impl StageKind {
    /// Search order within one iteration.
    pub const ALL: [StageKind; 3] = [StageKind::Backbone, StageKind::Fpn, StageKind::Pan];

    pub fn block_count(self) -> usize {
        match self {
            StageKind::Backbone => 2,
            StageKind::Fpn | StageKind::Pan => 4,
        }
    }

    /// Offset of this stage's first block among the 10 detector slots.
    pub fn slot_offset(self) -> usize {
        match self {
            StageKind::Backbone => 0,
            StageKind::Fpn => 2,
            StageKind::Pan => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StageKind::Backbone => "backbone",
            StageKind::Fpn => "fpn",
            StageKind::Pan => "pan",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Number of distinct configurations of one stage (18 to the block count).
pub fn stage_space_size(kind: StageKind) -> u64 {
    (NUM_BLOCK_CHOICES as u64).pow(kind.block_count() as u32)
}

/// Ordered block choices for one stage.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StageArchitecture {
    kind: StageKind,
    blocks: Vec<BlockChoice>,
}

impl StageArchitecture {
    pub fn new(kind: StageKind, blocks: Vec<BlockChoice>) -> Result<Self> {
        if blocks.len() != kind.block_count() {
            return Err(Error::StageSize {
                stage: kind.name(),
                expected: kind.block_count(),
                got: blocks.len(),
            });
        }
        Ok(StageArchitecture { kind, blocks })
    }

    pub fn uniform(kind: StageKind, block: BlockChoice) -> Self {
        StageArchitecture {
            kind,
            blocks: vec![block; kind.block_count()],
        }
    }

    pub fn kind(&self) -> StageKind {
        self.kind
    }

    pub fn blocks(&self) -> &[BlockChoice] {
        &self.blocks
    }

    /// Position in the canonical stage order: blocks read as base-18 digits,
    /// first block most significant.
    pub fn canonical_index(&self) -> u64 {
        self.blocks
            .iter()
            .fold(0u64, |acc, b| acc * NUM_BLOCK_CHOICES as u64 + b.index() as u64)
    }

    pub fn from_canonical_index(kind: StageKind, mut idx: u64) -> Result<Self> {
        if idx >= stage_space_size(kind) {
            return Err(Error::InvalidBlock(format!(
                "{kind} index {idx} out of range"
            )));
        }
        let n = kind.block_count();
        let mut blocks = vec![BlockChoice::from_index(0)?; n];
        for slot in (0..n).rev() {
            blocks[slot] = BlockChoice::from_index((idx % NUM_BLOCK_CHOICES as u64) as usize)?;
            idx /= NUM_BLOCK_CHOICES as u64;
        }
        Ok(StageArchitecture { kind, blocks })
    }

    /// Every configuration of `kind`, in canonical order.
    pub fn enumerate(kind: StageKind) -> impl Iterator<Item = StageArchitecture> {
        (0..stage_space_size(kind))
            .map(move |i| StageArchitecture::from_canonical_index(kind, i).expect("in range"))
    }
}

/// A candidate detector: backbone, FPN and PAN block choices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ArchitectureJson", into = "ArchitectureJson")]
pub struct DetectorArchitecture {
    backbone: StageArchitecture,
    fpn: StageArchitecture,
    pan: StageArchitecture,
}

impl DetectorArchitecture {
    pub fn new(
        backbone: StageArchitecture,
        fpn: StageArchitecture,
        pan: StageArchitecture,
    ) -> Result<Self> {
        for (stage, kind) in [
            (&backbone, StageKind::Backbone),
            (&fpn, StageKind::Fpn),
            (&pan, StageKind::Pan),
        ] {
            if stage.kind != kind {
                return Err(Error::InvalidBlock(format!(
                    "{} stage given where {} expected",
                    stage.kind, kind
                )));
            }
        }
        Ok(DetectorArchitecture { backbone, fpn, pan })
    }

    /// Every block set to `block`.
    pub fn uniform(block: BlockChoice) -> Self {
        DetectorArchitecture {
            backbone: StageArchitecture::uniform(StageKind::Backbone, block),
            fpn: StageArchitecture::uniform(StageKind::Fpn, block),
            pan: StageArchitecture::uniform(StageKind::Pan, block),
        }
    }

    /// The default search starting point: every block (0.5, 3, lite).
    pub fn midpoint() -> Self {
        Self::uniform(BlockChoice::new(Ratio::Half, Kernel::K3, Attention::Lite))
    }

    pub fn from_slots(slots: &[BlockChoice]) -> Result<Self> {
        if slots.len() != NUM_SLOTS {
            return Err(Error::Dimension {
                expected: NUM_SLOTS,
                got: slots.len(),
            });
        }
        Ok(DetectorArchitecture {
            backbone: StageArchitecture::new(StageKind::Backbone, slots[0..2].to_vec())?,
            fpn: StageArchitecture::new(StageKind::Fpn, slots[2..6].to_vec())?,
            pan: StageArchitecture::new(StageKind::Pan, slots[6..10].to_vec())?,
        })
    }

    pub fn stage(&self, kind: StageKind) -> &StageArchitecture {
        match kind {
            StageKind::Backbone => &self.backbone,
            StageKind::Fpn => &self.fpn,
            StageKind::Pan => &self.pan,
        }
    }

    /// A copy with one stage replaced.
    pub fn with_stage(&self, stage: StageArchitecture) -> Self {
        let mut out = self.clone();
        match stage.kind {
            StageKind::Backbone => out.backbone = stage,
            StageKind::Fpn => out.fpn = stage,
            StageKind::Pan => out.pan = stage,
        }
        out
    }

    /// The 10 block choices in slot order.
    pub fn slots(&self) -> impl Iterator<Item = BlockChoice> + '_ {
        self.backbone
            .blocks
            .iter()
            .chain(&self.fpn.blocks)
            .chain(&self.pan.blocks)
            .copied()
    }
}

impl fmt::Display for DetectorArchitecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stage = |s: &StageArchitecture| {
            s.blocks
                .iter()
                .map(|b| b.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        write!(
            f,
            "backbone[{}] fpn[{}] pan[{}]",
            stage(&self.backbone),
            stage(&self.fpn),
            stage(&self.pan)
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchitectureJson {
    backbone: Vec<BlockChoice>,
    fpn: Vec<BlockChoice>,
    pan: Vec<BlockChoice>,
}

impl TryFrom<ArchitectureJson> for DetectorArchitecture {
    type Error = Error;

    fn try_from(j: ArchitectureJson) -> Result<Self> {
        Ok(DetectorArchitecture {
            backbone: StageArchitecture::new(StageKind::Backbone, j.backbone)?,
            fpn: StageArchitecture::new(StageKind::Fpn, j.fpn)?,
            pan: StageArchitecture::new(StageKind::Pan, j.pan)?,
        })
    }
}

impl From<DetectorArchitecture> for ArchitectureJson {
    fn from(a: DetectorArchitecture) -> Self {
        ArchitectureJson {
            backbone: a.backbone.blocks,
            fpn: a.fpn.blocks,
            pan: a.pan.blocks,
        }
    }
}

/// Draws `n` architectures with every slot independently uniform over the 18 choices.
pub fn sample_uniform(seed: u64, n: usize) -> Result<Vec<DetectorArchitecture>> {
    if n == 0 {
        return Err(Error::Empty("sample count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sample_one(&mut rng)).collect())
}

pub fn sample_one<R: Rng + ?Sized>(rng: &mut R) -> DetectorArchitecture {
    let mut slots = [BlockChoice::from_index(0).expect("valid"); NUM_SLOTS];
    for s in slots.iter_mut() {
        *s = BlockChoice::from_index(rng.random_range(0..NUM_BLOCK_CHOICES)).expect("in range");
    }
    DetectorArchitecture::from_slots(&slots).expect("10 slots")
}

pub fn sample_stage<R: Rng + ?Sized>(rng: &mut R, kind: StageKind) -> StageArchitecture {
    let blocks = (0..kind.block_count())
        .map(|_| BlockChoice::from_index(rng.random_range(0..NUM_BLOCK_CHOICES)).expect("in range"))
        .collect();
    StageArchitecture { kind, blocks }
}
