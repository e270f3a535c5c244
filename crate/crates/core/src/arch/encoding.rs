use serde::{Deserialize, Serialize};

use super::{Attention, BlockChoice, DetectorArchitecture, Kernel, Ratio, NUM_SLOTS};
use crate::error::{Error, Result};

/// One-hot slots per block: 3 ratio, 3 kernel, 2 attention.
pub const SLOTS_PER_BLOCK: usize = 8;
pub const ARCH_ENCODING_LEN: usize = NUM_SLOTS * SLOTS_PER_BLOCK;
const HOT_PER_BLOCK: usize = 3;

/// A fixed-length real feature vector fed to the predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EncodingVector(pub Vec<f64>);

impl EncodingVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Appends a one-hot device slot.
    pub fn with_device(&self, device_index: usize, n_devices: usize) -> EncodingVector {
        let mut v = Vec::with_capacity(self.0.len() + n_devices);
        v.extend_from_slice(&self.0);
        v.extend((0..n_devices).map(|i| if i == device_index { 1.0 } else { 0.0 }));
        EncodingVector(v)
    }
}

fn block_hot(b: BlockChoice) -> [usize; HOT_PER_BLOCK] {
    let r = Ratio::ALL.iter().position(|&x| x == b.ratio).expect("ratio");
    let k = Kernel::ALL.iter().position(|&x| x == b.kernel).expect("kernel");
    let t = Attention::ALL.iter().position(|&x| x == b.attention).expect("attention");
    [r, 3 + k, 6 + t]
}

/// Indices of the 30 hot entries of [`encode_architecture`], ascending.
pub fn hot_indices(a: &DetectorArchitecture) -> [usize; NUM_SLOTS * HOT_PER_BLOCK] {
    let mut out = [0usize; NUM_SLOTS * HOT_PER_BLOCK];
    for (slot, b) in a.slots().enumerate() {
        for (j, h) in block_hot(b).into_iter().enumerate() {
            out[slot * HOT_PER_BLOCK + j] = slot * SLOTS_PER_BLOCK + h;
        }
    }
    out
}

pub fn encode_architecture(a: &DetectorArchitecture) -> EncodingVector {
    let mut v = vec![0.0; ARCH_ENCODING_LEN];
    for i in hot_indices(a) {
        v[i] = 1.0;
    }
    EncodingVector(v)
}

pub fn encode_with_device(
    a: &DetectorArchitecture,
    device_index: usize,
    n_devices: usize,
) -> EncodingVector {
    encode_architecture(a).with_device(device_index, n_devices)
}

/// Inverse of [`encode_architecture`]. Rejects vectors that are not a valid
/// one-hot block encoding.
pub fn decode_architecture(v: &EncodingVector) -> Result<DetectorArchitecture> {
    if v.len() != ARCH_ENCODING_LEN {
        return Err(Error::Dimension {
            expected: ARCH_ENCODING_LEN,
            got: v.len(),
        });
    }
    fn one_hot(group: &[f64], what: &str, slot: usize) -> Result<usize> {
        let mut hot = None;
        for (i, &x) in group.iter().enumerate() {
            if x == 1.0 {
                if hot.is_some() {
                    return Err(Error::InvalidBlock(format!("slot {slot}: multiple hot {what}")));
                }
                hot = Some(i);
            } else if x != 0.0 {
                return Err(Error::InvalidBlock(format!("slot {slot}: {what} entry {x}")));
            }
        }
        hot.ok_or_else(|| Error::InvalidBlock(format!("slot {slot}: no hot {what}")))
    }
    let mut slots = Vec::with_capacity(NUM_SLOTS);
    for (slot, chunk) in v.0.chunks(SLOTS_PER_BLOCK).enumerate() {
        let r = one_hot(&chunk[0..3], "ratio", slot)?;
        let k = one_hot(&chunk[3..6], "kernel", slot)?;
        let t = one_hot(&chunk[6..8], "attention", slot)?;
        slots.push(BlockChoice::new(Ratio::ALL[r], Kernel::ALL[k], Attention::ALL[t]));
    }
    DetectorArchitecture::from_slots(&slots)
}
