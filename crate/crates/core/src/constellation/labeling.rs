use crate::{Error, Result};

use super::log2_order;

/// Bijection from point index to an `m`-bit label.
///
/// Bit position 0 is the most significant bit of the label, which is also the
/// first character of the label string in LUT files.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitLabeling {
    label_of: Vec<u32>,
    index_of: Vec<u32>,
    bits: usize,
}

impl BitLabeling {
    pub fn new(label_of: Vec<u32>) -> Result<Self> {
        let bits = log2_order(label_of.len())?;
        let order = label_of.len();
        let mut index_of = vec![u32::MAX; order];
        for (i, &l) in label_of.iter().enumerate() {
            let slot = index_of
                .get_mut(l as usize)
                .ok_or_else(|| Error::InvalidLabeling(format!("label {l} out of range for M={order}")))?;
            if *slot != u32::MAX {
                return Err(Error::InvalidLabeling(format!("label {l} used twice")));
            }
            *slot = i as u32;
        }
        Ok(Self {
            label_of,
            index_of,
            bits,
        })
    }

    /// Point `i` carries label `i`; the labeling of GMI-mode encoders.
    pub fn natural(order: usize) -> Result<Self> {
        Self::new((0..order as u32).collect())
    }

    pub fn order(&self) -> usize {
        self.label_of.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits
    }

    pub fn label(&self, index: usize) -> u32 {
        self.label_of[index]
    }

    pub fn index(&self, label: u32) -> usize {
        self.index_of[label as usize] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.label_of
    }

    /// Bit at `position` (0 = MSB) of the label of point `index`.
    pub fn bit(&self, index: usize, position: usize) -> u8 {
        ((self.label_of[index] >> (self.bits - 1 - position)) & 1) as u8
    }

    pub fn label_string(&self, index: usize) -> String {
        (0..self.bits)
            .map(|p| if self.bit(index, p) == 1 { '1' } else { '0' })
            .collect()
    }
}

pub(crate) fn gray(x: u32) -> u32 {
    x ^ (x >> 1)
}

/// Binary-reflected Gray labeling of a row-major square QAM grid.
///
/// The upper `m/2` bits Gray-code the row, the lower `m/2` bits the column,
/// so grid neighbours differ in exactly one bit.
pub fn gray_labeling(order: usize) -> Result<BitLabeling> {
    let m = log2_order(order)?;
    if m % 2 != 0 {
        return Err(Error::InvalidOrder(order, "Gray grid labeling needs a square order"));
    }
    let half = m / 2;
    let side = 1usize << half;
    let labels = (0..order)
        .map(|i| {
            let (row, col) = ((i / side) as u32, (i % side) as u32);
            (gray(row) << half) | gray(col)
        })
        .collect();
    BitLabeling::new(labels)
}
