//! Mixed-radix indexing for factored state spaces, plus a helper that expands
//! independent per-factor kernels into one joint successor row.

use crate::error::{Error, Result};

/// Bijection between digit tuples `(d_0, …, d_{m-1})`, `d_i < radix_i`, and
/// `0..product(radices)`. The last digit varies fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedRadix {
    radices: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl MixedRadix {
    pub fn new(radices: Vec<usize>) -> Result<Self> {
        if radices.iter().any(|&r| r == 0) {
            return Err(Error::InvalidInput("factor with zero cardinality".into()));
        }
        let mut strides = vec![0; radices.len()];
        let mut size: usize = 1;
        for i in (0..radices.len()).rev() {
            strides[i] = size;
            size = size
                .checked_mul(radices[i])
                .ok_or_else(|| Error::InvalidInput("state space size overflows".into()))?;
        }
        Ok(Self { radices, strides, size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn stride(&self, factor: usize) -> usize {
        self.strides[factor]
    }

    pub fn encode(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.radices.len() {
            return Err(Error::Dimension(format!(
                "expected {} digits, got {}",
                self.radices.len(),
                digits.len()
            )));
        }
        let mut idx = 0;
        for (i, (&d, &r)) in digits.iter().zip(&self.radices).enumerate() {
            if d >= r {
                return Err(Error::InvalidInput(format!("digit {i} = {d} exceeds radix {r}")));
            }
            idx += d * self.strides[i];
        }
        Ok(idx)
    }

    pub fn decode(&self, index: usize) -> Result<Vec<usize>> {
        if index >= self.size {
            return Err(Error::InvalidInput(format!("index {index} beyond {}", self.size)));
        }
        let mut out = vec![0; self.radices.len()];
        self.decode_into(index, &mut out);
        Ok(out)
    }

    /// Unchecked decode for hot loops; `out.len()` must equal the factor count.
    pub fn decode_into(&self, mut index: usize, out: &mut [usize]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = index / self.strides[i];
            index %= self.strides[i];
        }
    }
}

/// One factor's marginal successor distribution, as `(index offset, p)`
/// pairs where the offset is already multiplied by the factor's stride.
pub type FactorKernel = Vec<(usize, f64)>;

/// Expands the product of independent factor kernels into `out`, summing
/// offsets onto `base` and multiplying probabilities. Zero-probability
/// branches are dropped.
pub fn expand_product(base: usize, factors: &[FactorKernel], out: &mut Vec<(usize, f64)>) {
    out.push((base, 1.0));
    for kernel in factors {
        let n = out.len();
        for i in 0..n {
            let (idx, p) = out[i];
            for &(off, q) in kernel {
                let pq = p * q;
                if pq > 0.0 {
                    out.push((idx + off, pq));
                }
            }
        }
        out.drain(..n);
    }
}
