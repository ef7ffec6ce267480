//! Radix-2 complex FFT.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::linalg::{cis, C64};

/// Smallest power of two that is `>= n` (and at least 1).
pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Precomputed plan for a power-of-two length.
#[derive(Debug, Clone)]
pub struct Fft {
    len: usize,
    bits: u32,
    twiddles: Vec<C64>,
}

impl Fft {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || !len.is_power_of_two() {
            return Err(invalid("FFT length must be a nonzero power of two"));
        }
        let twiddles = (0..len / 2)
            .map(|k| cis(-2.0 * PI * k as f64 / len as f64))
            .collect();
        Ok(Self {
            len,
            bits: len.trailing_zeros(),
            twiddles,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `X[k] = Σ x[n] e^{-2πi nk/N}`
    pub fn forward(&self, buf: &mut [C64]) {
        self.run(buf, false);
    }

    /// Unnormalized inverse: `x[n] = Σ X[k] e^{+2πi nk/N}`.
    pub fn inverse(&self, buf: &mut [C64]) {
        self.run(buf, true);
    }

    fn run(&self, buf: &mut [C64], inverse: bool) {
        assert_eq!(buf.len(), self.len, "buffer length does not match FFT plan");
        let n = self.len;
        if n < 2 {
            return;
        }
        let shift = usize::BITS - self.bits;
        for i in 0..n {
            let j = i.reverse_bits() >> shift;
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let w = if inverse { w.conj() } else { w };
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            size *= 2;
        }
    }
}
