//! Fast Walsh-Hadamard transform and the index-shift (block-swap) operator
//! used by chirp decoding.
//!
//! The transform is unnormalized: `fwht(v) = H_m · v` with `H_m` from the
//! doubling recursion, so `fwht(fwht(v)) = 2^m · v`. Callers handle scaling;
//! the detector calls this in its inner loop and must not pay for repeated
//! normalization passes.

use alloc::vec::Vec;

use num_complex::Complex64;

/// In-place iterative butterflies. Panics unless the length is a power of
/// two. Index order is LSB-first: row `k` of `H_m` is `(−1)^popcount(k & x)`.
pub fn fwht_in_place(v: &mut [Complex64]) {
    let n = v.len();
    assert!(n.is_power_of_two(), "length {n} is not a power of two");
    let mut h = 1;
    while h < n {
        let mut base = 0;
        while base < n {
            for j in base..base + h {
                let a = v[j];
                let b = v[j + h];
                v[j] = a + b;
                v[j + h] = a - b;
            }
            base += 2 * h;
        }
        h *= 2;
    }
}

/// Out-of-place convenience wrapper around [`fwht_in_place`].
pub fn fwht(v: &[Complex64]) -> Spectrum {
    let mut values = v.to_vec();
    fwht_in_place(&mut values);
    Spectrum { values }
}

/// `out[x] = v[x XOR e_j]` where `e_j` flips bit `j−1` (LSB-first), i.e.
/// swap adjacent blocks of size `2^(j−1)`. Involutive.
pub fn shift_by_unit(v: &[Complex64], j: usize) -> Vec<Complex64> {
    let n = v.len();
    assert!(n.is_power_of_two(), "length {n} is not a power of two");
    let m = n.trailing_zeros() as usize;
    assert!(j >= 1 && j <= m, "j = {j} outside [1, {m}]");
    let mask = 1usize << (j - 1);
    (0..n).map(|x| v[x ^ mask]).collect()
}

/// `out[i] = a[i] · conj(b[i])`.
pub fn pointwise_conj_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| x * y.conj()).collect()
}

/// A Walsh spectrum: `2^m` values indexed by Walsh row index.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<Complex64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn magnitude(&self, idx: usize) -> f64 {
        self.values[idx].norm()
    }

    /// Index and magnitude of the largest-|·| entry; ties break toward the
    /// lowest index.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = 0;
        let mut best_mag = self.values[0].norm_sqr();
        for (i, v) in self.values.iter().enumerate().skip(1) {
            let mag = v.norm_sqr();
            if mag > best_mag {
                best = i;
                best_mag = mag;
            }
        }
        (best, libm::sqrt(best_mag))
    }

    /// Largest-|·| entry among the indices `fixed_vals | (subset of free bits)`,
    /// ties toward the lowest index. `fixed_mask` bits are pinned to
    /// `fixed_vals`; the rest range freely.
    pub fn argmax_constrained(&self, fixed_mask: usize, fixed_vals: usize) -> (usize, f64) {
        debug_assert_eq!(fixed_vals & !fixed_mask, 0);
        let free = !fixed_mask & (self.values.len() - 1);
        let mut best = usize::MAX;
        let mut best_mag = f64::NEG_INFINITY;
        // iterate all subsets of the free mask
        let mut s = free;
        loop {
            let idx = fixed_vals | s;
            let mag = self.values[idx].norm_sqr();
            if mag > best_mag || (mag == best_mag && idx < best) {
                best = idx;
                best_mag = mag;
            }
            if s == 0 {
                break;
            }
            s = (s - 1) & free;
        }
        (best, libm::sqrt(best_mag))
    }

    /// 1-based descending-magnitude rank of `idx`, ties broken by ascending
    /// index: rank 1 means `idx` holds the highest peak.
    pub fn ranking_of(&self, idx: usize) -> usize {
        let target = self.values[idx].norm_sqr();
        let mut rank = 1;
        for (i, v) in self.values.iter().enumerate() {
            let mag = v.norm_sqr();
            if mag > target || (mag == target && i < idx) {
                rank += 1;
            }
        }
        rank
    }
}
