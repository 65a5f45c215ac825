//! Binary linear algebra over GF(2) and field arithmetic over GF(2^m).
//!
//! Field elements are integers in `[0, 2^m)`: bit `i` is the coefficient of
//! `α^i` in the polynomial basis (LSB-first). This convention is shared by
//! sequence indices, FWHT row order and peak positions, so it must not change
//! in one place only.

use alloc::vec;
use alloc::vec::Vec;

use crate::Error;

/// Fixed primitive polynomial per extension degree: the lexicographically
/// smallest primitive polynomial of each degree, so codebooks reproduce
/// across runs and implementations.
const PRIMITIVE_POLYS: [(usize, u32); 7] = [
    (2, 0b111),
    (3, 0b1011),
    (4, 0b1_0011),
    (5, 0b10_0101),
    (6, 0b100_0011),
    (7, 0b1000_0011),
    (8, 0b1_0001_1101),
];

/// An ordered sequence of `len` bits, stored LSB-first in a word.
///
/// Houses the `b` vectors of the sequence map and the binary index vectors
/// `x`; `as_index`/`from_index` give the bijection onto `[0, 2^len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitVec {
    bits: u32,
    len: usize,
}

impl BitVec {
    pub fn zero(len: usize) -> Self {
        BitVec { bits: 0, len }
    }

    /// Interpret the low `len` bits of `idx`, bit `i` being element `i`.
    pub fn from_index(idx: usize, len: usize) -> Self {
        debug_assert!(len <= 32);
        assert!(
            idx < (1usize << len),
            "index {idx} out of range for {len} bits"
        );
        BitVec {
            bits: idx as u32,
            len,
        }
    }

    pub fn as_index(&self) -> usize {
        self.bits as usize
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        (self.bits >> i) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len);
        if v {
            self.bits |= 1 << i;
        } else {
            self.bits &= !(1 << i);
        }
    }

    /// Hamming weight.
    pub fn weight(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn xor(&self, other: &BitVec) -> BitVec {
        assert_eq!(self.len, other.len);
        BitVec {
            bits: self.bits ^ other.bits,
            len: self.len,
        }
    }
}

/// A square binary matrix held as LSB-first row masks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: Vec<u32>,
    dim: usize,
}

impl BitMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim <= 32);
        BitMatrix {
            rows: vec![0; dim],
            dim,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = BitMatrix::zeros(dim);
        for i in 0..dim {
            m.set(i, i, true);
        }
        m
    }

    /// Build from row masks (row `i`, bit `j` = entry `(i, j)`).
    pub fn from_rows(rows: &[u32], dim: usize) -> Self {
        assert_eq!(rows.len(), dim);
        let mask = if dim == 32 { u32::MAX } else { (1 << dim) - 1 };
        assert!(rows.iter().all(|r| r & !mask == 0), "row bits beyond dim");
        BitMatrix {
            rows: rows.to_vec(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        assert!(i < self.dim && j < self.dim);
        (self.rows[i] >> j) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        assert!(i < self.dim && j < self.dim);
        if v {
            self.rows[i] |= 1 << j;
        } else {
            self.rows[i] &= !(1 << j);
        }
    }

    pub fn row_mask(&self, i: usize) -> u32 {
        self.rows[i]
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(|&r| r == 0)
    }

    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                if self.get(i, j) != self.get(j, i) {
                    return false;
                }
            }
        }
        true
    }

    pub fn xor(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.dim, other.dim);
        BitMatrix {
            rows: self
                .rows
                .iter()
                .zip(&other.rows)
                .map(|(a, b)| a ^ b)
                .collect(),
            dim: self.dim,
        }
    }

    pub fn xor_assign(&mut self, other: &BitMatrix) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            *a ^= b;
        }
    }

    /// Column `j` as a bit vector (`P · e_{j+1}` over GF(2)).
    pub fn column(&self, j: usize) -> BitVec {
        assert!(j < self.dim);
        let mut v = BitVec::zero(self.dim);
        for i in 0..self.dim {
            if self.get(i, j) {
                v.set(i, true);
            }
        }
        v
    }

    /// Column `j` as an LSB-first integer index.
    pub fn column_index(&self, j: usize) -> usize {
        self.column(j).as_index()
    }

    /// Rank over GF(2) by row elimination.
    pub fn rank(&self) -> usize {
        let mut rows = self.rows.clone();
        let mut rank = 0;
        for col in 0..self.dim {
            let Some(pivot) = (rank..rows.len()).find(|&i| (rows[i] >> col) & 1 == 1) else {
                continue;
            };
            rows.swap(rank, pivot);
            let pivot_row = rows[rank];
            for (i, row) in rows.iter_mut().enumerate() {
                if i != rank && (*row >> col) & 1 == 1 {
                    *row ^= pivot_row;
                }
            }
            rank += 1;
        }
        rank
    }

    /// Multiply by a bit vector over GF(2).
    pub fn mul_vec(&self, v: &BitVec) -> BitVec {
        assert_eq!(v.len(), self.dim);
        let mut out = BitVec::zero(self.dim);
        for i in 0..self.dim {
            let parity = (self.rows[i] & v.bits).count_ones() & 1;
            if parity == 1 {
                out.set(i, true);
            }
        }
        out
    }
}

/// GF(2^m) arithmetic tables under a fixed primitive polynomial.
///
/// Immutable after construction; all operations are pure, so a context can be
/// shared freely across concurrent workers.
#[derive(Debug, Clone)]
pub struct FieldContext {
    m: usize,
    poly: u32,
    log: Vec<u16>,
    antilog: Vec<u16>,
    trace: Vec<u8>,
}

impl FieldContext {
    /// Build the context for the table polynomial of degree `m`.
    pub fn new(m: usize) -> Result<Self, Error> {
        let poly = PRIMITIVE_POLYS
            .iter()
            .find(|&&(deg, _)| deg == m)
            .map(|&(_, p)| p)
            .ok_or(Error::UnsupportedM(m))?;
        Self::with_poly(m, poly)
    }

    /// Build with an explicit polynomial; verifies it is primitive by
    /// checking that α generates the full multiplicative group.
    pub fn with_poly(m: usize, poly: u32) -> Result<Self, Error> {
        if !(2..=16).contains(&m) {
            return Err(Error::UnsupportedM(m));
        }
        if poly >> m != 1 {
            return Err(Error::NotPrimitive { m, poly });
        }
        let order = (1usize << m) - 1;
        let mut antilog = vec![0u16; order];
        let mut log = vec![0u16; 1 << m];
        let mut seen = vec![false; 1 << m];
        let mut x: u32 = 1;
        for i in 0..order {
            if seen[x as usize] {
                return Err(Error::NotPrimitive { m, poly });
            }
            seen[x as usize] = true;
            antilog[i] = x as u16;
            log[x as usize] = i as u16;
            // multiply by alpha and reduce
            x <<= 1;
            if x >> m == 1 {
                x ^= poly;
            }
        }
        if x != 1 {
            return Err(Error::NotPrimitive { m, poly });
        }

        let mut ctx = FieldContext {
            m,
            poly,
            log,
            antilog,
            trace: Vec::new(),
        };
        let trace = (0..1u32 << m)
            .map(|a| {
                let mut t = 0u16;
                let mut x = a as u16;
                for _ in 0..m {
                    t ^= x;
                    x = ctx.mul(x, x);
                }
                debug_assert!(t <= 1);
                t as u8
            })
            .collect();
        ctx.trace = trace;
        Ok(ctx)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn poly(&self) -> u32 {
        self.poly
    }

    /// Field order 2^m.
    pub fn order(&self) -> usize {
        1 << self.m
    }

    /// α^i.
    pub fn antilog(&self, i: usize) -> u16 {
        self.antilog[i % ((1 << self.m) - 1)]
    }

    /// Product in GF(2^m). Panics if an operand is out of range.
    pub fn mul(&self, a: u16, b: u16) -> u16 {
        assert!(
            (a as usize) < self.order() && (b as usize) < self.order(),
            "field element out of range"
        );
        if a == 0 || b == 0 {
            return 0;
        }
        let order = (1 << self.m) - 1;
        let idx = (self.log[a as usize] as usize + self.log[b as usize] as usize) % order;
        self.antilog[idx]
    }

    /// a^(2^k), the k-fold Frobenius.
    pub fn pow2k(&self, a: u16, k: usize) -> u16 {
        let mut x = a;
        for _ in 0..k {
            x = self.mul(x, x);
        }
        x
    }

    /// tr(a) = a + a² + a⁴ + … + a^(2^(m−1)), as a bit.
    pub fn trace(&self, a: u16) -> u8 {
        assert!((a as usize) < self.order(), "field element out of range");
        self.trace[a as usize]
    }
}

/// Materialize a symmetric bilinear form on the polynomial basis
/// {1, α, α², …}: `entries[i][j] = form(α^i, α^j)`.
///
/// Returns [`Error::AsymmetricForm`] if the evaluations are not symmetric.
pub fn gram_matrix<F>(ctx: &FieldContext, form: F) -> Result<BitMatrix, Error>
where
    F: Fn(u16, u16) -> bool,
{
    let m = ctx.m();
    let mut out = BitMatrix::zeros(m);
    for i in 0..m {
        for j in i..m {
            let v = form(1 << i, 1 << j);
            if j > i && form(1 << j, 1 << i) != v {
                return Err(Error::AsymmetricForm);
            }
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: full polynomial multiplication followed by
    /// reduction, no table lookups.
    fn shift_reduce_mul(a: u32, b: u32, poly: u32, m: usize) -> u32 {
        let mut prod = 0u32;
        let mut aa = a;
        let mut bb = b;
        while bb != 0 {
            if bb & 1 == 1 {
                prod ^= aa;
            }
            aa <<= 1;
            bb >>= 1;
        }
        // reduce modulo poly
        let deg = |x: u32| 31 - x.leading_zeros() as usize;
        while prod != 0 && deg(prod) >= m {
            prod ^= poly << (deg(prod) - m);
        }
        prod
    }

    #[test]
    fn mul_zero_annihilates_and_one_is_identity() {
        let ctx = FieldContext::new(4).unwrap();
        for x in 0..16 {
            assert_eq!(ctx.mul(0, x), 0);
            assert_eq!(ctx.mul(1, x), x);
            assert_eq!(ctx.mul(x, ctx.antilog(0)), x);
        }
    }

    #[test]
    fn mul_gf4_matches_tabulated_oracle() {
        let ctx = FieldContext::new(2).unwrap();
        assert_eq!(ctx.mul(2, 2), 3);
        // exhaustive table for GF(4)
        for a in 0..4u16 {
            for b in 0..4u16 {
                let want = shift_reduce_mul(a as u32, b as u32, ctx.poly(), 2) as u16;
                assert_eq!(ctx.mul(a, b), want, "mul({a},{b})");
            }
        }
    }

    #[test]
    fn mul_matches_oracle_all_pairs_small_m() {
        for m in 2..=4 {
            let ctx = FieldContext::new(m).unwrap();
            for a in 0..ctx.order() as u16 {
                for b in 0..ctx.order() as u16 {
                    let want = shift_reduce_mul(a as u32, b as u32, ctx.poly(), m) as u16;
                    assert_eq!(ctx.mul(a, b), want, "m={m} mul({a},{b})");
                }
            }
        }
    }

    #[test]
    fn mul_commutative_associative_distributive() {
        let ctx = FieldContext::new(5).unwrap();
        let elems = [0u16, 1, 2, 7, 19, 30, 31];
        for &a in &elems {
            for &b in &elems {
                assert_eq!(ctx.mul(a, b), ctx.mul(b, a));
                for &c in &elems {
                    assert_eq!(ctx.mul(a, ctx.mul(b, c)), ctx.mul(ctx.mul(a, b), c));
                    assert_eq!(ctx.mul(a, b ^ c), ctx.mul(a, b) ^ ctx.mul(a, c));
                }
            }
        }
    }

    #[test]
    fn trace_values_gf4() {
        let ctx = FieldContext::new(2).unwrap();
        assert_eq!(ctx.trace(0), 0);
        assert_eq!(ctx.trace(1), 0); // 1 + 1² = 0
        assert_eq!(ctx.trace(2), 1); // α + α² = α + (α+1) = 1
        assert_eq!(ctx.trace(3), 1);
    }

    #[test]
    fn trace_is_linear_and_balanced() {
        for m in 2..=8 {
            let ctx = FieldContext::new(m).unwrap();
            let zeros = (0..ctx.order() as u16).filter(|&a| ctx.trace(a) == 0).count();
            assert_eq!(zeros, ctx.order() / 2, "m={m}");
            for a in 0..ctx.order() as u16 {
                for b in [1u16, 3, (ctx.order() as u16) - 1] {
                    assert_eq!(ctx.trace(a ^ b), ctx.trace(a) ^ ctx.trace(b));
                }
            }
        }
    }

    #[test]
    fn all_table_polys_are_primitive() {
        for m in 2..=8 {
            FieldContext::new(m).unwrap();
        }
        assert_eq!(FieldContext::new(9).unwrap_err(), Error::UnsupportedM(9));
    }

    #[test]
    fn non_primitive_poly_rejected() {
        // x⁴ + x³ + x² + x + 1 is irreducible but has order 5, not 15
        assert_eq!(
            FieldContext::with_poly(4, 0b11111).unwrap_err(),
            Error::NotPrimitive { m: 4, poly: 0b11111 }
        );
        // reducible
        assert!(FieldContext::with_poly(4, 0b10101).is_err());
    }

    #[test]
    fn rank_identity_zero_and_duplicate_rows() {
        assert_eq!(BitMatrix::identity(4).rank(), 4);
        assert_eq!(BitMatrix::zeros(4).rank(), 0);
        let m = BitMatrix::from_rows(&[0b11, 0b11], 2);
        assert_eq!(m.rank(), 1);
    }

    #[test]
    fn rank_random_matrices_match_row_reduction_oracle() {
        // oracle: count of nonzero rows after full Gauss-Jordan done a second,
        // column-major way
        fn oracle(rows: &[u32], dim: usize) -> usize {
            let mut basis: Vec<u32> = Vec::new();
            for &r in rows {
                let mut r = r;
                for &b in &basis {
                    let high = 31 - b.leading_zeros();
                    if (r >> high) & 1 == 1 {
                        r ^= b;
                    }
                }
                if r != 0 {
                    basis.push(r);
                    basis.sort_by_key(|x| core::cmp::Reverse(*x));
                }
            }
            let _ = dim;
            basis.len()
        }
        let mut state = 0x1234_5678u32;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 17;
            state ^= state << 5;
            state
        };
        for dim in [2usize, 3, 5, 7, 8] {
            for _ in 0..50 {
                let rows: Vec<u32> = (0..dim).map(|_| next() & ((1 << dim) - 1)).collect();
                let m = BitMatrix::from_rows(&rows, dim);
                assert_eq!(m.rank(), oracle(&rows, dim));
            }
        }
    }

    #[test]
    fn gram_of_zero_form_is_zero() {
        let ctx = FieldContext::new(3).unwrap();
        let g = gram_matrix(&ctx, |_, _| false).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn gram_of_trace_form_on_gf4() {
        let ctx = FieldContext::new(2).unwrap();
        let g = gram_matrix(&ctx, |x, y| ctx.trace(ctx.mul(x, y)) == 1).unwrap();
        // tr(1·1)=0, tr(1·α)=1, tr(α·α)=1
        assert_eq!(g, BitMatrix::from_rows(&[0b10, 0b11], 2));
    }

    #[test]
    fn gram_of_scaled_trace_form_is_nonsingular() {
        for m in [2usize, 3, 5] {
            let ctx = FieldContext::new(m).unwrap();
            for a in 1..ctx.order() as u16 {
                let g = gram_matrix(&ctx, |x, y| {
                    ctx.trace(ctx.mul(a, ctx.mul(x, y))) == 1
                })
                .unwrap();
                assert_eq!(g.rank(), m, "m={m} a={a}");
            }
        }
    }

    #[test]
    fn gram_rejects_asymmetric_form() {
        let ctx = FieldContext::new(3).unwrap();
        // form(x, y) = tr(x·y²) is not symmetric
        let r = gram_matrix(&ctx, |x, y| ctx.trace(ctx.mul(x, ctx.mul(y, y))) == 1);
        assert_eq!(r.unwrap_err(), Error::AsymmetricForm);
    }

    #[test]
    fn trace_form_differences_have_full_rank() {
        // gram(tr(a·x·y)) xor gram(tr(b·x·y)) = gram(tr((a^b)·x·y)), so
        // checking all nonzero scalars covers all pairs
        for m in [3usize, 5, 7] {
            let ctx = FieldContext::new(m).unwrap();
            for c in 1..ctx.order() as u16 {
                let g = gram_matrix(&ctx, |x, y| {
                    ctx.trace(ctx.mul(c, ctx.mul(x, y))) == 1
                })
                .unwrap();
                assert_eq!(g.rank(), m);
            }
        }
    }

    #[test]
    fn bitvec_roundtrip_and_weight() {
        for idx in 0..32 {
            let v = BitVec::from_index(idx, 5);
            assert_eq!(v.as_index(), idx);
            assert_eq!(v.weight(), (idx as u32).count_ones());
        }
        let v = BitVec::from_index(0b101, 3);
        assert!(v.get(0) && !v.get(1) && v.get(2));
    }

    #[test]
    fn matrix_column_and_mul_vec_agree() {
        let m = BitMatrix::from_rows(&[0b011, 0b101, 0b110], 3);
        for j in 0..3 {
            let e = BitVec::from_index(1 << j, 3);
            assert_eq!(m.mul_vec(&e), m.column(j));
        }
    }
}
