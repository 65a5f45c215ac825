//! Layered Reed-Muller sequence space: Kerdock and Delsarte-Goethals matrix
//! sets, the user-ID ↔ (P, b) bijection, and sequence generation.
//!
//! A user id in `[0, C)` is read LSB-first: the low `m` bits are the `b`
//! vector, the next `m` bits select a Kerdock matrix, and each further group
//! of `m` bits selects a matrix from the Delsarte-Goethals `(m, t)` set for
//! `t = 1..=r`. The `P` matrix is the GF(2) sum of the selected components,
//! so low ids stay inside low-coherence subspaces and the space grows one
//! layer at a time.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::gf2::{BitMatrix, BitVec, FieldContext};
use crate::Error;

/// Codebook parameters: sequence length exponent `m` (length `2^m`),
/// Delsarte-Goethals order `r`, and user-space size `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RmParams {
    pub m: usize,
    pub r: usize,
    pub c: u64,
}

impl RmParams {
    pub fn new(m: usize, r: usize, c: u64) -> Result<Self, Error> {
        if !(2..=8).contains(&m) {
            return Err(Error::UnsupportedM(m));
        }
        if r > (m - 1) / 2 {
            return Err(Error::InvalidParams("r exceeds (m-1)/2"));
        }
        if c == 0 || c > Self::max_space(m, r) {
            return Err(Error::InvalidParams("c outside [1, 2^(m(r+2))]"));
        }
        Ok(RmParams { m, r, c })
    }

    /// Largest representable user space, 2^(m(r+2)).
    pub fn max_space(m: usize, r: usize) -> u64 {
        1u64 << (m * (r + 2))
    }

    /// Sequence length N = 2^m.
    pub fn seq_len(&self) -> usize {
        1 << self.m
    }
}

/// A length-2^m unit-energy sequence with entries in {1, i, −1, −i}/√(2^m).
#[derive(Debug, Clone, PartialEq)]
pub struct RmSequence {
    values: Vec<Complex64>,
}

impl RmSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Conjugate-linear inner product ⟨self, other⟩ = Σ self·conj(other).
    pub fn inner(&self, other: &RmSequence) -> Complex64 {
        assert_eq!(self.len(), other.len(), "sequence length mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// |⟨s1, s2⟩|.
pub fn coherence(s1: &RmSequence, s2: &RmSequence) -> f64 {
    s1.inner(s2).norm()
}

/// The Kerdock matrix for scalar `a`: the Gram matrix of the symmetric
/// bilinear form (x, y) ↦ tr(a·x·y). Linear in `a`; nonzero scalars give
/// nonsingular matrices.
pub fn kerdock_matrix(ctx: &FieldContext, a: u16) -> BitMatrix {
    let m = ctx.m();
    let mut out = BitMatrix::zeros(m);
    for i in 0..m {
        for j in i..m {
            let v = ctx.trace(ctx.mul(a, ctx.mul(1 << i, 1 << j))) == 1;
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

/// The Delsarte-Goethals (m, t) matrix for scalar `a`: the Gram matrix of
/// the symmetrized form (x, y) ↦ tr(a·(x·y^(2^t) + x^(2^t)·y)). Linear in
/// `a`; the diagonal vanishes because the form is alternating.
pub fn dg_matrix(ctx: &FieldContext, a: u16, t: usize) -> Result<BitMatrix, Error> {
    let m = ctx.m();
    if t == 0 || t > (m - 1) / 2 {
        return Err(Error::InvalidParams("t outside [1, (m-1)/2]"));
    }
    let mut out = BitMatrix::zeros(m);
    for i in 0..m {
        for j in i..m {
            let x = 1u16 << i;
            let y = 1u16 << j;
            let s = ctx.mul(x, ctx.pow2k(y, t)) ^ ctx.mul(ctx.pow2k(x, t), y);
            let v = ctx.trace(ctx.mul(a, s)) == 1;
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok(out)
}

/// Generate the second-order Reed-Muller sequence
/// `φ_{P,b}(x) = (−1)^wt(b) / √(2^m) · i^((2b + Px)ᵀ x)`,
/// indexed LSB-first by the integer value of `x`. The exponent is computed
/// with integer arithmetic mod 4; the diagonal of `P` enters linearly since
/// `x_i² = x_i`.
pub fn rm_sequence(p: &BitMatrix, b: &BitVec) -> RmSequence {
    let m = p.dim();
    assert_eq!(b.len(), m, "b length must equal matrix dimension");
    assert!(p.is_symmetric(), "P must be symmetric");
    let n = 1usize << m;
    let scale = if b.weight() % 2 == 0 { 1.0 } else { -1.0 } / libm::sqrt(n as f64);
    let quarter = [
        Complex64::new(scale, 0.0),
        Complex64::new(0.0, scale),
        Complex64::new(-scale, 0.0),
        Complex64::new(0.0, -scale),
    ];
    let bmask = b.as_index() as u32;
    let values = (0..n)
        .map(|x| {
            let x32 = x as u32;
            let mut quad = 0u32;
            let mut rest = x32;
            while rest != 0 {
                let i = rest.trailing_zeros() as usize;
                quad += (p.row_mask(i) & x32).count_ones();
                rest &= rest - 1;
            }
            let e = (2 * (bmask & x32).count_ones() + quad) % 4;
            quarter[e as usize]
        })
        .collect();
    RmSequence { values }
}

/// Gauss-Jordan basis over the vectorized upper triangles of the generator
/// matrices; decodes a symmetric matrix into generator coefficients.
#[derive(Debug, Clone)]
struct DecodeTable {
    /// (reduced triangle mask, generator coefficient mask) per pivot row.
    rows: Vec<(u64, u64)>,
    pivots: Vec<u32>,
}

impl DecodeTable {
    fn build(generators: &[BitMatrix]) -> Option<Self> {
        let mut table = DecodeTable {
            rows: Vec::with_capacity(generators.len()),
            pivots: Vec::with_capacity(generators.len()),
        };
        for (i, g) in generators.iter().enumerate() {
            let mut v = vectorize(g);
            let mut c = 1u64 << i;
            for (row, &(mask, coeff)) in table.rows.iter().enumerate() {
                if v >> table.pivots[row] & 1 == 1 {
                    v ^= mask;
                    c ^= coeff;
                }
            }
            if v == 0 {
                return None; // dependent generator
            }
            let pivot = v.trailing_zeros();
            // keep rows mutually reduced so decoding is a single pass
            for (row, (mask, coeff)) in table.rows.iter_mut().enumerate() {
                let _ = row;
                if *mask >> pivot & 1 == 1 {
                    *mask ^= v;
                    *coeff ^= c;
                }
            }
            table.rows.push((v, c));
            table.pivots.push(pivot);
        }
        Some(table)
    }

    /// Coefficient mask such that XOR of the selected generators equals `p`,
    /// or `None` when `p` lies outside the span.
    fn decode(&self, p: &BitMatrix) -> Option<u64> {
        let mut v = vectorize(p);
        let mut c = 0u64;
        for (row, &(mask, coeff)) in self.rows.iter().enumerate() {
            if v >> self.pivots[row] & 1 == 1 {
                v ^= mask;
                c ^= coeff;
            }
        }
        (v == 0).then_some(c)
    }
}

/// Upper triangle (diagonal included) of a symmetric matrix as a bit word,
/// row-major over `i ≤ j`.
fn vectorize(p: &BitMatrix) -> u64 {
    let m = p.dim();
    let mut v = 0u64;
    let mut k = 0;
    for i in 0..m {
        for j in i..m {
            if p.get(i, j) {
                v |= 1 << k;
            }
            k += 1;
        }
    }
    v
}

/// The layered codebook: field context, the `(r+1)·m` generator matrices,
/// and the decode table inverting `P` back to component coefficients.
///
/// Immutable after construction; sequence generation is pure.
#[derive(Debug, Clone)]
pub struct Codebook {
    params: RmParams,
    ctx: FieldContext,
    generators: Vec<BitMatrix>,
    decode: DecodeTable,
}

impl Codebook {
    pub fn new(params: RmParams) -> Result<Self, Error> {
        let RmParams { m, r, .. } = params;
        let ctx = FieldContext::new(m)?;
        if m % 2 == 0 && r > 0 {
            // the DG rank bound is only classically guaranteed for odd m
            return Err(Error::InvalidParams("even m supports r = 0 only"));
        }
        let mut generators = Vec::with_capacity((r + 1) * m);
        for i in 0..m {
            generators.push(kerdock_matrix(&ctx, 1 << i));
        }
        for t in 1..=r {
            for i in 0..m {
                generators.push(dg_matrix(&ctx, 1 << i, t)?);
            }
        }
        let decode = DecodeTable::build(&generators)
            .ok_or(Error::InvalidParams("generator matrices are dependent"))?;
        if m % 2 == 0 {
            // verified property, not assumed: every nonzero Kerdock member
            // must be nonsingular for the bijection's rank guarantees
            for a in 1..ctx.order() as u16 {
                if kerdock_matrix(&ctx, a).rank() != m {
                    return Err(Error::InvalidParams("even-m Kerdock rank check failed"));
                }
            }
        }
        Ok(Codebook {
            params,
            ctx,
            generators,
            decode,
        })
    }

    pub fn params(&self) -> &RmParams {
        &self.params
    }

    pub fn ctx(&self) -> &FieldContext {
        &self.ctx
    }

    pub fn seq_len(&self) -> usize {
        self.params.seq_len()
    }

    /// Number of generator matrices, (r+1)·m.
    pub(crate) fn generator_count(&self) -> usize {
        self.generators.len()
    }

    /// Column `col` of generator `i` as an LSB-first bit mask.
    pub(crate) fn generator_column(&self, i: usize, col: usize) -> u32 {
        self.generators[i].column(col).as_index() as u32
    }

    /// XOR of the generator matrices selected by `coeffs`.
    pub(crate) fn assemble_from_coeffs(&self, coeffs: u64) -> BitMatrix {
        self.assemble_p(coeffs)
    }

    /// XOR of the generator matrices selected by `coeffs`.
    fn assemble_p(&self, coeffs: u64) -> BitMatrix {
        let mut p = BitMatrix::zeros(self.params.m);
        let mut rest = coeffs;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            p.xor_assign(&self.generators[i]);
            rest &= rest - 1;
        }
        p
    }

    /// Map a user id to its (P, b) pair.
    pub fn id_to_pb(&self, id: u64) -> Result<(BitMatrix, BitVec), Error> {
        if id >= self.params.c {
            return Err(Error::IdOutOfRange {
                id,
                space: self.params.c,
            });
        }
        let m = self.params.m;
        let b = BitVec::from_index((id & ((1 << m) - 1)) as usize, m);
        let p = self.assemble_p(id >> m);
        Ok((p, b))
    }

    /// Exact inverse of [`id_to_pb`](Self::id_to_pb): solves for the
    /// generator coefficients of `P` and reattaches the `b` bits.
    ///
    /// Returns [`Error::InvalidP`] when `P` is outside the DG span and
    /// [`Error::IdOutOfRange`] when the pair decodes beyond the user space.
    pub fn pb_to_id(&self, p: &BitMatrix, b: &BitVec) -> Result<u64, Error> {
        let m = self.params.m;
        if p.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: p.dim(),
            });
        }
        if b.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: b.len(),
            });
        }
        let coeffs = self.decode.decode(p).ok_or(Error::InvalidP)?;
        let id = (coeffs << m) | b.as_index() as u64;
        if id >= self.params.c {
            return Err(Error::IdOutOfRange {
                id,
                space: self.params.c,
            });
        }
        Ok(id)
    }

    /// Whether `P` lies in the DG(m, r) span (id range aside).
    pub fn contains_p(&self, p: &BitMatrix) -> bool {
        p.dim() == self.params.m && self.decode.decode(p).is_some()
    }

    /// The sequence for a user id.
    pub fn sequence(&self, id: u64) -> Result<RmSequence, Error> {
        let (p, b) = self.id_to_pb(id)?;
        Ok(rm_sequence(&p, &b))
    }
}


#[cfg(test)]
impl BitMatrix {
    /// Stable key for set membership in tests.
    fn rows_key(&self) -> alloc::vec::Vec<u32> {
        (0..self.dim()).map(|i| self.row_mask(i)).collect()
    }
}
