//! Recovery of active users' (P, b) pairs and complex gains from the aliased
//! signal: chirp-decoded column spectra, shuffled column recovery under the
//! symmetry constraint, two candidate-decision metrics, validity checks, and
//! the successive interference cancellation loop.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::codebook::{rm_sequence, Codebook, RmSequence};
use crate::gf2::{BitMatrix, BitVec};
use crate::transforms::{fwht, pointwise_conj_mul, shift_by_unit, Spectrum};
use crate::Error;

/// Stopping rule for the SIC loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorMode {
    /// Stop once `k` users are found (the expected active count is known).
    KnownK,
    /// Stop once the residual norm drops to `epsilon`.
    ResidualThreshold,
}

/// Candidate scoring rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionRule {
    /// Sum over columns of the peak's descending-magnitude rank, Eq.-style
    /// column distance. Cheap: reuses the cached spectra.
    Distance,
    /// Residual energy after joint least-squares cancellation with the
    /// candidate included. More powerful, more expensive.
    ResidualEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub mode: DetectorMode,
    /// Expected active users (known-k mode).
    pub k: usize,
    /// Residual-norm stop threshold.
    pub epsilon: f64,
    /// Maximum SIC iterations.
    pub t_max: usize,
    /// Number of column-recovery orders tried per iteration; the first is
    /// always the identity order so `p_max = 1` reproduces the unshuffled
    /// baseline.
    pub p_max: usize,
    pub decision_rule: DecisionRule,
    /// Extra permutations tried when every candidate is invalid or already
    /// detected.
    pub reshuffle_limit: usize,
    /// Width of the per-permutation column-assignment list search. Width 1
    /// is the plain greedy argmax of [`recover_p`]; larger widths also keep
    /// runner-up columns and use codebook membership to reject mixtures of
    /// several users' columns, which the greedy path cannot recover from.
    /// Costs no additional transforms, only scans of the cached spectra.
    pub list_width: usize,
    /// Credibility gate: a candidate is cancelled only if it removes at
    /// least this fraction of the current residual energy. Candidates from
    /// real users shed their whole received power; spurious codebook
    /// members shed almost nothing. Gated-out candidates trigger
    /// reshuffling; if the budget runs out the best valid candidate is
    /// accepted anyway. Zero disables the gate.
    pub accept_gate: f64,
    /// Leave-one-out refinement passes over the detected set after the main
    /// loop; each slot re-extraction counts against `t_max` and swaps in its
    /// replacement only when the joint residual strictly improves. Zero
    /// disables refinement.
    pub refine_passes: usize,
}

impl DetectorConfig {
    /// Known-k detection with defaults used by the experiments.
    pub fn known_k(k: usize) -> Self {
        DetectorConfig {
            mode: DetectorMode::KnownK,
            k,
            epsilon: 0.0,
            t_max: 2 * k.max(1) + 2,
            p_max: 4,
            decision_rule: DecisionRule::Distance,
            reshuffle_limit: 8,
            list_width: 16,
            accept_gate: 0.05,
            refine_passes: 1,
        }
    }

    /// Residual-threshold detection for unknown user counts.
    pub fn residual_threshold(epsilon: f64, t_max: usize) -> Self {
        DetectorConfig {
            mode: DetectorMode::ResidualThreshold,
            k: 0,
            epsilon,
            t_max: t_max.max(1),
            p_max: 4,
            decision_rule: DecisionRule::Distance,
            reshuffle_limit: 8,
            list_width: 16,
            accept_gate: 0.05,
            refine_passes: 1,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.p_max == 0 {
            return Err(Error::InvalidParams("p_max must be >= 1"));
        }
        if self.t_max == 0 {
            return Err(Error::InvalidParams("t_max must be >= 1"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParams("epsilon must be >= 0"));
        }
        if self.mode == DetectorMode::KnownK && self.k == 0 {
            return Err(Error::InvalidParams("k must be >= 1 in known-k mode"));
        }
        if self.list_width == 0 {
            return Err(Error::InvalidParams("list_width must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.accept_gate) {
            return Err(Error::InvalidParams("accept_gate must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Stop threshold for residual-threshold mode given the per-sample noise
/// standard deviation: slightly above the expected noise norm √(2^m)·σ.
pub fn residual_epsilon(m: usize, noise_std: f64) -> f64 {
    1.1 * libm::sqrt((1usize << m) as f64) * noise_std
}

/// One extracted (P, b) with its decision score (lower is better).
#[derive(Debug, Clone)]
pub struct Candidate {
    pub p: BitMatrix,
    pub b: BitVec,
    pub score: f64,
}

/// A detected user with its jointly re-estimated channel gain.
#[derive(Debug, Clone)]
pub struct DetectedUser {
    pub id: u64,
    pub p: BitMatrix,
    pub b: BitVec,
    pub gain: Complex64,
    /// Decision score of the winning candidate.
    pub score: f64,
    /// 1-based SIC iteration that extracted this user.
    pub iteration: usize,
}

/// Full output of a detection run.
#[derive(Debug, Clone)]
pub struct Detection {
    pub users: Vec<DetectedUser>,
    /// Residual energy after each iteration's cancellation.
    pub residual_trace: Vec<f64>,
    /// False when the run terminated early (reshuffles exhausted or the
    /// stop rule was not reached within `t_max`).
    pub complete: bool,
    pub iterations: usize,
    /// FWHT invocations across the run, counted at every transform call
    /// site: m per column-spectra pass plus one per b recovery.
    pub fwht_calls: usize,
    /// Extra permutations drawn beyond the per-iteration `p_max` budget.
    pub reshuffles: usize,
}

/// Level-1 detection: all users share one known `P`. A single FWHT of
/// `y · conj(φ_{P,0})` localizes every `b`; the `k` highest peaks are
/// returned with their amplitudes, descending.
pub fn detect_level1(
    y: &[Complex64],
    p: &BitMatrix,
    k: usize,
) -> Result<Vec<(BitVec, f64)>, Error> {
    let m = p.dim();
    let n = 1usize << m;
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParams("k outside [1, 2^m]"));
    }
    let base = rm_sequence(p, &BitVec::zero(m));
    let spectrum = fwht(&pointwise_conj_mul(y, base.values()));
    let mut peaks: Vec<(usize, f64)> = (0..n).map(|i| (i, spectrum.magnitude(i))).collect();
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(peaks
        .into_iter()
        .take(k)
        .map(|(i, mag)| (BitVec::from_index(i, m), mag))
        .collect())
}

/// Chirp-decoded column spectra: `Y_{e_j} = fwht(y(x+e_j) · conj(y))` for
/// `j = 1..=m`. Computed once per SIC iteration and cached; shuffling the
/// recovery order costs nothing extra.
pub fn column_spectra(y: &[Complex64]) -> Vec<Spectrum> {
    let mut count = 0;
    column_spectra_counted(y, &mut count)
}

fn column_spectra_counted(y: &[Complex64], fwht_calls: &mut usize) -> Vec<Spectrum> {
    let n = y.len();
    assert!(n.is_power_of_two(), "length {n} is not a power of two");
    let m = n.trailing_zeros() as usize;
    (1..=m)
        .map(|j| {
            *fwht_calls += 1;
            fwht(&pointwise_conj_mul(&shift_by_unit(y, j), y))
        })
        .collect()
}

/// Assemble a symmetric `P` from the column spectra, recovering columns in
/// the given order. For each column the peak search runs only over indices
/// consistent with the entries pinned by symmetry against the columns
/// recovered before it; ties break toward the lowest index.
pub fn recover_p(spectra: &[Spectrum], order: &[usize]) -> BitMatrix {
    let m = spectra.len();
    debug_assert!(order.len() == m, "order must be a permutation of 1..=m");
    let mut p = BitMatrix::zeros(m);
    let mut recovered: Vec<usize> = Vec::with_capacity(m);
    for &col in order {
        let c = col - 1;
        let mut fixed_mask = 0usize;
        let mut fixed_vals = 0usize;
        for &prev in &recovered {
            fixed_mask |= 1 << prev;
            if p.get(c, prev) {
                fixed_vals |= 1 << prev;
            }
        }
        let (idx, _) = spectra[c].argmax_constrained(fixed_mask, fixed_vals);
        for i in 0..m {
            p.set(i, c, (idx >> i) & 1 == 1);
        }
        recovered.push(c);
    }
    assert!(p.is_symmetric(), "constrained recovery must stay symmetric");
    p
}

/// Recover `b` for a fixed `P`: the argmax of `fwht(y · conj(φ_{P,0}))`,
/// returned with its amplitude.
pub fn recover_b(y: &[Complex64], p: &BitMatrix) -> (BitVec, f64) {
    let mut count = 0;
    recover_b_counted(y, p, &mut count)
}

fn recover_b_counted(y: &[Complex64], p: &BitMatrix, fwht_calls: &mut usize) -> (BitVec, f64) {
    let m = p.dim();
    debug_assert_eq!(y.len(), 1 << m);
    let base = rm_sequence(p, &BitVec::zero(m));
    *fwht_calls += 1;
    let spectrum = fwht(&pointwise_conj_mul(y, base.values()));
    let (idx, mag) = spectrum.argmax();
    (BitVec::from_index(idx, m), mag)
}

/// Width-limited list search over column assignments: the constrained
/// argmax of [`recover_p`] generalized to keep up to `width` partial
/// assemblies, branching on the strongest consistent indices per column and
/// pruning by cumulative peak energy. Reads only the cached spectra, so it
/// adds no transforms. Returns the deduplicated leaf assemblies, strongest
/// path first; width 1 degenerates to the plain greedy recovery.
fn recover_p_list(spectra: &[Spectrum], order: &[usize], width: usize) -> Vec<BitMatrix> {
    let m = spectra.len();
    let n = 1usize << m;

    // chosen index per processed column (aligned with the order prefix),
    // ranked by cumulative peak energy
    let mut partials: Vec<(Vec<usize>, f64)> = alloc::vec![(Vec::new(), 0.0)];
    let mut processed: Vec<usize> = Vec::with_capacity(m);
    for &col in order {
        let c = col - 1;
        let mut next: Vec<(Vec<usize>, f64)> = Vec::with_capacity(partials.len() * width);
        for (assign, score) in &partials {
            let mut fixed_mask = 0usize;
            let mut fixed_vals = 0usize;
            for (pos, &prev) in processed.iter().enumerate() {
                fixed_mask |= 1 << prev;
                if (assign[pos] >> c) & 1 == 1 {
                    fixed_vals |= 1 << prev;
                }
            }
            // strongest consistent indices, ties toward the lowest index
            let mut top: Vec<(usize, f64)> = Vec::with_capacity(width + 1);
            let mut s = !fixed_mask & (n - 1);
            loop {
                let idx = fixed_vals | s;
                let mag = spectra[c].values()[idx].norm_sqr();
                let pos =
                    top.partition_point(|&(i2, m2)| m2 > mag || (m2 == mag && i2 < idx));
                if pos < width {
                    top.insert(pos, (idx, mag));
                    top.truncate(width);
                }
                if s == 0 {
                    break;
                }
                s = (s - 1) & (!fixed_mask & (n - 1));
            }
            for &(idx, mag) in &top {
                let mut extended = assign.clone();
                extended.push(idx);
                next.push((extended, score + mag));
            }
        }
        next.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        next.truncate(width);
        partials = next;
        processed.push(c);
    }

    let mut out: Vec<BitMatrix> = Vec::with_capacity(partials.len());
    for (assign, _) in &partials {
        let mut p = BitMatrix::zeros(m);
        for (pos, &c) in processed.iter().enumerate() {
            for i in 0..m {
                p.set(i, c, (assign[pos] >> i) & 1 == 1);
            }
        }
        debug_assert!(p.is_symmetric());
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Anchored assemblies: hypothesize each of the `anchors` strongest peaks of
/// each column as the first assignment, then fill the remaining columns by
/// the symmetry-constrained argmax in the given order. Complements the list
/// search when the leading columns of an order are dominated by
/// interference; reads only cached spectra.
fn recover_p_anchored(spectra: &[Spectrum], order: &[usize], anchors: usize) -> Vec<BitMatrix> {
    let m = spectra.len();
    let n = 1usize << m;
    let mut out: Vec<BitMatrix> = Vec::with_capacity(m * anchors);
    for &anchor_col in order {
        let a = anchor_col - 1;
        // top `anchors` peaks of the anchor column
        let mut top: Vec<(usize, f64)> = Vec::with_capacity(anchors + 1);
        for idx in 0..n {
            let mag = spectra[a].values()[idx].norm_sqr();
            let pos = top.partition_point(|&(i2, m2)| m2 > mag || (m2 == mag && i2 < idx));
            if pos < anchors {
                top.insert(pos, (idx, mag));
                top.truncate(anchors);
            }
        }
        for &(anchor_idx, _) in &top {
            let mut p = BitMatrix::zeros(m);
            for i in 0..m {
                p.set(i, a, (anchor_idx >> i) & 1 == 1);
            }
            let mut recovered: Vec<usize> = alloc::vec![a];
            for &col in order {
                let c = col - 1;
                if c == a {
                    continue;
                }
                let mut fixed_mask = 0usize;
                let mut fixed_vals = 0usize;
                for &prev in &recovered {
                    fixed_mask |= 1 << prev;
                    if p.get(c, prev) {
                        fixed_vals |= 1 << prev;
                    }
                }
                let (idx, _) = spectra[c].argmax_constrained(fixed_mask, fixed_vals);
                for i in 0..m {
                    p.set(i, c, (idx >> i) & 1 == 1);
                }
                recovered.push(c);
            }
            debug_assert!(p.is_symmetric());
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

/// Per-column linear solver over generator coefficients: the codebook
/// members whose column `a` equals a given bit pattern form an affine family
/// in coefficient space. Anchoring one confident column therefore yields a
/// small set of exact members to test, instead of hoping a greedy assembly
/// lands in the span.
struct ColumnSolver {
    /// per column: mutually reduced (column bits, coeff mask) rows
    pivots: Vec<Vec<(u32, u64)>>,
    /// per column: coefficient null-space basis
    nulls: Vec<Vec<u64>>,
}

impl ColumnSolver {
    fn build(cb: &Codebook) -> Self {
        let m = cb.params().m;
        let n_gen = cb.generator_count();
        let mut pivots = Vec::with_capacity(m);
        let mut nulls = Vec::with_capacity(m);
        for a in 0..m {
            let mut rows: Vec<(u32, u64)> = Vec::new();
            let mut null: Vec<u64> = Vec::new();
            for i in 0..n_gen {
                let mut v = cb.generator_column(i, a);
                let mut c = 1u64 << i;
                for &(rv, rc) in &rows {
                    if (v >> rv.trailing_zeros()) & 1 == 1 {
                        v ^= rv;
                        c ^= rc;
                    }
                }
                if v == 0 {
                    null.push(c);
                } else {
                    let pb = v.trailing_zeros();
                    for (rv, rc) in rows.iter_mut() {
                        if (*rv >> pb) & 1 == 1 {
                            *rv ^= v;
                            *rc ^= c;
                        }
                    }
                    rows.push((v, c));
                }
            }
            pivots.push(rows);
            nulls.push(null);
        }
        ColumnSolver { pivots, nulls }
    }

    /// A particular coefficient solution with column `a` equal to `v`.
    fn solve(&self, a: usize, v: u32) -> Option<u64> {
        let mut v = v;
        let mut c = 0u64;
        for &(rv, rc) in &self.pivots[a] {
            if (v >> rv.trailing_zeros()) & 1 == 1 {
                v ^= rv;
                c ^= rc;
            }
        }
        (v == 0).then_some(c)
    }
}

/// Enumerate codebook members anchored on the strongest per-column peaks,
/// scored by chirp consistency (ascending). Returns at most `cap` entries.
/// Empty when the affine families are too large to enumerate (high r).
fn algebraic_pool(
    cb: &Codebook,
    solver: &ColumnSolver,
    spectra: &[Spectrum],
    anchors: usize,
    cap: usize,
) -> Vec<(BitMatrix, f64)> {
    let m = cb.params().m;
    let n = 1usize << m;
    if solver.nulls.iter().any(|nl| nl.len() > 7) {
        return Vec::new();
    }
    let coeff_limit = (cb.params().c - 1) >> m;
    let mut seen: alloc::collections::BTreeSet<u64> = alloc::collections::BTreeSet::new();
    let mut pool: Vec<(BitMatrix, f64, u64)> = Vec::new();
    for a in 0..m {
        let mut top: Vec<(usize, f64)> = Vec::with_capacity(anchors + 1);
        for idx in 0..n {
            let mag = spectra[a].values()[idx].norm_sqr();
            let pos = top.partition_point(|&(i2, m2)| m2 > mag || (m2 == mag && i2 < idx));
            if pos < anchors {
                top.insert(pos, (idx, mag));
                top.truncate(anchors);
            }
        }
        for &(idx, _) in &top {
            let Some(base) = solver.solve(a, idx as u32) else {
                continue;
            };
            let null = &solver.nulls[a];
            for combo in 0u64..(1 << null.len()) {
                let mut u = base;
                let mut rest = combo;
                while rest != 0 {
                    let j = rest.trailing_zeros() as usize;
                    u ^= null[j];
                    rest &= rest - 1;
                }
                if u > coeff_limit || !seen.insert(u) {
                    continue;
                }
                let p = cb.assemble_from_coeffs(u);
                let score = chirp_consistency(&p, spectra);
                pool.push((p, score, u));
            }
        }
    }
    pool.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.2.cmp(&b.2)));
    pool.truncate(cap);
    pool.into_iter().map(|(p, s, _)| (p, s)).collect()
}

/// The rotated column-peak value `Y_{e_j}[P·e_j] · i^{−P_jj}`, which for a
/// real user equals `|h|²·(−1)^{b_j}` plus interference.
fn rotated_peak(p: &BitMatrix, spectra: &[Spectrum], j: usize) -> Complex64 {
    let v = spectra[j].values()[p.column_index(j)];
    if p.get(j, j) {
        Complex64::new(v.im, -v.re)
    } else {
        v
    }
}

/// Free `b` estimate from the signs of the rotated column peaks: bit `j` of
/// `b` flips the sign of column `j`'s peak, so no further transform is
/// needed to propose the pair.
fn sign_b(p: &BitMatrix, spectra: &[Spectrum]) -> BitVec {
    let m = p.dim();
    let mut b = BitVec::zero(m);
    for j in 0..m {
        if rotated_peak(p, spectra, j).re < 0.0 {
            b.set(j, true);
        }
    }
    b
}

/// Credibility of a leaf assembly from the cached spectra alone: for a real
/// user with gain h, the column-peak values satisfy
/// `Y_{e_j}[P·e_j] = |h|²·(−1)^{b_j}·i^{P_jj}`, so after stripping the known
/// `i^{P_jj}` factor they must be real with one common magnitude. The score
/// is the summed squared deviation from that structure, normalized by the
/// inferred magnitude; mixtures of several users' columns and interference
/// artifacts violate it badly.
fn chirp_consistency(p: &BitMatrix, spectra: &[Spectrum]) -> f64 {
    let m = p.dim();
    let mut re = [0.0f64; 32];
    let mut err = 0.0;
    let mut amp = 0.0;
    for j in 0..m {
        let w = rotated_peak(p, spectra, j);
        re[j] = libm::fabs(w.re);
        amp += re[j];
        err += w.im * w.im;
    }
    amp /= m as f64;
    for r in re.iter().take(m) {
        err += (r - amp) * (r - amp);
    }
    if amp > 0.0 {
        err / (amp * amp)
    } else {
        f64::INFINITY
    }
}

/// Column-distance error metric: for each column `j` of `P`, the 1-based
/// descending-magnitude rank of the spectrum entry at index `P·e_j`, summed
/// over columns. A perfectly localized single user scores `m`.
pub fn distance_score(p: &BitMatrix, spectra: &[Spectrum]) -> usize {
    let m = p.dim();
    debug_assert_eq!(spectra.len(), m);
    (0..m)
        .map(|j| spectra[j].ranking_of(p.column_index(j)))
        .sum()
}

/// Least-squares gains for the given sequences against `y`, via the normal
/// equations. Errors with [`Error::RankDeficient`] when the Gram system is
/// singular (duplicate or collided sequences in the detected set).
pub fn ls_channel_estimate(
    y: &[Complex64],
    sequences: &[RmSequence],
) -> Result<Vec<Complex64>, Error> {
    let t = sequences.len();
    assert!(t >= 1, "need at least one sequence");
    for s in sequences {
        assert_eq!(s.len(), y.len(), "sequence/observation length mismatch");
    }
    // gram[i][j] = <s_j, s_i>, rhs[i] = <y, s_i>
    let mut gram = vec![vec![Complex64::new(0.0, 0.0); t]; t];
    let mut rhs = vec![Complex64::new(0.0, 0.0); t];
    for i in 0..t {
        for j in 0..t {
            gram[i][j] = sequences[j].inner(&sequences[i]);
        }
        rhs[i] = sequences[i]
            .values()
            .iter()
            .zip(y)
            .map(|(s, yv)| yv * s.conj())
            .sum();
    }
    solve_complex(&mut gram, &mut rhs)?;
    Ok(rhs)
}

/// Gaussian elimination with partial pivoting; solution overwrites `rhs`.
fn solve_complex(a: &mut [Vec<Complex64>], rhs: &mut [Complex64]) -> Result<(), Error> {
    let n = rhs.len();
    for col in 0..n {
        let (pivot, mag) = (col..n)
            .map(|i| (i, a[i][col].norm_sqr()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if mag < 1e-24 {
            return Err(Error::RankDeficient);
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        let inv = Complex64::new(1.0, 0.0) / a[col][col];
        for i in 0..n {
            if i == col {
                continue;
            }
            let factor = a[i][col] * inv;
            for j in col..n {
                let v = a[col][j];
                a[i][j] -= factor * v;
            }
            let r = rhs[col];
            rhs[i] -= factor * r;
        }
    }
    for i in 0..n {
        rhs[i] /= a[i][i];
    }
    Ok(())
}

/// Residual energy after jointly estimating gains for the detected
/// sequences plus one candidate sequence and cancelling them from `y`.
pub fn residual_score(
    y: &[Complex64],
    detected: &[RmSequence],
    candidate: &RmSequence,
) -> Result<f64, Error> {
    let mut seqs: Vec<RmSequence> = Vec::with_capacity(detected.len() + 1);
    seqs.extend_from_slice(detected);
    seqs.push(candidate.clone());
    let gains = ls_channel_estimate(y, &seqs)?;
    let mut energy = 0.0;
    for (x, &yv) in y.iter().enumerate() {
        let mut v = yv;
        for (g, s) in gains.iter().zip(&seqs) {
            v -= g * s.values()[x];
        }
        energy += v.norm_sqr();
    }
    Ok(energy)
}

/// Candidate validity: membership in the codebook's DG span, with a cheap
/// rank pre-filter — any matrix with `0 < rank < m − 2r` violates the rank
/// property and cannot be a member. The all-zero matrix is the level-1
/// member and is valid.
pub fn validate_p(p: &BitMatrix, cb: &Codebook) -> bool {
    if !p.is_symmetric() {
        return false;
    }
    if p.is_zero() {
        return true;
    }
    let bound = cb.params().m.saturating_sub(2 * cb.params().r);
    if p.rank() < bound {
        return false;
    }
    cb.contains_p(p)
}

/// One candidate-extraction round on the given residual: chirp spectra,
/// proposal ranking, `p_max` permutation candidates with one b recovery
/// each, scoring, validity/duplicate checks, the credibility gate, and the
/// bounded reshuffle retry. Returns the accepted pair, or `None` when the
/// budget runs out with nothing valid and new.
#[allow(clippy::too_many_arguments)]
fn run_iteration<R: Rng + ?Sized>(
    y: &[Complex64],
    residual: &[Complex64],
    cb: &Codebook,
    solver: &ColumnSolver,
    cfg: &DetectorConfig,
    rng: &mut R,
    detected: &[DetectedUser],
    detected_seqs: &[RmSequence],
    fwht_calls: &mut usize,
    reshuffles: &mut usize,
) -> Option<(Candidate, u64)> {
    let m = cb.params().m;
    let identity_order: Vec<usize> = (1..=m).collect();
    let spectra = column_spectra_counted(residual, fwht_calls);

    // member proposals anchored on strong column peaks, shared by every
    // permutation of this round and ranked by how much of the residual they
    // would cancel; b comes for free from the signs of the rotated peaks
    let mut proposals: Vec<(BitMatrix, f64)> = if cfg.list_width > 1 {
        algebraic_pool(cb, solver, &spectra, cfg.list_width.clamp(2, 8), 96)
            .into_iter()
            .map(|(p, _)| {
                let b = sign_b(&p, &spectra);
                let seq = rm_sequence(&p, &b);
                let res = residual_score(y, detected_seqs, &seq).unwrap_or(f64::INFINITY);
                (p, res)
            })
            .collect()
    } else {
        Vec::new()
    };
    proposals.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut pool_cursor = 0usize;

    let extract = |order: &[usize], pool_cursor: &mut usize, fwht_calls: &mut usize| -> Candidate {
        // among the list-search leaves prefer a codebook member whose group
        // leaves room in the user space; mixtures of several users' columns
        // land outside the span and are skipped here
        let mut leaves = recover_p_list(&spectra, order, cfg.list_width);
        if cfg.list_width > 1 {
            let anchors = cfg.list_width.clamp(2, 8);
            for p in recover_p_anchored(&spectra, order, anchors) {
                if !leaves.contains(&p) {
                    leaves.push(p);
                }
            }
        }
        let zero_b = BitVec::zero(m);
        let leaf_best = leaves
            .iter()
            .filter(|leaf| validate_p(leaf, cb) && cb.pb_to_id(leaf, &zero_b).is_ok())
            .map(|leaf| {
                let b = sign_b(leaf, &spectra);
                let seq = rm_sequence(leaf, &b);
                let res = residual_score(y, detected_seqs, &seq).unwrap_or(f64::INFINITY);
                (leaf.clone(), res)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let p = match (leaf_best, proposals.get(*pool_cursor)) {
            (Some((lp, lr)), Some((ap, ar))) => {
                if *ar <= lr {
                    *pool_cursor += 1;
                    ap.clone()
                } else {
                    lp
                }
            }
            (Some((lp, _)), None) => lp,
            (None, Some((ap, _))) => {
                *pool_cursor += 1;
                ap.clone()
            }
            (None, None) => leaves[0].clone(),
        };
        let (b, _amp) = recover_b_counted(residual, &p, fwht_calls);
        let score = match cfg.decision_rule {
            DecisionRule::Distance => distance_score(&p, &spectra) as f64,
            DecisionRule::ResidualEnergy => {
                let seq = rm_sequence(&p, &b);
                residual_score(y, detected_seqs, &seq).unwrap_or(f64::INFINITY)
            }
        };
        Candidate { p, b, score }
    };

    let mut candidates: Vec<Candidate> = Vec::with_capacity(cfg.p_max);
    for p_idx in 0..cfg.p_max {
        let order = if p_idx == 0 {
            identity_order.clone()
        } else {
            let mut o = identity_order.clone();
            o.shuffle(rng);
            o
        };
        candidates.push(extract(&order, &mut pool_cursor, fwht_calls));
    }

    // lowest score first; walk until a valid, not-yet-detected pair
    let mut order_by_score: Vec<usize> = (0..candidates.len()).collect();
    order_by_score.sort_by(|&a, &b| candidates[a].score.total_cmp(&candidates[b].score));

    let accept = |cand: &Candidate| -> Option<u64> {
        if !validate_p(&cand.p, cb) {
            return None;
        }
        let id = cb.pb_to_id(&cand.p, &cand.b).ok()?;
        if detected.iter().any(|u| u.id == id) {
            return None;
        }
        Some(id)
    };
    // credibility check before cancellation: a real user's candidate sheds
    // its whole received power from the residual
    let residual_energy: f64 = residual.iter().map(|v| v.norm_sqr()).sum();
    let gate_pass = |cand: &Candidate| -> bool {
        if cfg.accept_gate <= 0.0 {
            return true;
        }
        let seq = rm_sequence(&cand.p, &cand.b);
        match residual_score(y, detected_seqs, &seq) {
            Ok(after) => after <= (1.0 - cfg.accept_gate) * residual_energy,
            Err(_) => false,
        }
    };

    let mut fallback: Option<(Candidate, u64)> = None;
    for idx in order_by_score {
        if let Some(id) = accept(&candidates[idx]) {
            if gate_pass(&candidates[idx]) {
                return Some((candidates[idx].clone(), id));
            }
            if fallback.is_none() {
                fallback = Some((candidates[idx].clone(), id));
            }
        }
    }
    // keep shuffling until something new, valid and credible appears
    for _ in 0..cfg.reshuffle_limit {
        *reshuffles += 1;
        let mut o = identity_order.clone();
        o.shuffle(rng);
        let cand = extract(&o, &mut pool_cursor, fwht_calls);
        if let Some(id) = accept(&cand) {
            if gate_pass(&cand) {
                return Some((cand, id));
            }
            if fallback.is_none() {
                fallback = Some((cand, id));
            }
        }
    }
    // budget exhausted: settle for the best valid candidate seen
    fallback
}

fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

fn cancel(y: &[Complex64], gains: &[Complex64], seqs: &[RmSequence]) -> Vec<Complex64> {
    let mut out = y.to_vec();
    for (gain, seq) in gains.iter().zip(seqs) {
        for (r, s) in out.iter_mut().zip(seq.values()) {
            *r -= gain * s;
        }
    }
    out
}

/// SIC detection with shuffled column recovery (the known-k / residual
/// threshold stop rules, candidate scoring, duplicate and validity handling
/// are all driven by `cfg`), followed by bounded leave-one-out refinement of
/// the detected set. Deterministic given the generator state.
pub fn sic_detect<R: Rng + ?Sized>(
    y: &[Complex64],
    cb: &Codebook,
    cfg: &DetectorConfig,
    rng: &mut R,
) -> Result<Detection, Error> {
    cfg.validate()?;
    let m = cb.params().m;
    let n = 1usize << m;
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: y.len(),
        });
    }

    let mut residual: Vec<Complex64> = y.to_vec();
    let mut users: Vec<DetectedUser> = Vec::new();
    let mut sequences: Vec<RmSequence> = Vec::new();
    let mut trace: Vec<f64> = Vec::new();
    let mut fwht_calls = 0usize;
    let mut reshuffles = 0usize;
    let mut iterations = 0usize;
    let mut exhausted = false;

    let solver = ColumnSolver::build(cb);

    while iterations < cfg.t_max {
        if cfg.mode == DetectorMode::KnownK && users.len() >= cfg.k {
            break;
        }
        if libm::sqrt(energy(&residual)) <= cfg.epsilon {
            break;
        }
        iterations += 1;

        let Some((cand, id)) = run_iteration(
            y,
            &residual,
            cb,
            &solver,
            cfg,
            rng,
            &users,
            &sequences,
            &mut fwht_calls,
            &mut reshuffles,
        ) else {
            exhausted = true;
            break;
        };

        sequences.push(rm_sequence(&cand.p, &cand.b));
        users.push(DetectedUser {
            id,
            p: cand.p,
            b: cand.b,
            gain: Complex64::new(0.0, 0.0),
            score: cand.score,
            iteration: iterations,
        });

        // joint re-estimation over everything detected so far, then cancel
        let gains = match ls_channel_estimate(y, &sequences) {
            Ok(g) => g,
            Err(Error::RankDeficient) => {
                users.pop();
                sequences.pop();
                exhausted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        for (user, gain) in users.iter_mut().zip(&gains) {
            user.gain = *gain;
        }
        residual = cancel(y, &gains, &sequences);
        trace.push(energy(&residual));
    }

    // leave-one-out refinement: re-extract each slot against the other
    // users' cancellation and keep the swap only when the joint residual
    // strictly improves; repairs slots where a spurious member absorbed
    // several users' energy during the main loop
    'refine: for _ in 0..cfg.refine_passes {
        let mut improved = false;
        for slot in 0..users.len() {
            if iterations >= cfg.t_max {
                break 'refine;
            }
            let mut other_users = users.clone();
            other_users.remove(slot);
            let mut other_seqs = sequences.clone();
            other_seqs.remove(slot);
            let loo_residual = if other_seqs.is_empty() {
                y.to_vec()
            } else {
                match ls_channel_estimate(y, &other_seqs) {
                    Ok(gains) => cancel(y, &gains, &other_seqs),
                    Err(_) => continue,
                }
            };
            iterations += 1;
            let Some((cand, id)) = run_iteration(
                y,
                &loo_residual,
                cb,
                &solver,
                cfg,
                rng,
                &other_users,
                &other_seqs,
                &mut fwht_calls,
                &mut reshuffles,
            ) else {
                trace.push(energy(&residual));
                continue;
            };
            if id == users[slot].id {
                trace.push(energy(&residual));
                continue;
            }
            let mut trial_seqs = other_seqs.clone();
            trial_seqs.push(rm_sequence(&cand.p, &cand.b));
            let Ok(trial_gains) = ls_channel_estimate(y, &trial_seqs) else {
                trace.push(energy(&residual));
                continue;
            };
            let trial_residual = cancel(y, &trial_gains, &trial_seqs);
            if energy(&trial_residual) < energy(&residual) {
                let mut trial_users = other_users;
                trial_users.push(DetectedUser {
                    id,
                    p: cand.p,
                    b: cand.b,
                    gain: Complex64::new(0.0, 0.0),
                    score: cand.score,
                    iteration: iterations,
                });
                for (user, gain) in trial_users.iter_mut().zip(&trial_gains) {
                    user.gain = *gain;
                }
                users = trial_users;
                sequences = trial_seqs;
                residual = trial_residual;
                improved = true;
            }
            trace.push(energy(&residual));
        }
        if !improved {
            break;
        }
    }

    let complete = !exhausted
        && match cfg.mode {
            DetectorMode::KnownK => users.len() == cfg.k,
            DetectorMode::ResidualThreshold => libm::sqrt(energy(&residual)) <= cfg.epsilon,
        };

    Ok(Detection {
        users,
        residual_trace: trace,
        complete,
        iterations,
        fwht_calls,
        reshuffles,
    })
}


/// Test/diagnostic access to the list search.
#[doc(hidden)]
pub fn recover_p_list_probe(
    spectra: &[Spectrum],
    order: &[usize],
    width: usize,
) -> alloc::vec::Vec<BitMatrix> {
    recover_p_list(spectra, order, width)
}

/// Test/diagnostic access to the anchored assembly generator.
#[doc(hidden)]
pub fn recover_p_anchored_probe(
    spectra: &[Spectrum],
    order: &[usize],
    anchors: usize,
) -> alloc::vec::Vec<BitMatrix> {
    recover_p_anchored(spectra, order, anchors)
}

/// Test/diagnostic access to the algebraic proposal pool.
#[doc(hidden)]
pub fn pool_probe(
    cb: &Codebook,
    spectra: &[Spectrum],
    anchors: usize,
    cap: usize,
) -> alloc::vec::Vec<(BitMatrix, f64)> {
    let solver = ColumnSolver::build(cb);
    algebraic_pool(cb, &solver, spectra, anchors, cap)
}

/// Test/diagnostic access to the sign-based b estimate.
#[doc(hidden)]
pub fn sign_b_probe(p: &BitMatrix, spectra: &[Spectrum]) -> BitVec {
    sign_b(p, spectra)
}
