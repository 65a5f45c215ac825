//! Where do true users fall out of the proposal pipeline at iteration 1?

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmseq_core::codebook::{rm_sequence, Codebook, RmParams};
use rmseq_core::detector::{column_spectra, pool_probe, residual_score, sign_b_probe};

fn unit_phase(seed: u64) -> Complex64 {
    let theta = (seed % 997) as f64 / 997.0 * std::f64::consts::TAU;
    Complex64::new(theta.cos(), theta.sin())
}

fn main() {
    let (m, r, k) = (5usize, 1usize, 4usize);
    let c = RmParams::max_space(m, r);
    let cb = Codebook::new(RmParams::new(m, r, c).unwrap()).unwrap();
    let trials = 1000u64;
    let mut in_pool_any = 0;
    let mut best_rank_one = 0;
    let mut sign_b_ok_any = 0;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0000 + trial);
        let mut ids: Vec<u64> = Vec::new();
        while ids.len() < k {
            let id = rng.gen_range(0..c);
            if ids.iter().all(|&e| e >> m != id >> m) {
                ids.push(id);
            }
        }
        let gains: Vec<Complex64> = (0..k).map(|_| unit_phase(rng.gen())).collect();
        let n = cb.seq_len();
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for (id, h) in ids.iter().zip(&gains) {
            let s = cb.sequence(*id).unwrap();
            for (yv, sv) in y.iter_mut().zip(s.values()) {
                *yv += h * sv;
            }
        }
        let spectra = column_spectra(&y);
        let pool = pool_probe(&cb, &spectra, 8, 96);
        let true_ps: Vec<_> = ids.iter().map(|&id| cb.id_to_pb(id).unwrap().0).collect();
        let contained = pool.iter().any(|(p, _)| true_ps.contains(p));
        if contained {
            in_pool_any += 1;
        }
        // residual ranking: is the best-residual entry a true user?
        let mut best: Option<(f64, bool)> = None;
        for (p, _) in &pool {
            let b = sign_b_probe(p, &spectra);
            let seq = rm_sequence(p, &b);
            let res = residual_score(&y, &[], &seq).unwrap_or(f64::INFINITY);
            let is_true = ids
                .iter()
                .any(|&id| cb.id_to_pb(id).unwrap() == (p.clone(), b));
            if best.is_none() || res < best.unwrap().0 {
                best = Some((res, is_true));
            }
        }
        if best.map(|(_, t)| t).unwrap_or(false) {
            best_rank_one += 1;
        }
        // sign-b correctness for the true users that are in the pool
        let mut any_ok = false;
        for &id in &ids {
            let (p, b) = cb.id_to_pb(id).unwrap();
            if pool.iter().any(|(pp, _)| *pp == p) && sign_b_probe(&p, &spectra) == b {
                any_ok = true;
            }
        }
        if any_ok {
            sign_b_ok_any += 1;
        }
    }
    println!("true user in pool (96-cap): {in_pool_any}/{trials}");
    println!("pool+sign-b exactly right:   {sign_b_ok_any}/{trials}");
    println!("best-residual entry is true: {best_rank_one}/{trials}");
}
