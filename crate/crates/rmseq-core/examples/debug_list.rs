//! Containment vs selection split for iteration-1 failures.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmseq_core::codebook::{Codebook, RmParams};
use rmseq_core::detector::{column_spectra, recover_p_anchored_probe, recover_p_list_probe};

fn unit_phase(seed: u64) -> Complex64 {
    let theta = (seed % 997) as f64 / 997.0 * std::f64::consts::TAU;
    Complex64::new(theta.cos(), theta.sin())
}

fn main() {
    let (m, r, k) = (5usize, 1usize, 4usize);
    let c = RmParams::max_space(m, r);
    let cb = Codebook::new(RmParams::new(m, r, c).unwrap()).unwrap();
    let trials = 1000u64;
    let width = 16usize;
    let mut contained = 0;
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
        let true_ps: Vec<_> = ids.iter().map(|&id| cb.id_to_pb(id).unwrap().0).collect();
        let mut orders: Vec<Vec<usize>> = vec![(1..=m).collect()];
        for _ in 0..11 {
            let mut o: Vec<usize> = (1..=m).collect();
            o.shuffle(&mut rng);
            orders.push(o);
        }
        let mut hit = false;
        'outer: for order in &orders {
            let mut leaves = recover_p_list_probe(&spectra, order, width);
            leaves.extend(recover_p_anchored_probe(&spectra, order, 8));
            if leaves.iter().any(|l| true_ps.contains(l)) {
                hit = true;
                break 'outer;
            }
        }
        if hit {
            contained += 1;
        }
    }
    println!("containment with beam+anchored over 12 orders: {contained}/{trials}");
}
