//! Failure anatomy: classify what the first SIC iteration accepts.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmseq_core::codebook::{Codebook, RmParams};
use rmseq_core::detector::{sic_detect, DecisionRule, DetectorConfig};

fn unit_phase(seed: u64) -> Complex64 {
    let theta = (seed % 997) as f64 / 997.0 * std::f64::consts::TAU;
    Complex64::new(theta.cos(), theta.sin())
}

fn main() {
    for gate in [0.05f64, 0.1, 0.15, 0.2, 0.3] {
        run_point(gate);
    }
}

fn run_point(gate: f64) {
    let (m, r, k) = (5usize, 1usize, 4usize);
    let c = RmParams::max_space(m, r);
    let cb = Codebook::new(RmParams::new(m, r, c).unwrap()).unwrap();
    let trials = 1000u64;
    let mut none = 0;
    let mut truth_hist = [0usize; 5];
    let mut exact = 0;
    let mut right_p_wrong_b = 0;
    let mut false_p = 0;
    let mut full_ok = 0;
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
        let mut cfg = DetectorConfig::known_k(k);
        cfg.list_width = 16;
        cfg.decision_rule = DecisionRule::ResidualEnergy;
        cfg.accept_gate = gate;

        // full run for the overall rate
        {
            let mut rng2 = rng.clone();
            let det = sic_detect(&y, &cb, &cfg, &mut rng2).unwrap();
            let got: std::collections::BTreeSet<_> = det.users.iter().map(|u| u.id).collect();
            let n_true = ids.iter().filter(|id| got.contains(id)).count();
            truth_hist[n_true] += 1;
            if ids.iter().all(|id| got.contains(id)) {
                full_ok += 1;
            }
        }

        // first-iteration anatomy
        let mut cfg1 = cfg;
        cfg1.t_max = 1;
        cfg1.mode = rmseq_core::detector::DetectorMode::KnownK;
        let det = sic_detect(&y, &cb, &cfg1, &mut rng).unwrap();
        match det.users.first() {
            None => none += 1,
            Some(u) => {
                if ids.contains(&u.id) {
                    exact += 1;
                } else if ids.iter().any(|&id| id >> m == u.id >> m) {
                    right_p_wrong_b += 1;
                } else {
                    false_p += 1;
                }
            }
        }
    }
    println!("gate={gate}: full {full_ok}/{trials}; iter1 exact {exact}, wrong-b {right_p_wrong_b}, false-P {false_p}, none {none}; truth histogram {truth_hist:?}");
}
