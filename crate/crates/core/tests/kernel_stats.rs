use hqnet::kernel::{BellPair, BellState, Gate, Qubit, StateRegister, WBranch};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 10_000;

fn within_3_sigma(count: usize, p: f64) -> bool {
    let n = TRIALS as f64;
    let sigma = (p * (1.0 - p) / n).sqrt().max(1e-12);
    (count as f64 / n - p).abs() <= 3.0 * sigma + 1e-12
}

#[test]
fn bell_measure_follows_born_rule() {
    // An entangled but lopsided state, so the four outcomes differ.
    let mut base = StateRegister::new(2).unwrap();
    base.load_qubit(Qubit(0), Complex64::new(0.8, 0.0), Complex64::new(0.0, 0.6)).unwrap();
    base.apply(Gate::Cnot, &[Qubit(0), Qubit(1)]).unwrap();
    base.apply(Gate::H, &[Qubit(1)]).unwrap();
    let p = base.bell_probabilities(Qubit(0), Qubit(1)).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut counts = [0usize; 4];
    for _ in 0..TRIALS {
        let mut r = base.clone();
        counts[r.bell_measure(Qubit(0), Qubit(1), &mut rng).unwrap().index()] += 1;
    }
    for k in 0..4 {
        assert!(within_3_sigma(counts[k], p[k]), "outcome {k}: {} vs {}", counts[k], p[k]);
    }
}

#[test]
fn swap_outcomes_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0usize; 4];
    for _ in 0..TRIALS {
        let mut r = StateRegister::new(4).unwrap();
        let left = BellPair::new(Qubit(0), Qubit(1), BellState::PhiPlus);
        let right = BellPair::new(Qubit(2), Qubit(3), BellState::PhiPlus);
        r.prepare_bell(left.a, left.b, BellState::PhiPlus).unwrap();
        r.prepare_bell(right.a, right.b, BellState::PhiPlus).unwrap();
        let s = r.entanglement_swap(left, right, &mut rng).unwrap();
        assert!((r.pair_fidelity(&s.pair).unwrap() - 1.0).abs() < 1e-9);
        counts[s.outcome.index()] += 1;
    }
    for c in counts {
        assert!((c as f64 / TRIALS as f64 - 0.25).abs() < 0.02, "{counts:?}");
    }
}

#[test]
fn w_conversion_branch_frequency() {
    let mut base = StateRegister::with_labels(&["p1", "p2", "a_lc", "atom"]).unwrap();
    let w = [Qubit(0), Qubit(1), Qubit(2)];
    base.prepare_w_state(w[0], w[1], w[2]).unwrap();
    let (two, residual) = base.w_conversion_probabilities(&w, Qubit(3)).unwrap();
    assert!((two - 2.0 / 3.0).abs() < 1e-12);
    assert!((residual - 1.0 / 3.0).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let hits = (0..TRIALS)
        .filter(|_| {
            let mut r = base.clone();
            r.convert_w_to_epr(&w, Qubit(3), &mut rng).unwrap() == WBranch::TwoEpr
        })
        .count();
    assert!(within_3_sigma(hits, 2.0 / 3.0), "{hits}");
}
