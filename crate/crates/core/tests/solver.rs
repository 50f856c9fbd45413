mod common;

use common::oracles::{random_ltc, rk4, solver_consistency};

#[test]
fn fused_step_converges_toward_rk4() {
    for seed in [1, 2, 3] {
        let r = solver_consistency(seed);
        assert!(r.monotone(), "seed {seed}: {:?}", r.errors);
        assert!(r.fine_error < r.errors[2].1, "seed {seed}: {r:?}");
    }
}

#[test]
fn global_error_is_first_order() {
    // semi-implicit Euler: error ≈ C·dt with a cell-dependent constant
    for seed in [1, 2, 3] {
        let r = solver_consistency(seed);
        let c = r.fine_error / 0.01;
        for &(dt, e) in &r.errors {
            assert!((e / dt - c).abs() < 0.2 * c, "seed {seed}: {r:?}");
        }
    }
}

#[test]
fn error_shrinks_roughly_linearly() {
    let r = solver_consistency(4);
    for w in r.errors.windows(2) {
        let ratio = w[0].1 / w[1].1;
        assert!((1.5..3.0).contains(&ratio), "{:?}", r.errors);
    }
}

#[test]
fn rk4_is_fourth_order_on_a_linear_cell() {
    // no synapses: dx/dt = -x/τ + b/τ, solved exactly
    let mut cell = random_ltc(0, 2, 3, 1.0);
    cell.sensory[2].fill(0.0);
    cell.recurrent[2].fill(0.0);
    let x0 = vec![0.2; cell.units];
    let coarse = rk4(&cell, &x0, &[0.0, 0.0], 0.1, 10);
    for j in 0..cell.units {
        let (tau, b) = (cell.tau[j], cell.bias[j]);
        let exact = b + (0.2 - b) * (-1.0 / tau).exp();
        assert!((coarse[10][j] - exact).abs() < 1e-5);
    }
}
