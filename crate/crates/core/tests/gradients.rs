//! Adjoint gradients against central finite differences on randomized
//! small scenes.

mod common;

use common::{empty_nodes_are_zero, loss, loss_seeds, max_error, random_case};
use windform::adjoint::{backward, forward_record, relative_error};
use windform::mpm::ParticleSet;

#[test]
fn adjoint_matches_finite_differences_on_random_scenes() {
    let mut worst: f64 = 0.0;
    for seed in 0..24 {
        let case = random_case(seed);
        let (err, loaded) = max_error(&case);
        assert!(loaded > 0);
        eprintln!("seed {seed}: {} particles, {} substeps, max rel error {err:.2e}", case.particles.len(), case.substeps);
        worst = worst.max(err);
    }
    assert!(worst < 1e-4, "max relative component error {worst:.3e}");
}

#[test]
fn empty_nodes_have_zero_gradient() {
    for seed in [100, 101, 102] {
        assert!(empty_nodes_are_zero(&random_case(seed)), "seed {seed}");
    }
}

/// The state adjoints are checked too: perturb initial positions and
/// velocities directly.
#[test]
fn initial_state_adjoints_match_finite_differences() {
    let case = random_case(7);
    let (out, tape) = forward_record(&case.particles, &case.force, &case.scene, case.substeps).unwrap();
    let (xb, vb) = loss_seeds(&case, &out);
    let g = backward(&tape, &case.scene, &xb, &vb).unwrap();
    let h = 1e-7;
    let eval = |f: &dyn Fn(&mut ParticleSet)| {
        let mut s = case.particles.clone();
        f(&mut s);
        loss(&case, &windform::adjoint::advance(&s, &case.force, &case.scene, case.substeps).unwrap())
    };
    for p in [0, 3, 11] {
        for k in 0..3 {
            let fdx = (eval(&|s| s.x[p][k] += h) - eval(&|s| s.x[p][k] -= h)) / (2.0 * h);
            let fdv = (eval(&|s| s.v[p][k] += h) - eval(&|s| s.v[p][k] -= h)) / (2.0 * h);
            assert!(relative_error(g.x[p][k], fdx, 1e-6) < 1e-4, "x[{p}][{k}]: {} vs {fdx}", g.x[p][k]);
            assert!(relative_error(g.v[p][k], fdv, 1e-6) < 1e-4, "v[{p}][{k}]: {} vs {fdv}", g.v[p][k]);
        }
    }
}
