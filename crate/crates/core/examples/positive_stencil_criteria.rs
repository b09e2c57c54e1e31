//! Geometric criteria for the existence of positive stencils.
//!
//! * Necessary: the neighbors must not lie in one closed half space
//!   through the center.
//! * Sufficient: every test cone of opening angle 45 degrees (2d) or
//!   33.7 degrees (3d) contains a neighbor.
//! * Candidate radius: on a cloud of mesh size h, candidates within
//!   `(h/2) / sin(gamma/2)` guarantee the cone criterion away from the
//!   boundary (ratios 2.61 in 2d, 3.45 in 3d).
//!
//! When no positive stencil exists, the LP proves it with a Farkas
//! certificate.
//!
//! Run with: cargo run --example positive_stencil_criteria

use meshfree_poisson::geometry::{
    candidate_radius, cone_criterion_check, half_space_check, ConeCriterionParams,
};
use meshfree_poisson::stencil::{build_constraints, mps_stencil, ConstraintKind, MpsOutcome};

fn verdicts(offsets: &[[f64; 2]], params: &ConeCriterionParams, label: &str) {
    let half = half_space_check(offsets).unwrap();
    let cone = cone_criterion_check(offsets, params).unwrap();
    let cs = build_constraints(offsets, 4.0, ConstraintKind::Laplace).unwrap();
    let outcome = mps_stencil(&cs).unwrap();
    println!("{label}:");
    println!("  half-space criterion (necessary): {half}");
    println!("  cone criterion (sufficient):      {cone}");
    match outcome {
        MpsOutcome::Stencil(st) => {
            let nnz = st.coefficients.iter().filter(|c| **c > 0.0).count();
            println!("  LP: positive stencil with {nnz} nonzeros");
        }
        MpsOutcome::Infeasible(report) => {
            let w: Vec<String> = report
                .certificate
                .iter()
                .map(|v| format!("{v:+.3}"))
                .collect();
            println!("  LP: infeasible, Farkas certificate w = [{}]", w.join(", "));
            println!("     (V^T w >= 0 and b^T w < 0 prove no positive stencil exists)");
            assert!(report.is_valid(&cs, 1e-10));
        }
    }
    println!();
}

fn main() {
    let params = ConeCriterionParams::for_dimension(2).unwrap();
    println!(
        "2d cone: total opening {:.1} degrees, beta = {:.6}",
        params.gamma.to_degrees(),
        params.beta
    );
    let p3 = ConeCriterionParams::for_dimension(3).unwrap();
    println!(
        "3d cone: total opening {:.1} degrees, beta = {:.6}",
        p3.gamma.to_degrees(),
        p3.beta
    );
    for h in [0.2, 0.1] {
        println!(
            "candidate radius at mesh size {h}: {:.4} (2d) {:.4} (3d), safety 1",
            candidate_radius(h, &params, 1.0).unwrap(),
            candidate_radius(h, &p3, 1.0).unwrap()
        );
    }
    println!();

    let at = |deg: f64, r: f64| {
        let th = deg.to_radians();
        [r * th.cos(), r * th.sin()]
    };

    // Well distributed: passes both criteria.
    let spread: Vec<[f64; 2]> = (0..9).map(|i| at(40.0 * i as f64, 0.5 + 0.05 * i as f64)).collect();
    verdicts(&spread, &params, "nine neighbors, max gap 40 degrees");

    // The axis cross: fails the sufficient criterion (gaps of 90 degrees)
    // yet the 5-point stencil exists. Sufficient, not necessary.
    let cross: Vec<[f64; 2]> = (0..4).map(|i| at(90.0 * i as f64, 1.0)).collect();
    verdicts(&cross, &params, "axis cross, gaps of 90 degrees");

    // Half-space configuration: necessarily infeasible, with certificate.
    let half: Vec<[f64; 2]> = (0..6).map(|i| at(-70.0 + 28.0 * i as f64, 0.8)).collect();
    verdicts(&half, &params, "all neighbors in the right half plane");
}
