//! Weighted least squares vs. minimal positive stencils on the classic
//! six-point unit-circle configuration.
//!
//! Four neighbors sit on the coordinate axes and two more crowd the first
//! quadrant. Least squares spreads weight over all six and turns one
//! coefficient negative; the LP picks a positive stencil supported on at
//! most five of them.
//!
//! Run with: cargo run --example lsq_vs_mps

use meshfree_poisson::stencil::{
    build_constraints, lsq_stencil, mps_stencil, verify_consistency, ConstraintKind, MpsOutcome,
};

fn main() {
    let offsets: Vec<[f64; 2]> = [0.0, 1.0, 2.0, 3.0, 0.1, 0.2]
        .iter()
        .map(|p| {
            let th = p * std::f64::consts::FRAC_PI_2;
            [th.cos(), th.sin()]
        })
        .collect();
    println!("candidates on the unit circle (angles in units of pi/2): 0, 1, 2, 3, 0.1, 0.2");

    let cs = build_constraints(&offsets, 4.0, ConstraintKind::Laplace).unwrap();

    let lsq = lsq_stencil(&cs).unwrap();
    println!("\nleast-squares stencil (all candidates carry weight):");
    for (j, c) in lsq.coefficients.iter().enumerate() {
        println!("  s[{j}] = {c:+.4}");
    }
    println!("  center = {:+.4}", lsq.center_coefficient);
    println!("  positive: {}", lsq.positive);
    println!(
        "  consistency residual: {:.2e}",
        verify_consistency(&lsq, &offsets, ConstraintKind::Laplace)
    );

    let MpsOutcome::Stencil(mps) = mps_stencil(&cs).unwrap() else {
        unreachable!("this configuration admits a positive stencil");
    };
    println!("\nminimal positive stencil (basic solution of the LP):");
    for (idx, c) in mps.neighbors.iter().zip(&mps.coefficients) {
        println!("  s[{idx}] = {c:+.4}");
    }
    println!("  center = {:+.4}", mps.center_coefficient);
    println!("  positive: {}, pivots: {}", mps.positive, mps.pivots.unwrap());
    println!(
        "  consistency residual: {:.2e}",
        verify_consistency(&mps, &offsets, ConstraintKind::Laplace)
    );

    // All candidates are at distance one, so the quadratic constraints pin
    // every feasible objective to 4: the LP selects among many optima.
    let total: f64 = mps.coefficients.iter().sum();
    println!("  coefficient sum = {total:.12} (trace identity: always 4 here)");
}
