//! Reduced manufactured-solution convergence study in 2d: three mesh
//! sizes, two seeds each, both stencil methods, Dirichlet and mixed
//! boundary conditions. Prints the CSV records and the fitted slopes
//! (the full study runs through `mfpois convergence` or the acceptance
//! suite).
//!
//! Run with: cargo run --release --example convergence_study

use std::io::Write;

use meshfree_poisson::harness::{
    run_convergence, slope_for, write_convergence_csv, BcMode, ConvergenceConfig,
};
use meshfree_poisson::stencil::StencilMethod;

fn main() {
    let s = 2.0_f64.sqrt();
    let cfg = ConvergenceConfig {
        target_hs: vec![0.2, 0.2 / s, 0.1],
        seeds: vec![1, 2],
        ..ConvergenceConfig::default_2d()
    };
    let records = run_convergence(&cfg).unwrap();

    let mut stdout = std::io::stdout().lock();
    write_convergence_csv(&records, &mut stdout).unwrap();
    stdout.flush().unwrap();

    println!();
    for method in [StencilMethod::Mps, StencilMethod::Lsq] {
        for bc in [BcMode::AllDirichlet, BcMode::MixedNeumannBottom] {
            println!(
                "slope {:>4} {:>9}: {:+.3}",
                method.name(),
                bc.name(),
                slope_for(&records, method, bc)
            );
        }
    }
    println!("\nexpect ~2 for Dirichlet (quadratic exactness plus averaged");
    println!("symmetry) and ~1 with Neumann rows (first-order normal stencils).");
}
