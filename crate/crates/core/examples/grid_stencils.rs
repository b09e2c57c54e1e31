//! Regular-grid sanity check: from axis plus diagonal candidates the LP
//! recovers the classical 5-point (2d) and 7-point (3d) stencils exactly.
//! The diagonal candidates cost more per unit of quadratic "capacity"
//! whenever the weight decays faster than distance^-2, so they stay at
//! zero.
//!
//! Run with: cargo run --example grid_stencils

use meshfree_poisson::stencil::{build_constraints, mps_stencil, ConstraintKind, MpsOutcome};

fn show<const D: usize>(offsets: &[[f64; D]], h: f64, label: &str) {
    let cs = build_constraints(offsets, 4.0, ConstraintKind::Laplace).unwrap();
    let MpsOutcome::Stencil(st) = mps_stencil(&cs).unwrap() else {
        unreachable!("grid candidates admit a positive stencil");
    };
    println!("{label} (spacing h = {h}):");
    let mut selected = 0;
    for (idx, c) in st.neighbors.iter().zip(&st.coefficients) {
        if *c > 0.0 {
            selected += 1;
            println!("  offset {:?} -> {:.6} (= 1/h^2 = {:.6})", offsets[*idx], c, 1.0 / (h * h));
        }
    }
    println!("  center = {:.6} (= -{}/h^2)", st.center_coefficient, selected);
    println!("  pivots: {}\n", st.pivots.unwrap());
}

fn main() {
    let h = 0.1;
    let mut offs2: Vec<[f64; 2]> = vec![[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]];
    for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
        offs2.push([sx * h, sy * h]);
    }
    show(&offs2, h, "2d: 4 axis + 4 diagonal candidates");

    let mut offs3: Vec<[f64; 3]> = Vec::new();
    for a in 0..3 {
        for s in [1.0, -1.0] {
            let mut o = [0.0; 3];
            o[a] = s * h;
            offs3.push(o);
        }
    }
    for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
        for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let mut o = [0.0; 3];
            o[a] = sa * h;
            o[b] = sb * h;
            offs3.push(o);
        }
    }
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for sz in [1.0, -1.0] {
                offs3.push([sx * h, sy * h, sz * h]);
            }
        }
    }
    show(&offs3, h, "3d: 6 axis + 12 face-diagonal + 8 space-diagonal candidates");
}
