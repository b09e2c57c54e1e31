//! Crack treatment: stencils must not reach across thin cut-outs of the
//! domain. Neighbor candidates are restricted to the star-shaped core
//! around each point by sampling the connecting segment against the
//! domain level set.
//!
//! The standard domain's ball cut bulges into the unit box from the top;
//! points on opposite sides of the bulge are close in straight-line
//! distance but must not couple.
//!
//! Run with: cargo run --example crack_visibility

use meshfree_poisson::cloud::{four_quadrant_neighbors, neighbors_within, PointCloud, Role};
use meshfree_poisson::geometry::DomainSpec;

fn main() {
    let domain = DomainSpec::<2>::standard();

    // Two points flanking the bulge of the cut ball.
    let a = [0.12, 0.85];
    let b = [0.88, 0.85];
    println!("phi(a) = {:+.4}, phi(b) = {:+.4} (both inside)", domain.phi(&a), domain.phi(&b));
    assert!(domain.phi(&a) < 0.0 && domain.phi(&b) < 0.0);
    println!(
        "segment a-b visible: {} (it passes through the cut ball)",
        domain.visible_from(&a, &b, 16)
    );

    // A small cloud straddling the bulge. Index 0 is `a`, index 1 is `b`.
    let pts = vec![
        a,
        b,
        [0.15, 0.65],
        [0.85, 0.65],
        [0.5, 0.5],
        [0.2, 0.72],
        [0.8, 0.72],
    ];
    let n = pts.len();
    for p in &pts {
        assert!(domain.phi(p) < 0.0, "{p:?} must lie inside the domain");
    }
    let cloud =
        PointCloud::from_parts(pts, vec![Role::Interior; n], vec![None; n], Some(0.4)).unwrap();

    println!("\nneighbors of a within radius 0.8 (visibility-filtered, sorted by distance):");
    for j in neighbors_within(&cloud, 0, 0.8, &domain) {
        let p = cloud.point(j);
        println!("  {} at [{:.2},{:.2}]", j, p[0], p[1]);
    }
    println!("note: b and the points on the far side of the bulge are excluded.");

    // The four-quadrant criterion ignores the domain: it picks the two
    // nearest per quadrant of the local frame, crack or not.
    println!("\nfour-quadrant neighbors of a (no visibility filter):");
    for j in four_quadrant_neighbors(&cloud, 0, 0.8) {
        let p = cloud.point(j);
        println!("  {} at [{:.2},{:.2}]", j, p[0], p[1]);
    }
}
