//! Metric implementations checked against independent brute-force oracles.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgb2point::metrics::emd::{cost_matrix, solve_assignment};
use rgb2point::metrics::{
    chamfer_distance, emd, emd_solver_registry, fscore, EmdConfig, EmdSolver,
};
use rgb2point::{Point3, PointCloud};

fn random_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect(),
    )
    .unwrap()
}

fn dist(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// All-pairs Chamfer distance.
fn chamfer_oracle(g: &[Point3], r: &[Point3]) -> f64 {
    let one_way = |from: &[Point3], to: &[Point3]| {
        from.iter()
            .map(|x| to.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / from.len() as f64
    };
    0.5 * one_way(g, r) + 0.5 * one_way(r, g)
}

/// Minimum over all n! matchings (Heap's algorithm).
fn emd_permutation_oracle(g: &[Point3], r: &[Point3]) -> f64 {
    let n = g.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| dist(&g[i], &r[j])).sum::<f64>();
    let mut best = cost(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}

fn solver(name: &str) -> Box<dyn EmdSolver> {
    emd_solver_registry().get(name).unwrap()(&EmdConfig::default())
}

fn rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    // Random unit quaternion.
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let tau = std::f64::consts::TAU;
    let (a, b, c, d) = (
        (1.0 - u1).sqrt() * (tau * u2).sin(),
        (1.0 - u1).sqrt() * (tau * u2).cos(),
        u1.sqrt() * (tau * u3).sin(),
        u1.sqrt() * (tau * u3).cos(),
    );
    [
        [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), a * a - b * b + c * c - d * d, 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a - b * b - c * c + d * d],
    ]
}

fn rotate(c: &PointCloud, m: &[[f64; 3]; 3]) -> PointCloud {
    c.map_points(|p| {
        [0, 1, 2].map(|i| m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2])
    })
    .unwrap()
}

#[test]
fn chamfer_matches_all_pairs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let (ng, nr) = (rng.gen_range(1..300), rng.gen_range(1..300));
        let g = random_cloud(&mut rng, ng);
        let r = random_cloud(&mut rng, nr);
        let fast = chamfer_distance(&g, &r).value;
        let slow = chamfer_oracle(g.points(), r.points());
        assert!((fast - slow).abs() <= 1e-9 * slow.max(f64::MIN_POSITIVE), "{fast} vs {slow}");
    }
}

#[test]
fn exact_emd_matches_permutation_oracle_small_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let exact = solver("exact-assignment");
    for n in 1..=7 {
        for _ in 0..4 {
            let g = random_cloud(&mut rng, n);
            let r = random_cloud(&mut rng, n);
            let v = emd(&g, &r, exact.as_ref()).unwrap().value;
            let o = emd_permutation_oracle(g.points(), r.points());
            assert!((v - o).abs() < 1e-12, "n={n}: {v} vs {o}");
        }
    }
}

#[test]
fn hungarian_certificate_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [9, 20, 64] {
        let g = random_cloud(&mut rng, n);
        let r = random_cloud(&mut rng, n);
        let c = cost_matrix(g.points(), r.points());
        let a = solve_assignment(&c, n);
        for i in 0..n {
            for j in 0..n {
                let reduced = c[i * n + j] - a.row_potential[i] - a.col_potential[j];
                assert!(reduced >= -1e-9, "dual infeasible at ({i},{j}): {reduced}");
            }
            let j = a.row_to_col[i];
            assert!((c[i * n + j] - a.row_potential[i] - a.col_potential[j]).abs() < 1e-9);
        }
        let dual: f64 = a.row_potential.iter().chain(&a.col_potential).sum();
        assert!((dual - a.total_cost).abs() < 1e-9);
    }
}

#[test]
fn regularized_emd_is_close_above_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let exact = solver("exact-assignment");
    let approx = solver("regularized-transport");
    for _ in 0..5 {
        let g = random_cloud(&mut rng, 64);
        let r = random_cloud(&mut rng, 64);
        let e = emd(&g, &r, exact.as_ref()).unwrap().value;
        let a = emd(&g, &r, approx.as_ref()).unwrap().value;
        assert!(a >= e - 1e-12 && a <= 1.01 * e, "approx {a} exact {e}");
    }
}

#[test]
fn exact_emd_invariant_to_point_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let exact = solver("exact-assignment");
    let g = random_cloud(&mut rng, 40);
    let r = random_cloud(&mut rng, 40);
    let base = emd(&g, &r, exact.as_ref()).unwrap().value;
    let mut idx: Vec<usize> = (0..40).collect();
    idx.shuffle(&mut rng);
    let shuffled = r.select(&idx).unwrap();
    let v = emd(&g, &shuffled, exact.as_ref()).unwrap().value;
    assert!((v - base).abs() < 1e-12);
}

#[test]
fn emd_bounded_below_by_directional_nearest_neighbor_means() {
    use rgb2point::metrics::directional_mean;
    use rgb2point::pointcloud::KdTree;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let exact = solver("exact-assignment");
    for _ in 0..10 {
        let g = random_cloud(&mut rng, 32);
        let r = random_cloud(&mut rng, 32);
        let e = emd(&g, &r, exact.as_ref()).unwrap().value;
        let gr = directional_mean(g.points(), &KdTree::from_cloud(&r));
        let rg = directional_mean(r.points(), &KdTree::from_cloud(&g));
        assert!(e >= gr - 1e-12 && e >= rg - 1e-12);
        assert!(e >= chamfer_distance(&g, &r).value - 1e-12);
    }
}

#[test]
fn metrics_invariant_under_shared_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let exact = solver("exact-assignment");
    for _ in 0..10 {
        let g = random_cloud(&mut rng, 48);
        let r = PointCloud::new(
            g.points()
                .iter()
                .map(|p| p.map(|v| v + rng.gen_range(-0.02..0.02)))
                .collect(),
        )
        .unwrap();
        let m = rotation(&mut rng);
        let (gr, rr) = (rotate(&g, &m), rotate(&r, &m));
        let cd = (chamfer_distance(&g, &r).value, chamfer_distance(&gr, &rr).value);
        let em = (emd(&g, &r, exact.as_ref()).unwrap().value, emd(&gr, &rr, exact.as_ref()).unwrap().value);
        let f = (fscore(&g, &r, 0.01).unwrap().value, fscore(&gr, &rr, 0.01).unwrap().value);
        assert!((cd.0 - cd.1).abs() <= 1e-6);
        assert!((em.0 - em.1).abs() <= 1e-6);
        assert!((f.0 - f.1).abs() <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fscore_monotone_in_threshold(
        seed in any::<u64>(),
        t1 in 0.001f64..0.5,
        dt in 0.0f64..0.5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_cloud(&mut rng, 64);
        let r = random_cloud(&mut rng, 64);
        let a = fscore(&g, &r, t1).unwrap().value;
        let b = fscore(&g, &r, t1 + dt).unwrap().value;
        prop_assert!(a <= b);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn chamfer_zero_iff_same_point_set(
        pts in prop::collection::vec(prop::array::uniform3(-4i32..4), 1..40),
        drop_one in any::<bool>(),
        nudge in any::<bool>(),
    ) {
        let pts: Vec<Point3> = pts.iter().map(|p| p.map(|v| v as f64 * 0.5)).collect();
        let g = PointCloud::new(pts.clone()).unwrap();
        // Reversed order and duplicated points leave the set unchanged.
        let mut same: Vec<Point3> = pts.iter().rev().copied().collect();
        same.push(pts[0]);
        prop_assert_eq!(chamfer_distance(&g, &PointCloud::new(same).unwrap()).value, 0.0);

        let mut other = pts.clone();
        if nudge {
            other[0][1] += 0.25;
        } else if drop_one && pts.len() > 1 {
            other.remove(0);
        }
        let differs = {
            let a: std::collections::BTreeSet<[u64; 3]> = pts.iter().map(|p| p.map(f64::to_bits)).collect();
            let b: std::collections::BTreeSet<[u64; 3]> = other.iter().map(|p| p.map(f64::to_bits)).collect();
            a != b
        };
        let cd = chamfer_distance(&g, &PointCloud::new(other).unwrap()).value;
        prop_assert_eq!(cd == 0.0, !differs);
    }
}
