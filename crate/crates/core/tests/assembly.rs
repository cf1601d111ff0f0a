#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]
use hardylab::assembly::{element_mass, element_mass_fixed, element_mass_masked, element_stiffness, mass, stiffness, stiffness_full};
use hardylab::problems::{concentration_ratio, problem_mesh};
use hardylab::quadrature::triangle_quadrature;
use hardylab::{generate, refine, DomainSpec, MeshParams, QuotientProblem, ScalarField, TriMesh, WeightKind};
use proptest::prelude::*;

const UNIT: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

fn close(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3], tol: f64) -> bool {
    (0..3).all(|i| (0..3).all(|j| (a[i][j] - b[i][j]).abs() <= tol))
}

fn fact(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

#[test]
fn rules_integrate_monomials() {
    for order in [2, 4, 7] {
        let r = triangle_quadrature(order).unwrap();
        assert!(r.weights.iter().all(|&w| w > 0.0));
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for a in 0..=order as u32 {
            for b in 0..=(order as u32 - a) {
                // reference triangle with vertices (0,0), (1,0), (0,1); area ½
                let q: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(l, w)| 0.5 * w * l[1].powi(a as i32) * l[2].powi(b as i32))
                    .sum();
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert!((q - exact).abs() < 1e-14, "order {order}: x^{a} y^{b}");
            }
        }
    }
    let r = triangle_quadrature(2).unwrap();
    let q: f64 = r.points.iter().zip(&r.weights).map(|(l, w)| 0.5 * w * (l[1] * l[1] + l[1] * l[2])).sum();
    assert!((q - 0.125).abs() < 1e-15);
    assert!(triangle_quadrature(3).is_err());
}

#[test]
fn unit_triangle_matrices() {
    let k = element_stiffness(UNIT, &ScalarField::one()).unwrap();
    assert!(close(&k, &[[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]], 1e-15));
    let k2 = element_stiffness(UNIT, &ScalarField::constant(2.0)).unwrap();
    assert!((0..3).all(|i| (0..3).all(|j| k2[i][j] == 2.0 * k[i][j])));
    let m = element_mass(UNIT, &WeightKind::One, [0.0; 3]).unwrap();
    let e = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]].map(|r| r.map(|v| v / 24.0));
    assert!(close(&m, &e, 1e-16));
}

#[test]
fn nonpositive_coefficient_is_an_error() {
    assert!(element_stiffness(UNIT, &ScalarField::constant(-1.0)).is_err());
}

#[test]
fn refined_square_gives_the_five_point_row() {
    let d = DomainSpec::Polygon { vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]] };
    let sq = TriMesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], vec![[0, 1, 2], [0, 2, 3]], None, d, 0.0);
    let m = refine(&sq.unwrap()).unwrap();
    let a = stiffness(&m, &ScalarField::one()).unwrap();
    assert_eq!(a.n(), 1);
    assert!((a.get(0, 0) - 4.0).abs() < 1e-14);
    let full = stiffness_full(&m, &ScalarField::one()).unwrap();
    let centre = m.vertices.iter().position(|v| *v == [0.5, 0.5]).unwrap();
    let (cols, vals) = full.row(centre);
    let mut row: Vec<f64> = cols.iter().zip(vals).filter(|(_, v)| v.abs() > 1e-14).map(|(_, v)| *v).collect();
    row.sort_by(f64::total_cmp);
    assert_eq!(row.len(), 5);
    for (x, y) in row.iter().zip([-1.0, -1.0, -1.0, -1.0, 4.0]) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn inverse_square_weight_away_from_the_origin() {
    let p = [[0.3, 0.0], [0.32, 0.0], [0.3, 0.02]];
    let c = [(0.3 + 0.32 + 0.3) / 3.0, 0.02 / 3.0];
    let plain = element_mass(p, &WeightKind::One, [0.0; 3]).unwrap();
    let w = element_mass(p, &WeightKind::InvR2, [0.0; 3]).unwrap();
    let s = 1.0 / (c[0] * c[0] + c[1] * c[1]);
    for i in 0..3 {
        for j in 0..3 {
            assert!((w[i][j] / (s * plain[i][j]) - 1.0).abs() < 0.05);
        }
    }
    // the adaptive result agrees with a single high-order application
    let fixed = element_mass_fixed(p, &WeightKind::InvR2, [0.0; 3], 7).unwrap();
    let scale = w[0][0];
    assert!(close(&w, &fixed, 1e-8 * scale));
}

#[test]
fn log_weight_at_inverse_e() {
    // constant weight e² on a tiny triangle at |x| = e⁻¹
    let r = (-1.0f64).exp();
    let d = 1e-6;
    let p = [[r, 0.0], [r + d, 0.0], [r, d]];
    let w = element_mass(p, &WeightKind::InvR2Log2, [0.0; 3]).unwrap();
    let plain = element_mass(p, &WeightKind::One, [0.0; 3]).unwrap();
    assert!((w[0][0] / plain[0][0] - std::f64::consts::E.powi(2)).abs() < 1e-4);
}

/// Values of the parent hat functions at the vertices of the four children.
fn children(p: [[f64; 2]; 3]) -> Vec<([[f64; 2]; 3], [[f64; 3]; 3])> {
    let mid = |a: usize, b: usize| [0.5 * (p[a][0] + p[b][0]), 0.5 * (p[a][1] + p[b][1])];
    let (m01, m12, m20) = (mid(0, 1), mid(1, 2), mid(2, 0));
    let v = |c: [f64; 3]| c;
    let (c0, c1, c2) = (v([1.0, 0.0, 0.0]), v([0.0, 1.0, 0.0]), v([0.0, 0.0, 1.0]));
    let (h01, h12, h20) = (v([0.5, 0.5, 0.0]), v([0.0, 0.5, 0.5]), v([0.5, 0.0, 0.5]));
    vec![
        ([p[0], m01, m20], [c0, h01, h20]),
        ([m01, p[1], m12], [h01, c1, h12]),
        ([m20, m12, p[2]], [h20, h12, c2]),
        ([m01, m12, m20], [h01, h12, h20]),
    ]
}

#[test]
fn singular_elements_are_stable_under_subdivision() {
    for w in [WeightKind::InvR2, WeightKind::InvR2Log2] {
        let p = [[0.0, 0.0], [0.1, -0.05], [0.05, 0.1]];
        let free = [false, true, true];
        let whole = element_mass_masked(p, &w, [0.0; 3], free).unwrap();
        let mut split = [[0.0; 3]; 3];
        for (q, vals) in children(p) {
            let free_c = q.map(|x| x != [0.0, 0.0]);
            let m = element_mass_masked(q, &w, [0.0; 3], free_c).unwrap();
            for i in 1..3 {
                for j in 1..3 {
                    for a in 0..3 {
                        for b in 0..3 {
                            split[i][j] += vals[a][i] * vals[b][j] * m[a][b];
                        }
                    }
                }
            }
        }
        for i in 1..3 {
            for j in 1..3 {
                assert!((whole[i][j] - split[i][j]).abs() <= 1e-8 * whole[i][j].abs(), "{w:?} ({i},{j})");
            }
        }
    }
}

#[test]
fn assembled_matrices_are_positive() {
    let m = generate(&DomainSpec::half_disk(0.5), 0.1, 2.0).unwrap();
    let mats = [
        stiffness(&m, &ScalarField::one()).unwrap(),
        mass(&m, &WeightKind::One).unwrap(),
        mass(&m, &WeightKind::InvR2).unwrap(),
        mass(&m, &WeightKind::InvR2Log2).unwrap(),
    ];
    let n = mats[0].n();
    for a in &mats {
        assert_eq!(a.n(), n);
        assert!(a.symmetry_error() < 1e-14 * a.max_abs());
        for s in 0..20u64 {
            // deterministic pseudo-random vectors
            let u: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + s * 40503) % 1000) as f64 / 500.0 - 1.0).collect();
            assert!(a.quad_form(&u) > 0.0);
        }
    }
    let full = stiffness_full(&m, &ScalarField::one()).unwrap();
    let ones = vec![1.0; full.n()];
    assert!(full.matvec(&ones).iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn whole_disk_carries_all_the_weight() {
    let p = QuotientProblem::new(DomainSpec::half_disk(0.5), 0.0, MeshParams::new(0.1, 2.0, 0));
    let m = problem_mesh(&p).unwrap();
    let n = m.n_free();
    let u: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
    let c = concentration_ratio(&u, &m, &ScalarField::one(), 0.5).unwrap();
    assert!((c - 1.0).abs() < 1e-12, "{c}");
    let inner = concentration_ratio(&u, &m, &ScalarField::one(), 0.1).unwrap();
    assert!(inner > 0.0 && inner < 1.0);
    assert!(concentration_ratio(&u, &m, &ScalarField::one(), 0.6).is_err());
}

fn triangle() -> impl Strategy<Value = [[f64; 2]; 3]> {
    prop::array::uniform3(prop::array::uniform2(-1.0f64..1.0)).prop_filter("non-degenerate, counter-clockwise", |p| {
        let a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
        a > 1e-3
    })
}

proptest! {
    #[test]
    fn element_stiffness_is_a_psd_laplacian(p in triangle(), c in 0.1f64..5.0) {
        let k = element_stiffness(p, &ScalarField::constant(c)).unwrap();
        let scale = k.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..3 {
            prop_assert!(k[i].iter().sum::<f64>().abs() <= 1e-12 * scale);
            for j in 0..3 {
                prop_assert_eq!(k[i][j], k[j][i]);
            }
            prop_assert!(k[i][i] >= 0.0);
        }
        // 3×3 with zero row sums: PSD iff the 2×2 minor is
        prop_assert!(k[0][0] * k[1][1] - k[0][1] * k[1][0] >= -1e-12 * scale * scale);
    }

    #[test]
    fn unweighted_mass_sums_to_the_area(p in triangle()) {
        let m = element_mass(p, &WeightKind::One, [0.0; 3]).unwrap();
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]));
        let total: f64 = m.iter().flatten().sum();
        prop_assert!((total - area).abs() <= 1e-14 * area.max(1.0));
    }
}
