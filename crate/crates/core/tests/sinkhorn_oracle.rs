use dtanet_core::ot::{cost_matrix, sinkhorn, sinkhorn_uniform, transport_cost, CostMatrix, SinkhornOptions};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact transport optimum by enumerating every basic solution of the
/// transportation polytope.
fn lp_optimum(c: &Array2<f64>, p: &[f64], q: &[f64]) -> f64 {
    let (m, n) = c.dim();
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    enumerate(&cells, k, 0, &mut chosen, &mut |basis| {
        // Row constraints plus all but the last column constraint (one is redundant).
        let a = DMatrix::from_fn(k, k, |r, col| {
            let (i, j) = cells[basis[col]];
            f64::from(u8::from(if r < m { i == r } else { j == r - m }))
        });
        let b = DVector::from_fn(k, |r, _| if r < m { p[r] } else { q[r - m] });
        let Some(x) = a.lu().solve(&b) else { return };
        if x.iter().any(|&v| v < -1e-12 || !v.is_finite()) {
            return;
        }
        let mut full = Array2::<f64>::zeros((m, n));
        for (col, &cell) in basis.iter().enumerate() {
            full[cells[cell]] = x[col];
        }
        let rows_ok = (0..m).all(|i| (full.row(i).sum() - p[i]).abs() < 1e-9);
        let cols_ok = (0..n).all(|j| (full.column(j).sum() - q[j]).abs() < 1e-9);
        if rows_ok && cols_ok {
            best = best.min((&full * c).sum());
        }
    });
    best
}

fn enumerate(cells: &[(usize, usize)], k: usize, start: usize, chosen: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    for idx in start..cells.len() {
        if cells.len() - idx < k - chosen.len() {
            break;
        }
        chosen.push(idx);
        enumerate(cells, k, idx + 1, chosen, f);
        chosen.pop();
    }
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

#[test]
fn oracle_agrees_on_known_assignment() {
    let c = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    assert_eq!(lp_optimum(&c, &[0.5, 0.5], &[0.5, 0.5]), 0.0);
    let c = Array2::from_shape_vec((1, 3), vec![1.0, 2.0, 3.0]).unwrap();
    assert!((lp_optimum(&c, &[1.0], &[0.2, 0.3, 0.5]) - 2.3).abs() < 1e-12);
}

#[test]
fn sinkhorn_is_within_entropic_gap_of_exact_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let m = rng.random_range(1..=4);
        let n = rng.random_range(1..=4);
        let c = Array2::from_shape_simple_fn((m, n), || rng.random_range(0.0..1.0));
        let p = random_simplex(&mut rng, m);
        let q = random_simplex(&mut rng, n);
        let lambda = rng.random_range(50.0..200.0);
        let opts = SinkhornOptions { tol: 1e-9, max_iter: 100_000, ..SinkhornOptions::new(lambda) };
        let cost = CostMatrix(c.clone());
        let plan = sinkhorn(&cost, &Array1::from(p.clone()), &Array1::from(q.clone()), &opts)
            .or_else(|_| sinkhorn(&cost, &Array1::from(p.clone()), &Array1::from(q.clone()), &opts.log_domain()))
            .unwrap();
        assert!(plan.residual < 1e-6, "residual {}", plan.residual);
        let exact = lp_optimum(&c, &p, &q);
        let got = transport_cost(&cost, &plan).unwrap();
        assert!(got >= exact - 1e-6, "below LP optimum: {got} < {exact}");
        assert!(got <= exact + plan.entropy() / lambda + 1e-6, "{got} vs {exact} + {}", plan.entropy() / lambda);
    }
}

fn cloud(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permuting_control_rows_permutes_plan_rows(
        (z_c, z_t, perm) in (1usize..6, 1usize..6, 1usize..4).prop_flat_map(|(nc, nt, k)| {
            (cloud(nc, k), cloud(nt, k), Just((0..nc).collect::<Vec<_>>()).prop_shuffle())
        })
    ) {
        let opts = SinkhornOptions::new(1.0);
        let plan = sinkhorn_uniform(&cost_matrix(z_c.view(), z_t.view()).unwrap(), &opts).unwrap();
        let permuted = z_c.select(ndarray::Axis(0), &perm);
        let plan_p = sinkhorn_uniform(&cost_matrix(permuted.view(), z_t.view()).unwrap(), &opts).unwrap();
        for (new_row, &old_row) in perm.iter().enumerate() {
            for j in 0..z_t.nrows() {
                let (a, b) = (plan_p.gamma[[new_row, j]], plan.gamma[[old_row, j]]);
                prop_assert!((a - b).abs() <= 1e-12 + 1e-9 * b.abs(), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn plans_are_feasible_and_nonnegative(z_c in cloud(4, 3), z_t in cloud(3, 3), lambda in 0.05f64..5.0) {
        let plan = sinkhorn_uniform(&cost_matrix(z_c.view(), z_t.view()).unwrap(), &SinkhornOptions::new(lambda)).unwrap();
        prop_assert!(plan.gamma.iter().all(|&g| g >= 0.0));
        prop_assert!((plan.mass() - 1.0).abs() < 1e-9);
        if plan.converged {
            let rows = plan.gamma.sum_axis(ndarray::Axis(1));
            let cols = plan.gamma.sum_axis(ndarray::Axis(0));
            prop_assert!(rows.iter().all(|r| (r - 0.25).abs() < 1e-6));
            prop_assert!(cols.iter().all(|c| (c - 1.0 / 3.0).abs() < 1e-6));
        }
    }

    #[test]
    fn identical_clouds_cost_no_more_than_the_zero_cost_floor(z in cloud(4, 2), lambda in 0.5f64..5.0) {
        let opts = SinkhornOptions { tol: 1e-12, max_iter: 100_000, ..SinkhornOptions::new(lambda) };
        let cost = cost_matrix(z.view(), z.view()).unwrap();
        let plan = sinkhorn_uniform(&cost, &opts).unwrap();
        let got = transport_cost(&cost, &plan).unwrap();
        // For C ≡ 0 the plan is the independent coupling, whose entropy bounds the gap.
        let floor = sinkhorn_uniform(&CostMatrix(Array2::zeros((4, 4))), &opts).unwrap();
        prop_assert!(got <= floor.entropy() / lambda + 1e-9, "{got}");
    }
}
