use nalgebra::DMatrix;
use proptest::prelude::*;
use searchmesh_core::faultmodel::{
    classify_fault, controllability_matrix, controllability_rank, numerical_rank, observability_matrix,
    observability_rank, pbh_detectable, pbh_stabilizable, ControlClass, LinearizedPlant, ObserveClass,
};

/// Exact rank of an integer matrix by fraction-free (Bareiss) elimination.
fn bareiss_rank(m: &[Vec<i128>]) -> usize {
    let mut a: Vec<Vec<i128>> = m.to_vec();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut rank = 0;
    let mut prev = 1i128;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| a[r][col] != 0) else { continue };
        a.swap(rank, p);
        for r in rank + 1..rows {
            for c in col + 1..cols {
                a[r][c] = (a[r][c] * a[rank][col] - a[r][col] * a[rank][c]) / prev;
            }
            a[r][col] = 0;
        }
        prev = a[rank][col];
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

fn to_int(m: &DMatrix<f64>) -> Vec<Vec<i128>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].round() as i128).collect())
        .collect()
}

fn small_int_matrix(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1i8..=1, r * c).prop_map(move |v| DMatrix::from_fn(r, c, |i, j| v[i * c + j] as f64))
}

fn plant_strategy() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    (1usize..=4, 0usize..=2, 0usize..=2).prop_flat_map(|(n, m, p)| {
        (small_int_matrix(n, n), small_int_matrix(n, m), small_int_matrix(p, n))
    })
}

#[test]
fn bareiss_on_known_matrices() {
    assert_eq!(bareiss_rank(&[vec![1, 2], vec![2, 4]]), 1);
    assert_eq!(bareiss_rank(&[vec![0, 1], vec![1, 0]]), 2);
    assert_eq!(bareiss_rank(&[vec![0, 0, 0]]), 0);
    assert_eq!(bareiss_rank(&[vec![1, 1, 0], vec![0, 1, 1], vec![1, 2, 1]]), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn numerical_rank_matches_exact_rank((a, b, c) in plant_strategy()) {
        let q = controllability_matrix(&a, &b);
        let o = observability_matrix(&a, &c);
        prop_assert_eq!(numerical_rank(&q, a.nrows()), bareiss_rank(&to_int(&q)));
        prop_assert_eq!(numerical_rank(&o, a.nrows()), bareiss_rank(&to_int(&o)));
    }

    #[test]
    fn controllability_and_observability_are_dual((a, b, c) in plant_strategy()) {
        let p = LinearizedPlant::new(a.clone(), b.clone(), c.clone()).unwrap();
        let dual = LinearizedPlant::new(a.transpose(), c.transpose(), b.transpose()).unwrap();
        prop_assert_eq!(controllability_rank(&p), observability_rank(&dual));
        prop_assert_eq!(observability_rank(&p), controllability_rank(&dual));
        prop_assert_eq!(pbh_stabilizable(&a, &b), pbh_detectable(&a.transpose(), &b.transpose()));
    }

    /// With distinct eigenvalues on the diagonal, a mode is controllable iff
    /// its row of B is nonzero.
    #[test]
    fn modal_stabilizability(
        picks in prop::sample::subsequence(vec![-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0], 1..=4),
        b_rows in prop::collection::vec(prop::bool::ANY, 4),
    ) {
        let n = picks.len();
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(picks.clone()));
        let b = DMatrix::from_fn(n, 1, |i, _| if b_rows[i] { 1.0 } else { 0.0 });
        let want = (0..n).all(|i| picks[i] < 0.0 || b_rows[i]);
        prop_assert_eq!(pbh_stabilizable(&a, &b), want);
        let full = (0..n).all(|i| b_rows[i]);
        let p = LinearizedPlant::new(a.clone(), b.clone(), b.transpose()).unwrap().with_pbh_flags();
        let f = classify_fault(&p, true);
        let expect_ctrl = if full {
            ControlClass::Controllable
        } else if want {
            ControlClass::Stabilizable
        } else {
            ControlClass::Unstabilizable
        };
        prop_assert_eq!(f.ctrl_class(), expect_ctrl);
        let expect_obs = match expect_ctrl {
            ControlClass::Controllable => ObserveClass::Observable,
            ControlClass::Stabilizable => ObserveClass::Detectable,
            ControlClass::Unstabilizable => ObserveClass::Undetectable,
        };
        prop_assert_eq!(f.obs_class(), expect_obs);
        let camera_failed = classify_fault(&p, false);
        prop_assert_eq!(camera_failed.index(), f.index() + 9);
    }
}
