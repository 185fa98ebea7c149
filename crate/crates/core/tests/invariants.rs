use fedmsc::eval::{accuracy, nmi, purity};
use fedmsc::hypergraph::{hypergraph_laplacian, knn_hyperedges, view_affinity, AffinityMatrix};
use fedmsc::local::{project_pair_with, ProjectionMode};
use fedmsc::{Matrix, Vector};
use proptest::prelude::*;

fn square(max_n: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2..=max_n).prop_flat_map(|n| (Just(n), prop::collection::vec(-5.0f64..5.0, n * n)))
}

fn affinity(n: usize, raw: &[f64]) -> AffinityMatrix {
    let m = Matrix::from_fn(n, n, |i, j| {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if a == b {
            0.0
        } else {
            raw[a * n + b].abs()
        }
    });
    AffinityMatrix::new(m).unwrap()
}

proptest! {
    #[test]
    fn projection_is_feasible(
        (tilde, partner, diag) in (2usize..40).prop_flat_map(|n| (
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(0.0f64..0.2 / n as f64, n),
            0..n,
        ))
    ) {
        let tilde = Vector::from_vec(tilde);
        let partner = Vector::from_vec(partner);
        let out = project_pair_with(&tilde, &partner, Some(diag), ProjectionMode::ShiftClamp);
        prop_assert_eq!(out.vector[diag], 0.0);
        prop_assert!(out.vector.iter().all(|&v| v >= 0.0));
        if out.clamped == 0 {
            prop_assert!((out.vector.sum() + partner.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn view_affinity_is_symmetric_and_nonnegative((n, raw) in square(12), flip in any::<bool>()) {
        let g = Matrix::from_row_slice(n, n, &raw);
        let u = if flip { g.transpose() * -0.5 } else { g.clone() };
        let a = view_affinity(&g, &u);
        let a = a.as_matrix();
        prop_assert!(a.iter().all(|&v| v >= 0.0));
        prop_assert_eq!(a, &a.transpose());
    }

    #[test]
    fn hypergraph_laplacian_is_psd_with_known_null_vector(
        (n, raw) in square(25),
        k_frac in 0.0f64..1.0,
        probe in prop::collection::vec(-1.0f64..1.0, 25),
    ) {
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let k = k.min(n - 1);
        let hg = knn_hyperedges(&affinity(n, &raw), k).unwrap();
        let l = hypergraph_laplacian(&hg).unwrap();
        prop_assert!((&l - l.transpose()).abs().max() <= 1e-12);
        let x = Vector::from_iterator(n, probe.into_iter().take(n));
        prop_assert!(x.dot(&(&l * &x)) >= -1e-10);
        let sqrt_dv = Vector::from_iterator(n, hg.incidence.row_iter().map(|r| r.sum().sqrt()));
        prop_assert!((&l * sqrt_dv).norm() <= 1e-10);
    }

    #[test]
    fn metrics_are_bounded_and_label_invariant(
        (truth, pred) in (2usize..60).prop_flat_map(|n| (
            prop::collection::vec(0usize..4, n),
            prop::collection::vec(0usize..4, n),
        )),
        shift in 1usize..4,
    ) {
        let relabeled: Vec<usize> = pred.iter().map(|&p| (p + shift) % 4).collect();
        let (a, p, m) = (accuracy(&pred, &truth), purity(&pred, &truth), nmi(&pred, &truth));
        for v in [a, p, m] {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
        prop_assert!(a <= p + 1e-12);
        prop_assert!((accuracy(&relabeled, &truth) - a).abs() <= 1e-12);
        prop_assert!((purity(&relabeled, &truth) - p).abs() <= 1e-12);
        prop_assert!((nmi(&relabeled, &truth) - m).abs() <= 1e-12);
    }
}
