mod common;

use common::*;
use proptest::prelude::*;
use qofc::dynamics::{comb_nonoverlapping, comb_overlapping, propagate_seed, CombTopology};
use qofc::state::{min_hermitian_eigenvalue, GaussianCombState, C64};

fn seeded_overlap(n: usize, gt: f64) -> GaussianCombState {
    let xi0: Vec<C64> = (0..n).map(|k| c(0.5 - 0.1 * k as f64, 0.2 * k as f64)).collect();
    let xi = propagate_seed(&CombTopology::overlapping(n, gt), 1.0, &xi0).unwrap();
    comb_overlapping(n, gt).unwrap().with_xi(xi).unwrap()
}

fn principal_submatrix(a: &nalgebra::DMatrix<C64>, modes: &[usize]) -> nalgebra::DMatrix<C64> {
    let rows: Vec<usize> = modes.iter().flat_map(|&k| [2 * k, 2 * k + 1]).collect();
    nalgebra::DMatrix::from_fn(rows.len(), rows.len(), |r, s| a[(rows[r], rows[s])])
}

#[test]
fn restriction_is_principal_submatrix() {
    let s = seeded_overlap(6, 0.3);
    let full = s.full_matrix();
    for modes in [vec![0, 1], vec![4, 2], vec![5], vec![0, 2, 3, 5]] {
        let r = s.restrict(&modes).unwrap();
        assert_eq!(r.full_matrix(), principal_submatrix(&full, &modes), "{modes:?}");
        let xi: Vec<C64> = modes.iter().map(|&k| s.xi()[k]).collect();
        assert_eq!(r.xi(), &xi[..]);
    }
}

#[test]
fn overlap_n3_marginal() {
    let s = comb_overlapping(3, 0.1).unwrap();
    let r = s.restrict(&[0, 1]).unwrap();
    assert_eq!(r.n_modes(), 2);
    assert_eq!(r.cov().b()[0], s.cov().b()[0]);
    assert_eq!(r.cov().d(0, 1), s.cov().d(0, 1));
    assert_eq!(r.cov().d_bar(0, 1), s.cov().d_bar(0, 1));
    assert_eq!(r.meta().modes.as_deref(), Some(&[0, 1][..]));
    assert!(r.validate().physical);
}

#[test]
fn restriction_rejects_bad_modes() {
    let s = comb_overlapping(3, 0.1).unwrap();
    assert!(s.restrict(&[]).is_err());
    assert!(s.restrict(&[3]).is_err());
    assert!(s.restrict(&[1, 1]).is_err());
}

#[test]
fn noise_rejects_bad_input() {
    let s = comb_nonoverlapping(&[0.5]).unwrap();
    assert!(s.add_thermal_noise(&[0.1]).is_err());
    assert!(s.add_thermal_noise(&[0.1, -0.1]).is_err());
    assert!(s.add_thermal_noise(&[f64::NAN, 0.0]).is_err());
}

#[test]
fn json_round_trip_is_exact() {
    let s = seeded_overlap(5, 0.37)
        .add_thermal_noise(&[0.1, 0.0, 0.3, 1.0 / 3.0, 0.0])
        .unwrap();
    let text = s.to_json().unwrap();
    let back = GaussianCombState::from_json(&text).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.to_json().unwrap(), text);
}

#[test]
fn json_rejects_inconsistent_blocks() {
    let s = comb_overlapping(3, 0.2).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
    let b = doc["b"].as_array_mut().unwrap();
    b.pop();
    assert!(GaussianCombState::from_json(&doc.to_string()).is_err());
}

#[test]
fn vacuum_is_physical_and_empty() {
    let v = GaussianCombState::vacuum(4);
    let d = v.validate();
    assert!(d.physical);
    assert_eq!(d.min_eigenvalue, 0.0);
    assert!(v.full_matrix().iter().all(|z| *z == c(0.0, 0.0)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noise_never_lowers_the_spectrum(
        n in 2usize..6,
        gt in 0.0..0.5f64,
        noise in prop::collection::vec(0.0..2.0f64, 6),
    ) {
        let s = comb_overlapping(n, gt).unwrap();
        let noisy = s.add_thermal_noise(&noise[..n]).unwrap();
        let before = min_hermitian_eigenvalue(&s.full_matrix());
        let after = min_hermitian_eigenvalue(&noisy.full_matrix());
        prop_assert!(after >= before - 1e-12);
        for (k, nk) in noise.iter().take(n).enumerate() {
            prop_assert_eq!(noisy.cov().b()[k], s.cov().b()[k] + nk);
            prop_assert_eq!(noisy.cov().c()[k], s.cov().c()[k]);
        }
    }

    #[test]
    fn restriction_commutes_with_noise(
        gt in 0.0..0.5f64,
        noise in prop::collection::vec(0.0..2.0f64, 5),
        modes in prop::sample::subsequence(vec![0usize, 1, 2, 3, 4], 1..=5),
    ) {
        let s = seeded_overlap(5, gt);
        let a = s.add_thermal_noise(&noise).unwrap().restrict(&modes).unwrap();
        let sub: Vec<f64> = modes.iter().map(|&k| noise[k]).collect();
        let b = s.restrict(&modes).unwrap().add_thermal_noise(&sub).unwrap();
        prop_assert_eq!(a.full_matrix(), b.full_matrix());
        prop_assert_eq!(a.xi(), b.xi());
    }
}
