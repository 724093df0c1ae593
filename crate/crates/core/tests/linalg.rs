use seebf_core::linalg::*;
use seebf_core::Error;

fn naive_det(a: &CMat) -> C64 {
    // Laplace expansion, fine for the small sizes used here.
    let n = a.nrows();
    if n == 1 {
        return a[(0, 0)];
    }
    let mut det = c(0.0, 0.0);
    for col in 0..n {
        let minor = a.clone().remove_row(0).remove_column(col);
        let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
        det += a[(0, col)] * naive_det(&minor) * sign;
    }
    det
}

#[test]
fn whitened_logdet_matches_naive_determinant() {
    let x = CMat::from_fn(3, 2, |i, j| c((i + 2 * j) as f64 * 0.3 - 0.4, (i * j) as f64 * 0.2 + 0.1));
    let y = CMat::from_fn(3, 3, |i, j| c(0.1 * (i as f64 - j as f64), 0.05 * (i + j) as f64));
    let s = gram(&y) + identity(3).scale(0.7);
    let q = gram(&x);
    let got = logdet_whitened(&q, &s, "test").unwrap();
    let m = identity(3) + inv_pd(&s, "s").unwrap() * &q;
    let want = naive_det(&m).ln().re;
    assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "{got} vs {want}");
}

#[test]
fn psd_factor_reconstructs() {
    let x = CMat::from_fn(4, 2, |i, j| c(i as f64 - j as f64, 0.5 * j as f64));
    let a = gram(&x);
    let f = psd_factor(&a, "a").unwrap();
    assert_eq!(f.nrows(), 2);
    let back = f.adjoint() * &f;
    assert!((back - a).norm() < 1e-10);
}

#[test]
fn psd_rejects_indefinite() {
    let mut a = identity(2);
    a[(1, 1)] = c(-1.0, 0.0);
    assert!(matches!(psd_eigen(&a, "a"), Err(Error::NonPsd { .. })));
}

#[test]
fn null_space_annihilates() {
    let a = CMat::from_fn(2, 5, |i, j| c((i * 3 + j) as f64 * 0.7 - 1.0, (i + j * j) as f64 * 0.1));
    let (basis, rank) = null_space(&a, 1e-10);
    assert_eq!(rank, 2);
    assert_eq!(basis.ncols(), 3);
    assert!((&a * &basis).norm() < 1e-12);
    let gram = basis.adjoint() * &basis;
    assert!((gram - identity(3)).norm() < 1e-12);
}
