use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Frobenius norm below which a (centered) input is considered degenerate.
pub const CKA_DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CkaOptions {
    /// Column-center both inputs before comparing them.
    pub center: bool,
}

impl Default for CkaOptions {
    fn default() -> Self {
        CkaOptions { center: true }
    }
}

/// Linear CKA between two `P×P` matrices treated as feature matrices.
pub fn linear_cka(a: &Matrix, b: &Matrix) -> Result<f64> {
    linear_cka_with(a, b, CkaOptions::default())
}

/// Linear CKA, `‖Bᵀ A‖²_F / (‖Aᵀ A‖_F · ‖Bᵀ B‖_F)` on (optionally)
/// column-centered inputs. The result is clamped to `[0, 1]`.
pub fn linear_cka_with(a: &Matrix, b: &Matrix, options: CkaOptions) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "CKA inputs are {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::DegenerateInput("non-finite CKA input".into()));
    }
    let (a, b) = if options.center {
        (a.center_columns(), b.center_columns())
    } else {
        (a.clone(), b.clone())
    };
    for (name, m) in [("first", &a), ("second", &b)] {
        if m.frobenius_norm() < CKA_DEGENERACY_TOL {
            return Err(Error::DegenerateInput(format!(
                "{name} CKA input has (near) zero norm after centering"
            )));
        }
    }
    let cross = b.t_matmul(&a)?.frobenius_norm_sq();
    let self_a = a.t_matmul(&a)?.frobenius_norm();
    let self_b = b.t_matmul(&b)?.frobenius_norm();
    let value = cross / (self_a * self_b);
    if !value.is_finite() {
        return Err(Error::DegenerateInput("CKA normalizer underflowed".into()));
    }
    Ok(value.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
    }

    /// HSIC form with an explicit centering matrix H = I − 11ᵀ/P.
    fn hsic_cka(a: &Matrix, b: &Matrix) -> f64 {
        let p = a.rows();
        let h = Matrix::from_fn(p, p, |i, j| (i == j) as u8 as f64 - 1.0 / p as f64);
        let gram = |m: &Matrix| m.matmul(&m.transpose()).unwrap();
        let hsic = |k: &Matrix, l: &Matrix| {
            let khlh = k.matmul(&h).unwrap().matmul(l).unwrap().matmul(&h).unwrap();
            (0..p).map(|i| khlh[(i, i)]).sum::<f64>()
        };
        let (k, l) = (gram(a), gram(b));
        hsic(&k, &l) / (hsic(&k, &k) * hsic(&l, &l)).sqrt()
    }

    #[test]
    fn self_similarity_and_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 5);
        assert!((linear_cka(&a, &a).unwrap() - 1.0).abs() < 1e-14);
        assert!((linear_cka(&a, &a.scale(3.0)).unwrap() - 1.0).abs() < 1e-14);
        assert!((linear_cka(&a, &a.scale(-0.25)).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn agrees_with_hsic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 4);
            let b = random_matrix(&mut rng, 4);
            let got = linear_cka(&a, &b).unwrap();
            assert!((got - hsic_cka(&a, &b)).abs() < 1e-10, "{got}");
            assert!((got - linear_cka(&b, &a).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_columns_are_degenerate() {
        let a = Matrix::from_fn(3, 3, |_, c| c as f64);
        let b = Matrix::from_fn(3, 3, |r, c| (r * c) as f64);
        assert!(matches!(linear_cka(&a, &b), Err(Error::DegenerateInput(_))));
        // without centering the same input is usable
        assert!(linear_cka_with(&a, &b, CkaOptions { center: false }).is_ok());
    }

    #[test]
    fn shape_mismatch() {
        assert!(linear_cka(&Matrix::zeros(3, 3), &Matrix::zeros(4, 4)).is_err());
    }
}
