//! Small dense linear algebra helpers: spectra of real non-symmetric
//! matrices and the matrix exponential.

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix};

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

/// All eigenvalues of a real square matrix, or `None` when the Schur
/// iteration does not converge.
pub fn eigenvalues(m: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let schur = Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER)?;
    Some(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Option<f64> {
    eigenvalues(m).map(|ev| ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Largest modulus over the spectrum.
pub fn max_modulus(m: &DMatrix<f64>) -> Option<f64> {
    eigenvalues(m).map(|ev| ev.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

pub fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

// Padé(13) numerator coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which the degree-13 approximant is accurate to unit roundoff.
const THETA13: f64 = 5.371920351148152;

/// `exp(m)` by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let norm = norm1(m);
    if !norm.is_finite() {
        return None;
    }
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = m / 2f64.powi(squarings);
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE13;

    let u_inner = &a6 * (b[13]) + &a4 * b[11] + &a2 * b[9];
    let u = &a * (&a6 * u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let v_inner = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * v_inner + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let mut result = (&v - &u).lu().solve(&(&v + &u))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Some(result)
}
