use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const ORTHO_TOL: f64 = 1e-15;
/// Relative column norm below which a column counts as zero.
const NEGLIGIBLE: f64 = 1e-15;

/// Singular values of `m`, sorted descending, via one-sided (Hestenes)
/// Jacobi rotations. Returns exactly `min(rows, cols)` values.
pub fn svd_values(m: &Matrix) -> Result<Vec<f64>> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::invalid("svd of an empty matrix"));
    }
    if !m.is_finite() {
        return Err(Error::invalid("svd input contains non-finite entries"));
    }
    // Orthogonalize the shorter side: columns of the tall orientation.
    let tall = if m.rows() >= m.cols() {
        m.clone()
    } else {
        m.transpose()
    };
    let (rows, n) = tall.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| tall.column(j)).collect();
    debug_assert!(cols.iter().all(|c| c.len() == rows));

    // columns below this squared norm are numerically zero; rotating them
    // against each other only shuffles rounding noise and never converges
    let frob2: f64 = cols.iter().map(|c| dot(c, c)).sum();
    let negligible = frob2 * NEGLIGIBLE * NEGLIGIBLE;
    // rounding in a length-`rows` dot product bounds attainable orthogonality
    let tol = ORTHO_TOL.max(f64::EPSILON * rows as f64);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (head, tail) = cols.split_at_mut(q);
                let (cp, cq) = (&mut head[p], &mut tail[0]);
                let alpha = dot(cp, cp);
                let beta = dot(cq, cq);
                let gamma = dot(cp, cq);
                if gamma == 0.0
                    || alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= tol * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(cp, cq, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

#[inline]
fn rotate(cp: &mut [f64], cq: &mut [f64], c: f64, s: f64) {
    // [cp cq] <- [cp cq] · [[c, s], [-s, c]]
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}
