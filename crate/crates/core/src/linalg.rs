//! Dense kernels for the restricted least-squares oracle: a diagonally
//! pivoted Cholesky factorization with rank detection, used to solve the
//! (always consistent) normal equations on a support submatrix.

/// Solves `G z = b` for a symmetric positive-semidefinite `G` (`k×k`,
/// row-major) and returns `bᵀ z`, the explained energy of the projection.
/// Rank deficiency is handled by pivoting and truncation; the value is
/// invariant to which least-squares solution the truncation picks.
pub(crate) fn explained_energy(gram: &[f64], rhs: &[f64], k: usize) -> Option<f64> {
    debug_assert_eq!(gram.len(), k * k);
    debug_assert_eq!(rhs.len(), k);
    if k == 0 {
        return Some(0.0);
    }

    let mut m = gram.to_vec();
    let mut perm: Vec<usize> = (0..k).collect();

    let max_diag = (0..k).map(|i| gram[i * k + i]).fold(0.0f64, f64::max);
    if !max_diag.is_finite() {
        return None;
    }
    let tol = (k as f64) * f64::EPSILON * max_diag;

    let mut rank = k;
    for r in 0..k {
        // Largest remaining diagonal entry becomes the pivot.
        let mut pivot = r;
        for i in (r + 1)..k {
            if m[i * k + i] > m[pivot * k + pivot] {
                pivot = i;
            }
        }
        if m[pivot * k + pivot] <= tol {
            rank = r;
            break;
        }
        if pivot != r {
            perm.swap(r, pivot);
            for j in 0..k {
                m.swap(r * k + j, pivot * k + j);
            }
            for i in 0..k {
                m.swap(i * k + r, i * k + pivot);
            }
        }

        let d = m[r * k + r].sqrt();
        m[r * k + r] = d;
        for i in (r + 1)..k {
            m[i * k + r] /= d;
        }
        // Keep the trailing block symmetric on both triangles: the pivot
        // swap above moves whole rows and columns, so stale upper-triangle
        // values would otherwise leak into the active region.
        for i in (r + 1)..k {
            let lir = m[i * k + r];
            for j in (r + 1)..=i {
                let v = m[i * k + j] - lir * m[j * k + r];
                m[i * k + j] = v;
                m[j * k + i] = v;
            }
        }
    }

    // Forward then backward substitution on the rank×rank leading block.
    let pb: Vec<f64> = (0..rank).map(|i| rhs[perm[i]]).collect();
    let mut z = pb.clone();
    for i in 0..rank {
        for j in 0..i {
            z[i] -= m[i * k + j] * z[j];
        }
        z[i] /= m[i * k + i];
    }
    for i in (0..rank).rev() {
        for j in (i + 1)..rank {
            z[i] -= m[j * k + i] * z[j];
        }
        z[i] /= m[i * k + i];
    }

    let energy: f64 = pb.iter().zip(&z).map(|(b, zi)| b * zi).sum();
    if energy.is_finite() {
        Some(energy)
    } else {
        None
    }
}
