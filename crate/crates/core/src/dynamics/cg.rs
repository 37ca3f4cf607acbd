//! Conjugate gradients for the wall-bounded implicit solves.
//!
//! Both operators handed to this solver (the composition Helmholtz operator
//! and the negated pressure Laplacian) are symmetric positive semi-definite
//! under the mirror ghost rules, with at most the constant mode in the null
//! space. `remove_mean` keeps iterates orthogonal to that mode so the
//! singular Neumann solve stays well posed.

pub(crate) enum StopRule {
    /// Stop when `||r||_2 <= tol * ||b||_2`.
    RelL2(f64),
    /// Stop when `||r||_inf <= tol`.
    AbsInf(f64),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

fn remove_mean_of(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Solve `A x = b` with `apply` computing `A y`. Returns the converged
/// iterate; `Err` carries `(iters, residual)` when the iteration cap is
/// exhausted or a direction loses curvature.
pub(crate) fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    stop: StopRule,
    max_iters: usize,
    remove_mean: bool,
) -> Result<Vec<f64>, (usize, f64)> {
    let n = b.len();
    let mut r = b.to_vec();
    if remove_mean {
        remove_mean_of(&mut r);
    }
    let b_l2 = dot(&r, &r).sqrt();
    let tol_abs = match stop {
        StopRule::RelL2(tol) => tol * b_l2,
        StopRule::AbsInf(tol) => tol,
    };
    let metric = |r: &[f64]| match stop {
        StopRule::RelL2(_) => dot(r, r).sqrt(),
        StopRule::AbsInf(_) => norm_inf(r),
    };

    let mut x = vec![0.0; n];
    let mut res = metric(&r);
    if res <= tol_abs || b_l2 == 0.0 {
        return Ok(x);
    }

    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for iter in 1..=max_iters {
        let mut ap = apply(&p);
        if remove_mean {
            remove_mean_of(&mut ap);
        }
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // Curvature loss: the operator is SPSD, so this is pure roundoff
            // on a converged direction. Report what we have.
            return Err((iter, res));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if remove_mean {
            remove_mean_of(&mut r);
        }
        res = metric(&r);
        if res <= tol_abs {
            return Ok(x);
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err((max_iters, res))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Dense SPD test matrix: tridiagonal (2, -1) plus identity.
    fn apply_tridiag(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        (0..n)
            .map(|i| {
                let left = if i > 0 { v[i - 1] } else { 0.0 };
                let right = if i + 1 < n { v[i + 1] } else { 0.0 };
                3.0 * v[i] - left - right
            })
            .collect()
    }

    #[test]
    fn solves_spd_system_to_tolerance() {
        let b: Vec<f64> = (0..50).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        let x = conjugate_gradient(apply_tridiag, &b, StopRule::RelL2(1e-12), 500, false)
            .expect("converges");
        let ax = apply_tridiag(&x);
        for (ai, bi) in ax.iter().zip(&b) {
            assert!((ai - bi).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_returns_zero_immediately() {
        let b = vec![0.0; 32];
        let x = conjugate_gradient(apply_tridiag, &b, StopRule::RelL2(1e-12), 10, false).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn iteration_cap_reports_exhaustion() {
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let err = conjugate_gradient(apply_tridiag, &b, StopRule::RelL2(1e-14), 2, false);
        match err {
            Err((iters, res)) => {
                assert_eq!(iters, 2);
                assert!(res > 0.0);
            }
            Ok(_) => panic!("should not converge in two iterations"),
        }
    }

    #[test]
    fn singular_neumann_mode_is_projected_out() {
        // Graph Laplacian of a path: null space = constants. A compatible RHS
        // (zero mean) must converge with remove_mean.
        let lap = |v: &[f64]| {
            let n = v.len();
            (0..n)
                .map(|i| {
                    let left = if i > 0 { v[i] - v[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { v[i] - v[i + 1] } else { 0.0 };
                    left + right
                })
                .collect::<Vec<_>>()
        };
        let n = 40;
        let mut b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        for v in b.iter_mut() {
            *v -= mean;
        }
        let x = conjugate_gradient(lap, &b, StopRule::AbsInf(1e-11), 2000, true).unwrap();
        let ax = lap(&x);
        for (ai, bi) in ax.iter().zip(&b) {
            assert!((ai - bi).abs() < 1e-9);
        }
        let xmean = x.iter().sum::<f64>() / n as f64;
        assert!(xmean.abs() < 1e-10);
    }
}
