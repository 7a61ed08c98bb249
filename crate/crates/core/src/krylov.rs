//! Restarted, right-preconditioned GMRES for matrix-free linear operators.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    /// Stop when `‖b − A x‖ ≤ tol · ‖b‖`.
    pub tol: f64,
    /// Budget of operator applications inside Arnoldi cycles.
    pub max_iter: usize,
    pub restart: usize,
    /// Confirm convergence with a true residual before returning. Without it
    /// the solver returns as soon as the Arnoldi estimate meets `tol`.
    pub verify: bool,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 500,
            restart: 60,
            verify: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    /// Arnoldi steps taken.
    pub iterations: usize,
    /// Operator applications, including true-residual evaluations.
    pub applications: usize,
    /// Final residual relative to `‖b‖`; the Arnoldi estimate when
    /// `verify` is off and the last cycle converged.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Inner product, optionally weighted (`Σ w_i x_i y_i`).
fn dot(w: Option<&[f64]>, x: &[f64], y: &[f64]) -> f64 {
    match w {
        Some(w) => w.iter().zip(x).zip(y).map(|((w, a), b)| w * a * b).sum(),
        None => x.iter().zip(y).map(|(a, b)| a * b).sum(),
    }
}

fn norm(w: Option<&[f64]>, x: &[f64]) -> f64 {
    dot(w, x, x).sqrt()
}

/// Solves `A x = b` starting from the contents of `x`.
///
/// `apply(v, out)` writes `A v`; `precond(v)` overwrites `v` with `M⁻¹ v`.
/// The tolerance is relative to `‖b‖` rather than the initial residual, so a
/// good starting guess directly saves iterations. A zero starting guess costs
/// no operator application.
pub fn gmres<A, P>(
    mut apply: A,
    mut precond: P,
    weights: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    opts: &GmresOptions,
) -> GmresOutcome
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&mut [f64]),
{
    let n = b.len();
    let bnorm = norm(weights, b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return GmresOutcome {
            iterations: 0,
            applications: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let m = opts.restart.max(1);
    let mut iterations = 0;
    let mut applications = 0;
    let mut r = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut w = vec![0.0; n];
    let mut previous = f64::INFINITY;
    let mut estimate: Option<f64> = None;

    loop {
        if let (Some(est), false) = (estimate, opts.verify) {
            if est <= opts.tol {
                return GmresOutcome {
                    iterations,
                    applications,
                    relative_residual: est,
                    converged: true,
                };
            }
        }
        if x.iter().all(|v| *v == 0.0) {
            r.copy_from_slice(b);
        } else {
            apply(x, &mut r);
            applications += 1;
            r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        }
        let beta = norm(weights, &r);
        let rel = beta / bnorm;
        // a full cycle that fails to reduce the true residual means we are at
        // the attainable accuracy floor
        let stalled = rel >= previous;
        if rel <= opts.tol || iterations >= opts.max_iter || stalled || beta == 0.0 {
            return GmresOutcome {
                iterations,
                applications,
                relative_residual: rel,
                converged: rel <= opts.tol,
            };
        }
        previous = rel;

        basis.clear();
        z.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k = 0;
        while k < m && iterations < opts.max_iter {
            let mut zk = basis[k].clone();
            precond(&mut zk);
            apply(&zk, &mut w);
            applications += 1;
            iterations += 1;
            z.push(zk);
            for hj in h.iter_mut() {
                hj[k] = 0.0;
            }
            // modified Gram-Schmidt, repeated once on heavy cancellation
            let mut hn = norm(weights, &w);
            for pass in 0..2 {
                for (j, vj) in basis.iter().enumerate() {
                    let c = dot(weights, &w, vj);
                    h[j][k] += c;
                    w.iter_mut().zip(vj).for_each(|(wi, vi)| *wi -= c * vi);
                }
                let after = norm(weights, &w);
                let cancelled = after < 0.5 * hn;
                hn = after;
                if pass == 0 && !cancelled {
                    break;
                }
            }
            h[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            if g[k].abs() <= opts.tol * bnorm || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }

        estimate = Some(g[k].abs() / bnorm);
        // back substitution for the k Arnoldi coefficients
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= h[i][j] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
        }
        for (yj, zj) in y.iter().zip(&z) {
            x.iter_mut().zip(zj).for_each(|(xi, zi)| *xi += yj * zi);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{Ilu0, TripletBuilder};

    fn convection_diffusion(n: usize) -> crate::sparse::CsrMatrix {
        let mut b = TripletBuilder::new(n);
        for i in 0..n {
            b.push(i, i, 2.5);
            if i > 0 {
                b.push(i, i - 1, -1.5);
            }
            if i + 1 < n {
                b.push(i, i + 1, -0.5);
            }
            if i + 7 < n {
                b.push(i, i + 7, -0.2);
            }
        }
        b.build()
    }

    #[test]
    fn solves_nonsymmetric_system() {
        let a = convection_diffusion(40);
        let x_true: Vec<f64> = (0..40).map(|i| (0.3 * i as f64).cos()).collect();
        let mut b = vec![0.0; 40];
        a.mul_vec(&x_true, &mut b);
        let mut x = vec![0.0; 40];
        let opts = GmresOptions {
            tol: 1e-13,
            max_iter: 200,
            restart: 10,
            verify: true,
        };
        let out = gmres(|v, o| a.mul_vec(v, o), |_| {}, None, &b, &mut x, &opts);
        assert!(out.converged, "{out:?}");
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-11);
        }
    }

    #[test]
    fn ilu_preconditioning_and_weights() {
        let a = convection_diffusion(60);
        let ilu = Ilu0::new(&a);
        let b: Vec<f64> = (0..60).map(|i| 1.0 + i as f64 * 0.01).collect();
        let w: Vec<f64> = (0..60).map(|i| 1.0 + (i % 3) as f64).collect();
        let mut x = vec![0.0; 60];
        let opts = GmresOptions {
            tol: 1e-14,
            max_iter: 100,
            restart: 30,
            verify: true,
        };
        let out = gmres(
            |v, o| a.mul_vec(v, o),
            |v| ilu.solve_in_place(v),
            Some(&w),
            &b,
            &mut x,
            &opts,
        );
        assert!(out.converged, "{out:?}");
        assert!(out.iterations < 20);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = convection_diffusion(5);
        let mut x = vec![1.0; 5];
        let out = gmres(
            |v, o| a.mul_vec(v, o),
            |_| {},
            None,
            &[0.0; 5],
            &mut x,
            &GmresOptions::default(),
        );
        assert!(out.converged);
        assert_eq!(x, vec![0.0; 5]);
    }
}
