//! Weighted nonlinear least squares via Levenberg-Marquardt with a
//! finite-difference Jacobian.
//!
//! The residual closure fills sigma-weighted residuals r_i = (y_i - m_i)/s_i,
//! so the parameter covariance at the optimum is (JᵀJ)⁻¹ directly.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("singular normal equations (Jacobian rank deficient)")]
    SingularJacobian,
    #[error("no convergence after {iterations} iterations (chi2 = {chi2:.6e})")]
    NoConvergence { iterations: usize, chi2: f64 },
    #[error("invalid fit input: {0}")]
    InvalidInput(String),
    #[error("residual evaluation failed: {0}")]
    Eval(String),
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative chi-square improvement below which the fit is converged.
    pub ftol: f64,
    /// Relative parameter step below which the fit is converged.
    pub xtol: f64,
    pub lambda_init: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-12,
            xtol: 1e-12,
            lambda_init: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// 1-sigma parameter errors from the covariance diagonal.
    pub stderr: Vec<f64>,
    /// Row-major covariance matrix (n_params x n_params).
    pub covariance: Vec<f64>,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
    pub n_points: usize,
}

/// Minimize ||r(p)||² starting from `p0`. The closure writes the weighted
/// residual vector into its output slice and may fail (e.g. a parameter
/// wandered outside the model's domain), which the search treats as an
/// infinitely bad step.
pub fn levenberg_marquardt<F>(
    residuals: F,
    n_resid: usize,
    p0: &[f64],
    opts: &FitOptions,
) -> Result<FitResult, FitError>
where
    F: Fn(&[f64], &mut [f64]) -> Result<(), String>,
{
    let np = p0.len();
    if np == 0 || n_resid < np {
        return Err(FitError::InvalidInput(format!(
            "{n_resid} residuals for {np} parameters"
        )));
    }
    let mut p = p0.to_vec();
    let mut r = vec![0.0; n_resid];
    residuals(&p, &mut r).map_err(FitError::Eval)?;
    let mut chi2 = norm2(&r);
    let mut lambda = opts.lambda_init;
    let mut jac = vec![0.0; n_resid * np];
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        jacobian(&residuals, &p, &r, &mut jac, n_resid)?;

        // Normal equations: (JtJ + lambda*diag(JtJ)) dp = -Jt r
        let mut jtj = vec![0.0; np * np];
        let mut jtr = vec![0.0; np];
        for i in 0..n_resid {
            for a in 0..np {
                let ja = jac[i * np + a];
                jtr[a] += ja * r[i];
                for b in a..np {
                    jtj[a * np + b] += ja * jac[i * np + b];
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                jtj[a * np + b] = jtj[b * np + a];
            }
        }

        let mut improved = false;
        for _ in 0..24 {
            let mut lhs = jtj.clone();
            for a in 0..np {
                lhs[a * np + a] += lambda * jtj[a * np + a].max(1e-300);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(dp) = solve(&mut lhs, &rhs, np) else {
                return Err(FitError::SingularJacobian);
            };
            let p_new: Vec<f64> = p.iter().zip(&dp).map(|(a, b)| a + b).collect();
            let mut r_new = vec![0.0; n_resid];
            let chi2_new = match residuals(&p_new, &mut r_new) {
                Ok(()) => norm2(&r_new),
                Err(_) => f64::INFINITY,
            };
            if chi2_new.is_finite() && chi2_new <= chi2 {
                let step_small = dp
                    .iter()
                    .zip(&p)
                    .all(|(d, v)| d.abs() <= opts.xtol * (v.abs() + opts.xtol));
                let f_small = (chi2 - chi2_new) <= opts.ftol * chi2.max(1e-300);
                p = p_new;
                r = r_new;
                chi2 = chi2_new;
                lambda = (lambda * 0.3).max(1e-14);
                improved = true;
                if step_small || f_small {
                    return finish(residuals, p, chi2, n_resid, iterations);
                }
                break;
            }
            lambda *= 8.0;
            if lambda > 1e14 {
                // Cannot improve in any direction: converged to the local
                // minimum within floating-point resolution.
                return finish(residuals, p, chi2, n_resid, iterations);
            }
        }
        if !improved {
            return finish(residuals, p, chi2, n_resid, iterations);
        }
    }
    Err(FitError::NoConvergence {
        iterations,
        chi2,
    })
}

fn finish<F>(
    residuals: F,
    p: Vec<f64>,
    chi2: f64,
    n_resid: usize,
    iterations: usize,
) -> Result<FitResult, FitError>
where
    F: Fn(&[f64], &mut [f64]) -> Result<(), String>,
{
    let np = p.len();
    let mut r = vec![0.0; n_resid];
    residuals(&p, &mut r).map_err(FitError::Eval)?;
    let mut jac = vec![0.0; n_resid * np];
    jacobian(&residuals, &p, &r, &mut jac, n_resid)?;
    let mut jtj = vec![0.0; np * np];
    for i in 0..n_resid {
        for a in 0..np {
            for b in a..np {
                jtj[a * np + b] += jac[i * np + a] * jac[i * np + b];
            }
        }
    }
    for a in 0..np {
        for b in 0..a {
            jtj[a * np + b] = jtj[b * np + a];
        }
    }
    let cov = invert(&mut jtj.clone(), np).ok_or(FitError::SingularJacobian)?;
    let stderr = (0..np).map(|a| cov[a * np + a].max(0.0).sqrt()).collect();
    let dof = (n_resid.saturating_sub(np)).max(1) as f64;
    Ok(FitResult {
        params: p,
        stderr,
        covariance: cov,
        chi2,
        reduced_chi2: chi2 / dof,
        iterations,
        n_points: n_resid,
    })
}

fn jacobian<F>(
    residuals: &F,
    p: &[f64],
    r0: &[f64],
    jac: &mut [f64],
    n_resid: usize,
) -> Result<(), FitError>
where
    F: Fn(&[f64], &mut [f64]) -> Result<(), String>,
{
    let np = p.len();
    let mut rp = vec![0.0; n_resid];
    let mut rm = vec![0.0; n_resid];
    let mut pw = p.to_vec();
    for a in 0..np {
        let h = 1e-6 * p[a].abs().max(1e-8);
        pw[a] = p[a] + h;
        let fwd = residuals(&pw, &mut rp);
        pw[a] = p[a] - h;
        let bwd = residuals(&pw, &mut rm);
        pw[a] = p[a];
        match (fwd, bwd) {
            (Ok(()), Ok(())) => {
                for i in 0..n_resid {
                    jac[i * np + a] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            // One-sided fallback when the symmetric probe leaves the domain.
            (Ok(()), Err(_)) => {
                for i in 0..n_resid {
                    jac[i * np + a] = (rp[i] - r0[i]) / h;
                }
            }
            (Err(_), Ok(())) => {
                for i in 0..n_resid {
                    jac[i * np + a] = (r0[i] - rm[i]) / h;
                }
            }
            (Err(e), Err(_)) => return Err(FitError::Eval(e)),
        }
    }
    Ok(())
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Gaussian elimination with partial pivoting; returns None when singular.
fn solve(a: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[piv * n + col].abs() {
                piv = row;
            }
        }
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for k in col + 1..n {
            s -= a[col * n + k] * x[k];
        }
        x[col] = s / a[col * n + col];
    }
    Some(x)
}

/// Matrix inverse by solving against unit vectors.
fn invert(a: &mut [f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = solve(&mut a.to_vec(), &e, n)?;
        for row in 0..n {
            inv[row * n + col] = x[row];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(x: f64, p: &[f64]) -> f64 {
        p[0] * (-(x - p[1]).powi(2) / (2.0 * p[2] * p[2])).exp()
    }

    #[test]
    fn recovers_noiseless_gaussian() {
        let truth = [4.0, 1.5, 0.7];
        let xs: Vec<f64> = (0..41).map(|i| -2.0 + 0.2 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| gaussian(x, &truth)).collect();
        let res = levenberg_marquardt(
            |p, r| {
                for (i, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
                    r[i] = y - gaussian(x, p);
                }
                Ok(())
            },
            xs.len(),
            &[3.0, 1.0, 1.0],
            &FitOptions::default(),
        )
        .unwrap();
        for (got, want) in res.params.iter().zip(&truth) {
            assert!((got - want).abs() < 1e-8, "got {got} want {want}");
        }
        assert!(res.chi2 < 1e-16);
    }

    #[test]
    fn weighted_line_matches_closed_form() {
        // y = a + b x with per-point sigma; compare against analytic WLS.
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [1.1, 2.9, 5.2, 6.8, 9.1];
        let sg = [0.3, 0.2, 0.5, 0.2, 0.4];
        let res = levenberg_marquardt(
            |p, r| {
                for i in 0..xs.len() {
                    r[i] = (ys[i] - (p[0] + p[1] * xs[i])) / sg[i];
                }
                Ok(())
            },
            xs.len(),
            &[0.0, 1.0],
            &FitOptions::default(),
        )
        .unwrap();
        // analytic weighted least squares
        let w: Vec<f64> = sg.iter().map(|s| 1.0 / (s * s)).collect();
        let sw: f64 = w.iter().sum();
        let swx: f64 = w.iter().zip(&xs).map(|(w, x)| w * x).sum();
        let swy: f64 = w.iter().zip(&ys).map(|(w, y)| w * y).sum();
        let swxx: f64 = w.iter().zip(&xs).map(|(w, x)| w * x * x).sum();
        let swxy: f64 = w
            .iter()
            .zip(xs.iter().zip(&ys))
            .map(|(w, (x, y))| w * x * y)
            .sum();
        let det = sw * swxx - swx * swx;
        let a = (swxx * swy - swx * swxy) / det;
        let b = (sw * swxy - swx * swy) / det;
        assert!((res.params[0] - a).abs() < 1e-9);
        assert!((res.params[1] - b).abs() < 1e-9);
        // covariance diagonal from the analytic inverse
        let va = swxx / det;
        let vb = sw / det;
        assert!((res.stderr[0] - va.sqrt()).abs() < 1e-8);
        assert!((res.stderr[1] - vb.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn singular_problem_reports_error() {
        // two perfectly degenerate parameters (only their sum matters)
        let xs = [0.0, 1.0, 2.0, 3.0];
        let err = levenberg_marquardt(
            |p, r| {
                for (i, &x) in xs.iter().enumerate() {
                    r[i] = 1.0 + x - (p[0] + p[1]) * x;
                }
                Ok(())
            },
            xs.len(),
            &[0.5, 0.5],
            &FitOptions::default(),
        );
        assert!(matches!(
            err,
            Err(FitError::SingularJacobian) | Err(FitError::NoConvergence { .. })
        ));
    }
}
