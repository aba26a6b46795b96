//! Small dense Levenberg-Marquardt least-squares fitter with a
//! finite-difference Jacobian. Problem sizes here are a handful of
//! parameters against at most a few thousand residuals, so everything is
//! plain dense algebra.

use super::AnalysisError;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct Fit {
    pub params: Vec<f64>,
    /// Root of the final cost: sqrt(sum of squared residuals).
    pub residual_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative tolerance on the cost decrease and the step size.
    pub tol: f64,
    pub lambda0: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-12, lambda0: 1e-3 }
    }
}

fn eval<F: Fn(&[f64], &mut [f64])>(f: &F, p: &[f64], n: usize) -> Result<DVector<f64>, AnalysisError> {
    let mut r = vec![0.0; n];
    f(p, &mut r);
    if r.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::InvalidInput { reason: "non-finite residual".into() });
    }
    Ok(DVector::from_vec(r))
}

/// Central-difference Jacobian of the residual vector.
fn jacobian<F: Fn(&[f64], &mut [f64])>(
    f: &F,
    p: &[f64],
    n: usize,
) -> Result<DMatrix<f64>, AnalysisError> {
    let m = p.len();
    let mut j = DMatrix::zeros(n, m);
    let mut pw = p.to_vec();
    for k in 0..m {
        let h = 1e-6 * p[k].abs().max(1e-3);
        pw[k] = p[k] + h;
        let rp = eval(f, &pw, n)?;
        pw[k] = p[k] - h;
        let rm = eval(f, &pw, n)?;
        pw[k] = p[k];
        for i in 0..n {
            j[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Minimizes the squared norm of the residual vector filled by
/// `residuals(params, out)`.
pub fn fit_least_squares<F: Fn(&[f64], &mut [f64])>(
    residuals: F,
    n_residuals: usize,
    initial: &[f64],
    opts: &LmOptions,
) -> Result<Fit, AnalysisError> {
    if initial.is_empty() || n_residuals < initial.len() {
        return Err(AnalysisError::InsufficientPoints {
            needed: initial.len(),
            got: n_residuals,
        });
    }
    let mut p = DVector::from_vec(initial.to_vec());
    let mut r = eval(&residuals, p.as_slice(), n_residuals)?;
    let mut cost = r.norm_squared();
    let mut lambda = opts.lambda0;
    for iter in 1..=opts.max_iter {
        let j = jacobian(&residuals, p.as_slice(), n_residuals)?;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                // Marquardt scaling keeps poorly conditioned directions tame.
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &p - &step;
            let rt = eval(&residuals, trial.as_slice(), n_residuals)?;
            let trial_cost = rt.norm_squared();
            if trial_cost < cost {
                let rel_drop = (cost - trial_cost) / cost.max(1e-300);
                let rel_step = step.norm() / (p.norm() + opts.tol);
                p = trial;
                r = rt;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel_drop < opts.tol || rel_step < opts.tol {
                    return Ok(Fit {
                        params: p.as_slice().to_vec(),
                        residual_norm: cost.sqrt(),
                        iterations: iter,
                    });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // Stuck at a (local) minimum of the quadratic model.
            return Ok(Fit {
                params: p.as_slice().to_vec(),
                residual_norm: cost.sqrt(),
                iterations: iter,
            });
        }
    }
    Err(AnalysisError::DidNotConverge { iterations: opts.max_iter })
}

/// Relative deviation between the Jacobian-based cost gradient J^T r and a
/// finite-difference gradient of the cost itself, normalized by
/// ||J||_F ||r|| . Small values certify the Jacobian wiring.
pub fn gradient_check<F: Fn(&[f64], &mut [f64])>(
    residuals: F,
    n_residuals: usize,
    p: &[f64],
) -> Result<f64, AnalysisError> {
    let r = eval(&residuals, p, n_residuals)?;
    let j = jacobian(&residuals, p, n_residuals)?;
    let g = j.transpose() * &r;
    let mut g_fd = DVector::zeros(p.len());
    let mut pw = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-5 * p[k].abs().max(1e-3);
        pw[k] = p[k] + h;
        let cp = eval(&residuals, &pw, n_residuals)?.norm_squared();
        pw[k] = p[k] - h;
        let cm = eval(&residuals, &pw, n_residuals)?.norm_squared();
        pw[k] = p[k];
        g_fd[k] = (cp - cm) / (4.0 * h);
    }
    let scale = j.norm() * r.norm() + 1e-12;
    Ok((g - g_fd).norm() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exp_data() -> Vec<(f64, f64)> {
        (0..40).map(|i| {
            let t = i as f64 * 0.25;
            (t, 3.2 * (-t / 1.32).exp() + 0.05)
        })
        .collect()
    }

    fn exp_residuals(data: &[(f64, f64)]) -> impl Fn(&[f64], &mut [f64]) + '_ {
        move |p, out| {
            for (i, (t, y)) in data.iter().enumerate() {
                out[i] = p[0] * (-t / p[1]).exp() + p[2] - y;
            }
        }
    }

    #[test]
    fn recovers_exponential_parameters() {
        let data = exp_data();
        let fit = fit_least_squares(
            exp_residuals(&data),
            data.len(),
            &[1.0, 0.8, 0.0],
            &LmOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(fit.params[0], 3.2, max_relative = 1e-6);
        assert_relative_eq!(fit.params[1], 1.32, max_relative = 1e-6);
        assert_relative_eq!(fit.params[2], 0.05, max_relative = 1e-5);
        assert!(fit.residual_norm < 1e-7);
    }

    #[test]
    fn recovers_cosine_with_phase_and_visibility() {
        let data: Vec<(f64, f64)> = (0..120)
            .map(|i| {
                let t = i as f64 * 3.0;
                (t, 0.4 * (1.0 + 0.62 * (0.0952 * t + 2.1).cos()))
            })
            .collect();
        let f = |p: &[f64], out: &mut [f64]| {
            for (i, (t, y)) in data.iter().enumerate() {
                out[i] = p[0] * (1.0 + p[1] * (p[2] * t + p[3]).cos()) - y;
            }
        };
        let fit =
            fit_least_squares(f, data.len(), &[0.3, 0.4, 0.09, 1.5], &LmOptions::default())
                .unwrap();
        assert_relative_eq!(fit.params[0], 0.4, max_relative = 1e-5);
        assert_relative_eq!(fit.params[1], 0.62, max_relative = 1e-4);
        assert_relative_eq!(fit.params[2], 0.0952, max_relative = 1e-5);
        assert_relative_eq!(fit.params[3], 2.1, max_relative = 1e-4);
    }

    #[test]
    fn jacobian_gradient_matches_finite_differences() {
        let data = exp_data();
        let rel = gradient_check(exp_residuals(&data), data.len(), &[2.0, 1.0, 0.1]).unwrap();
        assert!(rel < 1e-4, "gradient deviation {rel}");
    }

    #[test]
    fn rejects_underdetermined_and_non_finite_problems() {
        let err = fit_least_squares(|_, _| {}, 1, &[1.0, 2.0], &LmOptions::default());
        assert!(matches!(err, Err(AnalysisError::InsufficientPoints { .. })));
        let err = fit_least_squares(
            |p, out| out[0] = (p[0] - 1.0).ln(),
            1,
            &[0.0],
            &LmOptions::default(),
        );
        assert!(matches!(err, Err(AnalysisError::InvalidInput { .. })));
    }
}
