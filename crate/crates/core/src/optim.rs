//! Unconstrained minimizers for the ARMA likelihood fits: quasi-Newton
//! (BFGS with finite-difference gradients) and Nelder–Mead with
//! dimension-adaptive coefficients.

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_evals: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            ftol: 1e-10,
            xtol: 1e-7,
            initial_step: 0.25,
        }
    }
}

impl NelderMead {
    /// Minimizes `f` from `x0`. Non-finite values count as +∞.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> Minimum {
        let d = x0.len();
        let mut evals = 0;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };
        if d == 0 {
            let v = eval(x0, &mut evals);
            return Minimum {
                x: Vec::new(),
                f: v,
                evals,
                converged: true,
            };
        }
        let df = d as f64;
        let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / df, 0.75 - 1.0 / (2.0 * df), 1.0 - 1.0 / df);

        let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
        for i in 0..d {
            let mut v = x0.to_vec();
            v[i] += if v[i].abs() > 1e-8 { self.initial_step * v[i].abs().max(1.0) } else { self.initial_step };
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();
        let mut converged = false;

        while evals < self.max_evals {
            let mut idx: Vec<usize> = (0..=d).collect();
            idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
            values = idx.iter().map(|&i| values[i]).collect();

            let (best, worst) = (values[0], values[d]);
            let spread = (worst - best).abs();
            let size = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if best.is_finite() && spread <= self.ftol * (best.abs() + self.ftol) && size <= self.xtol {
                converged = true;
                break;
            }

            let centroid: Vec<f64> = (0..d)
                .map(|j| simplex[..d].iter().map(|v| v[j]).sum::<f64>() / df)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[d])
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let xr = along(alpha);
            let fr = eval(&xr, &mut evals);
            if fr < values[0] {
                let xe = along(gamma);
                let fe = eval(&xe, &mut evals);
                if fe < fr {
                    simplex[d] = xe;
                    values[d] = fe;
                } else {
                    simplex[d] = xr;
                    values[d] = fr;
                }
                continue;
            }
            if fr < values[d - 1] {
                simplex[d] = xr;
                values[d] = fr;
                continue;
            }
            let (xc, fc) = if fr < values[d] {
                let xc = along(alpha * rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < fr.min(values[d]) {
                simplex[d] = xc;
                values[d] = fc;
                continue;
            }
            // Shrink toward the best vertex.
            for i in 1..=d {
                let v: Vec<f64> = simplex[0]
                    .iter()
                    .zip(&simplex[i])
                    .map(|(b, x)| b + sigma * (x - b))
                    .collect();
                values[i] = eval(&v, &mut evals);
                simplex[i] = v;
            }
        }
        let best = (0..=d).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
        Minimum {
            x: simplex[best].clone(),
            f: values[best],
            evals,
            converged,
        }
    }

    /// Runs from `x0`, then restarts from the optimum until it stops improving.
    pub fn minimize_restarting<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64], restarts: usize) -> Minimum {
        let mut best = self.minimize(&mut f, x0);
        for _ in 0..restarts {
            let again = self.minimize(&mut f, &best.x.clone());
            let improved = again.f < best.f - self.ftol * (best.f.abs() + 1.0);
            let evals = best.evals + again.evals;
            if again.f <= best.f {
                best = Minimum { evals, ..again };
            } else {
                best.evals = evals;
            }
            if !improved {
                break;
            }
        }
        best
    }
}

/// BFGS with forward-difference gradients and a backtracking Armijo search.
#[derive(Debug, Clone, Copy)]
pub struct Bfgs {
    pub max_iter: usize,
    /// Converged when the gradient max-norm drops below this.
    pub gtol: f64,
    /// Or when an iteration improves `f` by less than `ftol·(|f| + 1)`.
    pub ftol: f64,
    pub step: f64,
}

impl Default for Bfgs {
    fn default() -> Self {
        Self {
            max_iter: 200,
            gtol: 1e-5,
            ftol: 1e-12,
            step: 1e-6,
        }
    }
}

impl Bfgs {
    fn gradient<F: FnMut(&[f64]) -> f64>(&self, f: &mut F, x: &[f64], fx: f64, evals: &mut usize) -> Option<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        let mut xh = x.to_vec();
        for i in 0..x.len() {
            let h = self.step * (1.0 + x[i].abs());
            xh[i] = x[i] + h;
            let mut fh = f(&xh);
            *evals += 1;
            let mut hh = h;
            if !fh.is_finite() {
                xh[i] = x[i] - h;
                fh = f(&xh);
                *evals += 1;
                hh = -h;
            }
            xh[i] = x[i];
            if !fh.is_finite() {
                return None;
            }
            g[i] = (fh - fx) / hh;
        }
        Some(g)
    }

    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> Minimum {
        let d = x0.len();
        let mut evals = 1;
        let mut x = x0.to_vec();
        let mut fx = f(&x);
        let fail = |x: Vec<f64>, fx: f64, evals| Minimum {
            x,
            f: if fx.is_finite() { fx } else { f64::INFINITY },
            evals,
            converged: false,
        };
        if !fx.is_finite() {
            return fail(x, fx, evals);
        }
        if d == 0 {
            return Minimum { x, f: fx, evals, converged: true };
        }
        let Some(mut g) = self.gradient(&mut f, &x, fx, &mut evals) else {
            return fail(x, fx, evals);
        };
        // Inverse Hessian approximation, row-major.
        let mut h = vec![0.0; d * d];
        for i in 0..d {
            h[i * d + i] = 1.0;
        }
        let mut converged = false;
        let mut fresh = true;
        for _ in 0..self.max_iter {
            if g.iter().fold(0.0_f64, |m, v| m.max(v.abs())) < self.gtol {
                converged = true;
                break;
            }
            let mut dir: Vec<f64> = (0..d).map(|i| -(0..d).map(|j| h[i * d + j] * g[j]).sum::<f64>()).collect();
            let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = if i == j { 1.0 } else { 0.0 };
                    }
                }
                dir = g.iter().map(|v| -v).collect();
                slope = -g.iter().map(|v| v * v).sum::<f64>();
                fresh = true;
            }
            // Keep the first step of a fresh search from leaping far away.
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut t = if fresh && norm > 1.0 { 1.0 / norm } else { 1.0 };
            let mut accepted = None;
            for _ in 0..40 {
                let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                let fnew = f(&xn);
                evals += 1;
                if fnew.is_finite() && fnew <= fx + 1e-4 * t * slope {
                    accepted = Some((xn, fnew));
                    break;
                }
                t *= 0.5;
            }
            let Some((xn, fnew)) = accepted else {
                if fresh {
                    converged = true;
                    break;
                }
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = if i == j { 1.0 } else { 0.0 };
                    }
                }
                fresh = true;
                continue;
            };
            let Some(gn) = self.gradient(&mut f, &xn, fnew, &mut evals) else {
                x = xn;
                fx = fnew;
                break;
            };
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
            let small = fx - fnew < self.ftol * (fx.abs() + 1.0);
            x = xn;
            fx = fnew;
            g = gn;
            fresh = false;
            if sy > 1e-12 {
                let hy: Vec<f64> = (0..d).map(|i| (0..d).map(|j| h[i * d + j] * yv[j]).sum()).collect();
                let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                    }
                }
            }
            if small {
                converged = true;
                break;
            }
        }
        Minimum { x, f: fx, evals, converged }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let nm = NelderMead {
            max_evals: 20_000,
            ..Default::default()
        };
        let m = nm.minimize_restarting(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            3,
        );
        assert!((m.x[0] - 1.0).abs() < 1e-4, "{:?}", m);
        assert!((m.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn bfgs_rosenbrock() {
        let m = Bfgs::default().minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!((m.x[0] - 1.0).abs() < 1e-3, "{:?}", m);
        assert!((m.x[1] - 1.0).abs() < 2e-3);
    }

    #[test]
    fn quadratic_in_six_dims() {
        let m = NelderMead::default().minimize_restarting(
            |x| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.1 * i as f64).powi(2)).sum(),
            &[0.0; 6],
            2,
        );
        for (i, v) in m.x.iter().enumerate() {
            assert!((v - 0.1 * i as f64).abs() < 1e-4);
        }
    }
}
