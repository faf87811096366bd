//! Dense convex QP solver (primal-dual interior point, Mehrotra
//! predictor-corrector).
//!
//! Solves `min 1/2 x'Hx + c'x  s.t.  Ex = d,  Gx <= g`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub e: DMatrix<f64>,
    pub d: DVector<f64>,
    pub g: DMatrix<f64>,
    pub gv: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    /// No point satisfying the constraints was found within the budget.
    Infeasible,
    /// The reduced Newton system could not be factored.
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: DVector<f64>,
    /// Equality multipliers.
    pub y: DVector<f64>,
    /// Inequality multipliers.
    pub z: DVector<f64>,
    pub iterations: usize,
    pub objective: f64,
}

const POLISH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { max_iterations: 60, tolerance: 1e-10 }
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(1.0, f64::min)
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        Self { h, c, e: DMatrix::zeros(0, n), d: DVector::zeros(0), g: DMatrix::zeros(0, n), gv: DVector::zeros(0) }
    }

    pub fn with_equalities(mut self, e: DMatrix<f64>, d: DVector<f64>) -> Self {
        self.e = e;
        self.d = d;
        self
    }

    pub fn with_inequalities(mut self, g: DMatrix<f64>, gv: DVector<f64>) -> Self {
        self.g = g;
        self.gv = gv;
        self
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.c.dot(x)
    }

    /// Removes the barrier bias of an interior-point solution: treats the
    /// constraints whose multiplier dominates their slack as equalities and
    /// solves the KKT system once. Returns `None` unless the result is primal
    /// and dual feasible.
    fn polish(&self, x: &DVector<f64>, s: &DVector<f64>, z: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let n = self.c.len();
        let p = self.d.len();
        let active: Vec<usize> = (0..z.len()).filter(|&i| z[i] > s[i]).collect();
        let a = active.len();
        let dim = n + p + a;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.h);
        kkt.view_mut((n, 0), (p, n)).copy_from(&self.e);
        kkt.view_mut((0, n), (n, p)).copy_from(&self.e.transpose());
        rhs.rows_mut(0, n).copy_from(&(-&self.c));
        rhs.rows_mut(n, p).copy_from(&self.d);
        for (r, &i) in active.iter().enumerate() {
            for col in 0..n {
                kkt[(n + p + r, col)] = self.g[(i, col)];
                kkt[(col, n + p + r)] = self.g[(i, col)];
            }
            rhs[n + p + r] = self.gv[i];
        }
        let sol = kkt.clone().lu().solve(&rhs)?;
        let scale = 1.0 + x.amax();
        let xp = sol.rows(0, n).into_owned();
        let residual = (&kkt * &sol - &rhs).amax();
        let primal = (&self.g * &xp - &self.gv).iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let dual_ok = sol.rows(n + p, a).iter().all(|&v| v >= -POLISH_TOL);
        if !(residual <= POLISH_TOL * scale) || primal > POLISH_TOL * scale || !dual_ok {
            return None;
        }
        let yp = sol.rows(n, p).into_owned();
        let mut zp = DVector::zeros(z.len());
        for (r, &i) in active.iter().enumerate() {
            zp[i] = sol[n + p + r].max(0.0);
        }
        Some((xp, yp, zp))
    }

    pub fn solve(&self, settings: &QpSettings) -> QpSolution {
        let n = self.c.len();
        let p = self.d.len();
        let m = self.gv.len();
        let scale = 1.0 + self.c.amax().max(self.h.amax()).max(self.gv.amax()).max(self.d.amax());
        let tol = settings.tolerance * scale;

        let mut x = DVector::zeros(n);
        let mut y = DVector::zeros(p);
        let mut s = DVector::from_iterator(m, (&self.gv - &self.g * &x).iter().map(|&r| r.max(1.0)));
        let mut z = DVector::from_element(m, 1.0);
        let gt = self.g.transpose();
        let et = self.e.transpose();

        let done = |status, x: DVector<f64>, y, z, it| {
            let objective = self.objective(&x);
            QpSolution { status, x, y, z, iterations: it, objective }
        };

        for it in 0..settings.max_iterations {
            let r_d = &self.h * &x + &self.c + &et * &y + &gt * &z;
            let r_e = &self.e * &x - &self.d;
            let r_i = &self.g * &x + &s - &self.gv;
            let mu = if m > 0 { s.dot(&z) / m as f64 } else { 0.0 };
            let res = r_d.amax().max(r_e.amax()).max(r_i.amax());
            if res <= tol && mu <= tol {
                let (x, y, z) = self.polish(&x, &s, &z).unwrap_or((x, y, z));
                return done(QpStatus::Solved, x, y, z, it);
            }
            if !x.iter().all(|v| v.is_finite()) || x.amax() > 1e12 {
                break;
            }

            // Reduced system [H + G'WG, E'; E, 0].
            let w = z.component_div(&s);
            let mut wg = self.g.clone();
            for (mut row, &wi) in wg.row_iter_mut().zip(w.iter()) {
                row *= wi;
            }
            let mut kkt = DMatrix::zeros(n + p, n + p);
            let mut top = kkt.view_mut((0, 0), (n, n));
            top.copy_from(&self.h);
            top += &gt * &wg;
            kkt.view_mut((n, 0), (p, n)).copy_from(&self.e);
            kkt.view_mut((0, n), (n, p)).copy_from(&et);
            // Diagonal regularization.
            for i in 0..n {
                kkt[(i, i)] += 1e-13;
            }
            for i in 0..p {
                kkt[(n + i, n + i)] -= 1e-13;
            }
            let lu = kkt.lu();

            let newton = |r_sz: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
                // dz = (Z r_i - r_sz + Z G dx) / s
                let t = (z.component_mul(&r_i) - r_sz).component_div(&s);
                let mut rhs = DVector::zeros(n + p);
                rhs.rows_mut(0, n).copy_from(&(-&r_d - &gt * &t));
                rhs.rows_mut(n, p).copy_from(&(-&r_e));
                let sol = lu.solve(&rhs)?;
                let dx = sol.rows(0, n).into_owned();
                let dy = sol.rows(n, p).into_owned();
                let dz = &t + w.component_mul(&(&self.g * &dx));
                let ds = -&r_i - &self.g * &dx;
                Some((dx, dy, dz, ds))
            };

            let Some((_, _, dz_aff, ds_aff)) = newton(&s.component_mul(&z)) else {
                return done(QpStatus::NumericalFailure, x, y, z, it);
            };
            let a_aff = max_step(&s, &ds_aff).min(max_step(&z, &dz_aff));
            let sigma = if m > 0 {
                let mu_aff = (&s + &ds_aff * a_aff).dot(&(&z + &dz_aff * a_aff)) / m as f64;
                (mu_aff / mu).powi(3).min(1.0)
            } else {
                0.0
            };
            let r_sz = s.component_mul(&z) + ds_aff.component_mul(&dz_aff) - DVector::from_element(m, sigma * mu);
            let Some((dx, dy, dz, ds)) = newton(&r_sz) else {
                return done(QpStatus::NumericalFailure, x, y, z, it);
            };
            let alpha = (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
            x += &dx * alpha;
            y += &dy * alpha;
            z += &dz * alpha;
            s += &ds * alpha;
        }
        let it = settings.max_iterations;
        log::trace!(
            "qp budget exhausted: primal {:.3e} eq {:.3e} dual {:.3e} mu {:.3e}",
            (&self.g * &x + &s - &self.gv).amax(),
            (&self.e * &x - &self.d).amax(),
            (&self.h * &x + &self.c + self.e.transpose() * &y + self.g.transpose() * &z).amax(),
            if m > 0 { s.dot(&z) / m as f64 } else { 0.0 }
        );
        done(QpStatus::Infeasible, x, y, z, it)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_quadratic() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let c = DVector::from_vec(vec![-2.0, -4.0]);
        let sol = QpProblem::new(h, c).solve(&QpSettings::default());
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && (sol.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn active_bound_and_equality() {
        // min (x-2)^2 + (y-2)^2  s.t. x + y = 1, x <= 0.2
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let c = DVector::from_vec(vec![-4.0, -4.0]);
        let sol = QpProblem::new(h, c)
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]))
            .with_inequalities(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DVector::from_vec(vec![0.2]))
            .solve(&QpSettings::default());
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.x[0] - 0.2).abs() < 1e-8, "{}", sol.x);
        assert!((sol.x[1] - 0.8).abs() < 1e-8);
        assert!(sol.z[0] > 0.0);
    }

    #[test]
    fn detects_infeasibility() {
        // x <= -1 and -x <= -1
        let sol = QpProblem::new(DMatrix::identity(1, 1), DVector::zeros(1))
            .with_inequalities(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), DVector::from_vec(vec![-1.0, -1.0]))
            .solve(&QpSettings::default());
        assert_eq!(sol.status, QpStatus::Infeasible);
    }
}
