//! Dense log-barrier interior-point method for small second-order cone
//! programs, used as an independent reference for the beamforming solver.
//!
//! ```text
//! min  c^T x
//! s.t. || A_i x + b_i || <= f_i^T x + d_i     (each cone i)
//!      E x = 0
//! ```

use mbirs::{CVec, C64};
use nalgebra::{DMatrix, DVector};

/// Radius of the ball bounding phase I.
const PHASE_ONE_RADIUS: f64 = 1e4;

#[derive(Clone)]
pub struct Cone {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub f: DVector<f64>,
    pub d: f64,
}

pub struct Socp {
    pub c: DVector<f64>,
    pub cones: Vec<Cone>,
    pub eq: DMatrix<f64>,
}

pub enum SocpOutcome {
    Optimal { x: DVector<f64>, value: f64 },
    Infeasible,
}

/// Per-cone slack `(s, u, q)` with `s = f^T x + d`, `u = A x + b`,
/// `q = s^2 - ||u||^2`.
fn cone_terms(cone: &Cone, x: &DVector<f64>, shift: f64) -> (f64, DVector<f64>, f64) {
    let s = cone.f.dot(x) + cone.d + shift;
    let u = &cone.a * x + &cone.b;
    let q = s * s - u.norm_squared();
    (s, u, q)
}

struct Problem<'a> {
    c: DVector<f64>,
    cones: &'a [Cone],
    eq: &'a DMatrix<f64>,
    /// Index of a phase-I slack variable added to every cone right-hand side.
    slack: Option<usize>,
}

impl Problem<'_> {
    fn shift(&self, x: &DVector<f64>) -> f64 {
        self.slack.map_or(0.0, |i| x[i])
    }

    fn cone_f(&self, cone: &Cone, n: usize) -> DVector<f64> {
        let mut f = DVector::zeros(n);
        f.rows_mut(0, cone.f.len()).copy_from(&cone.f);
        if let Some(i) = self.slack {
            f[i] += 1.0;
        }
        f
    }

    fn cone_a(&self, cone: &Cone, n: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(cone.a.nrows(), n);
        a.columns_mut(0, cone.a.ncols()).copy_from(&cone.a);
        a
    }

    fn inside(&self, x: &DVector<f64>) -> bool {
        let base = x.rows(0, self.cones[0].f.len()).into_owned();
        let shift = self.shift(x);
        self.cones.iter().all(|cone| {
            let (s, _, q) = cone_terms(cone, &base, shift);
            s > 0.0 && q > 0.0
        })
    }

    fn value(&self, x: &DVector<f64>, tau: f64) -> f64 {
        let base = x.rows(0, self.cones[0].f.len()).into_owned();
        let shift = self.shift(x);
        let barrier: f64 = self
            .cones
            .iter()
            .map(|cone| -cone_terms(cone, &base, shift).2.ln())
            .sum();
        tau * self.c.dot(x) + barrier
    }

    fn derivatives(&self, x: &DVector<f64>, tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let base = x.rows(0, self.cones[0].f.len()).into_owned();
        let shift = self.shift(x);
        let mut grad = &self.c * tau;
        let mut hess = DMatrix::zeros(n, n);
        for cone in self.cones {
            let (s, u, q) = cone_terms(cone, &base, shift);
            let f = self.cone_f(cone, n);
            let a = self.cone_a(cone, n);
            let at_u = a.transpose() * &u;
            let grad_q = &f * (2.0 * s) - &at_u * 2.0;
            let hess_q = &f * f.transpose() * 2.0 - a.transpose() * &a * 2.0;
            grad -= &grad_q / q;
            hess += &grad_q * grad_q.transpose() / (q * q) - hess_q / q;
        }
        (grad, hess)
    }

    /// Centering by equality-constrained Newton with backtracking.
    fn center(&self, x: &mut DVector<f64>, tau: f64, stop: impl Fn(&DVector<f64>) -> bool) -> bool {
        let n = x.len();
        let p = self.eq.nrows();
        for _ in 0..200 {
            let (grad, hess) = self.derivatives(x, tau);
            let mut kkt = DMatrix::zeros(n + p, n + p);
            kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
            let mut eq = DMatrix::zeros(p, n);
            eq.columns_mut(0, self.eq.ncols()).copy_from(self.eq);
            kkt.view_mut((n, 0), (p, n)).copy_from(&eq);
            kkt.view_mut((0, n), (n, p)).copy_from(&eq.transpose());
            let mut rhs = DVector::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(&(-&grad));
            let Some(sol) = kkt.lu().solve(&rhs) else { return false };
            let dx = sol.rows(0, n).into_owned();
            let decrement = dx.dot(&(&hess * &dx));
            if decrement / 2.0 <= 1e-12 {
                return true;
            }
            let f0 = self.value(x, tau);
            let slope = grad.dot(&dx);
            let mut step = 1.0;
            loop {
                let trial = &*x + &dx * step;
                if self.inside(&trial) && self.value(&trial, tau) <= f0 + 0.01 * step * slope {
                    *x = trial;
                    break;
                }
                step *= 0.5;
                if step < 1e-14 {
                    return true;
                }
            }
            if stop(x) {
                return true;
            }
        }
        true
    }
}

impl Socp {
    pub fn solve(&self) -> SocpOutcome {
        let n = self.c.len();
        let nu = 2.0 * self.cones.len() as f64;

        // Phase I: minimise a common slack s until the cones hold strictly.
        let mut x = DVector::zeros(n + 1);
        let start = self
            .cones
            .iter()
            .map(|cone| cone.b.norm() - cone.d)
            .fold(f64::NEG_INFINITY, f64::max);
        x[n] = start.max(0.0) + 1.0;
        let mut phase_one_cones = self.cones.clone();
        // Keeps the phase-I problem bounded: s >= -1.
        phase_one_cones.push(Cone {
            a: DMatrix::zeros(1, n),
            b: DVector::zeros(1),
            f: DVector::zeros(n),
            d: 1.0,
        });
        // The homogeneous cones admit a recession direction; a norm ball keeps
        // the phase-I centering problems bounded.
        phase_one_cones.push(Cone {
            a: DMatrix::identity(n, n),
            b: DVector::zeros(n),
            f: DVector::zeros(n),
            d: PHASE_ONE_RADIUS,
        });
        let mut c1 = DVector::zeros(n + 1);
        c1[n] = 1.0;
        let phase_one = Problem { c: c1, cones: &phase_one_cones, eq: &self.eq, slack: Some(n) };
        let mut tau = 1.0;
        let mut feasible = x[n] < 0.0;
        for _ in 0..60 {
            if feasible {
                break;
            }
            phase_one.center(&mut x, tau, |x| x[n] < -1e-9);
            feasible = x[n] < -1e-9;
            if !feasible && (nu + 2.0) / tau < 1e-10 {
                break;
            }
            tau *= 10.0;
        }
        if !feasible {
            return SocpOutcome::Infeasible;
        }

        let mut x = x.rows(0, n).into_owned();
        let problem = Problem { c: self.c.clone(), cones: &self.cones, eq: &self.eq, slack: None };
        let mut tau = 1.0 / (1.0 + self.c.dot(&x).abs());
        loop {
            problem.center(&mut x, tau, |_| false);
            let value = self.c.dot(&x);
            if nu / tau <= 1e-11 * (1.0 + value.abs()) {
                return SocpOutcome::Optimal { x, value };
            }
            tau *= 8.0;
        }
    }
}

/// Minimum total power of the SINR-constrained downlink via its second-order
/// cone form (objective `min t` with `||w|| <= t`). `None` when infeasible.
pub fn min_power_socp(channels: &[CVec], targets: &[f64], noise: &[f64]) -> Option<f64> {
    let k = channels.len();
    let nt = channels[0].len();
    let nw = 2 * nt * k;
    let n = nw + 1;
    // Column layout: w_j occupies [2 nt j, 2 nt (j + 1)), re then im.
    let re_im_rows = |h: &CVec, j: usize| -> (DVector<f64>, DVector<f64>) {
        // h^H w_j = sum conj(h_i) w_ji
        let mut re = DVector::zeros(n);
        let mut im = DVector::zeros(n);
        for i in 0..nt {
            let hc: C64 = h[i].conj();
            let col_re = 2 * nt * j + i;
            let col_im = 2 * nt * j + nt + i;
            re[col_re] = hc.re;
            re[col_im] = -hc.im;
            im[col_re] = hc.im;
            im[col_im] = hc.re;
        }
        (re, im)
    };

    let mut cones = Vec::new();
    let mut a0 = DMatrix::zeros(nw, n);
    for i in 0..nw {
        a0[(i, i)] = 1.0;
    }
    let mut f0 = DVector::zeros(n);
    f0[nw] = 1.0;
    cones.push(Cone { a: a0, b: DVector::zeros(nw), f: f0, d: 0.0 });

    let mut eq = DMatrix::zeros(k, n);
    for (kk, h) in channels.iter().enumerate() {
        let mut a = DMatrix::zeros(2 * k + 1, n);
        for j in 0..k {
            let (re, im) = re_im_rows(h, j);
            a.row_mut(2 * j).copy_from(&re.transpose());
            a.row_mut(2 * j + 1).copy_from(&im.transpose());
        }
        let mut b = DVector::zeros(2 * k + 1);
        b[2 * k] = noise[kk].sqrt();
        let (re, im) = re_im_rows(h, kk);
        // SINR >= gamma  <=>  sqrt(1 + 1/gamma) h^H w_k >= ||[h^H W, sigma]||
        let f = re * (1.0 + 1.0 / targets[kk]).sqrt();
        cones.push(Cone { a, b, f, d: 0.0 });
        eq.row_mut(kk).copy_from(&im.transpose());
    }
    let mut c = DVector::zeros(n);
    c[nw] = 1.0;
    match (Socp { c, cones, eq }).solve() {
        SocpOutcome::Optimal { value, .. } => Some(value * value),
        SocpOutcome::Infeasible => None,
    }
}
