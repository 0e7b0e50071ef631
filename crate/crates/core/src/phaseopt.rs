//! Unit-modulus phase optimisation for one band.
//!
//! With the beamformers fixed, the IRS phases of band `s` are chosen to
//! maximise the weighted combined channel gain
//!
//! ```text
//! sum_k |h_{r,k}^H diag(theta) G w_k + h_{d,k}^H w_k|^2 / (gamma_k sigma_k^2)
//! ```
//!
//! Writing `v = conj(theta)`, `d_k = diag(h_{r,k}^H) G w_k` and
//! `beta_k = h_{d,k}^H w_k`, the gain is the quadratic
//! `v^H D v + 2 Re(v^H b) + c` over the product of unit circles, which is
//! minimised in negated form by Riemannian conjugate gradient.

use crate::linalg::{normalize_entries, re_inner, unit_vector};
use crate::{CMat, CVec, Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPhaseObjective {
    /// Hermitian positive semidefinite, `M x M`.
    pub d: CMat,
    pub b: CVec,
    pub constant: f64,
}

impl QuadraticPhaseObjective {
    pub fn new(d: CMat, b: CVec, constant: f64) -> Result<Self> {
        if !d.is_square() || d.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "D is {}x{} but b has {} entries",
                d.nrows(),
                d.ncols(),
                b.len()
            )));
        }
        Ok(Self { d, b, constant })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Weighted gain `v^H D v + 2 Re(v^H b) + c`.
    pub fn gain(&self, v: &CVec) -> f64 {
        v.dotc(&(&self.d * v)).re + 2.0 * re_inner(v, &self.b) + self.constant
    }

    /// Minimised cost `-v^H D v - 2 Re(v^H b)`.
    pub fn cost(&self, v: &CVec) -> f64 {
        -(v.dotc(&(&self.d * v)).re + 2.0 * re_inner(v, &self.b))
    }

    pub fn hermitian_error(&self) -> f64 {
        (&self.d - self.d.adjoint()).norm()
    }
}

/// A vector of unit-modulus reflection coefficients (`v = conj(theta)`).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(CVec);

impl PhaseVector {
    /// Accepts `v` if every entry has modulus one within `1e-9`, then
    /// renormalises it exactly.
    pub fn new(v: CVec) -> Result<Self> {
        let err = crate::linalg::modulus_error(&v);
        if err > 1e-9 {
            return Err(Error::Domain(format!("phase vector off the unit circle by {err:e}")));
        }
        Ok(Self(normalize_entries(&v)))
    }

    /// Builds `v` from IRS phases `theta` (so `v_m = e^{-j theta_m}`).
    pub fn from_irs_phases(theta: &[f64]) -> Self {
        Self(unit_vector(theta).conjugate())
    }

    /// IRS phases `theta_m = -arg(v_m)`, wrapped to `[0, 2pi)`.
    pub fn irs_phases(&self) -> Vec<f64> {
        self.0.iter().map(|z| crate::circuit::wrap_phase(-z.arg())).collect()
    }

    pub fn as_vec(&self) -> &CVec {
        &self.0
    }

    pub fn into_inner(self) -> CVec {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Collects `D`, `b` and the constant of the weighted gain for one band.
pub fn build_objective(
    h_r: &[CVec],
    g: &CMat,
    h_d: &[CVec],
    w: &CMat,
    targets: &[f64],
    noise: &[f64],
) -> Result<QuadraticPhaseObjective> {
    let m = g.nrows();
    let k = h_r.len();
    if h_d.len() != k || w.ncols() != k || targets.len() != k || noise.len() != k {
        return Err(Error::Dimension(format!(
            "{k} users: h_d {}, W cols {}, targets {}, noise {}",
            h_d.len(),
            w.ncols(),
            targets.len(),
            noise.len()
        )));
    }
    if w.nrows() != g.ncols() || h_r.iter().any(|h| h.len() != m) || h_d.iter().any(|h| h.len() != g.ncols()) {
        return Err(Error::Dimension("channel / beamformer sizes disagree".into()));
    }
    let mut d_mat = CMat::zeros(m, m);
    let mut b = CVec::zeros(m);
    let mut constant = 0.0;
    for user in 0..k {
        let omega = 1.0 / (targets[user] * noise[user]);
        let wk = w.column(user);
        let gw = g * wk;
        let d = CVec::from_iterator(m, h_r[user].iter().zip(gw.iter()).map(|(h, x)| h.conj() * x));
        let beta = h_d[user].dotc(&wk);
        d_mat.gerc(C64::new(omega, 0.0), &d, &d, C64::new(1.0, 0.0));
        b += &d * (beta.conj() * omega);
        constant += omega * beta.norm_sqr();
    }
    QuadraticPhaseObjective::new(d_mat, b, constant)
}

/// Conjugate-convention Euclidean gradient of the cost: `-2 (D v + b)`.
pub fn euclidean_gradient(obj: &QuadraticPhaseObjective, v: &CVec) -> CVec {
    (&obj.d * v + &obj.b) * C64::new(-2.0, 0.0)
}

/// Projection onto the tangent space of the torus at `v`:
/// `z - Re(z .* conj(v)) .* v`.
pub fn project_tangent(v: &CVec, z: &CVec) -> CVec {
    CVec::from_iterator(
        v.len(),
        v.iter().zip(z.iter()).map(|(vm, zm)| zm - vm * (zm * vm.conj()).re),
    )
}

pub fn riemannian_gradient(obj: &QuadraticPhaseObjective, v: &CVec) -> CVec {
    project_tangent(v, &euclidean_gradient(obj, v))
}

/// Element-wise normalisation retraction.
pub fn retract(v: &CVec, xi: &CVec, step: f64) -> CVec {
    normalize_entries(&(v + xi * C64::new(step, 0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, armijo_c1: 1e-4, backtrack: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseResult {
    pub phases: PhaseVector,
    /// Cost after every accepted iterate, starting with the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

impl PhaseResult {
    pub fn cost(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial cost")
    }
}

/// Riemannian conjugate gradient (Polak-Ribiere+, Armijo backtracking) on the
/// product of unit circles.
///
/// Stops when an accepted step lowers the cost by less than `tol` relative
/// and the Riemannian gradient norm is at most `10 tol (1 + |f|)`, or when
/// the gradient alone drops below `tol (1 + |f|)`.
pub fn optimize_phases(
    obj: &QuadraticPhaseObjective,
    start: &PhaseVector,
    opts: &PhaseOptions,
) -> Result<PhaseResult> {
    if start.len() != obj.dim() {
        return Err(Error::Dimension(format!(
            "start has {} entries, objective {}",
            start.len(),
            obj.dim()
        )));
    }
    let d_norm = obj.d.norm();
    let b_norm = obj.b.norm();
    let step0 = if d_norm > 0.0 {
        1.0 / d_norm
    } else if b_norm > 0.0 {
        1.0 / b_norm
    } else {
        1.0
    };

    let mut v = start.as_vec().clone();
    let mut f = obj.cost(&v);
    let mut grad = riemannian_gradient(obj, &v);
    let mut dir = -grad.clone();
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;

    let stationary = |g: &CVec, f: f64, factor: f64| g.norm() <= factor * opts.tol * (1.0 + f.abs());

    if stationary(&grad, f, 1.0) {
        converged = true;
    }
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut slope = re_inner(&grad, &dir);
        if slope >= 0.0 {
            dir = -grad.clone();
            slope = -grad.norm_squared();
        }
        let mut step = step0;
        let mut accepted = None;
        for _ in 0..80 {
            let trial = retract(&v, &dir, step);
            let f_trial = obj.cost(&trial);
            if f_trial <= f + opts.armijo_c1 * step * slope {
                accepted = Some((trial, f_trial));
                break;
            }
            step *= opts.backtrack;
        }
        let Some((v_new, f_new)) = accepted else {
            // No decrease representable at this precision.
            converged = stationary(&grad, f, 10.0);
            break;
        };
        let grad_new = riemannian_gradient(obj, &v_new);
        let moved_grad = project_tangent(&v_new, &grad);
        let moved_dir = project_tangent(&v_new, &dir);
        let denom = grad.norm_squared();
        let beta = if denom > 0.0 {
            (re_inner(&grad_new, &(&grad_new - &moved_grad)) / denom).max(0.0)
        } else {
            0.0
        };
        dir = -&grad_new + moved_dir * C64::new(beta, 0.0);

        let decrease = (f - f_new) / f.abs().max(f64::MIN_POSITIVE);
        v = v_new;
        f = f_new;
        grad = grad_new;
        trace.push(f);
        if (decrease < opts.tol && stationary(&grad, f, 10.0)) || stationary(&grad, f, 1.0) {
            converged = true;
        }
    }

    let gradient_norm = grad.norm();
    Ok(PhaseResult { phases: PhaseVector(v), trace, iterations, converged, gradient_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::complex_normal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_objective(rng: &mut ChaCha8Rng, m: usize, k: usize) -> QuadraticPhaseObjective {
        let mut d = CMat::zeros(m, m);
        let mut b = CVec::zeros(m);
        for _ in 0..k {
            let x = CVec::from_iterator(m, (0..m).map(|_| complex_normal(rng)));
            d.gerc(c(1.0, 0.0), &x, &x, c(1.0, 0.0));
            b += &x * complex_normal(rng);
        }
        QuadraticPhaseObjective::new(d, b, 0.0).unwrap()
    }

    fn random_phase(rng: &mut ChaCha8Rng, m: usize) -> PhaseVector {
        let p: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
        PhaseVector::from_irs_phases(&p)
    }

    #[test]
    fn no_direct_path_gives_zero_linear_term() {
        let h_r = vec![CVec::from_element(2, c(1.0, 0.5))];
        let g = CMat::from_element(2, 3, c(0.3, -0.2));
        let h_d = vec![CVec::zeros(3)];
        let w = CMat::from_element(3, 1, c(1.0, 0.0));
        let obj = build_objective(&h_r, &g, &h_d, &w, &[2.0], &[0.5]).unwrap();
        assert_eq!(obj.b, CVec::zeros(2));
        assert_eq!(obj.constant, 0.0);
    }

    #[test]
    fn scalar_objective_identity() {
        let one = CVec::from_element(1, c(1.0, 0.0));
        let g = CMat::from_element(1, 1, c(1.0, 0.0));
        let w = CMat::from_element(1, 1, c(1.0, 0.0));
        let obj = build_objective(&[one.clone()], &g, &[one.clone()], &w, &[1.0], &[1.0]).unwrap();
        assert_eq!(obj.d[(0, 0)], c(1.0, 0.0));
        assert_eq!(obj.b[0], c(1.0, 0.0));
        assert_eq!(obj.constant, 1.0);
        assert!((obj.gain(&one) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn build_objective_checks_dimensions() {
        let v2 = CVec::zeros(2);
        let g = CMat::zeros(2, 3);
        let w = CMat::zeros(3, 1);
        assert!(build_objective(&[v2.clone()], &g, &[v2.clone()], &w, &[1.0], &[1.0]).is_err());
        assert!(build_objective(&[v2], &g, &[CVec::zeros(3)], &w, &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let obj = QuadraticPhaseObjective::new(CMat::zeros(3, 3), CVec::zeros(3), 0.0).unwrap();
        let v = PhaseVector::from_irs_phases(&[0.1, 0.2, 0.3]);
        assert_eq!(euclidean_gradient(&obj, v.as_vec()), CVec::zeros(3));
        let obj = QuadraticPhaseObjective::new(
            CMat::from_element(1, 1, c(1.0, 0.0)),
            CVec::zeros(1),
            0.0,
        )
        .unwrap();
        let g = euclidean_gradient(&obj, &CVec::from_element(1, c(1.0, 0.0)));
        assert_eq!(g[0], c(-2.0, 0.0));
    }

    #[test]
    fn linear_term_only_aligns_with_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = CVec::from_iterator(6, (0..6).map(|_| complex_normal(&mut rng)));
        let obj = QuadraticPhaseObjective::new(CMat::zeros(6, 6), b.clone(), 0.0).unwrap();
        let opts = PhaseOptions { tol: 1e-10, ..Default::default() };
        let res = optimize_phases(&obj, &random_phase(&mut rng, 6), &opts).unwrap();
        let expected = normalize_entries(&b);
        assert!((res.phases.as_vec() - &expected).norm() < 1e-4);
        let best = -2.0 * b.iter().map(|z| z.norm()).sum::<f64>();
        assert!((res.cost() - best).abs() <= 1e-8 * best.abs());
    }

    #[test]
    fn scalar_case_ignores_quadratic_term() {
        let obj = QuadraticPhaseObjective::new(
            CMat::from_element(1, 1, c(5.0, 0.0)),
            CVec::from_element(1, c(-1.0, 2.0)),
            0.0,
        )
        .unwrap();
        let start = PhaseVector::from_irs_phases(&[1.0]);
        let res = optimize_phases(&obj, &start, &PhaseOptions::default()).unwrap();
        let target = c(-1.0, 2.0) / c(-1.0, 2.0).norm();
        assert!((res.phases.as_vec()[0] - target).norm() < 1e-4);
    }

    #[test]
    fn iterates_stay_on_the_torus_and_descend() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let obj = random_objective(&mut rng, 12, 3);
            let res = optimize_phases(&obj, &random_phase(&mut rng, 12), &PhaseOptions::default()).unwrap();
            assert!(crate::linalg::modulus_error(res.phases.as_vec()) <= 1e-12);
            assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
            if res.converged {
                assert!(res.gradient_norm <= 10.0 * 1e-6 * (1.0 + res.cost().abs()));
            }
        }
    }

    #[test]
    fn rejects_wrong_start_length() {
        let obj = QuadraticPhaseObjective::new(CMat::zeros(2, 2), CVec::zeros(2), 0.0).unwrap();
        let start = PhaseVector::from_irs_phases(&[0.0; 3]);
        assert!(optimize_phases(&obj, &start, &PhaseOptions::default()).is_err());
        assert!(PhaseVector::new(CVec::from_element(2, c(0.5, 0.0))).is_err());
    }

    #[test]
    fn phase_vector_roundtrips_irs_phases() {
        let theta = [0.0, 1.0, 6.0];
        let v = PhaseVector::from_irs_phases(&theta);
        for (a, b) in v.irs_phases().iter().zip(&theta) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_shift_keeps_the_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let obj = random_objective(&mut rng, 5, 2);
        let start = random_phase(&mut rng, 5);
        let mut shifted = obj.clone();
        for i in 0..5 {
            shifted.d[(i, i)] += c(3.0, 0.0);
        }
        let v = start.as_vec();
        assert!((shifted.cost(v) - (obj.cost(v) - 3.0 * 5.0)).abs() < 1e-9);
        let opts = PhaseOptions { tol: 1e-10, max_iter: 5000, ..Default::default() };
        let a = optimize_phases(&obj, &start, &opts).unwrap();
        let b = optimize_phases(&shifted, &start, &opts).unwrap();
        // Same stationary point up to optimiser accuracy.
        assert!((a.cost() - (b.cost() + 15.0)).abs() <= 1e-6 * (1.0 + a.cost().abs()));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn gradient_matches_finite_differences(seed in 0u64..100_000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let obj = random_objective(&mut rng, 4, 2);
                let v = random_phase(&mut rng, 4).into_inner();
                let g = euclidean_gradient(&obj, &v);
                let xi = CVec::from_iterator(4, (0..4).map(|_| complex_normal(&mut rng)));
                let h = 1e-6;
                let fd = (obj.cost(&(&v + &xi * c(h, 0.0))) - obj.cost(&(&v - &xi * c(h, 0.0)))) / (2.0 * h);
                let analytic = re_inner(&g, &xi);
                prop_assert!((fd - analytic).abs() <= 1e-5 * (1.0 + analytic.abs()));
            }

            #[test]
            fn tangent_projection_is_tangent(seed in 0u64..100_000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let v = random_phase(&mut rng, 6).into_inner();
                let z = CVec::from_iterator(6, (0..6).map(|_| complex_normal(&mut rng)));
                let t = project_tangent(&v, &z);
                for (tm, vm) in t.iter().zip(v.iter()) {
                    prop_assert!((tm * vm.conj()).re.abs() < 1e-12);
                }
                let tt = project_tangent(&v, &t);
                prop_assert!((tt - t).norm() < 1e-12);
            }
        }
    }
}
