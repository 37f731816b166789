//! Reference solutions for linear interpolation problems `Xw = y`:
//! the Bregman projection `argmin_{Xw=y} D_ψ(w, w_0)` by dual Newton, and a
//! brute-force search over the null space for small problems.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SmdError};
use crate::linalg::{null_space_basis, rank, Matrix, Vector};
use crate::potentials::Potential;

/// `Xᵀ(XXᵀ)⁻¹y`, the minimum-ℓ2-norm interpolant.
pub fn min_l2_solution(x: &Matrix, y: &Vector) -> Result<Vector> {
    check_dim("labels", x.nrows(), y.len())?;
    if rank(x) < x.nrows() {
        return Err(SmdError::Degenerate(format!("design matrix has rank below {}", x.nrows())));
    }
    let gram = x * x.transpose();
    let chol = gram
        .cholesky()
        .ok_or_else(|| SmdError::Degenerate("X Xᵀ is not positive definite".into()))?;
    Ok(x.transpose() * chol.solve(y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kkt {
    /// `‖Xw − y‖_∞`
    pub primal: f64,
    /// `‖∇ψ(w) − ∇ψ(w_0) − Xᵀλ‖_∞`
    pub stationarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    #[serde(with = "crate::linalg::plain")]
    pub w_star: Vector,
    #[serde(with = "crate::linalg::plain")]
    pub lambda: Vector,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt: Kkt,
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectOptions {
    pub max_iter: usize,
    /// Stop when `‖Xw − y‖_∞ ≤ tol · max(1, ‖y‖_∞)`.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-11,
            max_halvings: 30,
        }
    }
}

struct DualPoint {
    lambda: Vector,
    w: Vector,
    g: Vector,
    /// Dual objective `λᵀy − ψ*(θ_0 + Xᵀλ)`, maximized at the projection.
    objective: f64,
}

fn dual_point(potential: &Potential, x: &Matrix, y: &Vector, theta0: &Vector, lambda: Vector) -> Result<DualPoint> {
    let theta = theta0 + x.transpose() * &lambda;
    let w = potential.inverse_grad(&theta)?;
    let conj = theta.dot(&w) - potential.value(&w)?;
    let objective = lambda.dot(y) - conj;
    if !objective.is_finite() {
        return Err(SmdError::Numeric("dual objective is not finite".into()));
    }
    Ok(DualPoint {
        g: x * &w - y,
        w,
        lambda,
        objective,
    })
}

fn solve_spd(j: &Matrix, rhs: &Vector) -> Result<Vector> {
    if let Some(c) = j.clone().cholesky() {
        return Ok(c.solve(rhs));
    }
    j.clone()
        .svd(true, true)
        .solve(rhs, 1e-14 * j.amax().max(f64::MIN_POSITIVE))
        .map_err(|e| SmdError::Numeric(format!("Newton system: {e}")))
}

fn line_search(
    potential: &Potential,
    x: &Matrix,
    y: &Vector,
    theta0: &Vector,
    cur: &DualPoint,
    dir: &Vector,
    opts: &ProjectOptions,
) -> Option<DualPoint> {
    let slope = -cur.g.dot(dir);
    let mut t = 1.0;
    for _ in 0..=opts.max_halvings {
        if let Ok(cand) = dual_point(potential, x, y, theta0, &cur.lambda + t * dir) {
            let armijo = cand.objective >= cur.objective + 1e-4 * t * slope;
            if armijo || cand.g.amax() < cur.g.amax() {
                return Some(cand);
            }
        }
        t *= 0.5;
    }
    None
}

/// `argmin_{Xw=y} D_ψ(w, w_0)` via Newton on the dual variable `λ`, where
/// `w(λ) = (∇ψ)⁻¹(∇ψ(w_0) + Xᵀλ)` and the Jacobian of `Xw(λ) − y` is `X H⁻¹ Xᵀ`.
pub fn bregman_project(
    potential: &Potential,
    x: &Matrix,
    y: &Vector,
    w0: &Vector,
    opts: &ProjectOptions,
) -> Result<ProjectionResult> {
    let (n, m) = x.shape();
    check_dim("labels", n, y.len())?;
    check_dim("initial point", m, w0.len())?;
    if rank(x) < n {
        return Err(SmdError::Degenerate(format!("design matrix has rank below {n}")));
    }
    let theta0 = potential.grad(w0)?;
    let tol = opts.tol * y.amax().max(1.0);
    let mut cur = dual_point(potential, x, y, &theta0, Vector::zeros(n))?;
    let mut iterations = 0;
    while cur.g.amax() > tol && iterations < opts.max_iter {
        iterations += 1;
        let hinv = potential.hessian_inverse(&cur.w)?;
        let jac = x * hinv * x.transpose();
        let newton = solve_spd(&jac, &(-&cur.g)).ok().filter(|d| d.iter().all(|v| v.is_finite()) && d.amax() > 0.0);
        // Where ∇²ψ is infinite (q-norms at zero) the Jacobian vanishes; fall back to dual ascent.
        let next = newton
            .and_then(|d| line_search(potential, x, y, &theta0, &cur, &d, opts))
            .or_else(|| line_search(potential, x, y, &theta0, &cur, &(-&cur.g), opts));
        match next {
            Some(p) => cur = p,
            None => break,
        }
    }
    let residual = cur.g.amax();
    let stationarity = (potential.grad(&cur.w)? - &theta0 - x.transpose() * &cur.lambda).amax();
    Ok(ProjectionResult {
        converged: residual <= tol,
        kkt: Kkt {
            primal: residual,
            stationarity,
        },
        w_star: cur.w,
        lambda: cur.lambda,
        residual,
        iterations,
    })
}

/// Direct minimization of `D_ψ(w_p + N z, w_0)` over the null-space
/// coordinates `z` (at most two), by a grid then compass search.
pub fn brute_force_project(potential: &Potential, x: &Matrix, y: &Vector, w0: &Vector) -> Result<Vector> {
    let (n, m) = x.shape();
    check_dim("initial point", m, w0.len())?;
    if m < n || m - n > 2 {
        return Err(SmdError::Input(format!(
            "brute force needs 0 <= m - n <= 2, got m - n = {}",
            m as i64 - n as i64
        )));
    }
    let wp = min_l2_solution(x, y)?;
    let basis = null_space_basis(x)?;
    let k = basis.ncols();
    let at = |z: &[f64]| -> Vector {
        let mut w = wp.clone();
        for (j, zj) in z.iter().enumerate() {
            w.axpy(*zj, &basis.column(j), 1.0);
        }
        w
    };
    let f = |z: &[f64]| -> f64 { potential.bregman(&at(z), w0).unwrap_or(f64::INFINITY) };
    if k == 0 {
        let w = at(&[]);
        potential.check_domain(&w)?;
        return Ok(w);
    }

    let radius = 2.0 * (wp.norm() + w0.norm() + 1.0);
    let cells = 200usize;
    let mut best = vec![0.0; k];
    let mut best_f = f64::INFINITY;
    let coord = |i: usize| -radius + 2.0 * radius * i as f64 / cells as f64;
    let mut z = vec![0.0; k];
    let total = (cells + 1).pow(k as u32);
    for idx in 0..total {
        let mut r = idx;
        for zj in z.iter_mut() {
            *zj = coord(r % (cells + 1));
            r /= cells + 1;
        }
        let v = f(&z);
        if v < best_f {
            best_f = v;
            best.copy_from_slice(&z);
        }
    }
    if !best_f.is_finite() {
        return Err(SmdError::Domain("no feasible point found on the null-space grid".into()));
    }

    let mut step = 2.0 * radius / cells as f64;
    let floor = 1e-13 * radius;
    while step > floor {
        let mut moved = false;
        for j in 0..k {
            for s in [step, -step] {
                let mut cand = best.clone();
                cand[j] += s;
                let v = f(&cand);
                if v < best_f {
                    best_f = v;
                    best = cand;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok(at(&best))
}
