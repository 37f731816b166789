//! Mirror potentials and their Bregman machinery.
//!
//! Every potential exposes its value, mirror map (gradient), the inverse mirror
//! map, the Hessian and its inverse, and the Bregman divergence
//! `D(w, w') = ψ(w) − ψ(w') − ∇ψ(w')ᵀ(w − w')`.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SmdError};
use crate::linalg::{min_eigen, Matrix, Vector};

/// Entries of a negative-entropy iterate below this are a domain error.
pub const ENTROPY_FLOOR: f64 = 1e-300;

/// Serializable description of a potential: kind plus parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    SquaredL2,
    /// `½ wᵀQw`; `q_matrix` is dense row-major, `dim × dim`.
    QuadraticQ { dim: usize, q_matrix: Vec<f64> },
    NegativeEntropy,
    /// `Σ_j |w_j|^q / q`
    QnormComponentwise { q: f64 },
    /// `½ ‖w‖_q²`
    QnormSquared { q: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Euclidean,
    PositiveOrthant,
}

/// Strong-convexity constant with respect to the Euclidean norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scope", content = "value", rename_all = "snake_case")]
pub enum StrongConvexity {
    /// Holds on the whole domain.
    Global(f64),
    /// Holds on the unit ball only.
    Local(f64),
    Unknown,
}

impl StrongConvexity {
    pub fn global(&self) -> Option<f64> {
        match *self {
            StrongConvexity::Global(a) => Some(a),
            _ => None,
        }
    }

    /// The constant regardless of scope, if any is known.
    pub fn any(&self) -> Option<f64> {
        match *self {
            StrongConvexity::Global(a) | StrongConvexity::Local(a) => Some(a),
            StrongConvexity::Unknown => None,
        }
    }
}

#[derive(Clone, Debug)]
enum Kind {
    SquaredL2,
    Quadratic {
        q: Matrix,
        chol: Cholesky<f64, nalgebra::Dyn>,
        lambda_min: f64,
    },
    NegativeEntropy,
    Componentwise { q: f64 },
    NormSquared { q: f64 },
}

/// A strictly convex mirror potential. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Potential {
    spec: PotentialSpec,
    kind: Kind,
}

fn check_q(q: f64) -> Result<()> {
    if q > 1.0 && q <= 2.0 && q.is_finite() {
        Ok(())
    } else {
        Err(SmdError::Input(format!("q-norm exponent must lie in (1, 2], got {q}")))
    }
}

fn signed_pow(x: f64, e: f64) -> f64 {
    x.signum() * x.abs().powf(e)
}

fn q_norm(w: &Vector, q: f64) -> f64 {
    w.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(1.0 / q)
}

impl Potential {
    pub fn new(spec: PotentialSpec) -> Result<Self> {
        let kind = match &spec {
            PotentialSpec::SquaredL2 => Kind::SquaredL2,
            PotentialSpec::QuadraticQ { dim, q_matrix } => {
                if q_matrix.len() != dim * dim {
                    return Err(SmdError::Input(format!(
                        "Q has {} entries, expected {}",
                        q_matrix.len(),
                        dim * dim
                    )));
                }
                let q = Matrix::from_row_slice(*dim, *dim, q_matrix);
                let asym = (&q - q.transpose()).amax();
                if asym > 1e-12 * q.amax().max(1.0) {
                    return Err(SmdError::Input("Q is not symmetric".into()));
                }
                let chol = Cholesky::new(q.clone())
                    .ok_or_else(|| SmdError::Input("Q is not positive definite".into()))?;
                let (lambda_min, _) = min_eigen(&q);
                if lambda_min <= 0.0 {
                    return Err(SmdError::Input("Q is not positive definite".into()));
                }
                Kind::Quadratic { q, chol, lambda_min }
            }
            PotentialSpec::NegativeEntropy => Kind::NegativeEntropy,
            PotentialSpec::QnormComponentwise { q } => {
                check_q(*q)?;
                Kind::Componentwise { q: *q }
            }
            PotentialSpec::QnormSquared { q } => {
                check_q(*q)?;
                Kind::NormSquared { q: *q }
            }
        };
        Ok(Self { spec, kind })
    }

    pub fn squared_l2() -> Self {
        Self::new(PotentialSpec::SquaredL2).expect("valid")
    }

    pub fn negative_entropy() -> Self {
        Self::new(PotentialSpec::NegativeEntropy).expect("valid")
    }

    pub fn qnorm_componentwise(q: f64) -> Result<Self> {
        Self::new(PotentialSpec::QnormComponentwise { q })
    }

    pub fn qnorm_squared(q: f64) -> Result<Self> {
        Self::new(PotentialSpec::QnormSquared { q })
    }

    pub fn quadratic(q: &Matrix) -> Result<Self> {
        let dim = q.nrows();
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..q.ncols() {
                data.push(q[(i, j)]);
            }
        }
        Self::new(PotentialSpec::QuadraticQ { dim, q_matrix: data })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn name(&self) -> String {
        match self.kind {
            Kind::SquaredL2 => "squared_l2".into(),
            Kind::Quadratic { .. } => "quadratic_q".into(),
            Kind::NegativeEntropy => "negative_entropy".into(),
            Kind::Componentwise { q } => format!("qnorm_componentwise(q={q})"),
            Kind::NormSquared { q } => format!("qnorm_squared(q={q})"),
        }
    }

    pub fn domain(&self) -> Domain {
        match self.kind {
            Kind::NegativeEntropy => Domain::PositiveOrthant,
            _ => Domain::Euclidean,
        }
    }

    /// Fixed dimension, for potentials that carry one (QuadraticQ).
    pub fn fixed_dim(&self) -> Option<usize> {
        match &self.kind {
            Kind::Quadratic { q, .. } => Some(q.nrows()),
            _ => None,
        }
    }

    /// Strong-convexity constant w.r.t. the Euclidean norm.
    ///
    /// `½‖w‖_q²` is (q−1)-strongly convex w.r.t. `‖·‖_q`, and `‖v‖_q ≥ ‖v‖₂` for
    /// q ≤ 2, so the same constant holds globally in the Euclidean norm.
    pub fn alpha(&self) -> StrongConvexity {
        match self.kind {
            Kind::SquaredL2 => StrongConvexity::Global(1.0),
            Kind::Quadratic { lambda_min, .. } => StrongConvexity::Global(lambda_min),
            Kind::NegativeEntropy => StrongConvexity::Unknown,
            Kind::Componentwise { q } if q == 2.0 => StrongConvexity::Global(1.0),
            Kind::Componentwise { q } => StrongConvexity::Local(q - 1.0),
            Kind::NormSquared { q } => StrongConvexity::Global(q - 1.0),
        }
    }

    /// `argmin ψ` over the domain.
    pub fn minimizer(&self, m: usize) -> Vector {
        match self.kind {
            Kind::NegativeEntropy => Vector::from_element(m, (-1.0_f64).exp()),
            _ => Vector::zeros(m),
        }
    }

    pub fn check_domain(&self, w: &Vector) -> Result<()> {
        if let Some(d) = self.fixed_dim() {
            check_dim("potential", d, w.len())?;
        }
        if let Some((j, x)) = w.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(SmdError::Domain(format!("entry {j} is not finite ({x})")));
        }
        if let Kind::NegativeEntropy = self.kind {
            if let Some((j, x)) = w.iter().enumerate().find(|(_, &x)| x < ENTROPY_FLOOR) {
                return Err(SmdError::Domain(format!(
                    "negative entropy needs positive entries, entry {j} = {x:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, w: &Vector) -> Result<f64> {
        self.check_domain(w)?;
        Ok(match &self.kind {
            Kind::SquaredL2 => 0.5 * w.norm_squared(),
            Kind::Quadratic { q, .. } => 0.5 * w.dot(&(q * w)),
            Kind::NegativeEntropy => w.iter().map(|&x| x * x.ln()).sum(),
            Kind::Componentwise { q } => w.iter().map(|x| x.abs().powf(*q)).sum::<f64>() / q,
            Kind::NormSquared { q } => 0.5 * q_norm(w, *q).powi(2),
        })
    }

    /// Mirror map `∇ψ(w)`.
    pub fn grad(&self, w: &Vector) -> Result<Vector> {
        self.check_domain(w)?;
        Ok(match &self.kind {
            Kind::SquaredL2 => w.clone(),
            Kind::Quadratic { q, .. } => q * w,
            Kind::NegativeEntropy => w.map(|x| 1.0 + x.ln()),
            Kind::Componentwise { q } => w.map(|x| signed_pow(x, q - 1.0)),
            Kind::NormSquared { q } => {
                let nrm = q_norm(w, *q);
                if nrm == 0.0 {
                    Vector::zeros(w.len())
                } else {
                    let scale = nrm.powf(2.0 - q);
                    w.map(|x| scale * signed_pow(x, q - 1.0))
                }
            }
        })
    }

    /// Inverse mirror map: the `w` with `∇ψ(w) = theta`.
    pub fn inverse_grad(&self, theta: &Vector) -> Result<Vector> {
        if let Some(d) = self.fixed_dim() {
            check_dim("potential", d, theta.len())?;
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(SmdError::Numeric("dual vector has non-finite entries".into()));
        }
        let w = match &self.kind {
            Kind::SquaredL2 => theta.clone(),
            Kind::Quadratic { chol, .. } => chol.solve(theta),
            Kind::NegativeEntropy => theta.map(|t| (t - 1.0).exp()),
            Kind::Componentwise { q } => theta.map(|t| signed_pow(t, 1.0 / (q - 1.0))),
            Kind::NormSquared { q } => self.norm_squared_inverse(theta, *q)?,
        };
        self.check_domain(&w)?;
        Ok(w)
    }

    // Conjugate closed form ∇(½‖θ‖_p²), then damped Newton polish on ∇ψ(w) = θ.
    fn norm_squared_inverse(&self, theta: &Vector, q: f64) -> Result<Vector> {
        let p = q / (q - 1.0);
        let nrm = q_norm(theta, p);
        if nrm == 0.0 {
            return Ok(Vector::zeros(theta.len()));
        }
        let scale = nrm.powf(2.0 - p);
        let mut w = theta.map(|t| scale * signed_pow(t, p - 1.0));
        let tol = 1e-14 * theta.amax().max(1.0);
        let mut resid = self.grad(&w)? - theta;
        let mut r_norm = resid.amax();
        for _ in 0..8 {
            if r_norm <= tol {
                break;
            }
            let step = self.hessian_inverse(&w)? * &resid;
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let cand = &w - t * &step;
                if let Ok(g) = self.grad(&cand) {
                    let r = g - theta;
                    let rn = r.amax();
                    if rn < r_norm {
                        w = cand;
                        resid = r;
                        r_norm = rn;
                        improved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if !(r_norm <= 1e-9 * theta.amax().max(1.0)) {
            return Err(SmdError::Numeric(format!(
                "q-norm inverse map did not converge (residual {r_norm:e})"
            )));
        }
        Ok(w)
    }

    /// Hessian `∇²ψ(w)`. Componentwise q-norm entries are infinite at zero coordinates.
    pub fn hessian(&self, w: &Vector) -> Result<Matrix> {
        self.check_domain(w)?;
        let m = w.len();
        Ok(match &self.kind {
            Kind::SquaredL2 => Matrix::identity(m, m),
            Kind::Quadratic { q, .. } => q.clone(),
            Kind::NegativeEntropy => Matrix::from_diagonal(&w.map(|x| 1.0 / x)),
            Kind::Componentwise { q } => {
                Matrix::from_diagonal(&w.map(|x| (q - 1.0) * x.abs().powf(q - 2.0)))
            }
            Kind::NormSquared { q } => {
                let nrm = q_norm(w, *q);
                if nrm == 0.0 {
                    // (q−1)-strong convexity is the only information at the origin.
                    return Ok(Matrix::from_diagonal_element(m, m, f64::INFINITY));
                }
                let s = w.map(|x| signed_pow(x, q - 1.0));
                let c = (2.0 - q) * nrm.powf(2.0 - 2.0 * q);
                let d = w.map(|x| (q - 1.0) * nrm.powf(2.0 - q) * x.abs().powf(q - 2.0));
                Matrix::from_diagonal(&d) + c * &s * s.transpose()
            }
        })
    }

    /// `[∇²ψ(w)]⁻¹`, which is also the Jacobian of the inverse mirror map at `∇ψ(w)`.
    pub fn hessian_inverse(&self, w: &Vector) -> Result<Matrix> {
        self.check_domain(w)?;
        let m = w.len();
        Ok(match &self.kind {
            Kind::SquaredL2 => Matrix::identity(m, m),
            Kind::Quadratic { chol, .. } => chol.inverse(),
            Kind::NegativeEntropy => Matrix::from_diagonal(w),
            Kind::Componentwise { q } => {
                Matrix::from_diagonal(&w.map(|x| x.abs().powf(2.0 - q) / (q - 1.0)))
            }
            Kind::NormSquared { q } => {
                let nrm = q_norm(w, *q);
                if nrm == 0.0 {
                    return Ok(Matrix::zeros(m, m));
                }
                // D + c s sᵀ inverted by Sherman-Morrison.
                let s = w.map(|x| signed_pow(x, q - 1.0));
                let c = (2.0 - q) * nrm.powf(2.0 - 2.0 * q);
                let dinv = w.map(|x| x.abs().powf(2.0 - q) / ((q - 1.0) * nrm.powf(2.0 - q)));
                let u = dinv.component_mul(&s);
                let denom = 1.0 + c * s.dot(&u);
                Matrix::from_diagonal(&dinv) - (c / denom) * &u * u.transpose()
            }
        })
    }

    /// Bregman divergence `D_ψ(w, wp)`.
    pub fn bregman(&self, w: &Vector, wp: &Vector) -> Result<f64> {
        check_dim("bregman", w.len(), wp.len())?;
        self.check_domain(w)?;
        self.check_domain(wp)?;
        let d = w - wp;
        Ok(match &self.kind {
            Kind::SquaredL2 => 0.5 * d.norm_squared(),
            Kind::Quadratic { q, .. } => 0.5 * d.dot(&(q * &d)),
            Kind::NegativeEntropy => w
                .iter()
                .zip(wp.iter())
                .map(|(&a, &b)| a * (a.ln() - b.ln()) - a + b)
                .sum(),
            _ => self.value(w)? - self.value(wp)? - self.grad(wp)?.dot(&d),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> Vec<Potential> {
        let q = Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, -0.2, 0.0, -0.2, 1.5]);
        vec![
            Potential::squared_l2(),
            Potential::quadratic(&q).unwrap(),
            Potential::negative_entropy(),
            Potential::qnorm_componentwise(1.5).unwrap(),
            Potential::qnorm_componentwise(1.1).unwrap(),
            Potential::qnorm_squared(1.5).unwrap(),
            Potential::qnorm_squared(1.2).unwrap(),
        ]
    }

    fn sample(p: &Potential, rng: &mut ChaCha8Rng) -> Vector {
        let m = p.fixed_dim().unwrap_or(3);
        match p.domain() {
            Domain::PositiveOrthant => Vector::from_fn(m, |_, _| rng.random_range(0.05..3.0)),
            Domain::Euclidean => Vector::from_fn(m, |_, _| rng.random_range(-3.0..3.0)),
        }
    }

    // Oracle: central differences of the potential value.
    fn fd_grad(p: &Potential, w: &Vector, h: f64) -> Vector {
        Vector::from_fn(w.len(), |j, _| {
            let mut a = w.clone();
            let mut b = w.clone();
            a[j] += h;
            b[j] -= h;
            (p.value(&a).unwrap() - p.value(&b).unwrap()) / (2.0 * h)
        })
    }

    #[test]
    fn gradient_examples() {
        let w = Vector::from_vec(vec![3.0, -1.0]);
        assert_eq!(Potential::squared_l2().grad(&w).unwrap(), w);
        let ones = Vector::from_vec(vec![1.0, 1.0]);
        assert_eq!(Potential::negative_entropy().grad(&ones).unwrap(), ones);
        let p = Potential::qnorm_componentwise(1.5).unwrap();
        let g = p.grad(&Vector::from_vec(vec![4.0])).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-15);
        // central-difference oracle at w = 4
        let fd = fd_grad(&p, &Vector::from_vec(vec![4.0]), 1e-5);
        assert!((fd[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn inverse_examples() {
        let t = Vector::from_vec(vec![3.0, -1.0]);
        assert_eq!(Potential::squared_l2().inverse_grad(&t).unwrap(), t);
        let ones = Vector::from_vec(vec![1.0, 1.0]);
        assert_eq!(Potential::negative_entropy().inverse_grad(&ones).unwrap(), ones);
        let p = Potential::qnorm_squared(1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let theta = Vector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
            let w = p.inverse_grad(&theta).unwrap();
            let back = p.grad(&w).unwrap();
            assert!((back - &theta).amax() <= 1e-10 * theta.amax());
        }
    }

    #[test]
    fn bregman_examples() {
        let l2 = Potential::squared_l2();
        let w = Vector::from_vec(vec![1.0, 2.0]);
        assert_eq!(l2.bregman(&w, &Vector::zeros(2)).unwrap(), 2.5);
        let e = std::f64::consts::E;
        let ent = Potential::negative_entropy();
        let d = ent
            .bregman(&Vector::from_vec(vec![1.0, 1.0]), &Vector::from_vec(vec![e, e]))
            .unwrap();
        // 2·(1·log(1/e) − 1 + e) = 2e − 4
        assert!((d - (2.0 * e - 4.0)).abs() < 1e-14);
        assert!((d - 1.43656).abs() < 1e-5);
        for p in catalog() {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let w = sample(&p, &mut rng);
            assert_eq!(p.bregman(&w, &w).unwrap(), 0.0);
        }
    }

    #[test]
    fn entropy_domain_is_enforced() {
        let p = Potential::negative_entropy();
        assert!(matches!(
            p.grad(&Vector::from_vec(vec![1.0, 0.0])),
            Err(SmdError::Domain(_))
        ));
        assert!(matches!(
            p.grad(&Vector::from_vec(vec![1.0, -2.0])),
            Err(SmdError::Domain(_))
        ));
        assert!(p.inverse_grad(&Vector::from_vec(vec![-800.0])).is_err());
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(Potential::qnorm_squared(1.0).is_err());
        assert!(Potential::qnorm_componentwise(2.5).is_err());
        let not_pd = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(Potential::quadratic(&not_pd).is_err());
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Potential::quadratic(&asym).is_err());
    }

    #[test]
    fn catalog_bregman_and_gradient_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in catalog() {
            for _ in 0..1000 {
                let w = sample(&p, &mut rng);
                let wp = sample(&p, &mut rng);
                let u = sample(&p, &mut rng);
                let d = p.bregman(&w, &wp).unwrap();
                assert!(d > 0.0, "{}: D = {d}", p.name());
                // convex in the first argument: midpoint test
                let mid = 0.5 * (&w + &u);
                let lhs = p.bregman(&mid, &wp).unwrap();
                let rhs = 0.5 * (d + p.bregman(&u, &wp).unwrap());
                assert!(lhs <= rhs + 1e-12 * rhs.abs().max(1.0), "{}", p.name());
            }
            for _ in 0..100 {
                let w = sample(&p, &mut rng);
                let g = p.grad(&w).unwrap();
                let back = p.inverse_grad(&g).unwrap();
                assert!((&back - &w).amax() <= 1e-10 * w.amax(), "{}", p.name());
                let fd = fd_grad(&p, &w, 1e-6);
                assert!((&fd - &g).amax() <= 1e-6 * g.amax().max(1.0), "{}", p.name());
            }
        }
    }

    #[test]
    fn hessian_symmetric_positive_definite_and_inverse_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in catalog() {
            for _ in 0..50 {
                let w = sample(&p, &mut rng);
                let h = p.hessian(&w).unwrap();
                assert!((&h - h.transpose()).amax() <= 1e-12 * h.amax());
                let (lmin, _) = min_eigen(&h);
                assert!(lmin > 0.0, "{}", p.name());
                let hi = p.hessian_inverse(&w).unwrap();
                let id = &h * &hi;
                assert!((id - Matrix::identity(w.len(), w.len())).amax() < 1e-9, "{}", p.name());
                // Oracle: central differences of the gradient.
                let h_fd = Matrix::from_fn(w.len(), w.len(), |i, j| {
                    let mut a = w.clone();
                    let mut b = w.clone();
                    a[j] += 1e-6;
                    b[j] -= 1e-6;
                    (p.grad(&a).unwrap()[i] - p.grad(&b).unwrap()[i]) / 2e-6
                });
                assert!((&h_fd - &h).amax() <= 1e-5 * h.amax().max(1.0), "{}", p.name());
            }
        }
    }

    #[test]
    fn quadratic_bregman_matches_closed_form() {
        let q = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let p = Potential::quadratic(&q).unwrap();
        let w = Vector::from_vec(vec![1.0, -2.0]);
        let wp = Vector::from_vec(vec![0.5, 3.0]);
        let d = &w - &wp;
        assert_eq!(p.bregman(&w, &wp).unwrap(), 0.5 * d.dot(&(&q * &d)));
        assert!(matches!(p.alpha(), StrongConvexity::Global(a) if a > 0.0));
    }

    #[test]
    fn norm_squared_inverse_near_sparse_vectors() {
        let p = Potential::qnorm_squared(1.1).unwrap();
        let theta = Vector::from_vec(vec![1.0, 1e-7, 0.0, -0.3, 1e-12]);
        let w = p.inverse_grad(&theta).unwrap();
        assert!((p.grad(&w).unwrap() - &theta).amax() <= 1e-10);
        assert_eq!(p.inverse_grad(&Vector::zeros(3)).unwrap(), Vector::zeros(3));
    }

    proptest! {
        #[test]
        fn norm_squared_strong_convexity_constant(
            q in 1.05f64..2.0,
            w in proptest::collection::vec(-3.0f64..3.0, 4)
        ) {
            let p = Potential::qnorm_squared(q).unwrap();
            let w = Vector::from_vec(w);
            prop_assume!(w.iter().all(|x| x.abs() > 1e-3));
            let (lmin, _) = min_eigen(&p.hessian(&w).unwrap());
            prop_assert!(lmin >= (q - 1.0) * (1.0 - 1e-9));
        }

        #[test]
        fn componentwise_round_trip(q in 1.05f64..2.0, t in proptest::collection::vec(-4.0f64..4.0, 5)) {
            let p = Potential::qnorm_componentwise(q).unwrap();
            let theta = Vector::from_vec(t);
            let w = p.inverse_grad(&theta).unwrap();
            let back = p.grad(&w).unwrap();
            for (a, b) in back.iter().zip(theta.iter()) {
                prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300));
            }
        }
    }
}
