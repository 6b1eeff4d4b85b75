//! Curvature functions of the principal curvatures on the positive cone.
//!
//! Every family is symmetric and 1-homogeneous. Construction rescales the
//! raw expression so that `F(1, ..., 1) = 1`. Values, gradients and Hessians
//! are computed analytically in eigenvalue coordinates.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurvatureError {
    #[error("invalid curvature function parameters: {0}")]
    InvalidParameter(String),
    #[error("malformed curvature function name `{0}`")]
    MalformedName(String),
    #[error("principal curvature {index} = {value} is outside the positive cone")]
    OutsideCone { index: usize, value: f64 },
    #[error("expected {expected} principal curvatures, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("elementary symmetric index {k} out of range 0..={n}")]
    IndexOutOfRange { k: usize, n: usize },
    #[error("hessian asymmetry {0:e} exceeds tolerance")]
    AsymmetricHessian(f64),
}

/// Principal curvatures of a point on a strictly convex hypersurface.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalCurvatures(Vec<f64>);

impl PrincipalCurvatures {
    pub fn new(kappa: Vec<f64>) -> Result<Self, CurvatureError> {
        if kappa.is_empty() {
            return Err(CurvatureError::InvalidParameter(
                "need at least one principal curvature".into(),
            ));
        }
        check_cone(&kappa)?;
        Ok(PrincipalCurvatures(kappa))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Curvatures sorted increasingly, `kappa_1 <= ... <= kappa_n`.
    pub fn sorted(&self) -> Vec<f64> {
        let mut k = self.0.clone();
        k.sort_by(|a, b| a.total_cmp(b));
        k
    }
}

fn check_cone(kappa: &[f64]) -> Result<(), CurvatureError> {
    for (index, &value) in kappa.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(CurvatureError::OutsideCone { index, value });
        }
    }
    Ok(())
}

/// The built-in curvature function families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `H / n`.
    Mean,
    /// `((1/n) sum kappa_i^r)^(1/r)` for `|r| <= 1`; `r = 0` is the geometric mean.
    PowerMean(f64),
    /// `H_k^(1/k)`.
    SigmaK(usize),
    /// `(H_k / H_l)^(1/(k-l))`.
    Quotient { k: usize, l: usize },
    /// `prod_m (H_m / H_(m-1))^(alpha_m)` with nonnegative weights summing to one.
    WeightedGeometric(Vec<f64>),
    /// `(sum_{|a| = k} kappa^a)^(1/k)`.
    CompleteSymmetric(usize),
    /// `|A| = (sum kappa_i^2)^(1/2)`.
    NormOfA,
    /// `1 / F(1/kappa)`.
    InverseOf(Box<Family>),
}

impl Family {
    pub fn inverse(self) -> Family {
        Family::InverseOf(Box::new(self))
    }

    fn validate(&self, n: usize) -> Result<(), CurvatureError> {
        let bad = |msg: String| Err(CurvatureError::InvalidParameter(msg));
        match self {
            Family::Mean | Family::NormOfA => Ok(()),
            Family::PowerMean(r) => {
                if !r.is_finite() || r.abs() > 1.0 {
                    bad(format!("power mean exponent r = {r} violates |r| <= 1"))
                } else {
                    Ok(())
                }
            }
            Family::SigmaK(k) => {
                if *k == 0 || *k > n {
                    bad(format!("sigma_k requires 1 <= k <= n, got k = {k}, n = {n}"))
                } else {
                    Ok(())
                }
            }
            Family::Quotient { k, l } => {
                if l >= k || *k > n {
                    bad(format!(
                        "quotient requires 0 <= l < k <= n, got k = {k}, l = {l}, n = {n}"
                    ))
                } else {
                    Ok(())
                }
            }
            Family::WeightedGeometric(alpha) => {
                if alpha.is_empty() || alpha.len() > n {
                    return bad(format!(
                        "weighted geometric mean needs 1..={n} weights, got {}",
                        alpha.len()
                    ));
                }
                if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
                    return bad("weighted geometric mean weights must be nonnegative".into());
                }
                let sum: f64 = alpha.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return bad(format!("weighted geometric mean weights sum to {sum}, not 1"));
                }
                Ok(())
            }
            Family::CompleteSymmetric(k) => {
                if *k == 0 || *k > n {
                    bad(format!(
                        "complete symmetric function requires 1 <= k <= n, got k = {k}, n = {n}"
                    ))
                } else {
                    Ok(())
                }
            }
            Family::InverseOf(inner) => inner.validate(n),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Mean => write!(f, "mean"),
            Family::PowerMean(r) => write!(f, "power_mean:{r}"),
            Family::SigmaK(k) => write!(f, "sigma_k:{k}"),
            Family::Quotient { k, l } => write!(f, "quotient:{k}:{l}"),
            Family::WeightedGeometric(alpha) => {
                write!(f, "geom:")?;
                for (i, a) in alpha.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                Ok(())
            }
            Family::CompleteSymmetric(k) => write!(f, "complete:{k}"),
            Family::NormOfA => write!(f, "norm_A"),
            Family::InverseOf(inner) => write!(f, "inverse:{inner}"),
        }
    }
}

impl FromStr for Family {
    type Err = CurvatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || CurvatureError::MalformedName(s.to_string());
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("inverse:") {
            return Ok(Family::InverseOf(Box::new(inner.parse()?)));
        }
        let mut parts = s.split(':');
        let head = parts.next().ok_or_else(malformed)?;
        let args: Vec<&str> = parts.collect();
        let int = |a: &str| a.trim().parse::<usize>().map_err(|_| malformed());
        let real = |a: &str| a.trim().parse::<f64>().map_err(|_| malformed());
        match (head, args.as_slice()) {
            ("mean", []) => Ok(Family::Mean),
            ("norm_A", []) => Ok(Family::NormOfA),
            ("power_mean", [r]) => Ok(Family::PowerMean(real(r)?)),
            ("sigma_k", [k]) => Ok(Family::SigmaK(int(k)?)),
            ("quotient", [k, l]) => Ok(Family::Quotient {
                k: int(k)?,
                l: int(l)?,
            }),
            ("complete", [k]) => Ok(Family::CompleteSymmetric(int(k)?)),
            ("geom", [w]) => {
                let alpha = w
                    .split(',')
                    .map(real)
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Family::WeightedGeometric(alpha))
            }
            _ => Err(malformed()),
        }
    }
}

/// A family together with the hypersurface dimension it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureFunctionSpec {
    pub family: Family,
    pub n: usize,
}

impl CurvatureFunctionSpec {
    pub fn new(family: Family, n: usize) -> Self {
        CurvatureFunctionSpec { family, n }
    }
}

/// Value, gradient and Hessian of a curvature function at one point.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Outcome of the strict concavity classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concavity {
    StrictlyConcave,
    ConcaveDegenerate,
    NotConcave,
}

/// A normalized, evaluable curvature function.
#[derive(Debug, Clone)]
pub struct CurvatureFunction {
    spec: CurvatureFunctionSpec,
    scale: f64,
}

/// Builds the normalized function described by `spec`.
pub fn make_function(spec: CurvatureFunctionSpec) -> Result<CurvatureFunction, CurvatureError> {
    if spec.n == 0 {
        return Err(CurvatureError::InvalidParameter("dimension n must be >= 1".into()));
    }
    spec.family.validate(spec.n)?;
    let ones = vec![1.0; spec.n];
    let raw = raw_value(&spec.family, &ones);
    if !(raw > 0.0) || !raw.is_finite() {
        return Err(CurvatureError::InvalidParameter(format!(
            "{} is not positive at (1, ..., 1)",
            spec.family
        )));
    }
    Ok(CurvatureFunction {
        spec,
        scale: 1.0 / raw,
    })
}

/// `F~(kappa) = 1 / F(1/kappa)`.
pub fn invert(f: &CurvatureFunction) -> CurvatureFunction {
    make_function(CurvatureFunctionSpec {
        family: f.spec.family.clone().inverse(),
        n: f.spec.n,
    })
    .expect("the inverse of a valid curvature function is valid")
}

impl CurvatureFunction {
    pub fn parse(name: &str, n: usize) -> Result<Self, CurvatureError> {
        make_function(CurvatureFunctionSpec::new(name.parse()?, n))
    }

    pub fn spec(&self) -> &CurvatureFunctionSpec {
        &self.spec
    }

    pub fn family(&self) -> &Family {
        &self.spec.family
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    /// Normalization factor applied to the raw family expression.
    pub fn normalization(&self) -> f64 {
        self.scale
    }

    fn check(&self, kappa: &[f64]) -> Result<(), CurvatureError> {
        if kappa.len() != self.spec.n {
            return Err(CurvatureError::DimensionMismatch {
                expected: self.spec.n,
                got: kappa.len(),
            });
        }
        check_cone(kappa)
    }

    pub fn value(&self, kappa: &[f64]) -> Result<f64, CurvatureError> {
        self.check(kappa)?;
        Ok(self.scale * raw_value(&self.spec.family, kappa))
    }

    /// Value and gradient; cheaper than [`Self::eval_with_derivatives`].
    pub fn value_and_gradient(&self, kappa: &[f64]) -> Result<(f64, Vec<f64>), CurvatureError> {
        self.check(kappa)?;
        let e = raw_eval(&self.spec.family, kappa, false);
        Ok((
            self.scale * e.value,
            e.gradient.iter().map(|g| self.scale * g).collect(),
        ))
    }

    pub fn eval_with_derivatives(&self, kappa: &[f64]) -> Result<EvalResult, CurvatureError> {
        self.check(kappa)?;
        let e = raw_eval(&self.spec.family, kappa, true);
        Ok(EvalResult {
            value: self.scale * e.value,
            gradient: e.gradient.iter().map(|g| self.scale * g).collect(),
            hessian: e.hessian.expect("requested") * self.scale,
        })
    }

    pub fn eval(&self, kappa: &PrincipalCurvatures) -> Result<EvalResult, CurvatureError> {
        self.eval_with_derivatives(kappa.as_slice())
    }

    /// Strict concavity in non-radial directions at `kappa`.
    ///
    /// `tol = None` selects the scale-aware default `1e-8 (max |eig| + 1)`.
    pub fn check_strict_concavity(
        &self,
        kappa: &[f64],
        tol: Option<f64>,
    ) -> Result<Concavity, CurvatureError> {
        let e = self.eval_with_derivatives(kappa)?;
        let h = &e.hessian;
        let n = self.spec.n;
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                asym = asym.max((h[(i, j)] - h[(j, i)]).abs());
            }
        }
        let sym = (h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let largest = eig.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
        let tol = tol.unwrap_or(1e-8 * (largest + 1.0));
        if asym > tol {
            return Err(CurvatureError::AsymmetricHessian(asym));
        }
        // the radial direction kappa must be annihilated (Euler relation)
        let kv = nalgebra::DVector::from_column_slice(kappa);
        let radial = (&sym * &kv).norm() / kv.norm();
        if radial > tol.max(1e-10 * (largest + 1.0)) {
            return Ok(Concavity::NotConcave);
        }
        // drop the eigenvalue whose eigenvector is most aligned with kappa
        let khat = kv.normalize();
        let radial_index = (0..n)
            .max_by(|&a, &b| {
                let ca = eig.eigenvectors.column(a).dot(&khat).abs();
                let cb = eig.eigenvectors.column(b).dot(&khat).abs();
                ca.total_cmp(&cb)
            })
            .expect("n >= 1");
        let others = (0..n)
            .filter(|&i| i != radial_index)
            .map(|i| eig.eigenvalues[i]);
        let mut verdict = Concavity::StrictlyConcave;
        for lambda in others {
            if lambda > tol {
                return Ok(Concavity::NotConcave);
            }
            if lambda >= -tol {
                verdict = Concavity::ConcaveDegenerate;
            }
        }
        Ok(verdict)
    }
}

impl fmt::Display for CurvatureFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.spec.family.fmt(f)
    }
}

/// Elementary symmetric polynomial `H_k`, with `H_0 = 1`.
pub fn elementary_symmetric(kappa: &[f64], k: usize) -> Result<f64, CurvatureError> {
    if k > kappa.len() {
        return Err(CurvatureError::IndexOutOfRange { k, n: kappa.len() });
    }
    Ok(elementary_all(kappa, k)[k])
}

/// `[H_0, ..., H_kmax]` by the one-variable-at-a-time recurrence.
fn elementary_all(x: &[f64], kmax: usize) -> Vec<f64> {
    let mut e = vec![0.0; kmax + 1];
    e[0] = 1.0;
    for (count, &xi) in x.iter().enumerate() {
        let top = kmax.min(count + 1);
        for k in (1..=top).rev() {
            e[k] += xi * e[k - 1];
        }
    }
    e
}

/// Complete homogeneous symmetric polynomial `h_k`.
fn complete_homogeneous(x: &[f64], k: usize) -> f64 {
    let mut h = vec![0.0; k + 1];
    h[0] = 1.0;
    for &xi in x {
        for j in 1..=k {
            h[j] += xi * h[j - 1];
        }
    }
    h[k]
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

struct RawEval {
    value: f64,
    gradient: Vec<f64>,
    hessian: Option<DMatrix<f64>>,
}

/// Exponents `e_m` such that the family equals `prod_m H_m^(e_m)`.
fn power_product_exponents(family: &Family, n: usize) -> Option<Vec<f64>> {
    let mut e = vec![0.0; n + 1];
    match family {
        Family::SigmaK(k) => e[*k] = 1.0 / *k as f64,
        Family::Quotient { k, l } => {
            let p = 1.0 / (k - l) as f64;
            e[*k] += p;
            e[*l] -= p;
        }
        Family::WeightedGeometric(alpha) => {
            for (i, a) in alpha.iter().enumerate() {
                e[i + 1] += a;
                e[i] -= a;
            }
        }
        _ => return None,
    }
    e[0] = 0.0;
    Some(e)
}

fn raw_value(family: &Family, kappa: &[f64]) -> f64 {
    let n = kappa.len();
    match family {
        Family::Mean => kappa.iter().sum(),
        Family::NormOfA => kappa.iter().map(|k| k * k).sum::<f64>().sqrt(),
        Family::PowerMean(r) => {
            if *r == 0.0 {
                (kappa.iter().map(|k| k.ln()).sum::<f64>() / n as f64).exp()
            } else {
                let s = kappa.iter().map(|k| k.powf(*r)).sum::<f64>() / n as f64;
                s.powf(1.0 / r)
            }
        }
        Family::CompleteSymmetric(k) => complete_homogeneous(kappa, *k).powf(1.0 / *k as f64),
        Family::InverseOf(inner) => {
            let y: Vec<f64> = kappa.iter().map(|k| 1.0 / k).collect();
            1.0 / raw_value(inner, &y)
        }
        _ => {
            let e = power_product_exponents(family, n).expect("power-product family");
            let h = elementary_all(kappa, n);
            e.iter()
                .zip(&h)
                .filter(|(em, _)| **em != 0.0)
                .map(|(em, hm)| em * hm.ln())
                .sum::<f64>()
                .exp()
        }
    }
}

fn raw_eval(family: &Family, kappa: &[f64], hessian: bool) -> RawEval {
    let n = kappa.len();
    match family {
        Family::Mean => RawEval {
            value: kappa.iter().sum(),
            gradient: vec![1.0; n],
            hessian: hessian.then(|| DMatrix::zeros(n, n)),
        },
        Family::NormOfA => {
            let q: f64 = kappa.iter().map(|k| k * k).sum();
            let f = q.sqrt();
            let gradient = kappa.iter().map(|k| k / f).collect();
            let hessian = hessian.then(|| {
                DMatrix::from_fn(n, n, |i, j| {
                    let d = if i == j { 1.0 / f } else { 0.0 };
                    d - kappa[i] * kappa[j] / (q * f)
                })
            });
            RawEval {
                value: f,
                gradient,
                hessian,
            }
        }
        Family::PowerMean(r) if *r == 0.0 => {
            let nf = n as f64;
            let f = raw_value(family, kappa);
            let gradient = kappa.iter().map(|k| f / (nf * k)).collect();
            let hessian = hessian.then(|| {
                DMatrix::from_fn(n, n, |i, j| {
                    let cross = f / (nf * nf * kappa[i] * kappa[j]);
                    if i == j {
                        cross - f / (nf * kappa[i] * kappa[i])
                    } else {
                        cross
                    }
                })
            });
            RawEval {
                value: f,
                gradient,
                hessian,
            }
        }
        Family::PowerMean(r) => {
            let r = *r;
            let nf = n as f64;
            let s = kappa.iter().map(|k| k.powf(r)).sum::<f64>() / nf;
            let f = s.powf(1.0 / r);
            let pow_rm1: Vec<f64> = kappa.iter().map(|k| k.powf(r - 1.0)).collect();
            let gradient = pow_rm1.iter().map(|p| s.powf(1.0 / r - 1.0) * p / nf).collect();
            let hessian = hessian.then(|| {
                let c = (1.0 - r) * s.powf(1.0 / r - 2.0) / nf;
                DMatrix::from_fn(n, n, |i, j| {
                    let mut v = pow_rm1[i] * pow_rm1[j] / nf;
                    if i == j {
                        v -= s * kappa[i].powf(r - 2.0);
                    }
                    c * v
                })
            });
            RawEval {
                value: f,
                gradient,
                hessian,
            }
        }
        Family::CompleteSymmetric(k) => {
            let k = *k;
            let kf = k as f64;
            let p = complete_homogeneous(kappa, k);
            let f = p.powf(1.0 / kf);
            let with = |extra: &[f64], deg: usize| {
                let mut x = kappa.to_vec();
                x.extend_from_slice(extra);
                complete_homogeneous(&x, deg)
            };
            let dp: Vec<f64> = (0..n).map(|i| with(&[kappa[i]], k - 1)).collect();
            let gradient = dp.iter().map(|d| f * d / (kf * p)).collect();
            let hessian = hessian.then(|| {
                DMatrix::from_fn(n, n, |i, j| {
                    let d2 = if k < 2 {
                        0.0
                    } else if i == j {
                        2.0 * with(&[kappa[i], kappa[i]], k - 2)
                    } else {
                        with(&[kappa[i], kappa[j]], k - 2)
                    };
                    f * (d2 / (kf * p) + (1.0 / kf) * (1.0 / kf - 1.0) * dp[i] * dp[j] / (p * p))
                })
            });
            RawEval {
                value: f,
                gradient,
                hessian,
            }
        }
        Family::InverseOf(inner) => {
            let y: Vec<f64> = kappa.iter().map(|k| 1.0 / k).collect();
            let g = raw_eval(inner, &y, hessian);
            let gv = g.value;
            let f = 1.0 / gv;
            let gradient = (0..n)
                .map(|i| g.gradient[i] * y[i] * y[i] / (gv * gv))
                .collect();
            let hessian = g.hessian.map(|gh| {
                DMatrix::from_fn(n, n, |i, j| {
                    let yi2 = y[i] * y[i];
                    let yj2 = y[j] * y[j];
                    let mut v = 2.0 * g.gradient[i] * g.gradient[j] * yi2 * yj2 / (gv * gv * gv)
                        - gh[(i, j)] * yi2 * yj2 / (gv * gv);
                    if i == j {
                        v -= 2.0 * g.gradient[i] * yi2 * y[i] / (gv * gv);
                    }
                    v
                })
            });
            RawEval {
                value: f,
                gradient,
                hessian,
            }
        }
        _ => {
            let e = power_product_exponents(family, n).expect("power-product family");
            let h = elementary_all(kappa, n);
            let value = e
                .iter()
                .zip(&h)
                .filter(|(em, _)| **em != 0.0)
                .map(|(em, hm)| em * hm.ln())
                .sum::<f64>()
                .exp();
            let active: Vec<usize> = (1..=n).filter(|&m| e[m] != 0.0).collect();
            // d H_m / d kappa_i = H_(m-1)(kappa without i)
            let without_one: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let rest: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| kappa[j]).collect();
                    elementary_all(&rest, n.saturating_sub(1))
                })
                .collect();
            let dh = |m: usize, i: usize| without_one[i][m - 1];
            let log_grad: Vec<f64> = (0..n)
                .map(|i| active.iter().map(|&m| e[m] * dh(m, i) / h[m]).sum())
                .collect();
            let gradient = log_grad.iter().map(|g| value * g).collect();
            let hessian = hessian.then(|| {
                DMatrix::from_fn(n, n, |i, j| {
                    let mut s = log_grad[i] * log_grad[j];
                    for &m in &active {
                        let d2 = if i == j || m < 2 {
                            0.0
                        } else {
                            let rest: Vec<f64> = (0..n)
                                .filter(|&q| q != i && q != j)
                                .map(|q| kappa[q])
                                .collect();
                            elementary_all(&rest, m - 2)[m - 2]
                        };
                        s += e[m] * (d2 / h[m] - dh(m, i) * dh(m, j) / (h[m] * h[m]));
                    }
                    value * s
                })
            });
            RawEval {
                value,
                gradient,
                hessian,
            }
        }
    }
}

/// Number of monomials of degree `k` in `n` variables, `C(n + k - 1, k)`.
pub fn complete_monomial_count(n: usize, k: usize) -> f64 {
    binomial(n + k - 1, k)
}

/// `C(n, k)`, the value of `H_k` at `(1, ..., 1)`.
pub fn elementary_count(n: usize, k: usize) -> f64 {
    binomial(n, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(name: &str, n: usize) -> CurvatureFunction {
        CurvatureFunction::parse(name, n).unwrap()
    }

    #[test]
    fn sigma2_in_two_dimensions_is_geometric_mean() {
        let s = f("sigma_k:2", 2);
        assert!((s.value(&[1.0, 4.0]).unwrap() - 2.0).abs() < 1e-14);
        assert!((s.normalization() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mean_is_normalized() {
        let m = f("mean", 3);
        assert!((m.value(&[1.0, 1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        let e = m.eval_with_derivatives(&[0.3, 2.0, 7.0]).unwrap();
        assert!(e.hessian.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn sigma2_in_three_dimensions_scales_by_inverse_root_three() {
        let s = f("sigma_k:2", 3);
        assert!((s.normalization() - 3f64.powf(-0.5)).abs() < 1e-15);
        assert!((s.value(&[1.0, 1.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_mean_gradient_at_unit_vector() {
        for n in 1..=4 {
            let g = f(&format!("sigma_k:{n}"), n);
            let e = g.eval_with_derivatives(&vec![1.0; n]).unwrap();
            for gi in e.gradient {
                assert!((gi - 1.0 / n as f64).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn power_mean_half() {
        let p = f("power_mean:0.5", 2);
        assert!((p.value(&[1.0, 4.0]).unwrap() - 2.25).abs() < 1e-14);
    }

    #[test]
    fn inverse_examples() {
        let s = f("sigma_k:3", 3);
        let si = invert(&s);
        let k = [0.7, 1.3, 2.9];
        assert!((si.value(&k).unwrap() - s.value(&k).unwrap()).abs() < 1e-14);

        let harmonic = invert(&f("power_mean:1", 2));
        assert!((harmonic.value(&[1.0, 3.0]).unwrap() - 1.5).abs() < 1e-14);
        let pm = f("power_mean:-1", 2);
        assert!((pm.value(&[1.0, 3.0]).unwrap() - 1.5).abs() < 1e-14);

        let mi = invert(&f("mean", 2));
        assert!((mi.value(&[2.0, 2.0]).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn elementary_symmetric_examples() {
        assert_eq!(elementary_symmetric(&[1.0, 2.0, 3.0], 2).unwrap(), 11.0);
        assert_eq!(elementary_symmetric(&[5.0, 2.0], 0).unwrap(), 1.0);
        assert_eq!(elementary_symmetric(&[1.0, 1.0, 1.0], 3).unwrap(), 1.0);
        assert!(matches!(
            elementary_symmetric(&[1.0, 2.0], 3),
            Err(CurvatureError::IndexOutOfRange { k: 3, n: 2 })
        ));
    }

    #[test]
    fn classifier_examples() {
        let mean = f("mean", 3);
        assert_eq!(
            mean.check_strict_concavity(&[1.0, 2.0, 3.0], None).unwrap(),
            Concavity::ConcaveDegenerate
        );
        let s2 = f("sigma_k:2", 2);
        assert_eq!(
            s2.check_strict_concavity(&[1.0, 2.0], None).unwrap(),
            Concavity::StrictlyConcave
        );
        let pm = f("power_mean:0.5", 3);
        assert_eq!(
            pm.check_strict_concavity(&[1.0, 2.0, 3.0], None).unwrap(),
            Concavity::StrictlyConcave
        );
        let norm = f("norm_A", 2);
        assert_eq!(
            norm.check_strict_concavity(&[1.0, 2.0], None).unwrap(),
            Concavity::NotConcave
        );
    }

    #[test]
    fn construction_errors_name_the_constraint() {
        let err = CurvatureFunction::parse("power_mean:1.5", 2).unwrap_err();
        assert!(err.to_string().contains("|r| <= 1"), "{err}");
        let err = CurvatureFunction::parse("quotient:1:2", 3).unwrap_err();
        assert!(err.to_string().contains("l < k"), "{err}");
        let err = CurvatureFunction::parse("geom:0.5,0.6", 2).unwrap_err();
        assert!(err.to_string().contains("sum"), "{err}");
        assert!(matches!(
            CurvatureFunction::parse("sigma:2", 2),
            Err(CurvatureError::MalformedName(_))
        ));
    }

    #[test]
    fn domain_errors() {
        let m = f("mean", 2);
        assert!(matches!(
            m.value(&[1.0, -0.5]),
            Err(CurvatureError::OutsideCone { index: 1, .. })
        ));
        assert!(matches!(
            m.value(&[1.0]),
            Err(CurvatureError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn names_round_trip() {
        for name in [
            "mean",
            "sigma_k:2",
            "power_mean:0.5",
            "power_mean:-1",
            "quotient:2:1",
            "geom:0.5,0.5",
            "complete:2",
            "norm_A",
            "inverse:sigma_k:2",
            "inverse:inverse:geom:0.25,0.75",
        ] {
            let fam: Family = name.parse().unwrap();
            assert_eq!(fam.to_string(), name);
        }
    }
}
