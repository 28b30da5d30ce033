//! Model catalog: the gl₂ fully dynamical model and a λ-independent
//! six-vertex control.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shift::DynamicalMatrix;
use crate::tensor::{re, DenseOperator, Leg, C64, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Nondynamical,
    Semidynamical,
    FullyDynamical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    SP,
    SNP,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiMode {
    Identity,
    Diagonal,
    Nondiagonal,
}

/// Shape of the dual relation a model's χ must satisfy.
#[derive(Clone, Debug)]
pub enum DualForm {
    /// `(A⁻¹)^{t12} χ1 ((B^{t1})⁻¹)^{t2} χ2 = χ2 ((C^{t2})⁻¹)^{t1} χ1 (D⁻¹)^{t12}`.
    Transposed,
    /// Exchange-shaped relation with its own structure matrices and
    /// representation `k` (a function of the spectral argument).
    Exchange { a: DynamicalMatrix, b: DynamicalMatrix, c: DynamicalMatrix, d: DynamicalMatrix, k: DynamicalMatrix },
}

type Guard = Arc<dyn Fn(&[C64], &[C64]) -> bool + Send + Sync>;

/// Minimum admissible `|sinh(denominator)|` at sample points.
pub const SINGULAR_GUARD: f64 = 0.1;

#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub n: usize,
    pub gamma: C64,
    pub xi: C64,
    pub flavor: Flavor,
    pub boundary: Boundary,
    pub shift_sign: i32,
    pub a: DynamicalMatrix,
    pub b: DynamicalMatrix,
    pub c: DynamicalMatrix,
    pub d: DynamicalMatrix,
    pub t: DynamicalMatrix,
    pub chi: DynamicalMatrix,
    pub chi_diagonal: bool,
    pub dual: DualForm,
    guard: Guard,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("gamma", &self.gamma)
            .field("xi", &self.xi)
            .field("flavor", &self.flavor)
            .field("boundary", &self.boundary)
            .field("shift_sign", &self.shift_sign)
            .finish()
    }
}

impl ModelSpec {
    /// Translation step of the general relations: `shift_sign·γ`.
    pub fn step(&self) -> C64 {
        self.gamma * self.shift_sign as f64
    }

    /// True when every `|sinh|` denominator is above the guard at these
    /// spectral values and λ.
    pub fn admissible(&self, spectral: &[C64], lam: &[C64]) -> bool {
        (self.guard)(spectral, lam)
    }

    pub fn is_lambda_independent(&self) -> bool {
        self.name.starts_with("sixvertex")
    }

    pub fn with_chi(mut self, chi: DynamicalMatrix, diagonal: bool) -> Self {
        self.chi = chi;
        self.chi_diagonal = diagonal;
        self
    }

    pub fn with_t(mut self, t: DynamicalMatrix) -> Self {
        self.t = t;
        self
    }

    pub fn with_flavor(mut self, flavor: Flavor) -> Self {
        self.flavor = flavor;
        self
    }

    /// Adds `eps` times a fixed unit-norm matrix to every structure
    /// matrix, to `T`, to χ and to the dual relation data.
    pub fn perturbed(mut self, eps: f64) -> Self {
        let noisy = |m: &DynamicalMatrix| -> DynamicalMatrix {
            let legs = m.legs().to_vec();
            let delta = noise(&legs, m.n(), eps);
            m.map(&legs, move |x| x.add(&delta))
        };
        for m in [&mut self.a, &mut self.b, &mut self.c, &mut self.d, &mut self.t, &mut self.chi] {
            *m = noisy(m);
        }
        if let DualForm::Exchange { a, b, c, d, k } = &mut self.dual {
            for m in [a, b, c, d, k] {
                *m = noisy(m);
            }
        }
        self.name = format!("{}+noise", self.name);
        self
    }

    /// Retarget the shift step on every dynamical matrix.
    fn restep(mut self) -> Self {
        let s = self.step();
        for m in [&mut self.a, &mut self.b, &mut self.c, &mut self.d, &mut self.t, &mut self.chi] {
            *m = m.with_step(s);
        }
        if let DualForm::Exchange { a, b, c, d, k } = &mut self.dual {
            for m in [a, b, c, d, k] {
                *m = m.with_step(s);
            }
        }
        self
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<ModelSpec> {
        if cfg.schema != 1 {
            return Err(Error::Unsupported(format!("model schema {}", cfg.schema)));
        }
        if cfg.n != 2 {
            return Err(Error::Unsupported(format!("n = {} (only n = 2 models are in the catalog)", cfg.n)));
        }
        if cfg.shift_sign != 1 && cfg.shift_sign != -1 {
            return Err(Error::Unsupported(format!("shift_sign = {}", cfg.shift_sign)));
        }
        let gamma = cfg.gamma.value();
        let xi = cfg.xi.value();
        let model = match cfg.name.as_str() {
            "gl2" => {
                if cfg.flavor != Flavor::FullyDynamical {
                    return Err(Error::Unsupported("gl2 is a fully dynamical model".into()));
                }
                let mut m = gl2_model(gamma, xi);
                m.boundary = cfg.boundary;
                m.shift_sign = cfg.shift_sign;
                m.restep()
            }
            "sixvertex" => {
                let rho = if cfg.boundary == Boundary::SNP { xi } else { ZERO };
                let mut m = control_sixvertex(gamma, rho, cfg.boundary).with_flavor(cfg.flavor);
                m.shift_sign = cfg.shift_sign;
                m.xi = xi;
                m.restep()
            }
            other => return Err(Error::Unsupported(format!("unknown model {other:?}"))),
        };
        Ok(model)
    }
}

/// A real or `[re, im]` number in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigNumber {
    Real(f64),
    Complex([f64; 2]),
}

impl ConfigNumber {
    pub fn value(&self) -> C64 {
        match *self {
            ConfigNumber::Real(x) => re(x),
            ConfigNumber::Complex([a, b]) => C64::new(a, b),
        }
    }
}

/// On-disk model description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub schema: u32,
    pub name: String,
    pub n: usize,
    pub gamma: ConfigNumber,
    #[serde(default = "default_xi")]
    pub xi: ConfigNumber,
    pub flavor: Flavor,
    pub boundary: Boundary,
    pub chi: ChiMode,
    pub shift_sign: i32,
}

fn default_xi() -> ConfigNumber {
    ConfigNumber::Real(0.0)
}

/// A fixed operator of Frobenius norm `eps` on `legs`.
fn noise(legs: &[Leg], n: usize, eps: f64) -> DenseOperator {
    let dim = n.pow(legs.len() as u32);
    let v: Vec<C64> = (0..dim * dim)
        .map(|k| {
            let x = ((k as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5;
            let y = ((k as f64 + 1.0) * 0.414_213_562_37).fract() - 0.5;
            C64::new(x, y)
        })
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let v: Vec<C64> = v.iter().map(|z| z * (eps / norm)).collect();
    DenseOperator::from_rows(legs.to_vec(), n, &v).expect("noise dimension")
}

fn nonzero(x: C64, what: &str) -> Result<C64> {
    if x.norm() == 0.0 {
        Err(Error::SingularPoint(format!("{what} vanishes")))
    } else {
        Ok(x)
    }
}

fn four(entries: [(usize, usize, C64); 6]) -> Result<DenseOperator> {
    let mut v = vec![ZERO; 16];
    for (r, c, x) in entries {
        v[r * 4 + c] = x;
    }
    DenseOperator::from_rows(vec![1, 2], 2, &v)
}

/// Six-vertex-type 4×4 in the basis 00, 01, 10, 11: diagonal `p, a, d, q`,
/// `b` at (01,10) and `g` at (10,01).
fn gl2_layout(p: C64, q: C64, a: C64, d: C64, b: C64, g: C64) -> Result<DenseOperator> {
    four([(0, 0, p), (3, 3, q), (1, 1, a), (2, 2, d), (1, 2, b), (2, 1, g)])
}

/// `α(λ,u) = sinh(λ12−γ) sinh u / (sinh(u−γ) sinh λ12)` as a function of `x = λ12`.
pub fn gl2_alpha(x: C64, u: C64, gamma: C64) -> Result<C64> {
    Ok((x - gamma).sinh() * u.sinh() / (nonzero((u - gamma).sinh(), "sinh(u-γ)")? * nonzero(x.sinh(), "sinh λ12")?))
}

/// `β(λ,u) = sinh(u−λ12) sinh γ / (sinh(u−γ) sinh λ12)`.
pub fn gl2_beta(x: C64, u: C64, gamma: C64) -> Result<C64> {
    Ok((u - x).sinh() * gamma.sinh() / (nonzero((u - gamma).sinh(), "sinh(u-γ)")? * nonzero(x.sinh(), "sinh λ12")?))
}

fn lam12(lam: &[C64]) -> C64 {
    lam[0] - lam[1]
}

/// The gl₂ dynamical R-matrix on legs (1,2).
pub fn gl2_r(lam: &[C64], u: C64, gamma: C64) -> Result<DenseOperator> {
    let x = lam12(lam);
    gl2_layout(
        ONE,
        ONE,
        gl2_alpha(x, u, gamma)?,
        gl2_alpha(-x, u, gamma)?,
        gl2_beta(x, u, gamma)?,
        gl2_beta(-x, u, gamma)?,
    )
}

fn zeta_tilde(x: C64, u: C64, g: C64) -> Result<C64> {
    let num = g.sinh().powi(2) * (x - u).sinh() * (g * 2.0 - x - u).sinh();
    let den = nonzero(x.sinh() * (g * 2.0 - x).sinh() * (g * 2.0 - u).sinh().powi(2), "ζ̃ denominator")?;
    Ok(1.0 / nonzero(ONE - num / den, "ζ̃ inverse")?)
}

/// The dual matrix exactly as printed.
pub fn gl2_r_dual_printed(lam: &[C64], u: C64, g: C64) -> Result<DenseOperator> {
    let x = lam12(lam);
    let alpha_t = |x: C64| -> Result<C64> {
        Ok(x.sinh() * (u - g).sinh() / nonzero(u.sinh() * (x - g).sinh(), "α̃ denominator")?)
    };
    let beta_t = |x: C64| -> Result<C64> {
        let den = nonzero((g - x).sinh().powi(2) * (g * 2.0 - u).sinh() * u.sinh(), "β̃ denominator")?;
        Ok(-(g.sinh() * x.sinh() * (g - u).sinh() * (g * 2.0 - x - u).sinh()) / den)
    };
    gl2_layout(zeta_tilde(x, u, g)?, zeta_tilde(-x, u, g)?, alpha_t(x)?, alpha_t(-x)?, beta_t(x)?, beta_t(-x)?)
}

/// The dual matrix that satisfies the dual relation with `K(u) = χ(λ,−u)`.
///
/// Diagonal entries are reciprocals of the R entries in swapped slots;
/// off-diagonal entries carry an extra `γ` in both arguments of `β`.
pub fn gl2_r_dual(lam: &[C64], u: C64, g: C64) -> Result<DenseOperator> {
    let x = lam12(lam);
    let a = gl2_alpha(x, u, g)?;
    let am = gl2_alpha(-x, u, g)?;
    gl2_layout(
        zeta_tilde(x, u, g)?,
        zeta_tilde(-x, u, g)?,
        1.0 / nonzero(am, "α(−λ,u)")?,
        1.0 / nonzero(a, "α(λ,u)")?,
        -gl2_beta(-x + g, -u - g, g)? / a,
        -gl2_beta(x + g, -u - g, g)? / am,
    )
}

/// `χ = diag(χ1, χ2)` with the free boundary parameter ξ.
pub fn gl2_chi(lam: &[C64], u: C64, g: C64, xi: C64) -> Result<DenseOperator> {
    let (l1, l2) = (lam[0], lam[1]);
    let x = l1 - l2;
    let c1 = x.sinh() * (-l1 + xi - u + g).sinh()
        / nonzero((x - g).sinh() * (-l1 + xi + u - g).sinh(), "χ1 denominator")?;
    let c2 = x.sinh() * (-l2 + xi - u + g).sinh()
        / nonzero((x + g).sinh() * (-l2 + xi + u - g).sinh(), "χ2 denominator")?;
    DenseOperator::from_rows(vec![1], 2, &[c1, ZERO, ZERO, c2])
}

pub fn gl2_t() -> DenseOperator {
    DenseOperator::identity(&[1], 2)
}

fn far(x: C64) -> bool {
    x.sinh().norm() > SINGULAR_GUARD
}

/// The gl₂ fully dynamical model with structure matrices
/// `A = R12(u1−u2)`, `B = R21(u1+u2)`, `C = R12(u1+u2)`, `D = R21(u1−u2)`.
pub fn gl2_model(gamma: C64, xi: C64) -> ModelSpec {
    let step = -gamma;
    let g = gamma;
    let r = DynamicalMatrix::new(&[1, 2], 2, 1, step, move |u, lam| gl2_r(lam, u[0], g));
    let rd = DynamicalMatrix::new(&[1, 2], 2, 1, step, move |u, lam| gl2_r_dual(lam, u[0], g));
    let diff = |m: &DynamicalMatrix| m.reparam(2, |u| vec![u[0] - u[1]]);
    let sum = |m: &DynamicalMatrix| m.reparam(2, |u| vec![u[0] + u[1]]);
    let a = diff(&r);
    let b = sum(&r).leg_swap(1, 2);
    let c = sum(&r);
    let d = diff(&r).leg_swap(1, 2);
    let chi = DynamicalMatrix::new(&[1], 2, 1, step, move |u, lam| gl2_chi(lam, u[0], g, xi));
    let k = DynamicalMatrix::new(&[1], 2, 1, step, move |u, lam| gl2_chi(lam, -u[0], g, xi));
    let dual = DualForm::Exchange { a: a.clone(), b: sum(&rd).leg_swap(1, 2), c: sum(&rd), d: d.clone(), k };
    let guard: Guard = Arc::new(move |spectral, lam| {
        let x = lam12(lam);
        let lam_ok = (-6..=6).all(|k| far(x + g * k as f64))
            && lam.iter().all(|&l| (-8..=8).all(|m| far(-l + xi + g * m as f64)));
        let spec_ok = spectral.iter().all(|&u| {
            far(u - g) && far(u + g) && far(u - g * 2.0) && far(g * 2.0 - u)
                && lam.iter().all(|&l| (-8..=8).all(|m| far(-l + xi + u + g * m as f64) && far(-l + xi - u + g * m as f64)))
                && (-6..=6).all(|k| far(u - x + g * k as f64) && far(u + x + g * k as f64))
        });
        lam_ok && spec_ok
    });
    ModelSpec {
        name: "gl2".into(),
        n: 2,
        gamma,
        xi,
        flavor: Flavor::FullyDynamical,
        boundary: Boundary::SP,
        shift_sign: -1,
        a,
        b,
        c,
        d,
        t: DynamicalMatrix::constant(gl2_t(), 1, step),
        chi,
        chi_diagonal: true,
        dual,
        guard,
    }
}

/// Trigonometric six-vertex R normalized so that `R(0) = P`.
pub fn sixvertex_r(u: C64, eta: C64) -> Result<DenseOperator> {
    let a = nonzero((u + eta).sinh(), "sinh(u+η)")?;
    let b = u.sinh() / a;
    let c = eta.sinh() / a;
    gl2_layout(ONE, ONE, b, b, c, c)
}

/// λ-independent control: `A = R(u1−u2)`, `B = R21(u1+u2+ρ)`,
/// `C = R12(u1+u2+ρ)`, `D = R21(u1−u2)`, `T = χ = 1`.
///
/// `ρ = 0` gives the soliton preserving chain. A nonzero crossing offset
/// `ρ` keeps every relation (the chain becomes Sklyanin's with
/// alternating inhomogeneities `±ρ/2`) while `B(0,0) ≠ P`, which makes it a
/// soliton non-preserving control.
pub fn control_sixvertex(eta: C64, rho: C64, boundary: Boundary) -> ModelSpec {
    let step = eta;
    let r = DynamicalMatrix::new(&[1, 2], 2, 1, step, move |u, _| sixvertex_r(u[0], eta));
    let a = r.reparam(2, |u| vec![u[0] - u[1]]);
    let c = r.reparam(2, move |u| vec![u[0] + u[1] + rho]);
    let b = c.leg_swap(1, 2);
    let d = a.leg_swap(1, 2);
    let guard: Guard = Arc::new(move |spectral, _| {
        spectral.iter().all(|&u| far(u + eta) && far(u + rho + eta) && far(u - eta) && far(u + rho - eta))
    });
    ModelSpec {
        name: "sixvertex".into(),
        n: 2,
        gamma: eta,
        xi: rho,
        flavor: Flavor::Nondynamical,
        boundary,
        shift_sign: 1,
        a,
        b,
        c,
        d,
        t: DynamicalMatrix::constant(DenseOperator::identity(&[1], 2), 1, step),
        chi: DynamicalMatrix::constant(DenseOperator::identity(&[1], 2), 1, step),
        chi_diagonal: true,
        dual: DualForm::Transposed,
        guard,
    }
}

/// Diagonal six-vertex boundary matrix `K(u) = diag(sinh(ξ+u), sinh(ξ−u))`.
pub fn sixvertex_k(eta: C64, xi: C64) -> DynamicalMatrix {
    DynamicalMatrix::new(&[1], 2, 1, eta, move |u, _| {
        DenseOperator::from_rows(vec![1], 2, &[(xi + u[0]).sinh(), ZERO, ZERO, (xi - u[0]).sinh()])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::c;

    fn lam() -> Vec<C64> {
        vec![c(0.9, 0.0), c(0.2, 0.0)]
    }

    #[test]
    fn r_is_permutation_at_zero() {
        let p = DenseOperator::permutation(1, 2, &[1, 2], 2).unwrap();
        let r = gl2_r(&lam(), ZERO, re(0.2)).unwrap();
        assert!(r.distance(&p).unwrap() < 1e-15);
        let s = sixvertex_r(ZERO, re(0.35)).unwrap();
        assert!(s.distance(&p).unwrap() < 1e-15);
    }

    #[test]
    fn r_tends_to_identity_as_gamma_vanishes() {
        let r = gl2_r(&lam(), re(0.3), re(1e-9)).unwrap();
        assert!(r.distance(&DenseOperator::identity(&[1, 2], 2)).unwrap() < 1e-8);
    }

    #[test]
    fn alpha_reference_value() {
        let a = gl2_alpha(re(0.7), re(0.3), re(0.2)).unwrap();
        let expect = 0.5f64.sinh() * 0.3f64.sinh() / (0.1f64.sinh() * 0.7f64.sinh());
        assert!((a - re(expect)).norm() < 1e-14);
    }

    #[test]
    fn parity_of_entries() {
        let l = vec![c(0.3, 0.1), c(-0.4, 0.05)];
        let lm: Vec<C64> = l.iter().map(|x| -x).collect();
        let u = c(0.27, -0.1);
        let g = re(0.2);
        let r = gl2_r(&l, u, g).unwrap();
        let rm = gl2_r(&lm, u, g).unwrap();
        assert!((r.matrix()[(2, 2)] - rm.matrix()[(1, 1)]).norm() < 1e-15);
        assert!((r.matrix()[(2, 1)] - rm.matrix()[(1, 2)]).norm() < 1e-15);
    }

    #[test]
    fn printed_dual_alpha_is_reciprocal() {
        let l = vec![c(0.3, 0.1), c(-0.4, 0.05)];
        let (u, g) = (c(0.27, -0.1), re(0.2));
        let rt = gl2_r_dual_printed(&l, u, g).unwrap();
        let r = gl2_r(&l, u, g).unwrap();
        assert!((rt.matrix()[(1, 1)] * r.matrix()[(1, 1)] - ONE).norm() < 1e-14);
    }

    #[test]
    fn chi_reference_value() {
        let l = vec![re(0.5), re(-0.1)];
        let (u, g, xi) = (0.15, 0.2, 1.1);
        let ch = gl2_chi(&l, re(u), re(g), re(xi)).unwrap();
        let x = 0.6f64;
        let c1 = x.sinh() * (-0.5 + xi - u + g).sinh() / ((x - g).sinh() * (-0.5 + xi + u - g).sinh());
        assert!((ch.matrix()[(0, 0)] - re(c1)).norm() < 1e-14);
        assert_eq!(ch.matrix()[(0, 1)], ZERO);
    }

    #[test]
    fn singular_denominator_reported() {
        assert!(matches!(gl2_r(&[re(0.3), re(0.3)], re(0.1), re(0.2)), Err(Error::SingularPoint(_))));
        assert!(matches!(gl2_r(&lam(), re(0.2), re(0.2)), Err(Error::SingularPoint(_))));
    }

    #[test]
    fn structure_matrices_of_gl2() {
        let m = gl2_model(re(0.2), re(1.1));
        let p = DenseOperator::permutation(1, 2, &[1, 2], 2).unwrap();
        let l = vec![c(0.4, 0.2), c(-0.3, -0.1)];
        let a = m.a.eval(&[re(0.31), re(0.31)], &l).unwrap();
        assert!(a.distance(&p).unwrap() < 1e-15);
        let u = [re(0.31), re(-0.12)];
        let b = m.b.eval(&u, &l).unwrap();
        let cc = m.c.eval(&u, &l).unwrap();
        assert!(b.distance(&cc.leg_swap(1, 2).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn config_rejects_unknown_model() {
        let cfg = ModelConfig {
            schema: 1,
            name: "xyz".into(),
            n: 2,
            gamma: ConfigNumber::Real(0.2),
            xi: ConfigNumber::Real(1.1),
            flavor: Flavor::FullyDynamical,
            boundary: Boundary::SP,
            chi: ChiMode::Diagonal,
            shift_sign: -1,
        };
        assert!(ModelSpec::from_config(&cfg).is_err());
        let ok = ModelConfig { name: "gl2".into(), ..cfg };
        let m = ModelSpec::from_config(&ok).unwrap();
        assert_eq!(m.step(), re(-0.2));
    }
}
