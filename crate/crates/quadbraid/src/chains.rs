//! Double-row transfer matrices and χ-conjugation.
//!
//! The auxiliary space is leg 0 and the quantum spaces are legs `1..=L`,
//! with `L = N` for soliton preserving chains and `L = 2N` otherwise.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{Boundary, ChiMode, Flavor, ModelSpec};
use crate::par::{self, Execution};
use crate::sampling::Sampler;
use crate::shift::{DifferenceOperator, DynamicalMatrix, LambdaOp, ShiftMode};
use crate::tensor::{DenseOperator, Leg, C64, ZERO};
use crate::verifier::{placed, SamplePoint};

pub const AUX: Leg = 0;

#[derive(Clone, Debug)]
pub struct ChainSpec {
    pub model: ModelSpec,
    /// Number of sites, or of site pairs for SNP chains.
    pub sites: usize,
    pub chi_mode: ChiMode,
    /// Quantum spectral parameters, one per quantum leg.
    pub quantum_u: Vec<C64>,
    /// Semidynamical chains start as `…C₀₁T₀D₀₁…` (shifts on odd legs)
    /// when set, and as `…A₀₁T₀B₀₁…` (shifts on even legs) otherwise.
    pub odd_start: bool,
}

impl ChainSpec {
    pub fn new(model: ModelSpec, sites: usize, chi_mode: ChiMode) -> Result<Self> {
        if sites == 0 {
            return Err(Error::Dimension("a chain needs at least one site".into()));
        }
        if model.flavor == Flavor::Semidynamical && model.boundary == Boundary::SP {
            return Err(Error::Unsupported("semidynamical chains are soliton non-preserving".into()));
        }
        let legs = match model.boundary {
            Boundary::SP => sites,
            Boundary::SNP => 2 * sites,
        };
        Ok(ChainSpec { model, sites, chi_mode, quantum_u: vec![ZERO; legs], odd_start: true })
    }

    pub fn leg_count(&self) -> usize {
        self.quantum_u.len()
    }

    pub fn quantum_legs(&self) -> Vec<Leg> {
        (1..=self.leg_count() as Leg).collect()
    }

    pub fn all_legs(&self) -> Vec<Leg> {
        (0..=self.leg_count() as Leg).collect()
    }

    pub fn dimension(&self) -> usize {
        self.model.n.pow(self.leg_count() as u32)
    }

    pub fn with_quantum_u(mut self, u: Vec<C64>) -> Result<Self> {
        if u.len() != self.leg_count() {
            return Err(Error::Dimension(format!("{} quantum parameters for {} legs", u.len(), self.leg_count())));
        }
        self.quantum_u = u;
        Ok(self)
    }

    fn u_of(&self, leg: Leg) -> C64 {
        self.quantum_u[leg as usize - 1]
    }
}

#[derive(Clone, Debug)]
pub struct TransferMatrix {
    pub u: C64,
    pub value: DifferenceOperator,
}

impl TransferMatrix {
    /// The zero-shift coefficient at λ, refusing a nonvanishing shift part.
    pub fn pure_at(&self, lam: &[C64], tol: f64) -> Result<DenseOperator> {
        self.value.eval(lam)?.collapse(tol)
    }

    /// Action on λ-independent functions: the sum of all coefficients.
    pub fn on_constants(&self, lam: &[C64]) -> Result<DenseOperator> {
        let t = self.value.eval(lam)?;
        let mut acc = DenseOperator::zeros(t.legs(), t.n());
        for (_, m) in t.iter() {
            acc = acc.add(m)?;
        }
        Ok(acc)
    }
}

/// `Π_i χ_i` (dynamical, shifted by the later legs) or `Π_i χ_iᵗ`
/// (non-dynamical), over all quantum legs for SP chains and even legs for
/// SNP chains, at the quantum spectral parameters.
pub fn conjugator(chain: &ChainSpec, chi: &DynamicalMatrix) -> Result<LambdaOp> {
    let m = &chain.model;
    let chi = chi.with_step(m.step());
    let legs = chain.quantum_legs();
    let mut ops = Vec::new();
    for &k in &legs {
        if m.boundary == Boundary::SNP && k % 2 == 1 {
            continue;
        }
        let shifts = shifts_after(chain, k);
        let op = chi.on(&[k]).at(&[chain.u_of(k)]);
        let op = if m.flavor == Flavor::FullyDynamical { op } else { op.transpose() };
        ops.push(op.weight_shift(&shifts.iter().map(|&l| (l, 1)).collect::<Vec<_>>())?);
    }
    let n = m.n;
    let all = legs.clone();
    Ok(LambdaOp::new(&legs, n, m.step(), move |lam| {
        let mut acc = DenseOperator::identity(&all, n);
        for o in &ops {
            acc = acc.mul(&o.eval(lam)?)?;
        }
        Ok(acc)
    }))
}

/// `‖t̃(u) − M t(u) M⁻¹‖` where `t̃` comes from the χ-conjugated model with
/// χ omitted and `t` from the original model with χ included.
pub fn covariance_residual(chain: &ChainSpec, chi: &DynamicalMatrix, u: C64, lam: &[C64]) -> Result<f64> {
    covariance_residual_with(chain, chi, u, lam, Display::Corrected)
}

pub fn covariance_residual_with(
    chain: &ChainSpec,
    chi: &DynamicalMatrix,
    u: C64,
    lam: &[C64],
    table: Display,
) -> Result<f64> {
    let original =
        ChainSpec { chi_mode: ChiMode::Nondiagonal, model: chain.model.clone().with_chi(chi.clone(), false), ..chain.clone() };
    let conj = ChainSpec { chi_mode: ChiMode::Identity, model: chi_conjugate_with(&chain.model, chi, table)?, ..chain.clone() };
    let m = conjugator(chain, chi)?;
    let lhs = transfer(&conj, u)?.value;
    let rhs = DifferenceOperator::product(&[
        DifferenceOperator::pure(&m),
        transfer(&original, u)?.value,
        DifferenceOperator::pure(&m.inverse()),
    ])?;
    lhs.eval(lam)?.distance(&rhs.eval(lam)?)
}

/// `χᵗ` at one spectral value, conjugated into a two-leg factor.
fn chi_t(chi: &DynamicalMatrix, leg: Leg) -> DynamicalMatrix {
    chi.on(&[leg]).map(&[leg], |m| Ok(m.transpose()))
}

fn chi_t_inv(chi: &DynamicalMatrix, leg: Leg) -> DynamicalMatrix {
    chi.on(&[leg]).map(&[leg], |m| Ok(m.inverse()?.transpose()))
}

/// Redefines the structure matrices so that the dual representation becomes
/// trivial and `T̃ = χᵗT`.
///
/// The dual data is carried over unchanged; only the direct algebra is
/// retargeted.
pub fn chi_conjugate(model: &ModelSpec, chi: &DynamicalMatrix) -> Result<ModelSpec> {
    chi_conjugate_with(model, chi, Display::Corrected)
}

/// As [`chi_conjugate`]; `Display::Printed` places the fully dynamical `Ã`
/// shift on `χ₂⁻¹(h₁)` instead of `χ₁⁻¹(h₂)`.
pub fn chi_conjugate_with(model: &ModelSpec, chi: &DynamicalMatrix, table: Display) -> Result<ModelSpec> {
    let step = model.step();
    let chi = chi.with_step(step);
    if model.flavor == Flavor::FullyDynamical || model.flavor == Flavor::Semidynamical {
        let probe = Sampler::new(0, "chi_conjugate", 0)
            .point(1, model.n, |u, l| model.admissible(u, l))
            .ok_or_else(|| Error::SingularPoint("no admissible probe".into()))?;
        if model.flavor == Flavor::FullyDynamical && chi.eval(&probe.0, &probe.1)?.offdiagonal_norm() > 0.0 {
            return Err(Error::NonDiagonalChi);
        }
    }
    let dynamic = model.flavor != Flavor::Nondynamical;
    let fully = model.flavor == Flavor::FullyDynamical;
    let (c1, c2) = (chi_t(&chi, 1), chi_t(&chi, 2));
    let (c1i, c2i) = (chi_t_inv(&chi, 1), chi_t_inv(&chi, 2));
    let at = |m: &DynamicalMatrix, legs: &[Leg], u: &[C64], shifts: &[Leg]| placed(m, legs, u, shifts);
    let n = model.n;

    let (a, b, cc) = (model.a.clone(), model.b.clone(), model.c.clone());
    let (k1, k2, k1i, k2i) = (c1.clone(), c2.clone(), c1i.clone(), c2i.clone());
    let a_t = DynamicalMatrix::new(&[1, 2], n, 2, step, move |u, lam| {
        let (s2, s1i, s2i): (&[Leg], &[Leg], &[Leg]) = match (fully, table) {
            (false, _) => (&[], &[], &[]),
            (true, Display::Corrected) => (&[1], &[2], &[]),
            (true, Display::Printed) => (&[1], &[], &[1]),
        };
        let ops = [
            at(&k1, &[1], &u[..1], &[])?,
            at(&k2, &[2], &u[1..], s2)?,
            at(&a, &[1, 2], u, &[])?,
            at(&k1i, &[1], &u[..1], s1i)?,
            at(&k2i, &[2], &u[1..], s2i)?,
        ];
        crate::verifier::product_at(&ops, lam)
    });
    let (k2, k2i) = (c2.clone(), c2i.clone());
    let b_t = DynamicalMatrix::new(&[1, 2], n, 2, step, move |u, lam| {
        let s: &[Leg] = if dynamic { &[1] } else { &[] };
        let ops = [at(&k2, &[2], &u[1..], &[])?, at(&b, &[1, 2], u, &[])?, at(&k2i, &[2], &u[1..], s)?];
        crate::verifier::product_at(&ops, lam)
    });
    let (k1, k1i) = (c1.clone(), c1i.clone());
    let c_t = DynamicalMatrix::new(&[1, 2], n, 2, step, move |u, lam| {
        let s: &[Leg] = if dynamic { &[2] } else { &[] };
        let ops = [at(&k1, &[1], &u[..1], &[])?, at(&cc, &[1, 2], u, &[])?, at(&k1i, &[1], &u[..1], s)?];
        crate::verifier::product_at(&ops, lam)
    });
    let (t, k) = (model.t.clone(), c1.clone());
    let t_t = DynamicalMatrix::new(&[1], n, 1, step, move |u, lam| k.eval(u, lam)?.mul(&t.eval(u, lam)?));
    let identity = DynamicalMatrix::constant(DenseOperator::identity(&[1], n), 1, step);
    let mut out = model.clone().with_chi(identity, true).with_t(t_t);
    out.a = a_t;
    out.b = b_t;
    out.c = c_t;
    out.name = format!("{}~", model.name);
    Ok(out)
}

/// One structure-matrix factor `M_{0k}(u, u_k)` shifted on `shifts`.
fn factor(m: &DynamicalMatrix, k: Leg, u: C64, uk: C64, shifts: &[Leg]) -> Result<DifferenceOperator> {
    Ok(DifferenceOperator::pure(&placed(m, &[AUX, k], &[u, uk], shifts)?))
}

/// The boundary factor appended on the right (dynamical) or left
/// (non-dynamical) of the double row.
pub(crate) fn chi_factor(chain: &ChainSpec, u: C64) -> Result<Option<DifferenceOperator>> {
    let m = &chain.model;
    if chain.chi_mode == ChiMode::Identity {
        return Ok(None);
    }
    let chi = m.chi.with_step(m.step()).on(&[AUX]);
    if chain.chi_mode == ChiMode::Diagonal {
        let probe = Sampler::new(0, "chi_factor", 0)
            .point(1, m.n, |uu, l| m.admissible(uu, l))
            .ok_or_else(|| Error::SingularPoint("no admissible probe".into()))?;
        if chi.eval(&probe.0, &probe.1)?.offdiagonal_norm() > 0.0 {
            return Err(Error::NonDiagonalChi);
        }
    }
    let op: LambdaOp = match m.flavor {
        Flavor::FullyDynamical => chi.at(&[u]).sc_shift(ShiftMode::SC, 1, &[AUX])?.transpose(),
        _ => chi.at(&[u]).transpose(),
    };
    Ok(Some(DifferenceOperator::pure(&op)))
}

/// Legs that the factor on leg `k` is shifted by.
pub(crate) fn shifts_after(chain: &ChainSpec, k: Leg) -> Vec<Leg> {
    let l = chain.leg_count() as Leg;
    match chain.model.flavor {
        Flavor::Nondynamical => vec![],
        Flavor::FullyDynamical => (k + 1..=l).collect(),
        Flavor::Semidynamical => {
            let parity = if chain.odd_start { 1 } else { 0 };
            (k + 1..=l).filter(|j| j % 2 == parity).collect()
        }
    }
}

/// Which structure matrices sit on leg `k` of the double row.
pub(crate) fn row_matrices(chain: &ChainSpec, k: Leg) -> (&DynamicalMatrix, &DynamicalMatrix) {
    let m = &chain.model;
    match m.boundary {
        Boundary::SP => (&m.a, &m.b),
        Boundary::SNP => {
            let c_leg = if chain.odd_start || m.flavor != Flavor::Semidynamical { k % 2 == 1 } else { k.is_multiple_of(2) };
            if c_leg {
                (&m.c, &m.d)
            } else {
                (&m.a, &m.b)
            }
        }
    }
}

/// `t(u)` for the chain's flavor and boundary.
pub fn transfer(chain: &ChainSpec, u: C64) -> Result<TransferMatrix> {
    let m = &chain.model;
    let (n, step) = (m.n, m.step());
    let l = chain.leg_count() as Leg;
    let mut factors: Vec<DifferenceOperator> = Vec::new();
    let chi = chi_factor(chain, u)?;
    match m.flavor {
        Flavor::FullyDynamical => factors.push(DifferenceOperator::exp_shift(AUX, -1, n, step)),
        _ => {
            if let Some(c) = &chi {
                factors.push(c.clone());
            }
        }
    }
    for k in (1..=l).rev() {
        let (left, _) = row_matrices(chain, k);
        factors.push(factor(left, k, u, chain.u_of(k), &shifts_after(chain, k))?);
    }
    let t_shift = shifts_after(chain, 0);
    factors.push(DifferenceOperator::pure(&placed(&m.t.with_step(step), &[AUX], &[u], &t_shift)?));
    for k in 1..=l {
        let (_, right) = row_matrices(chain, k);
        factors.push(factor(right, k, u, chain.u_of(k), &shifts_after(chain, k))?);
    }
    match m.flavor {
        Flavor::FullyDynamical => {
            factors.push(DifferenceOperator::exp_shift(AUX, 1, n, step));
            if let Some(c) = chi {
                factors.push(c);
            }
        }
        Flavor::Semidynamical => factors.push(DifferenceOperator::exp_shift(AUX, 1, n, step)),
        Flavor::Nondynamical => {}
    }
    let value = DifferenceOperator::product(&factors)?.trace(AUX)?;
    Ok(TransferMatrix { u, value })
}

/// `Σ_i χ_ii(λ − step·e_i)` at spectral value `u`.
pub fn trace_chi_sc(model: &ModelSpec, u: C64, lam: &[C64]) -> Result<C64> {
    let chi = model.chi.with_step(model.step());
    Ok(chi.at(&[u]).sc_shift(ShiftMode::SC, 1, &[1])?.eval(lam)?.trace())
}

/// Closed form of `t(0)` for SP chains: `T₁(0; h_{>1})` times `tr χ^{SC}`
/// (dynamical) or `tr χ` (non-dynamical), and times `n` when χ is omitted.
pub fn t_zero_sp(chain: &ChainSpec, lam: &[C64]) -> Result<DenseOperator> {
    let m = &chain.model;
    if m.boundary != Boundary::SP {
        return Err(Error::Unsupported("t(0) closed form needs an SP chain".into()));
    }
    let legs = chain.quantum_legs();
    let shift: Vec<Leg> = shifts_after(chain, 1);
    let t1 = placed(&m.t.with_step(m.step()), &[1], &[ZERO], &shift)?.eval(lam)?.embed(&legs)?;
    let factor = match (chain.chi_mode, m.flavor) {
        (ChiMode::Identity, _) => C64::new(m.n as f64, 0.0),
        (_, Flavor::Nondynamical) => m.chi.eval(&[ZERO], lam)?.trace(),
        _ => trace_chi_sc(m, ZERO, lam)?,
    };
    Ok(t1.scale(factor))
}

/// `X_k = tr₀ P₀ₖ B₀ₖ(0,0)` at λ.
pub fn x_operator(model: &ModelSpec, k: Leg, lam: &[C64]) -> Result<DenseOperator> {
    let b = model.b.on(&[AUX, k]).eval(&[ZERO, ZERO], lam)?;
    let p = DenseOperator::permutation(AUX, k, &[AUX, k], model.n)?;
    p.mul(&b)?.partial_trace(AUX)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Display {
    /// Shift placements and boundary factor exactly as printed.
    Printed,
    /// Uniform `h_<` placements and the boundary factor
    /// `tr₀ P₀ₖ e^{−γ𝒟ₖ} B₀ₖ e^{γ𝒟₀}` obtained by direct evaluation.
    Corrected,
}

pub(crate) fn constant_p(a: Leg, b: Leg, n: usize, step: C64) -> Result<DifferenceOperator> {
    Ok(DifferenceOperator::constant(DenseOperator::permutation(a, b, &[a.min(b), a.max(b)], n)?, step))
}

pub(crate) fn at_zero(m: &DynamicalMatrix, legs: &[Leg], shifts: &[Leg]) -> Result<DifferenceOperator> {
    Ok(DifferenceOperator::pure(&placed(m, legs, &vec![ZERO; m.arity()], shifts)?))
}

/// `X_k` as a λ-function on leg `k`.
pub fn x_lambda(model: &ModelSpec, k: Leg) -> LambdaOp {
    let m = model.clone();
    LambdaOp::new(&[k], model.n, model.step(), move |lam| x_operator(&m, k, lam))
}

/// `tr₀(P₀ₖ e^{−γ𝒟ₖ} B₀ₖ e^{γ𝒟₀} χ₀^{SC t})`, with χ omitted when `chi` is `None`.
pub fn boundary_trace(model: &ModelSpec, k: Leg, chi: Option<&DynamicalMatrix>) -> Result<DifferenceOperator> {
    let (n, step) = (model.n, model.step());
    let mut f = vec![
        constant_p(AUX, k, n, step)?,
        DifferenceOperator::exp_shift(k, -1, n, step),
        at_zero(&model.b, &[AUX, k], &[])?,
        DifferenceOperator::exp_shift(AUX, 1, n, step),
    ];
    if let Some(chi) = chi {
        let op = chi.with_step(step).on(&[AUX]).at(&[ZERO]).sc_shift(ShiftMode::SC, 1, &[AUX])?.transpose();
        f.push(DifferenceOperator::pure(&op));
    }
    DifferenceOperator::product(&f)?.trace(AUX)
}

/// The displayed product for `t(0)` of an SNP chain.
pub fn t_zero_snp_display(chain: &ChainSpec, display: Display) -> Result<DifferenceOperator> {
    let m = &chain.model;
    if m.boundary != Boundary::SNP {
        return Err(Error::Unsupported("SNP display needs an SNP chain".into()));
    }
    let (n, step) = (m.n, m.step());
    let big = chain.sites as Leg;
    let l = 2 * big;
    let later = |k: Leg| -> Vec<Leg> { (k + 1..=l).collect() };
    let later_odd = |k: Leg| -> Vec<Leg> { (k + 1..=l).filter(|j| j % 2 == 1).collect() };
    let flavor = m.flavor;
    let c_shift = |k: Leg| match flavor {
        Flavor::Nondynamical => vec![],
        Flavor::Semidynamical => later_odd(k),
        Flavor::FullyDynamical => later(k),
    };
    let b_shift = |k: Leg| -> Vec<Leg> {
        match (flavor, display) {
            (Flavor::Nondynamical, _) => vec![],
            (Flavor::FullyDynamical, Display::Corrected) => later(k),
            _ => {
                let mut v = vec![1];
                v.extend(later_odd(k));
                v
            }
        }
    };
    let with_chi = chain.chi_mode != ChiMode::Identity;
    let mut f = Vec::new();
    for j in (1..=big).rev() {
        f.push(at_zero(&m.c, &[2 * j, 2 * j - 1], &c_shift(2 * j))?);
    }
    for j in 1..big {
        f.push(constant_p(2 * j, 2 * j + 2, n, step)?);
    }
    for j in (1..big).rev() {
        f.push(constant_p(2 * j + 1, 2 * j - 1, n, step)?);
    }
    let fully = flavor == Flavor::FullyDynamical;
    if fully && l != 1 {
        f.push(constant_p(1, l, n, step)?);
    }
    for j in 1..big {
        f.push(at_zero(&m.b, &[2 * j + 1, 2 * j], &b_shift(2 * j + 1))?);
    }
    let t = m.t.with_step(step);
    match flavor {
        Flavor::FullyDynamical => f.push(at_zero(&t, &[1], &later(1))?),
        Flavor::Semidynamical => {
            f.push(at_zero(&t, &[l], &later_odd(0).into_iter().filter(|&j| j < l).collect::<Vec<_>>())?);
            f.push(constant_p(1, l, n, step)?);
        }
        Flavor::Nondynamical => {
            f.push(at_zero(&t, &[l], &[])?);
            f.push(constant_p(1, l, n, step)?);
        }
    }
    match (flavor, display) {
        (Flavor::FullyDynamical, Display::Printed) if !with_chi => {
            f.push(DifferenceOperator::exp_shift(l, 1, n, step));
            f.push(DifferenceOperator::pure(&x_lambda(m, l)));
            f.push(DifferenceOperator::exp_shift(l, -1, n, step));
        }
        (Flavor::FullyDynamical, _) => f.push(boundary_trace(m, l, if with_chi { Some(&m.chi) } else { None })?),
        (Flavor::Semidynamical, _) => {
            let tail = DifferenceOperator::product(&[
                constant_p(AUX, l, n, step)?,
                at_zero(&m.b, &[AUX, l], &[])?,
                DifferenceOperator::exp_shift(AUX, 1, n, step),
            ])?
            .trace(AUX)?;
            f.push(tail);
        }
        (Flavor::Nondynamical, _) => f.push(DifferenceOperator::pure(&x_lambda(m, l))),
    }
    DifferenceOperator::product(&f)
}

/// `Σ_k E_kk ⊗ … : tr₀(P₀ₖ B₀ₖ e^{γ𝒟₀})` and `e^{γ𝒟ₖ} X̂ₖ` with
/// `X̂_ij = B_iiij(λ − step·e_i)`, for partially zero-weight `B`.
pub fn partial_weight_rewrite(model: &ModelSpec, k: Leg) -> Result<(DifferenceOperator, DifferenceOperator)> {
    let (n, step) = (model.n, model.step());
    let lhs = DifferenceOperator::product(&[
        constant_p(AUX, k, n, step)?,
        at_zero(&model.b, &[AUX, k], &[])?,
        DifferenceOperator::exp_shift(AUX, 1, n, step),
    ])?
    .trace(AUX)?;
    let b = model.b.on(&[AUX, k]);
    let x = LambdaOp::new(&[k], n, step, move |lam| {
        let mut v = vec![ZERO; n * n];
        for i in 0..n {
            let mut s = vec![0; n];
            s[i] = -1;
            let bi = b.eval(&[ZERO, ZERO], &crate::shift::shifted(lam, step, &s))?;
            for j in 0..n {
                v[i * n + j] = bi.entry(&[i, i], &[i, j]);
            }
        }
        DenseOperator::from_rows(vec![k], n, &v)
    });
    let rhs = DifferenceOperator::exp_shift(k, 1, n, step).mul(&DifferenceOperator::pure(&x))?;
    Ok((lhs, rhs))
}

/// `M̄ = M^{−SL}`: entry `(r, c)` taken at `λ − step·Σ e_{row digit}`.
pub fn bar(op: &LambdaOp) -> Result<LambdaOp> {
    let legs = op.legs().to_vec();
    op.sc_shift(ShiftMode::SL, 1, &legs)
}

/// Both ends of the SNP boundary-term rewriting on legs `a = 2N−1`,
/// `b = 2N`, with the common right factor dropped:
///
/// `tr₀(e^{−γ𝒟₀} M_{b0} e^{γ𝒟₀} C_{ba} P_{0a} e^{γ𝒟₀} B̄_{0a})` and
/// `e^{γ𝒟_b + γ𝒟_a} W e^{−γ𝒟_b}` with
/// `W = tr₀(P_{0a} M̄_{ba}(−h₀) C̄_{b0} B̄_{0a}(−h_b))`.
///
/// `check` is the two-leg slot holding `Ǎ'`; any total zero-weight
/// λ-function may be substituted. Also returns `W` itself.
pub fn snp_boundary_rewrite(
    model: &ModelSpec,
    check: &LambdaOp,
    a: Leg,
    b: Leg,
) -> Result<(DifferenceOperator, DifferenceOperator, DifferenceOperator)> {
    let (n, step) = (model.n, model.step());
    let e = |l: Leg, s: i32| DifferenceOperator::exp_shift(l, s, n, step);
    let pure = |op: LambdaOp| DifferenceOperator::pure(&op);
    let zero = [ZERO, ZERO];
    let c_ba = model.c.on(&[b, a]).at(&zero);
    let c_b0 = model.c.on(&[b, AUX]).at(&zero);
    let b_0a = model.b.on(&[AUX, a]).at(&zero);
    let m_b0 = check.relabel(&[b, AUX]);
    let m_ba = check.relabel(&[b, a]);
    let first = DifferenceOperator::product(&[
        e(AUX, -1),
        pure(m_b0),
        e(AUX, 1),
        pure(c_ba),
        constant_p(AUX, a, n, step)?,
        e(AUX, 1),
        pure(bar(&b_0a)?),
    ])?
    .trace(AUX)?;
    let w = DifferenceOperator::product(&[
        constant_p(AUX, a, n, step)?,
        pure(bar(&m_ba)?.weight_shift(&[(AUX, -1)])?),
        pure(bar(&c_b0)?),
        pure(bar(&b_0a)?.weight_shift(&[(b, -1)])?),
    ])?
    .trace(AUX)?;
    let last = DifferenceOperator::product(&[e(b, 1), e(a, 1), w.clone(), e(b, -1)])?;
    Ok((first, last, w))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommutationReport {
    pub sites: usize,
    pub on_constants: bool,
    pub points: usize,
    pub skipped: usize,
    pub max_residual: f64,
    pub worst_point: Option<SamplePoint>,
}

/// Seeded spectral and dynamical samples admissible for `chain`.
pub fn seeded_grid(chain: &ChainSpec, seed: u64, count: usize) -> (Vec<C64>, Vec<C64>, Vec<Vec<C64>>) {
    let m = &chain.model;
    let mut us = Vec::new();
    let mut vs = Vec::new();
    let mut lams = Vec::new();
    let probe = vec![ZERO; m.n];
    for i in 0..count as u64 {
        let mut s = Sampler::new(seed, "grid/u", i);
        if let Some((u, _)) = s.point(2, 0, |u, _| m.admissible(u, &lam_probe(m, &probe))) {
            us.push(u[0]);
            vs.push(u[1]);
        }
    }
    for i in 0..count as u64 {
        let mut s = Sampler::new(seed, "grid/lambda", i);
        let spectral: Vec<C64> = us.iter().chain(vs.iter()).copied().chain([ZERO]).collect();
        if let Some((_, l)) = s.point(0, m.n, |_, l| m.admissible(&spectral, l)) {
            lams.push(l);
        }
    }
    (us, vs, lams)
}

fn lam_probe(m: &ModelSpec, base: &[C64]) -> Vec<C64> {
    // a fixed well-separated λ for screening spectral draws
    base.iter().enumerate().map(|(i, _)| C64::new(0.45 - 0.7 * i as f64, 0.11 * (i as f64 + 1.0))).take(m.n).collect()
}

/// Max over the `(u, v, λ)` grid of `‖[t(u), t(v)]‖` grouped by shift vector.
pub fn commutation_scan(
    chain: &ChainSpec,
    us: &[C64],
    vs: &[C64],
    lams: &[Vec<C64>],
    exec: Execution,
) -> Result<CommutationReport> {
    if us.is_empty() || vs.is_empty() || lams.is_empty() {
        return Err(Error::Dimension("commutation scan needs at least one sample of each kind".into()));
    }
    let mut grid = Vec::new();
    for &u in us {
        for &v in vs {
            for lam in lams {
                grid.push((u, v, lam.clone()));
            }
        }
    }
    // λ-independent data in a semidynamical chain: compare the action on
    // λ-independent functions, where the trailing shifts act trivially
    let on_constants = chain.model.flavor == Flavor::Semidynamical && chain.model.is_lambda_independent();
    let out = par::map(&grid, exec, |(u, v, lam)| -> Result<f64> {
        let tu = transfer(chain, *u)?;
        let tv = transfer(chain, *v)?;
        if on_constants {
            let (a, b) = (tu.on_constants(lam)?, tv.on_constants(lam)?);
            return crate::tensor::commutator_norm(&a, &b);
        }
        let comm = tu.value.commutator(&tv.value)?.eval(lam)?;
        Ok(comm.iter().map(|(_, m)| m.norm()).fold(0.0, f64::max))
    });
    let mut report = CommutationReport { sites: chain.sites, on_constants, points: 0, skipped: 0, max_residual: 0.0, worst_point: None };
    for (r, (u, v, lam)) in out.into_iter().zip(&grid) {
        match r {
            Ok(x) if x.is_finite() => {
                report.points += 1;
                if x >= report.max_residual {
                    report.max_residual = x;
                    report.worst_point = Some(SamplePoint::new(&[*u, *v], lam));
                }
            }
            Ok(_) | Err(Error::SingularPoint(_)) | Err(Error::Singular { .. }) => report.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{control_sixvertex, gl2_model};
    use crate::tensor::{c, re};

    #[test]
    fn equal_arguments_commute_exactly() {
        let ch = ChainSpec::new(control_sixvertex(re(0.35), ZERO, Boundary::SP), 2, ChiMode::Identity).unwrap();
        let r = commutation_scan(&ch, &[c(0.3, 0.1)], &[c(0.3, 0.1)], &[vec![ZERO, ZERO]], Execution::Sequential).unwrap();
        assert_eq!(r.max_residual, 0.0);
    }

    #[test]
    fn gl2_sp_t_zero_is_twice_identity() {
        let ch = ChainSpec::new(gl2_model(re(0.2), re(0.7)), 2, ChiMode::Identity).unwrap();
        let lam = [c(0.4, 0.1), c(-0.3, 0.05)];
        let t0 = transfer(&ch, ZERO).unwrap().pure_at(&lam, 0.0).unwrap();
        assert!(t0.distance(&DenseOperator::identity(&[1, 2], 2).scale(re(2.0))).unwrap() < 1e-12);
    }

    #[test]
    fn zero_sites_rejected() {
        assert!(ChainSpec::new(gl2_model(re(0.2), re(0.7)), 0, ChiMode::Identity).is_err());
    }
}
