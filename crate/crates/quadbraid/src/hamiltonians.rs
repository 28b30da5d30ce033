//! Hamiltonians as logarithmic derivatives of transfer matrices at zero
//! spectral parameters, their closed forms, locality and spectra.

use serde::Serialize;

use crate::chains::{self, chi_factor, transfer, ChainSpec, Display, AUX};
use crate::error::{Error, Result};
use crate::models::{Boundary, ChiMode, Flavor, ModelSpec};
use crate::shift::{DifferenceOperator, DynamicalMatrix, LambdaOp, ShiftMode, Terms};
use crate::tensor::{commutator_norm, DenseOperator, Leg, C64, ONE, ZERO};

/// Largest Hilbert space dimension accepted by [`spectrum`].
pub const SPECTRUM_GUARD: usize = 1 << 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FdOptions {
    pub step: f64,
    /// Number of Richardson extrapolation levels on top of the
    /// fourth-order central difference.
    pub richardson: usize,
    pub tolerance: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions { step: 1e-4, richardson: 1, tolerance: 1e-6 }
    }
}

fn central4<F>(f: &F, h: f64) -> Result<DenseOperator>
where
    F: Fn(C64) -> Result<DenseOperator>,
{
    let h = C64::new(h, 0.0);
    let (p1, m1, p2, m2) = (f(h)?, f(-h)?, f(h * 2.0)?, f(-h * 2.0)?);
    let num = p1.sub(&m1)?.scale(C64::new(8.0, 0.0)).sub(&p2.sub(&m2)?)?;
    Ok(num.scale(ONE / (h * 12.0)))
}

/// `f'(0)` by fourth-order central differences with Richardson
/// extrapolation over step halvings.
pub fn derivative<F>(f: F, opts: &FdOptions) -> Result<DenseOperator>
where
    F: Fn(C64) -> Result<DenseOperator>,
{
    let levels = opts.richardson;
    let count = levels.max(1) + 1;
    let mut table: Vec<Vec<DenseOperator>> = Vec::with_capacity(count);
    for k in 0..count {
        let mut row = vec![central4(&f, opts.step / (1u64 << k) as f64)?];
        for m in 1..=k {
            let w = 4f64.powi(m as i32 + 1);
            let prev = &table[k - 1][m - 1];
            let next = row[m - 1].scale(C64::new(w, 0.0)).sub(prev)?.scale(C64::new(1.0 / (w - 1.0), 0.0));
            row.push(next);
        }
        table.push(row);
    }
    let (best, diff) = if levels == 0 {
        (table[0][0].clone(), table[1][0].distance(&table[0][0])?)
    } else {
        let row = &table[levels];
        (row[levels].clone(), row[levels].distance(&row[levels - 1])?)
    };
    if diff > 10.0 * opts.tolerance * best.norm().max(1.0) {
        return Err(Error::Nonconvergence { diff });
    }
    Ok(best)
}

/// `f'(0)` for a scalar function.
pub fn derivative_scalar<F>(f: F, opts: &FdOptions) -> Result<C64>
where
    F: Fn(C64) -> Result<C64>,
{
    let d = derivative(|u| DenseOperator::from_rows(vec![], 1, &[f(u)?]), opts)?;
    Ok(d.matrix()[(0, 0)])
}

/// `P_{ab} M`.
pub fn check_matrix(m: &DenseOperator, a: Leg, b: Leg) -> Result<DenseOperator> {
    let mut legs = m.legs().to_vec();
    for l in [a, b] {
        if !legs.contains(&l) {
            legs.push(l);
        }
    }
    legs.sort_unstable();
    DenseOperator::permutation(a, b, &legs, m.n())?.mul(m)
}

/// `Ad(A)·B = A B A⁻¹`.
pub fn ad(a: &DenseOperator, b: &DenseOperator) -> Result<DenseOperator> {
    a.mul(b)?.mul(&a.inverse()?)
}

/// Curly letter of a two-argument structure matrix on `legs` at λ:
/// `d/du M(u,0)|₀ · M(0,0)⁻¹`.
pub fn curly(m: &DynamicalMatrix, legs: &[Leg], lam: &[C64], opts: &FdOptions) -> Result<DenseOperator> {
    let mm = m.on(legs);
    let args = |u: C64| {
        let mut v = vec![ZERO; mm.arity()];
        v[0] = u;
        v
    };
    let d = derivative(|u| mm.eval(&args(u), lam), opts)?;
    d.mul(&mm.eval(&args(ZERO), lam)?.inverse()?)
}

fn t_value(chain: &ChainSpec, u: C64, lam: &[C64]) -> Result<DenseOperator> {
    let terms = transfer(chain, u)?.value.eval(lam)?;
    if chain.model.is_lambda_independent() {
        let mut acc = DenseOperator::zeros(terms.legs(), terms.n());
        for (_, m) in terms.iter() {
            acc = acc.add(m)?;
        }
        return Ok(acc);
    }
    let scale = terms.pure_part().norm().max(1.0);
    terms.collapse(1e-9 * scale)
}

fn at_zero_u(chain: &ChainSpec) -> Result<ChainSpec> {
    let legs = chain.leg_count();
    chain.clone().with_quantum_u(vec![ZERO; legs])
}

/// Left and right logarithmic derivatives of `t(u)` at `u = u_i = 0`.
#[derive(Clone, Debug)]
pub struct LogDerivative {
    pub left: DenseOperator,
    pub right: DenseOperator,
    pub t0: DenseOperator,
}

impl LogDerivative {
    pub fn left_right_gap(&self) -> Result<f64> {
        self.left.distance(&self.right)
    }
}

/// `t'(0) t(0)⁻¹` and `t(0)⁻¹ t'(0)` at λ. Transfer matrices of
/// λ-independent models are taken on constant functions.
pub fn log_derivative_at(chain: &ChainSpec, lam: &[C64], opts: &FdOptions) -> Result<LogDerivative> {
    let chain = at_zero_u(chain)?;
    let t0 = t_value(&chain, ZERO, lam)?;
    let inv = t0.inverse()?;
    let d = derivative(|u| t_value(&chain, u, lam), opts)?;
    Ok(LogDerivative { left: d.mul(&inv)?, right: inv.mul(&d)?, t0 })
}

/// The left logarithmic derivative as a (shift-free) difference operator.
pub fn log_derivative(chain: &ChainSpec, opts: &FdOptions) -> Result<DifferenceOperator> {
    let chain = at_zero_u(chain)?;
    let o = *opts;
    let legs = chain.quantum_legs();
    let (n, step) = (chain.model.n, chain.model.step());
    let c = chain.clone();
    let op = LambdaOp::new(&legs, n, step, move |lam| Ok(log_derivative_at(&c, lam, &o)?.left));
    Ok(DifferenceOperator::pure(&op))
}

/// One labeled Hamiltonian term evaluated at a fixed λ.
#[derive(Clone, Debug)]
pub struct Term {
    pub label: String,
    pub value: Terms,
}

/// A Hamiltonian at one λ as a labeled sum.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    pub legs: Vec<Leg>,
    pub n: usize,
    pub lambda: Vec<C64>,
    pub terms: Vec<Term>,
}

impl Hamiltonian {
    pub fn new(legs: &[Leg], n: usize, lambda: &[C64]) -> Self {
        Hamiltonian { legs: legs.to_vec(), n, lambda: lambda.to_vec(), terms: Vec::new() }
    }

    pub fn push(&mut self, label: impl Into<String>, value: Terms) -> Result<()> {
        let value = value.map_coefficients(&self.legs, |m| m.embed(&self.legs))?;
        self.terms.push(Term { label: label.into(), value });
        Ok(())
    }

    pub fn push_op(&mut self, label: impl Into<String>, op: &DenseOperator) -> Result<()> {
        self.push(label, Terms::single(op.clone(), vec![0; self.n]))
    }

    pub fn total(&self) -> Result<Terms> {
        let mut acc = Terms::new(&self.legs, self.n);
        for t in &self.terms {
            for (s, m) in t.value.iter() {
                acc.add_term(s.clone(), m.clone())?;
            }
        }
        acc.prune();
        Ok(acc)
    }

    /// Sum of all coefficients, i.e. the action on λ-independent functions.
    pub fn on_constants(&self) -> Result<DenseOperator> {
        let mut acc = DenseOperator::zeros(&self.legs, self.n);
        for (_, m) in self.total()?.iter() {
            acc = acc.add(m)?;
        }
        Ok(acc)
    }
}

/// Evaluate a difference-operator term at λ.
fn eval_term(h: &mut Hamiltonian, label: String, op: Result<DifferenceOperator>) -> Result<()> {
    let lam = h.lambda.clone();
    h.push(label, op?.eval(&lam)?)
}

/// Building blocks for the closed forms at zero spectral parameters.
struct Kit {
    model: ModelSpec,
    fd: FdOptions,
    n: usize,
    step: C64,
}

impl Kit {
    fn new(model: &ModelSpec, fd: &FdOptions) -> Self {
        Kit { model: model.clone(), fd: *fd, n: model.n, step: model.step() }
    }

    fn value(&self, m: &DynamicalMatrix, legs: &[Leg], shifts: &[(Leg, i32)]) -> Result<LambdaOp> {
        m.with_step(self.step).on(legs).at(&vec![ZERO; m.arity()]).weight_shift(shifts)
    }

    fn deriv(&self, m: &DynamicalMatrix, legs: &[Leg], shifts: &[(Leg, i32)]) -> Result<LambdaOp> {
        let mm = m.with_step(self.step).on(legs);
        let fd = self.fd;
        let arity = mm.arity();
        let legs_sorted = mm.legs().to_vec();
        let base = LambdaOp::new(&legs_sorted, self.n, self.step, move |lam| {
            derivative(
                |u| {
                    let mut args = vec![ZERO; arity];
                    args[0] = u;
                    mm.eval(&args, lam)
                },
                &fd,
            )
        });
        base.weight_shift(shifts)
    }

    fn curly(&self, m: &DynamicalMatrix, legs: &[Leg], shifts: &[(Leg, i32)]) -> Result<LambdaOp> {
        Ok(self.deriv(m, legs, shifts)?.mul(&self.value(m, legs, shifts)?.inverse()))
    }

    fn p(&self, a: Leg, b: Leg) -> Result<LambdaOp> {
        Ok(LambdaOp::constant(DenseOperator::permutation(a, b, &[a.min(b), a.max(b)], self.n)?, self.step))
    }

    fn checked(&self, op: LambdaOp, a: Leg, b: Leg) -> Result<LambdaOp> {
        Ok(self.p(a, b)?.mul(&op))
    }

    fn e(&self, leg: Leg, sign: i32) -> DifferenceOperator {
        DifferenceOperator::exp_shift(leg, sign, self.n, self.step)
    }
}

fn pure(op: &LambdaOp) -> DifferenceOperator {
    DifferenceOperator::pure(op)
}

fn ad_op(a: &LambdaOp, b: &LambdaOp) -> LambdaOp {
    a.mul(b).mul(&a.inverse())
}

fn plus(legs: impl IntoIterator<Item = Leg>) -> Vec<(Leg, i32)> {
    legs.into_iter().map(|l| (l, 1)).collect()
}

/// Scalar boundary normalization of SP chains and its derivative:
/// `n` without χ, `tr χ` (non-dynamical) or `tr χ^{SC}` (dynamical).
fn chi_trace(chain: &ChainSpec, u: C64, lam: &[C64]) -> Result<C64> {
    let m = &chain.model;
    match (chain.chi_mode, m.flavor) {
        (ChiMode::Identity, _) => Ok(C64::new(m.n as f64, 0.0)),
        (_, Flavor::Nondynamical) => Ok(m.chi.eval(&[u], lam)?.trace()),
        _ => chains::trace_chi_sc(m, u, lam),
    }
}

/// Closed-form Hamiltonian of an SP chain at λ.
///
/// `Corrected` divides both traced boundary terms by the boundary
/// normalization and conjugates the `B'` trace by `T₁` for every
/// boundary. `Printed` follows the displayed χ = 1 forms literally.
fn closed_form_sp(chain: &ChainSpec, lam: &[C64], fd: &FdOptions, display: Display) -> Result<Hamiltonian> {
    let m = &chain.model;
    let k = Kit::new(m, fd);
    let l = chain.leg_count() as Leg;
    let legs = chain.quantum_legs();
    let dynamical = m.flavor == Flavor::FullyDynamical;
    let later = |j: Leg| if dynamical { plus(j + 1..=l) } else { vec![] };
    let mut h = Hamiltonian::new(&legs, m.n, lam);

    for j in 1..l {
        let op = k.checked(k.deriv(&m.a, &[j, j + 1], &later(j + 1))?, j, j + 1)?;
        eval_term(&mut h, format!("A'[{},{}]", j, j + 1), Ok(pure(&op)))?;
    }
    for j in 2..l {
        let op = k.checked(k.deriv(&m.b, &[j + 1, j], &later(j + 1))?, j + 1, j)?;
        eval_term(&mut h, format!("B'[{},{}]", j + 1, j), Ok(pure(&op)))?;
    }
    let t1 = k.value(&m.t, &[1], &later(1))?;
    let dt1 = k.deriv(&m.t, &[1], &later(1))?;
    eval_term(&mut h, "T'T^-1[1]".into(), Ok(pure(&dt1.mul(&t1.inverse()))))?;
    if l >= 2 {
        let b21 = k.checked(k.deriv(&m.b, &[2, 1], &later(2))?, 2, 1)?;
        eval_term(&mut h, "Ad(T)B'[2,1]".into(), Ok(pure(&ad_op(&t1, &b21))))?;
    }

    let with_chi = chain.chi_mode != ChiMode::Identity;
    let tr = chi_trace(chain, ZERO, lam)?;
    let norm = match (display, with_chi) {
        (Display::Printed, false) => ONE,
        _ => ONE / tr,
    };
    if with_chi {
        let c = chain.clone();
        let dtr = derivative_scalar(|u| chi_trace(&c, u, lam), fd)?;
        let id = DenseOperator::identity(&legs, m.n).scale(dtr / tr);
        h.push_op("tr chi'/tr chi", &id)?;
    }
    let chi = chi_factor(chain, ZERO)?;
    let printed_plain = display == Display::Printed && !with_chi;
    let traced = |mat: &DynamicalMatrix, mat_legs: [Leg; 2]| -> Result<DifferenceOperator> {
        let core = pure(&k.checked(k.deriv(mat, &mat_legs, &[])?, AUX, l)?);
        let mut f = Vec::new();
        if dynamical {
            f.push(k.e(AUX, if printed_plain { 1 } else { -1 }));
        }
        f.push(core);
        if dynamical {
            f.push(k.e(AUX, if printed_plain { -1 } else { 1 }));
        }
        if let Some(c) = &chi {
            f.push(c.clone());
        }
        Ok(DifferenceOperator::product(&f)?.trace(AUX)?.scale(norm))
    };
    eval_term(&mut h, format!("tr0 A'[{},0]", l), traced(&m.a, [l, AUX]))?;
    let bt = traced(&m.b, [AUX, l])?;
    let bt = if printed_plain && l >= 2 {
        bt
    } else {
        DifferenceOperator::product(&[pure(&t1), bt, pure(&t1.inverse())])?
    };
    eval_term(&mut h, format!("tr0 B'[0,{}]", l), Ok(bt))?;
    Ok(h)
}

impl Kit {
    /// `X_k(u) = tr₀ P₀ₖ B₀ₖ(u,0)` and its derivative, both at u = 0.
    fn x_pair(&self, k: Leg) -> (LambdaOp, LambdaOp) {
        let b = self.model.b.with_step(self.step).on(&[AUX, k]);
        let n = self.n;
        let fd = self.fd;
        let x_at = move |u: C64, lam: &[C64]| -> Result<DenseOperator> {
            let p = DenseOperator::permutation(AUX, k, &[AUX, k], n)?;
            p.mul(&b.eval(&[u, ZERO], lam)?)?.partial_trace(AUX)
        };
        let x_at2 = x_at.clone();
        let x = LambdaOp::new(&[k], n, self.step, move |lam| x_at(ZERO, lam));
        let dx = LambdaOp::new(&[k], n, self.step, move |lam| derivative(|u| x_at2(u, lam), &fd));
        (x, dx)
    }

    /// `Y_k(u) = tr₀(P₀ₖ e^{−γ𝒟ₖ} B₀ₖ(u,0) e^{γ𝒟₀} χ₀)` at u = 0, or its
    /// derivative. Shift-free for total zero-weight `B` and diagonal χ.
    fn y_op(&self, k: Leg, deriv: bool, chi: bool) -> Result<LambdaOp> {
        let b = self.value(&self.model.b, &[AUX, k], &[])?;
        let trace = |b: &LambdaOp, c: Option<LambdaOp>| -> Result<DifferenceOperator> {
            let mut f = vec![pure(&self.p(AUX, k)?), self.e(k, -1), pure(b), self.e(AUX, 1)];
            f.extend(c.map(|c| pure(&c)));
            DifferenceOperator::product(&f)?.trace(AUX)
        };
        let sc = |c: LambdaOp| -> Result<LambdaOp> { Ok(c.sc_shift(ShiftMode::SC, 1, &[AUX])?.transpose()) };
        let chi0 = if chi { Some(sc(self.value(&self.model.chi, &[AUX], &[])?)?) } else { None };
        let y = match (deriv, chi) {
            (false, _) => trace(&b, chi0)?,
            (true, false) => trace(&self.deriv(&self.model.b, &[AUX, k], &[])?, None)?,
            (true, true) => {
                let db = trace(&self.deriv(&self.model.b, &[AUX, k], &[])?, chi0)?;
                db.add(&trace(&b, Some(sc(self.deriv(&self.model.chi, &[AUX], &[])?)?))?)?
            }
        };
        Ok(LambdaOp::new(&[k], self.n, self.step, move |lam| {
            let t = y.eval(lam)?;
            let scale = t.pure_part().norm().max(1.0);
            t.collapse(1e-9 * scale)
        }))
    }

    /// Curly letter of `M̌ = P M`: `P M' M⁻¹ P`.
    fn curly_check(&self, m: &DynamicalMatrix, legs: [Leg; 2], shifts: &[(Leg, i32)]) -> Result<LambdaOp> {
        let p = self.p(legs[0], legs[1])?;
        Ok(p.mul(&self.curly(m, &legs, shifts)?).mul(&p))
    }
}

/// Closed-form Hamiltonian of an SNP chain at λ, following the displayed
/// term lists for each flavor.
///
/// `Corrected` differs from `Printed` in the fully dynamical case (leg
/// order of `𝒜̌`, the extra `h_{2j+1}` on `ℬ`, and both boundary terms,
/// which are rebuilt from `Y_k`) and in the `T⁻¹` of the last
/// semidynamical term.
fn closed_form_snp(chain: &ChainSpec, lam: &[C64], fd: &FdOptions, display: Display) -> Result<Hamiltonian> {
    let m = &chain.model;
    let k = Kit::new(m, fd);
    let l = chain.leg_count() as Leg;
    let big = chain.sites as Leg;
    let legs = chain.quantum_legs();
    let flavor = m.flavor;
    let chi = chi_factor(chain, ZERO)?;
    if chi.is_some() && flavor != Flavor::FullyDynamical {
        return Err(Error::Unsupported("SNP closed forms with χ are given for the fully dynamical flavor".into()));
    }
    // `h_<` of a term whose largest index is `top`.
    let sh = |top: Leg| -> Vec<(Leg, i32)> {
        match flavor {
            Flavor::Nondynamical => vec![],
            Flavor::Semidynamical => plus((top + 1..=l).filter(|j| j % 2 == 1)),
            Flavor::FullyDynamical => plus(top + 1..=l),
        }
    };
    let with = |extra: Leg, top: Leg| -> Vec<(Leg, i32)> {
        if flavor == Flavor::Nondynamical {
            return vec![];
        }
        let mut v = vec![(extra, 1)];
        v.extend(sh(top).into_iter().filter(|x| x.0 != extra));
        v
    };
    let dynamical = flavor != Flavor::Nondynamical;
    let mut h = Hamiltonian::new(&legs, m.n, lam);

    for j in 1..=big {
        let op = k.curly(&m.c, &[2 * j, 2 * j - 1], &sh(2 * j))?;
        eval_term(&mut h, format!("C[{},{}]", 2 * j, 2 * j - 1), Ok(pure(&op)))?;
    }
    for j in 1..big {
        let c_hi = k.value(&m.c, &[2 * j + 2, 2 * j + 1], &sh(2 * j + 2))?;
        let c_lo = k.value(&m.c, &[2 * j, 2 * j - 1], &sh(2 * j))?;
        let printed_fd = flavor == Flavor::FullyDynamical && display == Display::Printed;
        let a_legs = if printed_fd { [2 * j + 2, 2 * j] } else { [2 * j, 2 * j + 2] };
        let a = k.curly_check(&m.a, a_legs, &with(2 * j + 1, 2 * j + 2))?;
        eval_term(&mut h, format!("Ad(C)A[{},{}]", a_legs[0], a_legs[1]), Ok(pure(&ad_op(&c_hi, &a))))?;
        let b_shift = if printed_fd { sh(2 * j + 2) } else { with(2 * j + 1, 2 * j + 2) };
        let b = k.curly(&m.b, &[2 * j - 1, 2 * j + 2], &b_shift)?;
        let cc = c_hi.mul(&c_lo);
        eval_term(&mut h, format!("Ad(CC)B[{},{}]", 2 * j - 1, 2 * j + 2), Ok(pure(&ad_op(&cc, &b))))?;
        let bv = k.value(&m.b, &[2 * j - 1, 2 * j + 2], &with(2 * j + 1, 2 * j + 2))?;
        let d_shift = match flavor {
            Flavor::FullyDynamical => sh(2 * j + 2),
            _ => sh(2 * j + 1),
        };
        let d = k.curly_check(&m.d, [2 * j + 1, 2 * j - 1], &d_shift)?;
        eval_term(&mut h, format!("Ad(CCB)D[{},{}]", 2 * j + 1, 2 * j - 1), Ok(pure(&ad_op(&cc.mul(&bv), &d))))?;
    }

    let (a, b) = (l - 1, l);
    let c_ba = k.value(&m.c, &[b, a], &[])?;
    if flavor == Flavor::FullyDynamical && display == Display::Corrected {
        // tr₀(e^{−γ𝒟₀} A'_{0b} C_{0a}(h_b) P_{0a} B_{0b} e^{γ𝒟₀}) Y_b⁻¹ P_{ab} C_{ba}⁻¹
        let mut tr = vec![
            k.e(AUX, -1),
            pure(&k.deriv(&m.a, &[AUX, b], &[])?),
            pure(&k.value(&m.c, &[AUX, a], &[(b, 1)])?),
            pure(&k.p(AUX, a)?),
            pure(&k.value(&m.b, &[AUX, b], &[])?),
            k.e(AUX, 1),
        ];
        tr.extend(chi.clone());
        let tr = DifferenceOperator::product(&tr)?.trace(AUX)?;
        let f = [tr, pure(&k.y_op(b, false, chi.is_some())?.inverse()), pure(&k.p(a, b)?), pure(&c_ba.inverse())];
        eval_term(&mut h, format!("tr0 A'[0,{}]", b), DifferenceOperator::product(&f))?;
        let y_log = k.y_op(a, true, chi.is_some())?.mul(&k.y_op(a, false, chi.is_some())?.inverse());
        eval_term(&mut h, format!("Y'Y^-1[{}]", a), Ok(pure(&ad_op(&c_ba, &y_log))))?;
    } else if chi.is_some() {
        // The non-diagonal χ boundary display, literally.
        let chi_sc = m.chi.with_step(k.step).on(&[AUX]).at(&[ZERO]).sc_shift(ShiftMode::SC, 1, &[AUX])?.transpose();
        let x_of = |deriv: bool| -> Result<LambdaOp> {
            let b0a = if deriv { k.deriv(&m.b, &[AUX, a], &[])? } else { k.value(&m.b, &[AUX, a], &[])? };
            let inner = k.p(AUX, a)?.mul(&chains::bar(&b0a)?).mul(&chi_sc.weight_shift(&[(a, -1)])?);
            Ok(inner.map(&[a], |v| v.partial_trace(AUX)))
        };
        let (x, dx) = (x_of(false)?, x_of(true)?);
        let tr = DifferenceOperator::product(&[
            k.e(AUX, -1),
            pure(&k.checked(k.deriv(&m.a, &[b, AUX], &[])?, AUX, b)?),
            k.e(AUX, 1),
            pure(&c_ba),
            k.e(a, 1),
            pure(&k.p(AUX, a)?),
            pure(&chains::bar(&k.value(&m.b, &[AUX, a], &[])?)?),
            k.e(a, -1),
            pure(&chi_sc),
        ])?
        .trace(AUX)?;
        let f = [tr, k.e(a, 1), pure(&x.inverse()), k.e(a, -1), pure(&c_ba.inverse())];
        eval_term(&mut h, format!("tr0 A'[{},0]", b), DifferenceOperator::product(&f))?;
        let f = [pure(&c_ba), k.e(a, 1), pure(&dx.mul(&x.inverse())), k.e(a, -1), pure(&c_ba.inverse())];
        eval_term(&mut h, format!("X'X^-1[{}]", a), DifferenceOperator::product(&f))?;
    } else {
        let (x, dx) = k.x_pair(a);
        let x_inv = x.inverse();
        let mut tr = Vec::new();
        let a_check = pure(&k.checked(k.deriv(&m.a, &[b, AUX], &[])?, AUX, b)?);
        match flavor {
            Flavor::FullyDynamical => tr.extend([k.e(AUX, -1), a_check, k.e(AUX, 1)]),
            _ => tr.push(a_check),
        }
        tr.push(pure(&c_ba));
        tr.push(pure(&k.p(AUX, a)?));
        let b_0a = k.value(&m.b, &[AUX, a], &[])?;
        match flavor {
            Flavor::Nondynamical => tr.push(pure(&b_0a)),
            Flavor::Semidynamical => tr.extend([pure(&b_0a), k.e(AUX, 1)]),
            Flavor::FullyDynamical => tr.extend([k.e(AUX, 1), pure(&chains::bar(&b_0a)?)]),
        }
        let mut f = vec![DifferenceOperator::product(&tr)?.trace(AUX)?, pure(&x_inv)];
        if dynamical {
            f.push(k.e(a, -1));
        }
        f.push(pure(&c_ba.inverse()));
        eval_term(&mut h, format!("tr0 A'[{},0]", b), DifferenceOperator::product(&f))?;

        let mut f = vec![pure(&c_ba)];
        if dynamical {
            f.push(k.e(a, 1));
        }
        f.push(pure(&dx.mul(&x_inv)));
        if dynamical {
            f.push(k.e(a, -1));
        }
        f.push(pure(&c_ba.inverse()));
        eval_term(&mut h, format!("X'X^-1[{}]", a), DifferenceOperator::product(&f))?;
    }

    let t_shift = with(1, 2);
    let c21 = k.value(&m.c, &[2, 1], &sh(2))?;
    let t2 = k.value(&m.t, &[2], &t_shift)?;
    let dt2 = k.deriv(&m.t, &[2], &t_shift)?;
    let d12 = match flavor {
        Flavor::Semidynamical => k.checked(k.deriv(&m.d, &[1, 2], &sh(2))?, 1, 2)?,
        _ if chi.is_some() && display == Display::Printed => k.checked(k.deriv(&m.d, &[2, 1], &sh(2))?, 2, 1)?,
        _ => k.curly_check(&m.d, [1, 2], &sh(2))?,
    };
    eval_term(&mut h, "Ad(CT)D[1,2]".into(), Ok(pure(&ad_op(&c21.mul(&t2), &d12))))?;
    let t_factor = if flavor == Flavor::Semidynamical && display == Display::Printed { t2 } else { t2.inverse() };
    eval_term(&mut h, "Ad(C)T'T^-1[2]".into(), Ok(pure(&ad_op(&c21, &dt2.mul(&t_factor)))))?;
    Ok(h)
}

/// Closed-form Hamiltonian for the chain's flavor and boundary.
pub fn closed_form_h(chain: &ChainSpec, lam: &[C64], fd: &FdOptions, display: Display) -> Result<Hamiltonian> {
    match chain.model.boundary {
        Boundary::SP => closed_form_sp(&at_zero_u(chain)?, lam, fd, display),
        Boundary::SNP => closed_form_snp(&at_zero_u(chain)?, lam, fd, display),
    }
}

/// `σ^z = E₁₁ − E₂₂` on one leg.
fn sigma_z(leg: Leg) -> DenseOperator {
    DenseOperator::from_real_rows(vec![leg], 2, &[1.0, 0.0, 0.0, -1.0]).expect("2x2")
}

fn kron(a: &DenseOperator, b: &DenseOperator) -> Result<DenseOperator> {
    let mut legs: Vec<Leg> = a.legs().iter().chain(b.legs()).copied().collect();
    legs.sort_unstable();
    a.embed(&legs)?.mul(&b.embed(&legs)?)
}

fn nz(x: C64, what: &str) -> Result<C64> {
    if x.norm() < 1e-12 || !x.is_finite() {
        return Err(Error::SingularPoint(what.into()));
    }
    Ok(x)
}

/// The gl₂ two-site density `h(λ)` on legs (1,2), with `σ⁺ = E₁₂`.
pub fn gl2_density(lam: &[C64], gamma: C64) -> Result<DenseOperator> {
    let x = lam[0] - lam[1];
    let coth = |z: C64, what: &str| -> Result<C64> { Ok(z.cosh() / nz(z.sinh(), what)?) };
    let one = DenseOperator::identity(&[1, 2], 2);
    let e = |leg, i, j| DenseOperator::matrix_unit(leg, 2, i, j);
    let (sp, sm) = ((e(1, 0, 1), e(2, 0, 1)), (e(1, 1, 0), e(2, 1, 0)));
    let zz = kron(&sigma_z(1), &sigma_z(2))?;
    let mp = kron(&sm.0, &sp.1)?;
    let pm = kron(&sp.0, &sm.1)?;
    let half = C64::new(0.5, 0.0);
    let first = one.scale(half).sub(&zz.scale(half))?.sub(&mp)?.sub(&pm)?;
    let second = sigma_z(1).embed(&[1, 2])?.scale(half).sub(&sigma_z(2).embed(&[1, 2])?.scale(half))?.add(&mp)?.sub(&pm)?;
    first.scale(coth(gamma, "sinh γ")?).add(&second.scale(coth(x, "sinh λ12")?))
}

/// Boundary coefficients `f`, `g` of the gl₂ example and the boundary
/// normalization `(tr χ^{SC})⁻¹`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Gl2Boundary {
    #[serde(serialize_with = "ser_c64")]
    pub f: C64,
    #[serde(serialize_with = "ser_c64")]
    pub g: C64,
    #[serde(serialize_with = "ser_c64")]
    pub trace_inverse: C64,
}

pub(crate) fn ser_c64<S: serde::Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

struct Gl2Pieces {
    a: [C64; 2],
    q: [C64; 2],
    x: C64,
}

fn gl2_pieces(lam: &[C64], g: C64, xi: C64) -> Result<Gl2Pieces> {
    let mut a = [ZERO; 2];
    let mut q = [ZERO; 2];
    for k in 0..2 {
        let s = nz((g * 2.0 - xi + lam[k]).sinh(), "sinh(2γ−ξ+λ_k)")?;
        a[k] = (g * 2.0 - xi * 2.0 + lam[k] * 2.0).sinh() / (s * s);
        q[k] = (lam[k] - xi).sinh() / s;
    }
    Ok(Gl2Pieces { a, q, x: lam[0] - lam[1] })
}

fn gl2_trace_inverse(lam: &[C64], g: C64, xi: C64) -> Result<C64> {
    let num = (g * 2.0 - xi + lam[0]).sinh() * (g * 2.0 - xi + lam[1]).sinh();
    Ok(num / nz(g.cosh() * 2.0 * (g - xi + lam[1]).sinh() * (g - xi + lam[0]).sinh(), "trace denominator")?)
}

/// `f`, `g` and `(tr χ^{SC})⁻¹` as printed.
pub fn gl2_boundary_printed(lam: &[C64], g: C64, xi: C64) -> Result<Gl2Boundary> {
    let Gl2Pieces { a, x, .. } = gl2_pieces(lam, g, xi)?;
    let (sg, sx) = (nz(g.sinh(), "sinh γ")?, nz(x.sinh(), "sinh λ12")?);
    let (p, m) = ((g + x).sinh() * a[0], (g - x).sinh() * a[1]);
    Ok(Gl2Boundary {
        f: (a[0] + a[1]) / sg + (p - m) * 2.0 / sx,
        g: (a[1] - a[0]) / sg + (p + m) / sx,
        trace_inverse: gl2_trace_inverse(lam, g, xi)?,
    })
}

/// `f`, `g` regrouped to agree with the logarithmic derivative:
///
/// `f = [sinh(γ+λ12) a₁ − sinh(γ−λ12) a₂] / sinh λ12 + (q₁ + q₂) / sinh γ`,
/// `g = (q₂ − q₁) / sinh γ`, with
/// `a_k = sinh(2γ−2ξ+2λ_k) / sinh²(2γ−ξ+λ_k)` and
/// `q_k = sinh(λ_k−ξ) / sinh(2γ−ξ+λ_k)`.
pub fn gl2_boundary_corrected(lam: &[C64], g: C64, xi: C64) -> Result<Gl2Boundary> {
    let Gl2Pieces { a, q, x } = gl2_pieces(lam, g, xi)?;
    let (sg, sx) = (nz(g.sinh(), "sinh γ")?, nz(x.sinh(), "sinh λ12")?);
    Ok(Gl2Boundary {
        f: ((g + x).sinh() * a[0] - (g - x).sinh() * a[1]) / sx + (q[0] + q[1]) / sg,
        g: (q[1] - q[0]) / sg,
        trace_inverse: gl2_trace_inverse(lam, g, xi)?,
    })
}

fn boundary_operator(b: &Gl2Boundary, leg: Leg) -> DenseOperator {
    sigma_z(leg).scale(b.g).add_scaled_identity(b.f).scale(b.trace_inverse)
}

/// The gl₂ example chain: fully dynamical, soliton preserving, `T = 1`,
/// diagonal χ.
pub fn gl2_example_chain(sites: usize, gamma: C64, xi: C64) -> Result<ChainSpec> {
    ChainSpec::new(crate::models::gl2_model(gamma, xi), sites, ChiMode::Diagonal)
}

#[derive(Clone, Debug, Serialize)]
pub struct Gl2Example {
    pub sites: usize,
    /// Each bond enters the logarithmic derivative as `2 h_{j,j+1}(λ−γh_<)`:
    /// once from `Ǎ'` and once from `B̌'`.
    pub bulk_factor: f64,
    /// `‖h(λ) − P R'(λ,0)‖` against a finite-difference derivative of `R`.
    pub bulk_residual: f64,
    /// `‖H_num − Σ 2h − (tr χ^{SC})⁻¹(f + g σ^z_N)‖` with corrected `f`, `g`.
    pub boundary_residual: f64,
    /// The same with the printed `f`, `g`.
    pub boundary_residual_printed: f64,
    /// `|printed (tr χ^{SC})⁻¹ − 1/tr χ^{SC}|`.
    pub trace_residual: f64,
    pub printed: Gl2Boundary,
    pub corrected: Gl2Boundary,
    pub report: HamiltonianReport,
}

/// Reproduces the gl₂ example Hamiltonian at λ and checks it against
/// the numeric logarithmic derivative.
pub fn gl2_example_h(sites: usize, lam: &[C64], gamma: C64, xi: C64, fd: &FdOptions) -> Result<Gl2Example> {
    let chain = gl2_example_chain(sites, gamma, xi)?;
    let legs = chain.quantum_legs();
    let step = chain.model.step();
    let n_leg = sites as Leg;
    let num = log_derivative_at(&chain, lam, fd)?;

    let density = LambdaOp::new(&[1, 2], 2, step, move |l| gl2_density(l, gamma));
    let r = chain.model.a.with_step(step);
    let dr = derivative(|u| r.eval(&[u, ZERO], lam), fd)?;
    let bulk_residual = gl2_density(lam, gamma)?.distance(&check_matrix(&dr, 1, 2)?)?;

    let mut h = Hamiltonian::new(&legs, 2, lam);
    for j in 1..n_leg {
        let term = density.relabel(&[j, j + 1]).weight_shift(&plus(j + 2..=n_leg))?.eval(lam)?;
        h.push_op(format!("2h[{},{}]", j, j + 1), &term.scale(C64::new(2.0, 0.0)))?;
    }
    let bulk = h.on_constants()?;
    let corrected = gl2_boundary_corrected(lam, gamma, xi)?;
    let printed = gl2_boundary_printed(lam, gamma, xi)?;
    let numeric_boundary = num.left.sub(&bulk)?;
    let residual_of = |b: &Gl2Boundary| -> Result<f64> {
        numeric_boundary.distance(&boundary_operator(b, n_leg).embed(&legs)?)
    };
    let boundary_residual = residual_of(&corrected)?;
    let boundary_residual_printed = residual_of(&printed)?;
    let trace_residual = (printed.trace_inverse - ONE / chains::trace_chi_sc(&chain.model, ZERO, lam)?).norm();
    h.push_op(format!("f+g sz[{}]", n_leg), &boundary_operator(&corrected, n_leg))?;

    let report = HamiltonianReport::build(&chain, &h, &num, None)?;
    Ok(Gl2Example {
        sites,
        bulk_factor: 2.0,
        bulk_residual,
        boundary_residual,
        boundary_residual_printed,
        trace_residual,
        printed,
        corrected,
        report,
    })
}

/// How an operator acts on one leg.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LegAction {
    Identity,
    /// Commutes with every `E_ii` on the leg: a weight-basis diagonal
    /// (abelian) dependence.
    Diagonal,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalityClass {
    Bulk,
    Boundary,
    AbelianTail,
}

/// Per-leg action of `op`, relative to `scale` for the zero tests.
pub fn leg_actions(op: &DenseOperator, tol: f64) -> Result<Vec<(Leg, LegAction)>> {
    let n = op.n();
    let tol = tol * op.norm().max(1.0);
    let mut out = Vec::new();
    for &leg in op.legs() {
        let comm = |i, j| commutator_norm(op, &DenseOperator::matrix_unit(leg, n, i, j).embed(op.legs())?);
        let mut diagonal = true;
        for i in 0..n {
            diagonal &= comm(i, i)? <= tol;
        }
        let mut identity = diagonal;
        if diagonal {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        identity &= comm(i, j)? <= tol;
                    }
                }
            }
        }
        let action = match (identity, diagonal) {
            (true, _) => LegAction::Identity,
            (false, true) => LegAction::Diagonal,
            _ => LegAction::Full,
        };
        out.push((leg, action));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermLocality {
    pub label: String,
    /// Smallest contiguous leg range holding every non-diagonal action.
    pub window: Vec<Leg>,
    /// Legs outside the window with diagonal dependence.
    pub tail: Vec<Leg>,
    pub class: LocalityClass,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalityReport {
    pub window_size: usize,
    pub terms: Vec<TermLocality>,
    pub pass: bool,
}

fn term_operator(t: &Terms) -> Result<DenseOperator> {
    let mut acc = DenseOperator::zeros(t.legs(), t.n());
    for (_, m) in t.iter() {
        acc = acc.add(m)?;
    }
    Ok(acc)
}

/// Locality classification of one operator.
///
/// The window is the span of the legs with non-diagonal action, or of
/// the non-identity legs for a purely diagonal operator.
pub fn classify(label: &str, op: &DenseOperator, tol: f64) -> Result<TermLocality> {
    let actions = leg_actions(op, tol)?;
    let span = |keep: &dyn Fn(LegAction) -> bool| -> Vec<Leg> {
        let legs: Vec<Leg> = actions.iter().filter(|(_, a)| keep(*a)).map(|(l, _)| *l).collect();
        match (legs.first(), legs.last()) {
            (Some(&lo), Some(&hi)) => (lo..=hi).collect(),
            _ => vec![],
        }
    };
    let mut window = span(&|a| a == LegAction::Full);
    if window.is_empty() {
        window = span(&|a| a != LegAction::Identity);
    }
    let tail = actions
        .iter()
        .filter(|(l, a)| *a == LegAction::Diagonal && !window.contains(l))
        .map(|(l, _)| *l)
        .collect();
    let class = match window.len() {
        0 => LocalityClass::AbelianTail,
        1 => LocalityClass::Boundary,
        _ => LocalityClass::Bulk,
    };
    Ok(TermLocality { label: label.into(), window, tail, class, norm: op.norm() })
}

impl TermLocality {
    /// Window within `size` legs and any tail on the higher legs only.
    pub fn is_local(&self, size: usize) -> bool {
        let top = self.window.last().copied().unwrap_or(0);
        self.window.len() <= size && self.tail.iter().all(|&l| l > top)
    }
}

/// Classifies every term of `h`; passes iff each bulk window spans at
/// most `window_size` adjacent legs with its abelian tail above it. Terms with a shift part are
/// classified by the action of their coefficient sum.
pub fn locality_report(h: &Hamiltonian, window_size: usize) -> Result<LocalityReport> {
    let mut terms = Vec::new();
    for t in &h.terms {
        terms.push(classify(&t.label, &term_operator(&t.value)?, 1e-10)?);
    }
    let pass = terms.iter().all(|t| t.class != LocalityClass::Bulk || t.is_local(window_size));
    Ok(LocalityReport { window_size, terms, pass })
}

/// Eigenvalues of a shift-free operator, sorted by real then imaginary part.
pub fn spectrum(h: &Terms, tol: f64) -> Result<Vec<C64>> {
    let scale = h.pure_part().norm().max(1.0);
    if h.shift_part_norm() > tol * scale {
        return Err(Error::ShiftPart);
    }
    eigenvalues(&h.pure_part())
}

/// Eigenvalues of a dense operator, sorted by real then imaginary part.
pub fn eigenvalues(op: &DenseOperator) -> Result<Vec<C64>> {
    if op.dim() > SPECTRUM_GUARD {
        return Err(Error::Guard(format!("dimension {} exceeds {}", op.dim(), SPECTRUM_GUARD)));
    }
    let schur = op
        .matrix()
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or(Error::Nonconvergence { diff: f64::NAN })?;
    let (_, t) = schur.unpack();
    let mut ev: Vec<C64> = t.diagonal().iter().copied().collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// `‖[H, t(v)]‖` at λ, with `H` the logarithmic derivative. Shifted
/// coefficients are compared separately; λ-independent models are
/// compared on constant functions.
pub fn commutator_probe(chain: &ChainSpec, v: C64, lam: &[C64], fd: &FdOptions) -> Result<f64> {
    let chain = at_zero_u(chain)?;
    if chain.model.is_lambda_independent() {
        let h = log_derivative_at(&chain, lam, fd)?.left;
        return commutator_norm(&h, &t_value(&chain, v, lam)?);
    }
    let h = log_derivative(&chain, fd)?;
    let tv = transfer(&chain, v)?.value;
    let comm = h.commutator(&tv)?.eval(lam)?;
    Ok(comm.iter().map(|(_, m)| m.norm()).fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize)]
pub struct TermReport {
    pub label: String,
    pub shift_keys: usize,
    #[serde(flatten)]
    pub locality: TermLocality,
}

#[derive(Clone, Debug, Serialize)]
pub struct HamiltonianReport {
    pub sites: usize,
    pub lambda: Vec<[f64; 2]>,
    pub terms: Vec<TermReport>,
    /// Rows of the total at λ, entries as `[re, im]`.
    pub total: Vec<Vec<[f64; 2]>>,
    /// `‖Σ terms − total‖`.
    pub sum_residual: f64,
    /// `‖total − t'(0)t(0)⁻¹‖`.
    pub residual: f64,
    pub left_right_gap: f64,
    /// Every bulk window spans at most two sites (two legs per site for
    /// SNP chains) with its abelian tail above it.
    pub locality_pass: bool,
    pub spectrum: Option<Vec<[f64; 2]>>,
    pub commutator_probe: Option<f64>,
}

impl HamiltonianReport {
    pub fn build(chain: &ChainSpec, h: &Hamiltonian, num: &LogDerivative, spectrum: Option<Vec<C64>>) -> Result<Self> {
        let total = h.on_constants()?;
        let mut summed = DenseOperator::zeros(&h.legs, h.n);
        let mut terms = Vec::new();
        for t in &h.terms {
            let op = term_operator(&t.value)?;
            summed = summed.add(&op)?;
            terms.push(TermReport { label: t.label.clone(), shift_keys: t.value.len(), locality: classify(&t.label, &op, 1e-10)? });
        }
        let window = 2 * chain.leg_count() / chain.sites;
        let locality_pass = terms.iter().all(|t| t.locality.class != LocalityClass::Bulk || t.locality.is_local(window));
        let m = total.matrix();
        Ok(HamiltonianReport {
            sites: chain.sites,
            lambda: h.lambda.iter().map(|z| [z.re, z.im]).collect(),
            terms,
            total: (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect(),
            sum_residual: summed.distance(&total)?,
            residual: total.distance(&num.left)?,
            left_right_gap: num.left_right_gap()?,
            locality_pass,
            spectrum: spectrum.map(|ev| ev.iter().map(|z| [z.re, z.im]).collect()),
            commutator_probe: None,
        })
    }
}

/// Closed form, numeric comparison and locality of a chain Hamiltonian at λ.
pub fn hamiltonian_report(chain: &ChainSpec, lam: &[C64], fd: &FdOptions, display: Display) -> Result<HamiltonianReport> {
    let num = log_derivative_at(chain, lam, fd)?;
    let h = closed_form_h(chain, lam, fd, display)?;
    HamiltonianReport::build(chain, &h, &num, None)
}
