//! Sampled residual checks of the algebraic identities.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{gl2_chi, gl2_r, gl2_r_dual_printed, DualForm, Flavor, ModelSpec};
use crate::par::{self, Execution};
use crate::sampling::Sampler;
use crate::shift::{DynamicalMatrix, LambdaOp, ShiftMode};
use crate::tensor::{DenseOperator, Leg, C64, ZERO};

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub tolerance: f64,
    pub samples: usize,
    /// Re-draws allowed per sample after a failed evaluation.
    pub retries: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { tolerance: 1e-9, samples: 20, retries: 5, seed: 0, execution: Execution::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplePoint {
    pub u: Vec<[f64; 2]>,
    pub lambda: Vec<[f64; 2]>,
}

impl SamplePoint {
    pub fn new(u: &[C64], lam: &[C64]) -> Self {
        let f = |v: &[C64]| v.iter().map(|z| [z.re, z.im]).collect();
        SamplePoint { u: f(u), lambda: f(lam) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub identity: String,
    pub flavor: Flavor,
    pub samples: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub worst_point: Option<SamplePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl VerificationReport {
    fn new(identity: &str, flavor: Flavor, tolerance: f64) -> Self {
        VerificationReport {
            identity: identity.into(),
            flavor,
            samples: 0,
            max_residual: 0.0,
            tolerance,
            pass: false,
            worst_point: None,
            note: None,
        }
    }

    pub fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Every `u_i`, `u_i ± u_j` that a check may feed to a denominator.
pub fn spectral_combos(u: &[C64]) -> Vec<C64> {
    let mut v = u.to_vec();
    for i in 0..u.len() {
        for j in 0..u.len() {
            if i != j {
                v.push(u[i] - u[j]);
                v.push(u[i] + u[j]);
            }
        }
    }
    v
}

/// Runs `residual` at `opts.samples` seeded admissible points.
pub fn run_check<F>(
    identity: &str,
    model: &ModelSpec,
    n_u: usize,
    opts: &VerifyOptions,
    residual: F,
) -> VerificationReport
where
    F: Fn(&[C64], &[C64]) -> Result<f64> + Sync + Send,
{
    let mut report = VerificationReport::new(identity, model.flavor, opts.tolerance);
    let idx: Vec<u64> = (0..opts.samples as u64).collect();
    let outcomes = par::map(&idx, opts.execution, |&i| {
        let mut last_err = None;
        for attempt in 0..=opts.retries as u64 {
            let mut s = Sampler::new(opts.seed, identity, i * 64 + attempt);
            let Some((u, lam)) = s.point(n_u, model.n, |u, l| model.admissible(&spectral_combos(u), l)) else {
                last_err = Some(Error::SingularPoint("no admissible point".into()));
                continue;
            };
            match residual(&u, &lam) {
                Ok(r) if r.is_finite() => return Ok((r, SamplePoint::new(&u, &lam))),
                Ok(_) => last_err = Some(Error::SingularPoint("non-finite residual".into())),
                Err(e @ (Error::SingularPoint(_) | Error::Singular { .. })) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap_or(Error::SingularPoint("sample rejected".into())))
    });
    let mut failure = None;
    for o in outcomes {
        match o {
            Ok((r, p)) => {
                report.samples += 1;
                if r > report.max_residual || report.worst_point.is_none() {
                    report.max_residual = report.max_residual.max(r);
                    report.worst_point = Some(p);
                }
            }
            Err(e) => failure = Some(e),
        }
    }
    report.pass = failure.is_none() && report.samples > 0 && report.max_residual < opts.tolerance;
    if let Some(e) = failure {
        report.note = Some(format!("sample failed: {e}"));
        if report.samples == 0 {
            report.max_residual = f64::INFINITY;
        }
    }
    report
}

/// `m` on `legs` at spectral `u`, shifted by the weights of `shifts`.
pub fn placed(m: &DynamicalMatrix, legs: &[Leg], u: &[C64], shifts: &[Leg]) -> Result<LambdaOp> {
    let sh: Vec<(Leg, i32)> = shifts.iter().map(|&l| (l, 1)).collect();
    m.on(legs).at(u).weight_shift(&sh)
}

/// Product of λ-functions evaluated at one point.
pub fn product_at(ops: &[LambdaOp], lam: &[C64]) -> Result<DenseOperator> {
    let mut legs: Vec<Leg> = Vec::new();
    for o in ops {
        for l in o.legs() {
            if !legs.contains(l) {
                legs.push(*l);
            }
        }
    }
    let n = ops[0].n();
    let mut acc = DenseOperator::identity(&legs, n);
    for o in ops {
        acc = acc.mul(&o.eval(lam)?.embed(&legs)?)?;
    }
    Ok(acc)
}

fn diff(lhs: &[LambdaOp], rhs: &[LambdaOp], lam: &[C64]) -> Result<f64> {
    product_at(lhs, lam)?.distance(&product_at(rhs, lam)?)
}

fn with_step(m: &DynamicalMatrix, step: C64) -> DynamicalMatrix {
    m.with_step(step)
}

/// `A12 = A21⁻¹`, `B12 = C21`, `D12 = D21⁻¹` at `(u1,u2)` against `(u2,u1)`.
pub fn check_unitarity(model: &ModelSpec, opts: &VerifyOptions) -> VerificationReport {
    let m = model.clone();
    run_check("unitarity", model, 2, opts, move |u, lam| {
        let rev = [u[1], u[0]];
        let id = DenseOperator::identity(&[1, 2], m.n);
        let a = m.a.eval(u, lam)?.mul(&m.a.eval(&rev, lam)?.leg_swap(1, 2)?)?.distance(&id)?;
        let bc = m.b.eval(u, lam)?.distance(&m.c.eval(&rev, lam)?.leg_swap(1, 2)?)?;
        let d = m.d.eval(u, lam)?.mul(&m.d.eval(&rev, lam)?.leg_swap(1, 2)?)?.distance(&id)?;
        Ok(a.max(bc).max(d))
    })
}

/// `M12 M13 M23 = M23 M13 M12` with no shifts.
pub fn check_pure_ybe(model: &ModelSpec, m: &DynamicalMatrix, opts: &VerifyOptions) -> VerificationReport {
    let m = m.clone();
    run_check("pure_ybe", model, 3, opts, move |u, lam| {
        let (u12, u13, u23) = ([u[0], u[1]], [u[0], u[2]], [u[1], u[2]]);
        let lhs = [placed(&m, &[1, 2], &u12, &[])?, placed(&m, &[1, 3], &u13, &[])?, placed(&m, &[2, 3], &u23, &[])?];
        let rhs = [placed(&m, &[2, 3], &u23, &[])?, placed(&m, &[1, 3], &u13, &[])?, placed(&m, &[1, 2], &u12, &[])?];
        diff(&lhs, &rhs, lam)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GnfPattern {
    /// `M12(λ+s h3) M13 M23(λ+s h1) = M23 M13(λ+s h2) M12`
    Printed,
    /// Same placement with the translation direction reversed.
    Reversed,
}

/// Dynamical Gervais-Neveu-Felder equation with translation `step`.
pub fn check_gnf(
    name: &str,
    model: &ModelSpec,
    m: &DynamicalMatrix,
    step: C64,
    pattern: GnfPattern,
    opts: &VerifyOptions,
) -> VerificationReport {
    let step = match pattern {
        GnfPattern::Printed => step,
        GnfPattern::Reversed => -step,
    };
    let m = with_step(m, step);
    run_check(name, model, 3, opts, move |u, lam| {
        let (u12, u13, u23) = ([u[0], u[1]], [u[0], u[2]], [u[1], u[2]]);
        let lhs = [placed(&m, &[1, 2], &u12, &[3])?, placed(&m, &[1, 3], &u13, &[])?, placed(&m, &[2, 3], &u23, &[1])?];
        let rhs = [placed(&m, &[2, 3], &u23, &[])?, placed(&m, &[1, 3], &u13, &[2])?, placed(&m, &[1, 2], &u12, &[])?];
        diff(&lhs, &rhs, lam)
    })
}

fn second_copy(t: &DynamicalMatrix) -> Vec<Leg> {
    t.legs().iter().map(|&l| if l == 1 { 2 } else { l }).collect()
}

/// Residual of `A12 T1 B12 T2 = T2 C12 T1 D12` with the flavor's shifts.
#[allow(clippy::too_many_arguments)]
pub fn exchange_residual(
    a: &DynamicalMatrix,
    b: &DynamicalMatrix,
    c: &DynamicalMatrix,
    d: &DynamicalMatrix,
    t: &DynamicalMatrix,
    flavor: Flavor,
    u: &[C64],
    lam: &[C64],
) -> Result<f64> {
    let uu = [u[0], u[1]];
    let t1 = t.clone();
    let t2 = t.on(&second_copy(t));
    let t1_legs = t1.legs().to_vec();
    let t2_legs = t2.legs().to_vec();
    let (t1l, t2l, t2r, t1r): (&[Leg], &[Leg], &[Leg], &[Leg]) = match flavor {
        Flavor::Nondynamical => (&[], &[], &[], &[]),
        Flavor::Semidynamical => (&[], &[1], &[], &[2]),
        Flavor::FullyDynamical => (&[2], &[1], &[1], &[2]),
    };
    let lhs = [
        placed(a, &[1, 2], &uu, &[])?,
        placed(&t1, &t1_legs, &[u[0]], t1l)?,
        placed(b, &[1, 2], &uu, &[])?,
        placed(&t2, &t2_legs, &[u[1]], t2l)?,
    ];
    let rhs = [
        placed(&t2, &t2_legs, &[u[1]], t2r)?,
        placed(c, &[1, 2], &uu, &[])?,
        placed(&t1, &t1_legs, &[u[0]], t1r)?,
        placed(d, &[1, 2], &uu, &[])?,
    ];
    diff(&lhs, &rhs, lam)
}

pub fn check_exchange(model: &ModelSpec, t: &DynamicalMatrix, opts: &VerifyOptions) -> VerificationReport {
    let m = model.clone();
    let t = with_step(t, model.step());
    run_check("exchange", model, 2, opts, move |u, lam| exchange_residual(&m.a, &m.b, &m.c, &m.d, &t, m.flavor, u, lam))
}

/// Non-dynamical dual relation in transposed form.
pub fn transposed_dual_residual(m: &ModelSpec, chi: &DynamicalMatrix, u: &[C64], lam: &[C64]) -> Result<f64> {
    let uu = [u[0], u[1]];
    let a = m.a.eval(&uu, lam)?;
    let b = m.b.eval(&uu, lam)?;
    let c = m.c.eval(&uu, lam)?;
    let d = m.d.eval(&uu, lam)?;
    let x1 = chi.eval(&[u[0]], lam)?;
    let x2 = chi.on(&[2]).eval(&[u[1]], lam)?;
    let lhs = a
        .inverse()?
        .partial_transpose(&[1, 2])?
        .mul(&x1)?
        .mul(&b.partial_transpose(&[1])?.inverse()?.partial_transpose(&[2])?)?
        .mul(&x2)?;
    let rhs = x2
        .mul(&c.partial_transpose(&[2])?.inverse()?.partial_transpose(&[1])?)?
        .mul(&x1)?
        .mul(&d.inverse()?.partial_transpose(&[1, 2])?)?;
    lhs.distance(&rhs)
}

pub fn check_dual_exchange(model: &ModelSpec, chi: &DynamicalMatrix, opts: &VerifyOptions) -> VerificationReport {
    let m = model.clone();
    let chi = with_step(chi, model.step());
    match &model.dual {
        DualForm::Transposed => {
            run_check("dual_exchange", model, 2, opts, move |u, lam| transposed_dual_residual(&m, &chi, u, lam))
        }
        DualForm::Exchange { a, b, c, d, k } => {
            let (a, b, c, d, k) = (a.clone(), b.clone(), c.clone(), d.clone(), k.clone());
            run_check("dual_exchange", model, 2, opts, move |u, lam| exchange_residual(&a, &b, &c, &d, &k, m.flavor, u, lam))
        }
    }
}

/// The gl₂ dual relation with the dual matrix and `K(u) = χ(λ,u)` exactly as
/// printed. Reported for comparison; it does not hold.
pub fn check_dual_printed_gl2(model: &ModelSpec, opts: &VerifyOptions) -> VerificationReport {
    let (g, xi, step) = (model.gamma, model.xi, model.step());
    let r = DynamicalMatrix::new(&[1, 2], 2, 1, step, move |u, lam| gl2_r(lam, u[0], g));
    let rd = DynamicalMatrix::new(&[1, 2], 2, 1, step, move |u, lam| gl2_r_dual_printed(lam, u[0], g));
    let a = r.reparam(2, |u| vec![u[0] - u[1]]);
    let d = a.leg_swap(1, 2);
    let c = rd.reparam(2, |u| vec![u[0] + u[1]]);
    let b = c.leg_swap(1, 2);
    let k = DynamicalMatrix::new(&[1], 2, 1, step, move |u, lam| gl2_chi(lam, u[0], g, xi));
    let flavor = model.flavor;
    run_check("dual_exchange_printed", model, 2, opts, move |u, lam| exchange_residual(&a, &b, &c, &d, &k, flavor, u, lam))
        .with_note("printed dual matrix with K = χ(λ,u); expected to fail")
}

/// Comodule relations for `(L, R)` built from the structure matrices at a
/// third spectral argument `α`, then the exchange relation for
/// `T' = L T(λ+γh_q') R`.
pub fn check_comodule(
    name: &str,
    model: &ModelSpec,
    l: &DynamicalMatrix,
    r: &DynamicalMatrix,
    opts: &VerifyOptions,
) -> VerificationReport {
    let m = model.clone();
    let (l, r) = (l.clone(), r.clone());
    run_check(name, model, 3, opts, move |u, lam| {
        let (u1, u2, al) = (u[0], u[1], u[2]);
        let uu = [u1, u2];
        let l1 = |s: &[Leg]| placed(&l, &[1, 3], &[u1, al], s);
        let l2 = |s: &[Leg]| placed(&l, &[2, 3], &[u2, al], s);
        let r1 = |s: &[Leg]| placed(&r, &[1, 3], &[u1, al], s);
        let r2 = |s: &[Leg]| placed(&r, &[2, 3], &[u2, al], s);
        let s12 = |mm: &DynamicalMatrix, s: &[Leg]| placed(mm, &[1, 2], &uu, s);
        let e1 = diff(&[s12(&m.a, &[])?, l1(&[2])?, l2(&[])?], &[l2(&[1])?, l1(&[])?, s12(&m.a, &[3])?], lam)?;
        let e2 = diff(&[r1(&[2])?, s12(&m.b, &[])?, l2(&[1])?], &[l2(&[])?, s12(&m.b, &[3])?, r1(&[])?], lam)?;
        let e3 = diff(&[l1(&[])?, s12(&m.c, &[3])?, r2(&[])?], &[r2(&[1])?, s12(&m.c, &[])?, l1(&[2])?], lam)?;
        let e4 = diff(&[s12(&m.d, &[3])?, r1(&[])?, r2(&[1])?], &[r2(&[])?, r1(&[2])?, s12(&m.d, &[])?], lam)?;
        // T'(u) = L_{1q'}(u, α) T_1(u; λ+γh_q') R_{1q'}(u, α)
        let (lc, tc, rc) = (l.clone(), m.t.clone(), r.clone());
        let tp = DynamicalMatrix::new(&[1, 3], m.n, 1, m.step(), move |v, lm| {
            let ops = [placed(&lc, &[1, 3], &[v[0], al], &[])?, placed(&tc, &[1], &[v[0]], &[3])?, placed(&rc, &[1, 3], &[v[0], al], &[])?];
            product_at(&ops, lm)
        });
        let e5 = exchange_residual(&m.a, &m.b, &m.c, &m.d, &tp, m.flavor, &uu, lam)?;
        Ok(e1.max(e2).max(e3).max(e4).max(e5))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightMode {
    /// `[M, h_i ⊗ 1 + 1 ⊗ h_i] = 0`
    Total,
    /// `[M, h_i]` on one leg
    Partial(Leg),
}

pub fn zero_weight_residual(op: &DenseOperator, mode: WeightMode) -> Result<f64> {
    let n = op.n();
    let mut worst = 0.0f64;
    for i in 0..n {
        let h = match mode {
            WeightMode::Total => {
                let mut acc = DenseOperator::zeros(op.legs(), n);
                for &l in op.legs() {
                    acc = acc.add(&DenseOperator::matrix_unit(l, n, i, i))?;
                }
                acc
            }
            WeightMode::Partial(l) => DenseOperator::matrix_unit(l, n, i, i),
        };
        worst = worst.max(crate::tensor::commutator_norm(op, &h)?);
    }
    Ok(worst)
}

pub fn check_zero_weight(
    name: &str,
    model: &ModelSpec,
    ms: &[DynamicalMatrix],
    mode: WeightMode,
    opts: &VerifyOptions,
) -> VerificationReport {
    let ms = ms.to_vec();
    let arity = ms.iter().map(|m| m.arity()).max().unwrap_or(0);
    run_check(name, model, arity, opts, move |u, lam| {
        let mut worst = 0.0f64;
        for m in &ms {
            worst = worst.max(zero_weight_residual(&m.eval(&u[..m.arity()], lam)?, mode)?);
        }
        Ok(worst)
    })
}

/// `Σ_ij T^{−SL}_ij K^{−SL}_ij` at λ.
pub fn sl_pairing(t: &DynamicalMatrix, k: &DynamicalMatrix, u: C64, lam: &[C64]) -> Result<C64> {
    let legs = t.legs().to_vec();
    let ts = t.at(&[u]).sc_shift(ShiftMode::SL, -1, &legs)?.eval(lam)?;
    let ks = k.at(&[u]).sc_shift(ShiftMode::SL, -1, &legs)?.eval(lam)?;
    Ok(ts.matrix().iter().zip(ks.matrix().iter()).map(|(a, b)| a * b).sum())
}

/// Spread of the SL pairing over λ samples at one fixed spectral value.
pub fn check_lambda_independence(
    model: &ModelSpec,
    t: &DynamicalMatrix,
    k: &DynamicalMatrix,
    opts: &VerifyOptions,
) -> VerificationReport {
    let mut report = VerificationReport::new("lambda_independence", model.flavor, opts.tolerance);
    let (t, k) = (t.with_step(model.step()), k.with_step(model.step()));
    let u = Sampler::new(opts.seed, "lambda_independence/u", 0)
        .point(1, 0, |u, _| model.admissible(u, &[C64::new(0.3, 0.2), C64::new(-0.4, -0.1)]))
        .map(|p| p.0[0])
        .unwrap_or(ZERO);
    let count = opts.samples.max(5);
    let mut values: Vec<(C64, SamplePoint)> = Vec::new();
    for i in 0..count as u64 {
        let mut s = Sampler::new(opts.seed, "lambda_independence", i);
        if let Some((_, lam)) = s.point(0, model.n, |_, l| model.admissible(&[u], l)) {
            if let Ok(v) = sl_pairing(&t, &k, u, &lam) {
                values.push((v, SamplePoint::new(&[u], &lam)));
            }
        }
    }
    report.samples = values.len();
    for (v, p) in &values {
        let d = (v - values[0].0).norm();
        if d >= report.max_residual {
            report.max_residual = d;
            report.worst_point = Some(p.clone());
        }
    }
    report.pass = report.samples >= 2 && report.max_residual < opts.tolerance;
    report
}

/// The standard identity suite for a catalog model.
pub fn standard_suite(model: &ModelSpec, opts: &VerifyOptions) -> Vec<VerificationReport> {
    let mut out = vec![check_unitarity(model, opts)];
    if model.is_lambda_independent() {
        out.push(check_pure_ybe(model, &model.a, opts));
    } else {
        // the R-matrix itself obeys the pattern with translation +γ
        out.push(check_gnf("gnf_R", model, &model.a, model.gamma, GnfPattern::Printed, opts));
    }
    out.push(check_gnf("gnf_D", model, &model.d, model.step(), GnfPattern::Printed, opts));
    out.push(check_exchange(model, &model.t, opts));
    out.push(check_dual_exchange(model, &model.chi, opts));
    let bc = [model.b.clone(), model.c.clone()];
    out.push(check_zero_weight("zero_weight_total_BC", model, &bc, WeightMode::Total, opts));
    out.push(check_comodule("comodule_AB", model, &model.a, &model.b, opts));
    out.push(check_comodule("comodule_CD", model, &model.c, &model.d, opts));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{control_sixvertex, gl2_model, Boundary};
    use crate::tensor::re;

    fn opts() -> VerifyOptions {
        VerifyOptions { samples: 6, seed: 11, ..Default::default() }
    }

    #[test]
    fn constant_permutation_satisfies_ybe() {
        let m = control_sixvertex(re(0.3), ZERO, Boundary::SP);
        let p = DynamicalMatrix::constant(DenseOperator::permutation(1, 2, &[1, 2], 2).unwrap(), 2, m.step());
        let r = check_pure_ybe(&m, &p, &opts());
        assert!(r.pass, "{r:?}");
        assert_eq!(r.max_residual, 0.0);
    }

    #[test]
    fn zero_weight_examples() {
        let id = DenseOperator::identity(&[1, 2], 2);
        assert_eq!(zero_weight_residual(&id, WeightMode::Total).unwrap(), 0.0);
        let raise = DenseOperator::matrix_unit(1, 2, 0, 1).embed(&[1, 2]).unwrap();
        assert!(zero_weight_residual(&raise, WeightMode::Total).unwrap() > 0.5);
    }

    #[test]
    fn gl2_unitarity_and_gnf() {
        let m = gl2_model(re(0.2), re(1.1));
        let r = check_unitarity(&m, &opts());
        assert!(r.pass, "{r:?}");
        let r = check_gnf("gnf_R", &m, &m.a, m.gamma, GnfPattern::Printed, &opts());
        assert!(r.pass, "{r:?}");
        let r = check_gnf("gnf_R", &m, &m.a, m.gamma, GnfPattern::Reversed, &opts());
        assert!(!r.pass && r.max_residual > 1e-3, "{r:?}");
    }

    #[test]
    fn lambda_independence_controls() {
        let m = gl2_model(re(0.2), re(1.1));
        let one = DynamicalMatrix::constant(DenseOperator::identity(&[1], 2), 1, m.step());
        assert!(check_lambda_independence(&m, &one, &one, &opts()).pass);
        let synthetic = DynamicalMatrix::new(&[1], 2, 1, m.step(), |_, lam| {
            DenseOperator::from_rows(vec![1], 2, &[lam[0], ZERO, ZERO, re(1.0)])
        });
        assert!(!check_lambda_independence(&m, &one, &synthetic, &opts()).pass);
    }
}
