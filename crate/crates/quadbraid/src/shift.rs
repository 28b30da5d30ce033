//! Matrix-valued functions of the dynamical parameter and the difference
//! operators built from them.
//!
//! A translation `S_s` acts as `f(λ) -> f(λ + step·s)` with `s ∈ ℤⁿ`. All
//! shifted evaluations `M(λ + step·h_k)` are realized blockwise on the
//! weight basis, so no formal series is ever expanded.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{c, DenseOperator, Leg, C64, ZERO};

pub type Shift = Vec<i32>;

type OpFn = Arc<dyn Fn(&[C64]) -> Result<DenseOperator> + Send + Sync>;
type DynFn = Arc<dyn Fn(&[C64], &[C64]) -> Result<DenseOperator> + Send + Sync>;
type TermsFn = Arc<dyn Fn(&[C64]) -> Result<Terms> + Send + Sync>;

pub fn shifted(lam: &[C64], step: C64, s: &[i32]) -> Vec<C64> {
    lam.iter().zip(s).map(|(l, &k)| l + step * k as f64).collect()
}

fn zero_shift(n: usize) -> Shift {
    vec![0; n]
}

fn unit_shift(n: usize, i: usize, sign: i32) -> Shift {
    let mut s = zero_shift(n);
    s[i] = sign;
    s
}

fn add_shifts(a: &[i32], b: &[i32]) -> Shift {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn union_legs(a: &[Leg], b: &[Leg]) -> Vec<Leg> {
    let mut v = a.to_vec();
    for l in b {
        if !v.contains(l) {
            v.push(*l);
        }
    }
    v.sort_unstable();
    v
}

fn checked(op: DenseOperator, legs: &[Leg]) -> Result<DenseOperator> {
    if !op.is_finite() {
        return Err(Error::SingularPoint("non-finite entry".into()));
    }
    if op.legs() == legs {
        Ok(op)
    } else {
        op.embed(legs)
    }
}

/// Shift index of a weight multi-index: `Σ sign_k e_{w_k}`.
fn weight_shift_vector(n: usize, signs: &[i32], w: &[usize]) -> Shift {
    let mut s = zero_shift(n);
    for (sign, &i) in signs.iter().zip(w) {
        s[i] += sign;
    }
    s
}

fn place(n: usize, k: usize, p: usize) -> usize {
    n.pow((k - 1 - p) as u32)
}

/// A λ-dependent operator at fixed spectral arguments.
#[derive(Clone)]
pub struct LambdaOp {
    legs: Vec<Leg>,
    n: usize,
    step: C64,
    f: OpFn,
}

impl std::fmt::Debug for LambdaOp {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("LambdaOp").field("legs", &self.legs).field("n", &self.n).field("step", &self.step).finish()
    }
}

impl LambdaOp {
    pub fn new<F>(legs: &[Leg], n: usize, step: C64, f: F) -> Self
    where
        F: Fn(&[C64]) -> Result<DenseOperator> + Send + Sync + 'static,
    {
        let mut legs = legs.to_vec();
        legs.sort_unstable();
        LambdaOp { legs, n, step, f: Arc::new(f) }
    }

    pub fn constant(op: DenseOperator, step: C64) -> Self {
        let legs = op.legs().to_vec();
        let n = op.n();
        LambdaOp::new(&legs, n, step, move |_| Ok(op.clone()))
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> C64 {
        self.step
    }

    pub fn eval(&self, lam: &[C64]) -> Result<DenseOperator> {
        checked((self.f)(lam)?, &self.legs)
    }

    /// Pointwise transformation of the value, e.g. inverse or transpose.
    pub fn map<G>(&self, legs: &[Leg], g: G) -> Self
    where
        G: Fn(DenseOperator) -> Result<DenseOperator> + Send + Sync + 'static,
    {
        let me = self.clone();
        LambdaOp::new(legs, self.n, self.step, move |lam| g(me.eval(lam)?))
    }

    pub fn inverse(&self) -> Self {
        self.map(&self.legs.clone(), |m| m.inverse())
    }

    pub fn transpose(&self) -> Self {
        self.map(&self.legs.clone(), |m| Ok(m.transpose()))
    }

    pub fn leg_swap(&self, a: Leg, b: Leg) -> Self {
        self.map(&self.legs.clone(), move |m| m.leg_swap(a, b))
    }

    /// Positional relabeling of the stored (sorted) legs.
    pub fn relabel(&self, new_labels: &[Leg]) -> Self {
        let labels = new_labels.to_vec();
        self.map(new_labels, move |m| m.relabel(&labels))
    }

    /// Pointwise product `self(λ)·other(λ)`.
    pub fn mul(&self, other: &LambdaOp) -> Self {
        let (a, b) = (self.clone(), other.clone());
        let legs = union_legs(&self.legs, &other.legs);
        LambdaOp::new(&legs, self.n, self.step, move |lam| a.eval(lam)?.mul(&b.eval(lam)?))
    }

    pub fn add(&self, other: &LambdaOp) -> Self {
        let (a, b) = (self.clone(), other.clone());
        let legs = union_legs(&self.legs, &other.legs);
        LambdaOp::new(&legs, self.n, self.step, move |lam| a.eval(lam)?.add(&b.eval(lam)?))
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(&self.legs.clone(), move |m| Ok(m.scale(s)))
    }

    /// `M(λ + step·Σ sign_k h_{leg_k})` on `legs ∪ shift legs`.
    pub fn weight_shift(&self, shift_legs: &[(Leg, i32)]) -> Result<LambdaOp> {
        for (i, (l, _)) in shift_legs.iter().enumerate() {
            if self.legs.contains(l) {
                return Err(Error::OverlappingLegs(*l));
            }
            if shift_legs[i + 1..].iter().any(|(m, _)| m == l) {
                return Err(Error::DuplicateLeg(*l));
            }
        }
        if shift_legs.is_empty() {
            return Ok(self.clone());
        }
        let me = self.clone();
        let shifts: Vec<(Leg, i32)> = shift_legs.to_vec();
        let all: Vec<Leg> = union_legs(&self.legs, &shifts.iter().map(|x| x.0).collect::<Vec<_>>());
        let n = self.n;
        let k = all.len();
        let m_pos: Vec<usize> = self.legs.iter().map(|l| all.iter().position(|x| x == l).unwrap()).collect();
        let s_pos: Vec<usize> = shifts.iter().map(|(l, _)| all.iter().position(|x| x == l).unwrap()).collect();
        let signs: Vec<i32> = shifts.iter().map(|x| x.1).collect();
        let step = self.step;
        let out_legs = all.clone();
        Ok(LambdaOp::new(&all, n, step, move |lam| {
            let dim = n.pow(k as u32);
            let mut mat = nalgebra::DMatrix::zeros(dim, dim);
            let mut cache: BTreeMap<Shift, DenseOperator> = BTreeMap::new();
            let ns = s_pos.len();
            let small = n.pow(m_pos.len() as u32);
            let sub_off: Vec<usize> = (0..small)
                .map(|a| {
                    m_pos.iter().enumerate().map(|(q, &p)| ((a / place(n, m_pos.len(), q)) % n) * place(n, k, p)).sum()
                })
                .collect();
            for widx in 0..n.pow(ns as u32) {
                let w: Vec<usize> = (0..ns).map(|q| (widx / place(n, ns, q)) % n).collect();
                let s = weight_shift_vector(n, &signs, &w);
                if !cache.contains_key(&s) {
                    let v = me.eval(&shifted(lam, step, &s))?;
                    cache.insert(s.clone(), v);
                }
                let op = &cache[&s];
                let woff: usize = s_pos.iter().zip(&w).map(|(&p, &d)| d * place(n, k, p)).sum();
                for b in 0..small {
                    for a in 0..small {
                        mat[(sub_off[a] + woff, sub_off[b] + woff)] = op.matrix()[(a, b)];
                    }
                }
            }
            DenseOperator::new(out_legs.clone(), n, mat)
        }))
    }

    /// Index-dependent shift. Entry `(r, c)` is taken from `M(λ − sign·step·Σ_{leg} e_{d(leg)})`
    /// where `d` is the column digit (SC) or the row digit (SL) on each named leg.
    pub fn sc_shift(&self, mode: ShiftMode, sign: i32, legs: &[Leg]) -> Result<LambdaOp> {
        let pos: Vec<usize> =
            legs.iter().map(|l| self.legs.iter().position(|x| x == l).ok_or(Error::UnknownLeg(*l))).collect::<Result<_>>()?;
        let me = self.clone();
        let n = self.n;
        let k = self.legs.len();
        let step = self.step;
        let my_legs = self.legs.clone();
        Ok(LambdaOp::new(&self.legs, n, step, move |lam| {
            let dim = n.pow(k as u32);
            let mut mat = nalgebra::DMatrix::zeros(dim, dim);
            let mut cache: BTreeMap<Shift, DenseOperator> = BTreeMap::new();
            for col in 0..dim {
                for row in 0..dim {
                    let idx = match mode {
                        ShiftMode::SC => col,
                        ShiftMode::SL => row,
                    };
                    let mut s = zero_shift(n);
                    for &p in &pos {
                        s[(idx / place(n, k, p)) % n] -= sign;
                    }
                    if !cache.contains_key(&s) {
                        let v = me.eval(&shifted(lam, step, &s))?;
                        cache.insert(s.clone(), v);
                    }
                    mat[(row, col)] = cache[&s].matrix()[(row, col)];
                }
            }
            DenseOperator::new(my_legs.clone(), n, mat)
        }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftMode {
    /// shift by the column index
    SC,
    /// shift by the row index
    SL,
}

/// Pure function of spectral arguments and λ.
#[derive(Clone)]
pub struct DynamicalMatrix {
    legs: Vec<Leg>,
    n: usize,
    arity: usize,
    step: C64,
    f: DynFn,
}

impl std::fmt::Debug for DynamicalMatrix {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("DynamicalMatrix")
            .field("legs", &self.legs)
            .field("n", &self.n)
            .field("arity", &self.arity)
            .field("step", &self.step)
            .finish()
    }
}

impl DynamicalMatrix {
    pub fn new<F>(legs: &[Leg], n: usize, arity: usize, step: C64, f: F) -> Self
    where
        F: Fn(&[C64], &[C64]) -> Result<DenseOperator> + Send + Sync + 'static,
    {
        let mut legs = legs.to_vec();
        legs.sort_unstable();
        DynamicalMatrix { legs, n, arity, step, f: Arc::new(f) }
    }

    pub fn constant(op: DenseOperator, arity: usize, step: C64) -> Self {
        let legs = op.legs().to_vec();
        let n = op.n();
        DynamicalMatrix::new(&legs, n, arity, step, move |_, _| Ok(op.clone()))
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn step(&self) -> C64 {
        self.step
    }

    pub fn with_step(&self, step: C64) -> Self {
        DynamicalMatrix { step, ..self.clone() }
    }

    pub fn eval(&self, u: &[C64], lam: &[C64]) -> Result<DenseOperator> {
        if u.len() != self.arity {
            return Err(Error::Dimension(format!("{} spectral arguments for arity {}", u.len(), self.arity)));
        }
        checked((self.f)(u, lam)?, &self.legs)
    }

    pub fn at(&self, u: &[C64]) -> LambdaOp {
        let me = self.clone();
        let u = u.to_vec();
        LambdaOp::new(&self.legs, self.n, self.step, move |lam| me.eval(&u, lam))
    }

    /// Pointwise transformation of the value.
    pub fn map<G>(&self, legs: &[Leg], g: G) -> Self
    where
        G: Fn(DenseOperator) -> Result<DenseOperator> + Send + Sync + 'static,
    {
        let me = self.clone();
        DynamicalMatrix::new(legs, self.n, self.arity, self.step, move |u, lam| g(me.eval(u, lam)?))
    }

    /// Positional relabeling, e.g. `A_12 -> A_0j` with `[0, j]`.
    pub fn on(&self, new_labels: &[Leg]) -> Self {
        let labels = new_labels.to_vec();
        self.map(new_labels, move |m| m.relabel(&labels))
    }

    pub fn leg_swap(&self, a: Leg, b: Leg) -> Self {
        self.map(&self.legs.clone(), move |m| m.leg_swap(a, b))
    }

    /// Reparametrize the spectral arguments.
    pub fn reparam<G>(&self, arity: usize, g: G) -> Self
    where
        G: Fn(&[C64]) -> Vec<C64> + Send + Sync + 'static,
    {
        let me = self.clone();
        DynamicalMatrix::new(&self.legs, self.n, arity, self.step, move |u, lam| me.eval(&g(u), lam))
    }

    pub fn weight_shift_embed(&self, shift_legs: &[(Leg, i32)]) -> Result<DynamicalMatrix> {
        for (l, _) in shift_legs {
            if self.legs.contains(l) {
                return Err(Error::OverlappingLegs(*l));
            }
        }
        let me = self.clone();
        let shifts = shift_legs.to_vec();
        let legs = union_legs(&self.legs, &shift_legs.iter().map(|x| x.0).collect::<Vec<_>>());
        Ok(DynamicalMatrix::new(&legs, self.n, self.arity, self.step, move |u, lam| {
            me.at(u).weight_shift(&shifts)?.eval(lam)
        }))
    }

    pub fn sc_shift(&self, mode: ShiftMode, sign: i32, legs: &[Leg]) -> Result<DynamicalMatrix> {
        for l in legs {
            if !self.legs.contains(l) {
                return Err(Error::UnknownLeg(*l));
            }
        }
        let me = self.clone();
        let named = legs.to_vec();
        Ok(DynamicalMatrix::new(&self.legs, self.n, self.arity, self.step, move |u, lam| {
            me.at(u).sc_shift(mode, sign, &named)?.eval(lam)
        }))
    }
}

/// Coefficients of a difference operator at one λ, keyed by exact shift vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Terms {
    legs: Vec<Leg>,
    n: usize,
    map: BTreeMap<Shift, DenseOperator>,
}

impl Terms {
    pub fn new(legs: &[Leg], n: usize) -> Self {
        let mut legs = legs.to_vec();
        legs.sort_unstable();
        Terms { legs, n, map: BTreeMap::new() }
    }

    pub fn single(op: DenseOperator, shift: Shift) -> Self {
        let mut t = Terms::new(op.legs(), op.n());
        t.map.insert(shift, op);
        t
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Accumulate `op` at `shift`.
    pub fn add_term(&mut self, shift: Shift, op: DenseOperator) -> Result<()> {
        let op = if op.legs() == self.legs { op } else { op.embed(&self.legs)? };
        match self.map.get_mut(&shift) {
            Some(cur) => *cur = cur.add(&op)?,
            None => {
                self.map.insert(shift, op);
            }
        }
        Ok(())
    }

    pub fn prune(&mut self) {
        self.map.retain(|_, m| m.norm() != 0.0);
    }

    pub fn get(&self, shift: &[i32]) -> Option<&DenseOperator> {
        self.map.get(shift)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Shift, &DenseOperator)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn keys(&self) -> Vec<Shift> {
        self.map.keys().cloned().collect()
    }

    /// Coefficient of the zero shift, or zero.
    pub fn pure_part(&self) -> DenseOperator {
        let z = vec![0; self.n];
        self.map.get(&z).cloned().unwrap_or_else(|| DenseOperator::zeros(&self.legs, self.n))
    }

    /// Frobenius norm of everything off the zero shift.
    pub fn shift_part_norm(&self) -> f64 {
        self.map.iter().filter(|(k, _)| k.iter().any(|&x| x != 0)).map(|(_, m)| m.norm().powi(2)).sum::<f64>().sqrt()
    }

    /// The zero-shift coefficient when all other shifts vanish within `tol`.
    pub fn collapse(&self, tol: f64) -> Result<DenseOperator> {
        if self.shift_part_norm() > tol {
            return Err(Error::ShiftPart);
        }
        Ok(self.pure_part())
    }

    /// Max over shift vectors of the Frobenius distance between coefficients.
    pub fn distance(&self, other: &Terms) -> Result<f64> {
        let mut worst = 0.0f64;
        let legs = union_legs(&self.legs, &other.legs);
        let zero = DenseOperator::zeros(&legs, self.n);
        let mut keys: Vec<&Shift> = self.map.keys().collect();
        keys.extend(other.map.keys());
        for k in keys {
            let a = self.map.get(k).unwrap_or(&zero);
            let b = other.map.get(k).unwrap_or(&zero);
            worst = worst.max(a.distance(b)?);
        }
        Ok(worst)
    }

    pub fn map_coefficients<G>(&self, legs: &[Leg], g: G) -> Result<Terms>
    where
        G: Fn(&DenseOperator) -> Result<DenseOperator>,
    {
        let mut out = Terms::new(legs, self.n);
        for (k, m) in &self.map {
            out.add_term(k.clone(), g(m)?)?;
        }
        out.prune();
        Ok(out)
    }
}

/// Finite sum `Σ_s M_s(λ) S_s` with `S_s f(λ) = f(λ + step·s) S_s`.
#[derive(Clone)]
pub struct DifferenceOperator {
    legs: Vec<Leg>,
    n: usize,
    step: C64,
    f: TermsFn,
}

impl std::fmt::Debug for DifferenceOperator {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("DifferenceOperator").field("legs", &self.legs).field("n", &self.n).field("step", &self.step).finish()
    }
}

impl DifferenceOperator {
    pub fn new<F>(legs: &[Leg], n: usize, step: C64, f: F) -> Self
    where
        F: Fn(&[C64]) -> Result<Terms> + Send + Sync + 'static,
    {
        let mut legs = legs.to_vec();
        legs.sort_unstable();
        DifferenceOperator { legs, n, step, f: Arc::new(f) }
    }

    /// Multiplication by a λ-dependent operator.
    pub fn pure(op: &LambdaOp) -> Self {
        let op = op.clone();
        let n = op.n();
        let legs = op.legs().to_vec();
        let step = op.step();
        DifferenceOperator::new(&legs, n, step, move |lam| Ok(Terms::single(op.eval(lam)?, zero_shift(n))))
    }

    pub fn constant(op: DenseOperator, step: C64) -> Self {
        DifferenceOperator::pure(&LambdaOp::constant(op, step))
    }

    pub fn identity(legs: &[Leg], n: usize, step: C64) -> Self {
        DifferenceOperator::constant(DenseOperator::identity(legs, n), step)
    }

    /// `e^{sign·γ𝒟_leg} = Σ_i E_ii^{(leg)} S_{sign·e_i}`.
    pub fn exp_shift(leg: Leg, sign: i32, n: usize, step: C64) -> Self {
        DifferenceOperator::new(&[leg], n, step, move |_| {
            let mut t = Terms::new(&[leg], n);
            for i in 0..n {
                t.add_term(unit_shift(n, i, sign), DenseOperator::matrix_unit(leg, n, i, i))?;
            }
            Ok(t)
        })
    }

    /// Bare translation `S_s` times the identity on `legs`.
    pub fn translation(shift: Shift, legs: &[Leg], n: usize, step: C64) -> Self {
        let legs_v = legs.to_vec();
        DifferenceOperator::new(legs, n, step, move |_| Ok(Terms::single(DenseOperator::identity(&legs_v, n), shift.clone())))
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> C64 {
        self.step
    }

    pub fn eval(&self, lam: &[C64]) -> Result<Terms> {
        if lam.len() != self.n {
            return Err(Error::Dimension(format!("λ has {} components, expected {}", lam.len(), self.n)));
        }
        let t = (self.f)(lam)?;
        if t.legs == self.legs {
            return Ok(t);
        }
        t.map_coefficients(&self.legs, |m| m.embed(&self.legs))
    }

    fn compatible(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Incompatible(format!("n: {} vs {}", self.n, other.n)));
        }
        if (self.step - other.step).norm() > 0.0 {
            return Err(Error::Incompatible(format!("step: {} vs {}", self.step, other.step)));
        }
        Ok(())
    }

    /// Composition with the translation-through rule.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.compatible(other)?;
        let (x, y) = (self.clone(), other.clone());
        let legs = union_legs(&self.legs, &other.legs);
        let out_legs = legs.clone();
        let (n, step) = (self.n, self.step);
        Ok(DifferenceOperator::new(&legs, n, step, move |lam| {
            let left = x.eval(lam)?;
            let mut out = Terms::new(&out_legs, n);
            for (s, ms) in left.iter() {
                let right = y.eval(&shifted(lam, step, s))?;
                let ms = ms.embed(&out_legs)?;
                for (r, mr) in right.iter() {
                    out.add_term(add_shifts(s, r), ms.mul(mr)?)?;
                }
            }
            out.prune();
            Ok(out)
        }))
    }

    /// Left-to-right product of a non-empty list.
    pub fn product(factors: &[DifferenceOperator]) -> Result<Self> {
        let (first, rest) = factors.split_first().ok_or_else(|| Error::Dimension("empty product".into()))?;
        rest.iter().try_fold(first.clone(), |acc, f| acc.mul(f))
    }

    fn combine(&self, other: &Self, sign: f64) -> Result<Self> {
        self.compatible(other)?;
        let (x, y) = (self.clone(), other.clone());
        let legs = union_legs(&self.legs, &other.legs);
        let out_legs = legs.clone();
        Ok(DifferenceOperator::new(&legs, self.n, self.step, move |lam| {
            let mut out = Terms::new(&out_legs, x.n);
            for (k, m) in x.eval(lam)?.iter() {
                out.add_term(k.clone(), m.clone())?;
            }
            for (k, m) in y.eval(lam)?.iter() {
                out.add_term(k.clone(), m.scale(c(sign, 0.0)))?;
            }
            out.prune();
            Ok(out)
        }))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, -1.0)
    }

    pub fn scale(&self, s: C64) -> Self {
        let x = self.clone();
        let legs = self.legs.clone();
        DifferenceOperator::new(&self.legs, self.n, self.step, move |lam| {
            x.eval(lam)?.map_coefficients(&legs, |m| Ok(m.scale(s)))
        })
    }

    /// Multiply every coefficient by a scalar function of λ (from the left).
    pub fn scale_by<F>(&self, g: F) -> Self
    where
        F: Fn(&[C64]) -> Result<C64> + Send + Sync + 'static,
    {
        let x = self.clone();
        let legs = self.legs.clone();
        DifferenceOperator::new(&self.legs, self.n, self.step, move |lam| {
            let s = g(lam)?;
            x.eval(lam)?.map_coefficients(&legs, |m| Ok(m.scale(s)))
        })
    }

    pub fn trace(&self, leg: Leg) -> Result<Self> {
        if !self.legs.contains(&leg) {
            return Err(Error::UnknownLeg(leg));
        }
        let x = self.clone();
        let legs: Vec<Leg> = self.legs.iter().copied().filter(|&l| l != leg).collect();
        let out = legs.clone();
        Ok(DifferenceOperator::new(&legs, self.n, self.step, move |lam| {
            x.eval(lam)?.map_coefficients(&out, |m| m.partial_trace(leg))
        }))
    }

    /// `XY − YX`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    /// Apply to a λ-function at one point: `Σ_s M_s(λ) f(λ + step·s)`.
    pub fn apply(&self, lam: &[C64], f: &LambdaOp) -> Result<DenseOperator> {
        let t = self.eval(lam)?;
        let mut acc: Option<DenseOperator> = None;
        for (s, m) in t.iter() {
            let v = m.mul(&f.eval(&shifted(lam, self.step, s))?)?;
            acc = Some(match acc {
                None => v,
                Some(a) => a.add(&v)?,
            });
        }
        Ok(acc.unwrap_or_else(|| DenseOperator::zeros(&self.legs, self.n)))
    }
}

/// Max over samples and shift vectors of coefficient differences.
pub fn diffop_residual(x: &DifferenceOperator, y: &DifferenceOperator, samples: &[Vec<C64>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Dimension("residual needs at least one sample".into()));
    }
    x.compatible(y)?;
    let mut worst = 0.0f64;
    for lam in samples {
        worst = worst.max(x.eval(lam)?.distance(&y.eval(lam)?)?);
    }
    Ok(worst)
}

/// Scalar value of a one-term zero-shift operator on no legs.
pub fn scalar_of(op: &DenseOperator) -> C64 {
    if op.dim() == 1 {
        op.matrix()[(0, 0)]
    } else {
        ZERO
    }
}
