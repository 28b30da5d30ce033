//! Dense complex operators on labeled tensor legs.
//!
//! Storage keeps legs sorted. Entries are indexed lexicographically with the
//! first (smallest) leg as the most significant digit.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Leg = u32;

pub const DEFAULT_CONDITION_LIMIT: f64 = 1e12;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Diagonal matrix units `h_i = E_ii` for one leg of dimension `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WeightBasis {
    pub n: usize,
}

impl WeightBasis {
    pub fn new(n: usize) -> Self {
        WeightBasis { n }
    }

    pub fn h(&self, leg: Leg, i: usize) -> DenseOperator {
        DenseOperator::matrix_unit(leg, self.n, i, i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    legs: Vec<Leg>,
    n: usize,
    mat: DMatrix<C64>,
}

fn check_unique(legs: &[Leg]) -> Result<()> {
    for (i, a) in legs.iter().enumerate() {
        if legs[i + 1..].contains(a) {
            return Err(Error::DuplicateLeg(*a));
        }
    }
    Ok(())
}

fn sorted(legs: &[Leg]) -> Vec<Leg> {
    let mut v = legs.to_vec();
    v.sort_unstable();
    v
}

/// Weight of digit position `p` among `k` positions.
#[inline]
fn place(n: usize, k: usize, p: usize) -> usize {
    n.pow((k - 1 - p) as u32)
}

/// Reorder tensor factors. `perm[new_pos] = old_pos`.
fn permute_factors(mat: &DMatrix<C64>, n: usize, perm: &[usize]) -> DMatrix<C64> {
    let k = perm.len();
    let dim = mat.nrows();
    let mut map = vec![0usize; dim];
    for (old, slot) in map.iter_mut().enumerate() {
        let mut new = 0;
        for (np, &op) in perm.iter().enumerate() {
            let d = (old / place(n, k, op)) % n;
            new += d * place(n, k, np);
        }
        *slot = new;
    }
    let mut out = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        for r in 0..dim {
            out[(map[r], map[c])] = mat[(r, c)];
        }
    }
    out
}

/// Offsets contributed by the digits on `positions` for every sub-index.
fn offsets(n: usize, k: usize, positions: &[usize]) -> Vec<usize> {
    let m = positions.len();
    let count = n.pow(m as u32);
    (0..count)
        .map(|a| {
            let mut off = 0;
            for (q, &p) in positions.iter().enumerate() {
                let d = (a / place(n, m, q)) % n;
                off += d * place(n, k, p);
            }
            off
        })
        .collect()
}

impl DenseOperator {
    /// Build from a matrix whose factors follow the order of `legs`.
    pub fn new(legs: Vec<Leg>, n: usize, mat: DMatrix<C64>) -> Result<Self> {
        check_unique(&legs)?;
        if n == 0 {
            return Err(Error::Dimension("leg dimension must be positive".into()));
        }
        let dim = n.pow(legs.len() as u32);
        if mat.nrows() != dim || mat.ncols() != dim {
            return Err(Error::Dimension(format!(
                "{}x{} matrix on {} legs of dimension {}",
                mat.nrows(),
                mat.ncols(),
                legs.len(),
                n
            )));
        }
        let target = sorted(&legs);
        if target == legs {
            return Ok(DenseOperator { legs, n, mat });
        }
        let perm: Vec<usize> = target
            .iter()
            .map(|l| legs.iter().position(|x| x == l).unwrap())
            .collect();
        let mat = permute_factors(&mat, n, &perm);
        Ok(DenseOperator { legs: target, n, mat })
    }

    /// Row-major entries.
    pub fn from_rows(legs: Vec<Leg>, n: usize, rows: &[C64]) -> Result<Self> {
        let dim = n.pow(legs.len() as u32);
        if rows.len() != dim * dim {
            return Err(Error::Dimension(format!("{} entries for dimension {dim}", rows.len())));
        }
        Self::new(legs, n, DMatrix::from_row_slice(dim, dim, rows))
    }

    pub fn from_real_rows(legs: Vec<Leg>, n: usize, rows: &[f64]) -> Result<Self> {
        let v: Vec<C64> = rows.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_rows(legs, n, &v)
    }

    pub fn identity(legs: &[Leg], n: usize) -> Self {
        let mut legs = legs.to_vec();
        legs.sort_unstable();
        legs.dedup();
        let dim = n.pow(legs.len() as u32);
        DenseOperator { legs, n, mat: DMatrix::identity(dim, dim) }
    }

    pub fn zeros(legs: &[Leg], n: usize) -> Self {
        let mut legs = legs.to_vec();
        legs.sort_unstable();
        legs.dedup();
        let dim = n.pow(legs.len() as u32);
        DenseOperator { legs, n, mat: DMatrix::zeros(dim, dim) }
    }

    /// `E_ij` on a single leg.
    pub fn matrix_unit(leg: Leg, n: usize, i: usize, j: usize) -> Self {
        let mut mat = DMatrix::zeros(n, n);
        mat[(i, j)] = ONE;
        DenseOperator { legs: vec![leg], n, mat }
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    fn position(&self, leg: Leg) -> Result<usize> {
        self.legs.iter().position(|&l| l == leg).ok_or(Error::UnknownLeg(leg))
    }

    /// Tensor with the identity on the remaining legs of `total`.
    pub fn embed(&self, total: &[Leg]) -> Result<Self> {
        check_unique(total)?;
        for l in &self.legs {
            if !total.contains(l) {
                return Err(Error::UnknownLeg(*l));
            }
        }
        let total = sorted(total);
        if total == self.legs {
            return Ok(self.clone());
        }
        let k = total.len();
        let mine: Vec<usize> = self.legs.iter().map(|l| total.iter().position(|t| t == l).unwrap()).collect();
        let rest: Vec<usize> = (0..k).filter(|p| !mine.contains(p)).collect();
        let off_sub = offsets(self.n, k, &mine);
        let off_rest = offsets(self.n, k, &rest);
        let dim = self.n.pow(k as u32);
        let mut mat = DMatrix::zeros(dim, dim);
        let small = self.mat.nrows();
        for &r in &off_rest {
            for b in 0..small {
                for a in 0..small {
                    let v = self.mat[(a, b)];
                    if v != ZERO {
                        mat[(off_sub[a] + r, off_sub[b] + r)] = v;
                    }
                }
            }
        }
        Ok(DenseOperator { legs: total, n: self.n, mat })
    }

    /// Permutation operator swapping legs `a` and `b`, acting on `context`.
    pub fn permutation(a: Leg, b: Leg, context: &[Leg], n: usize) -> Result<Self> {
        if a == b {
            return Err(Error::SameLeg(a));
        }
        for l in [a, b] {
            if !context.contains(&l) {
                return Err(Error::UnknownLeg(l));
            }
        }
        let dim = n * n;
        let mut mat = DMatrix::zeros(dim, dim);
        for i in 0..n {
            for j in 0..n {
                mat[(i * n + j, j * n + i)] = ONE;
            }
        }
        DenseOperator::new(vec![a, b], n, mat)?.embed(context)
    }

    pub fn partial_trace(&self, leg: Leg) -> Result<Self> {
        let p = self.position(leg)?;
        let k = self.legs.len();
        let n = self.n;
        let rest: Vec<usize> = (0..k).filter(|&q| q != p).collect();
        let ins = offsets(n, k, &rest);
        let w = place(n, k, p);
        let dim = ins.len();
        let mut mat = DMatrix::zeros(dim, dim);
        for y in 0..dim {
            for x in 0..dim {
                let mut acc = ZERO;
                for d in 0..n {
                    acc += self.mat[(ins[x] + d * w, ins[y] + d * w)];
                }
                mat[(x, y)] = acc;
            }
        }
        let legs = self.legs.iter().copied().filter(|&l| l != leg).collect();
        Ok(DenseOperator { legs, n, mat })
    }

    pub fn partial_transpose(&self, legs: &[Leg]) -> Result<Self> {
        check_unique(legs)?;
        let k = self.legs.len();
        let n = self.n;
        let weights: Vec<usize> =
            legs.iter().map(|&l| self.position(l).map(|p| place(n, k, p))).collect::<Result<_>>()?;
        let dim = self.dim();
        let mut mat = DMatrix::zeros(dim, dim);
        for c in 0..dim {
            for r in 0..dim {
                let (mut r2, mut c2) = (r, c);
                for &w in &weights {
                    let dr = (r / w) % n;
                    let dc = (c / w) % n;
                    r2 = r2 - dr * w + dc * w;
                    c2 = c2 - dc * w + dr * w;
                }
                mat[(r2, c2)] = self.mat[(r, c)];
            }
        }
        Ok(DenseOperator { legs: self.legs.clone(), n, mat })
    }

    /// `P_ab M P_ab`, i.e. the subscript exchange `M_12 -> M_21`.
    pub fn leg_swap(&self, a: Leg, b: Leg) -> Result<Self> {
        let pa = self.position(a)?;
        let pb = self.position(b)?;
        let mut legs = self.legs.clone();
        legs.swap(pa, pb);
        DenseOperator::new(legs, self.n, self.mat.clone())
    }

    /// Rename legs: `new_labels[i]` replaces the i-th stored leg.
    pub fn relabel(&self, new_labels: &[Leg]) -> Result<Self> {
        if new_labels.len() != self.legs.len() {
            return Err(Error::LegMismatch { expected: self.legs.clone(), found: new_labels.to_vec() });
        }
        DenseOperator::new(new_labels.to_vec(), self.n, self.mat.clone())
    }

    pub fn inverse(&self) -> Result<Self> {
        self.inverse_with(DEFAULT_CONDITION_LIMIT)
    }

    /// Inverse guarded by the 1-norm condition number.
    pub fn inverse_with(&self, condition_limit: f64) -> Result<Self> {
        let inv = self.mat.clone().try_inverse().ok_or(Error::Singular { cond: f64::INFINITY })?;
        let cond = norm1(&self.mat) * norm1(&inv);
        if !cond.is_finite() || cond > condition_limit {
            return Err(Error::Singular { cond });
        }
        Ok(DenseOperator { legs: self.legs.clone(), n: self.n, mat: inv })
    }

    fn aligned(&self, other: &Self) -> Result<(Self, Self)> {
        if self.n != other.n {
            return Err(Error::Dimension(format!("leg dimensions {} and {}", self.n, other.n)));
        }
        if self.legs == other.legs {
            return Ok((self.clone(), other.clone()));
        }
        let mut union = self.legs.clone();
        for l in &other.legs {
            if !union.contains(l) {
                union.push(*l);
            }
        }
        Ok((self.embed(&union)?, other.embed(&union)?))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.legs == other.legs && self.n == other.n {
            return Ok(DenseOperator { legs: self.legs.clone(), n: self.n, mat: &self.mat * &other.mat });
        }
        let (a, b) = self.aligned(other)?;
        Ok(DenseOperator { legs: a.legs, n: a.n, mat: a.mat * b.mat })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let (a, b) = self.aligned(other)?;
        Ok(DenseOperator { legs: a.legs, n: a.n, mat: a.mat + b.mat })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let (a, b) = self.aligned(other)?;
        Ok(DenseOperator { legs: a.legs, n: a.n, mat: a.mat - b.mat })
    }

    pub fn scale(&self, c: C64) -> Self {
        DenseOperator { legs: self.legs.clone(), n: self.n, mat: &self.mat * c }
    }

    pub fn add_scaled_identity(&self, c: C64) -> Self {
        let mut mat = self.mat.clone();
        for i in 0..mat.nrows() {
            mat[(i, i)] += c;
        }
        DenseOperator { legs: self.legs.clone(), n: self.n, mat }
    }

    pub fn transpose(&self) -> Self {
        DenseOperator { legs: self.legs.clone(), n: self.n, mat: self.mat.transpose() }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn is_finite(&self) -> bool {
        self.mat.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Frobenius distance after aligning legs.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }

    /// Largest off-diagonal modulus.
    pub fn offdiagonal_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for c in 0..self.dim() {
            for r in 0..self.dim() {
                if r != c {
                    acc += self.mat[(r, c)].norm_sqr();
                }
            }
        }
        acc.sqrt()
    }

    /// Entry addressed by per-leg digits in stored leg order.
    pub fn entry(&self, row: &[usize], col: &[usize]) -> C64 {
        let k = self.legs.len();
        let mut r = 0;
        let mut c = 0;
        for p in 0..k {
            r += row[p] * place(self.n, k, p);
            c += col[p] * place(self.n, k, p);
        }
        self.mat[(r, c)]
    }
}

fn norm1(m: &DMatrix<C64>) -> f64 {
    (0..m.ncols()).map(|c| m.column(c).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Frobenius norm of `AB - BA`.
pub fn commutator_norm(a: &DenseOperator, b: &DenseOperator) -> Result<f64> {
    Ok(a.mul(b)?.sub(&b.mul(a)?)?.norm())
}

/// Digits of a flat index, most significant first.
pub fn digits(index: usize, n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|p| (index / place(n, k, p)) % n).collect()
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sz(leg: Leg) -> DenseOperator {
        DenseOperator::from_real_rows(vec![leg], 2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
    }

    fn sx(leg: Leg) -> DenseOperator {
        DenseOperator::from_real_rows(vec![leg], 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn embed_pads_with_identity() {
        let m = sz(1).embed(&[1, 2]).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| m.matrix()[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, 1.0, -1.0, -1.0]);
        let m = sz(2).embed(&[1, 2]).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| m.matrix()[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn embed_matrix_unit_action() {
        // E_12 on leg 2 maps e1 (x) e2 to e1 (x) e1
        let m = DenseOperator::matrix_unit(2, 2, 0, 1).embed(&[1, 2]).unwrap();
        assert_eq!(m.matrix()[(0, 1)], ONE);
        assert_eq!(m.norm(), 2f64.sqrt());
    }

    #[test]
    fn unsorted_construction_reorders_factors() {
        let a = DenseOperator::from_real_rows(vec![1], 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DenseOperator::from_real_rows(vec![2], 2, &[5.0, 6.0, 7.0, 8.0]).unwrap();
        let ab = a.mul(&b).unwrap();
        let k = a.matrix().kronecker(b.matrix());
        assert!((ab.matrix() - &k).norm() < 1e-15);
        let swapped = DenseOperator::new(vec![2, 1], 2, b.matrix().kronecker(a.matrix())).unwrap();
        assert!(swapped.distance(&ab).unwrap() < 1e-15);
    }

    #[test]
    fn permutation_basics() {
        let p = DenseOperator::permutation(1, 2, &[1, 2], 2).unwrap();
        // e1 (x) e2 -> e2 (x) e1
        assert_eq!(p.matrix()[(2, 1)], ONE);
        let id = DenseOperator::identity(&[1, 2], 2);
        assert!(p.mul(&p).unwrap().distance(&id).unwrap() < 1e-15);
        let t = p.partial_trace(1).unwrap();
        assert!(t.distance(&DenseOperator::identity(&[2], 2)).unwrap() < 1e-15);
        assert!(DenseOperator::permutation(1, 1, &[1], 2).is_err());
    }

    #[test]
    fn partial_trace_of_product() {
        let a = DenseOperator::from_real_rows(vec![0], 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = sx(1);
        let t = a.mul(&b).unwrap().partial_trace(0).unwrap();
        assert!(t.distance(&b.scale(re(5.0))).unwrap() < 1e-15);
    }

    #[test]
    fn partial_transpose_of_permutation() {
        let p = DenseOperator::permutation(1, 2, &[1, 2], 2).unwrap();
        let pt = p.partial_transpose(&[1]).unwrap();
        // oracle: sum_ij E_ji (x) E_ji
        let mut expect = DenseOperator::zeros(&[1, 2], 2);
        for i in 0..2 {
            for j in 0..2 {
                let e = DenseOperator::matrix_unit(1, 2, j, i).mul(&DenseOperator::matrix_unit(2, 2, j, i)).unwrap();
                expect = expect.add(&e).unwrap();
            }
        }
        assert!(pt.distance(&expect).unwrap() < 1e-15);
    }

    #[test]
    fn leg_swap_exchanges_factors() {
        let a = DenseOperator::from_real_rows(vec![1], 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DenseOperator::from_real_rows(vec![2], 2, &[5.0, 6.0, 7.0, 8.0]).unwrap();
        let ab = a.mul(&b).unwrap();
        let ba = a.relabel(&[2]).unwrap().mul(&b.relabel(&[1]).unwrap()).unwrap();
        assert!(ab.leg_swap(1, 2).unwrap().distance(&ba).unwrap() < 1e-15);
        let p = DenseOperator::permutation(1, 2, &[1, 2], 2).unwrap();
        assert!(p.leg_swap(1, 2).unwrap().distance(&p).unwrap() < 1e-15);
        let conj = p.mul(&ab).unwrap().mul(&p).unwrap();
        assert!(conj.distance(&ab.leg_swap(1, 2).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn inverse_and_commutator() {
        let id = DenseOperator::identity(&[3], 2);
        assert!(id.inverse().unwrap().distance(&id).unwrap() < 1e-15);
        assert_eq!(commutator_norm(&sz(1), &sz(1)).unwrap(), 0.0);
        let v = commutator_norm(&sx(1), &sz(1)).unwrap();
        assert!((v - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        let sing = DenseOperator::from_real_rows(vec![1], 2, &[1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(sing.inverse(), Err(Error::Singular { .. })));
        let near = DenseOperator::from_real_rows(vec![1], 2, &[1.0, 0.0, 0.0, 1e-14]).unwrap();
        assert!(matches!(near.inverse(), Err(Error::Singular { .. })));
    }

    #[test]
    fn errors() {
        assert_eq!(sz(1).embed(&[2, 3]).unwrap_err(), Error::UnknownLeg(1));
        assert_eq!(sz(1).embed(&[1, 1]).unwrap_err(), Error::DuplicateLeg(1));
        assert_eq!(sz(1).partial_trace(4).unwrap_err(), Error::UnknownLeg(4));
        assert!(DenseOperator::new(vec![1, 1], 2, DMatrix::identity(4, 4)).is_err());
    }
}
