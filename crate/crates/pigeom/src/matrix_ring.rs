//! Matrix algebra generic over the coefficient rings of the tower (`W`,
//! `R`, and the truncated series ring `T`), through the `PiRing` interface:
//! products, inverses over local rings, entrywise `p^s` powers, and the
//! binomial-series square root of matrices congruent to one.

use crate::error::{Error, Result};
use crate::ram_ring::{RamCtx, RpiElem};
use crate::series_ring::{SeriesCtx, SeriesElem};
use crate::witt_base::{BaseCtx, WElem};

/// Common interface of the precision-tracked local rings in the tower.
/// `pi` means the ring's uniformizer (`p` for `W`).
pub trait PiRing {
    type Elem: Clone + PartialEq + std::fmt::Debug;

    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn from_i64(&self, v: i64) -> Self::Elem;
    fn add(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn sub(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn neg(&self, a: &Self::Elem) -> Self::Elem;
    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn is_zero(&self, a: &Self::Elem) -> bool;
    fn is_unit(&self, a: &Self::Elem) -> bool;
    fn invert(&self, a: &Self::Elem) -> Result<Self::Elem>;
    fn mul_pi_pow(&self, a: &Self::Elem, k: u32) -> Self::Elem;
    fn div_pi_exact(&self, a: &Self::Elem, k: u32) -> Result<Self::Elem>;
    fn pow_ps(&self, a: &Self::Elem, s: u32) -> Self::Elem;
    fn pi_valuation(&self, a: &Self::Elem) -> Option<u32>;
    fn working_precision(&self) -> u32;
    fn elem_prec(&self, a: &Self::Elem) -> u32;
    fn truncate(&self, a: &Self::Elem, k: u32) -> Self::Elem;
    fn assume_precision(&self, a: &Self::Elem, k: u32) -> Self::Elem;
    fn congruent_mod(&self, a: &Self::Elem, b: &Self::Elem, k: u32) -> bool;
    fn half(&self) -> Self::Elem;
    fn binom_half(&self, k: u32) -> Self::Elem;
}

/// A `PiRing` built over a ramified context, with an embedding of `R`.
/// Instantiated by `R` itself (pointwise mode) and by the series ring
/// (jet mode).
pub trait RamHost: PiRing {
    fn ram(&self) -> &RamCtx;
    fn embed_rpi(&self, a: &RpiElem) -> Self::Elem;
}

impl PiRing for BaseCtx {
    type Elem = WElem;

    fn zero(&self) -> WElem {
        BaseCtx::zero(self)
    }
    fn one(&self) -> WElem {
        BaseCtx::one(self)
    }
    fn from_i64(&self, v: i64) -> WElem {
        BaseCtx::from_i64(self, v)
    }
    fn add(&self, a: &WElem, b: &WElem) -> WElem {
        BaseCtx::add(self, a, b)
    }
    fn sub(&self, a: &WElem, b: &WElem) -> WElem {
        BaseCtx::sub(self, a, b)
    }
    fn neg(&self, a: &WElem) -> WElem {
        BaseCtx::neg(self, a)
    }
    fn mul(&self, a: &WElem, b: &WElem) -> WElem {
        BaseCtx::mul(self, a, b)
    }
    fn is_zero(&self, a: &WElem) -> bool {
        BaseCtx::is_zero(self, a)
    }
    fn is_unit(&self, a: &WElem) -> bool {
        BaseCtx::is_unit(self, a)
    }
    fn invert(&self, a: &WElem) -> Result<WElem> {
        BaseCtx::invert(self, a)
    }
    fn mul_pi_pow(&self, a: &WElem, k: u32) -> WElem {
        BaseCtx::mul_p_pow(self, a, k)
    }
    fn div_pi_exact(&self, a: &WElem, k: u32) -> Result<WElem> {
        BaseCtx::div_p_exact(self, a, k)
    }
    fn pow_ps(&self, a: &WElem, s: u32) -> WElem {
        BaseCtx::pow_ps(self, a, s)
    }
    fn pi_valuation(&self, a: &WElem) -> Option<u32> {
        BaseCtx::val_p(self, a)
    }
    fn working_precision(&self) -> u32 {
        self.k_prec()
    }
    fn elem_prec(&self, a: &WElem) -> u32 {
        a.prec()
    }
    fn truncate(&self, a: &WElem, k: u32) -> WElem {
        BaseCtx::truncate(self, a, k)
    }
    fn assume_precision(&self, a: &WElem, k: u32) -> WElem {
        BaseCtx::assume_precision(self, a, k)
    }
    fn congruent_mod(&self, a: &WElem, b: &WElem, k: u32) -> bool {
        BaseCtx::congruent_mod(self, a, b, k)
    }
    fn half(&self) -> WElem {
        BaseCtx::half(self)
    }
    fn binom_half(&self, k: u32) -> WElem {
        BaseCtx::binom_half(self, k)
    }
}

impl PiRing for RamCtx {
    type Elem = RpiElem;

    fn zero(&self) -> RpiElem {
        RamCtx::zero(self)
    }
    fn one(&self) -> RpiElem {
        RamCtx::one(self)
    }
    fn from_i64(&self, v: i64) -> RpiElem {
        RamCtx::from_i64(self, v)
    }
    fn add(&self, a: &RpiElem, b: &RpiElem) -> RpiElem {
        RamCtx::add(self, a, b)
    }
    fn sub(&self, a: &RpiElem, b: &RpiElem) -> RpiElem {
        RamCtx::sub(self, a, b)
    }
    fn neg(&self, a: &RpiElem) -> RpiElem {
        RamCtx::neg(self, a)
    }
    fn mul(&self, a: &RpiElem, b: &RpiElem) -> RpiElem {
        RamCtx::mul(self, a, b)
    }
    fn is_zero(&self, a: &RpiElem) -> bool {
        RamCtx::is_zero(self, a)
    }
    fn is_unit(&self, a: &RpiElem) -> bool {
        RamCtx::is_unit(self, a)
    }
    fn invert(&self, a: &RpiElem) -> Result<RpiElem> {
        RamCtx::invert(self, a)
    }
    fn mul_pi_pow(&self, a: &RpiElem, k: u32) -> RpiElem {
        RamCtx::mul_pi_pow(self, a, k)
    }
    fn div_pi_exact(&self, a: &RpiElem, k: u32) -> Result<RpiElem> {
        RamCtx::div_pi_exact(self, a, k)
    }
    fn pow_ps(&self, a: &RpiElem, s: u32) -> RpiElem {
        RamCtx::pow_ps(self, a, s)
    }
    fn pi_valuation(&self, a: &RpiElem) -> Option<u32> {
        RamCtx::val_pi(self, a)
    }
    fn working_precision(&self) -> u32 {
        self.prec_pi()
    }
    fn elem_prec(&self, a: &RpiElem) -> u32 {
        a.prec()
    }
    fn truncate(&self, a: &RpiElem, k: u32) -> RpiElem {
        RamCtx::truncate(self, a, k)
    }
    fn assume_precision(&self, a: &RpiElem, k: u32) -> RpiElem {
        RamCtx::assume_precision(self, a, k)
    }
    fn congruent_mod(&self, a: &RpiElem, b: &RpiElem, k: u32) -> bool {
        RamCtx::congruent_mod(self, a, b, k)
    }
    fn half(&self) -> RpiElem {
        RamCtx::half(self)
    }
    fn binom_half(&self, k: u32) -> RpiElem {
        self.embed_w(&self.base().binom_half(k))
    }
}

impl RamHost for RamCtx {
    fn ram(&self) -> &RamCtx {
        self
    }
    fn embed_rpi(&self, a: &RpiElem) -> RpiElem {
        a.clone()
    }
}

impl PiRing for SeriesCtx {
    type Elem = SeriesElem;

    fn zero(&self) -> SeriesElem {
        SeriesCtx::zero(self)
    }
    fn one(&self) -> SeriesElem {
        SeriesCtx::one(self)
    }
    fn from_i64(&self, v: i64) -> SeriesElem {
        SeriesCtx::from_i64(self, v)
    }
    fn add(&self, a: &SeriesElem, b: &SeriesElem) -> SeriesElem {
        SeriesCtx::add(self, a, b)
    }
    fn sub(&self, a: &SeriesElem, b: &SeriesElem) -> SeriesElem {
        SeriesCtx::sub(self, a, b)
    }
    fn neg(&self, a: &SeriesElem) -> SeriesElem {
        SeriesCtx::neg(self, a)
    }
    fn mul(&self, a: &SeriesElem, b: &SeriesElem) -> SeriesElem {
        SeriesCtx::mul(self, a, b)
    }
    fn is_zero(&self, a: &SeriesElem) -> bool {
        SeriesCtx::is_zero(self, a)
    }
    fn is_unit(&self, a: &SeriesElem) -> bool {
        SeriesCtx::is_unit(self, a)
    }
    fn invert(&self, a: &SeriesElem) -> Result<SeriesElem> {
        SeriesCtx::invert(self, a)
    }
    fn mul_pi_pow(&self, a: &SeriesElem, k: u32) -> SeriesElem {
        SeriesCtx::mul_pi_pow(self, a, k)
    }
    fn div_pi_exact(&self, a: &SeriesElem, k: u32) -> Result<SeriesElem> {
        SeriesCtx::div_pi_exact(self, a, k)
    }
    fn pow_ps(&self, a: &SeriesElem, s: u32) -> SeriesElem {
        SeriesCtx::pow_ps(self, a, s)
    }
    fn pi_valuation(&self, a: &SeriesElem) -> Option<u32> {
        SeriesCtx::pi_valuation(self, a)
    }
    fn working_precision(&self) -> u32 {
        self.ram().prec_pi()
    }
    fn elem_prec(&self, a: &SeriesElem) -> u32 {
        a.prec()
    }
    fn truncate(&self, a: &SeriesElem, k: u32) -> SeriesElem {
        SeriesCtx::truncate(self, a, k)
    }
    fn assume_precision(&self, a: &SeriesElem, k: u32) -> SeriesElem {
        SeriesCtx::assume_precision(self, a, k)
    }
    fn congruent_mod(&self, a: &SeriesElem, b: &SeriesElem, k: u32) -> bool {
        SeriesCtx::congruent_mod(self, a, b, k)
    }
    fn half(&self) -> SeriesElem {
        self.from_const(&self.ram().half())
    }
    fn binom_half(&self, k: u32) -> SeriesElem {
        self.from_const(&PiRing::binom_half(self.ram(), k))
    }
}

impl RamHost for SeriesCtx {
    fn ram(&self) -> &RamCtx {
        SeriesCtx::ram(self)
    }
    fn embed_rpi(&self, a: &RpiElem) -> SeriesElem {
        self.from_const(a)
    }
}

/// Dense row-major matrix over a `PiRing`'s element type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mat<E> {
    rows: usize,
    cols: usize,
    data: Vec<E>,
}

impl<E: Clone> Mat<E> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> E) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<E>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Mat {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> &E {
        &self.data[i * self.cols + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut E {
        &mut self.data[i * self.cols + j]
    }

    pub fn entries(&self) -> &[E] {
        &self.data
    }

    pub fn map<F: Clone>(&self, mut f: impl FnMut(&E) -> F) -> Mat<F> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|e| f(e)).collect(),
        }
    }

    pub fn transpose(&self) -> Mat<E> {
        Mat::from_fn(self.cols, self.rows, |i, j| self.at(j, i).clone())
    }
}

pub fn mat_zero<R: PiRing>(r: &R, rows: usize, cols: usize) -> Mat<R::Elem> {
    Mat::from_fn(rows, cols, |_, _| r.zero())
}

pub fn mat_id<R: PiRing>(r: &R, n: usize) -> Mat<R::Elem> {
    Mat::from_fn(n, n, |i, j| if i == j { r.one() } else { r.zero() })
}

pub fn mat_add<R: PiRing>(r: &R, a: &Mat<R::Elem>, b: &Mat<R::Elem>) -> Mat<R::Elem> {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols));
    Mat::from_fn(a.rows, a.cols, |i, j| r.add(a.at(i, j), b.at(i, j)))
}

pub fn mat_sub<R: PiRing>(r: &R, a: &Mat<R::Elem>, b: &Mat<R::Elem>) -> Mat<R::Elem> {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols));
    Mat::from_fn(a.rows, a.cols, |i, j| r.sub(a.at(i, j), b.at(i, j)))
}

pub fn mat_neg<R: PiRing>(r: &R, a: &Mat<R::Elem>) -> Mat<R::Elem> {
    a.map(|e| r.neg(e))
}

pub fn mat_scalar_mul<R: PiRing>(r: &R, c: &R::Elem, a: &Mat<R::Elem>) -> Mat<R::Elem> {
    a.map(|e| r.mul(c, e))
}

pub fn mat_mul<R: PiRing>(r: &R, a: &Mat<R::Elem>, b: &Mat<R::Elem>) -> Mat<R::Elem> {
    assert_eq!(a.cols, b.rows, "inner dimensions must agree");
    Mat::from_fn(a.rows, b.cols, |i, j| {
        let mut acc = r.mul(a.at(i, 0), b.at(0, j));
        for k in 1..a.cols {
            acc = r.add(&acc, &r.mul(a.at(i, k), b.at(k, j)));
        }
        acc
    })
}

/// Entrywise `p^s` powers (the matrix written `X^{(p^s)}`).
pub fn mat_pow_ps<R: PiRing>(r: &R, a: &Mat<R::Elem>, s: u32) -> Mat<R::Elem> {
    a.map(|e| r.pow_ps(e, s))
}

pub fn mat_mul_pi_pow<R: PiRing>(r: &R, a: &Mat<R::Elem>, k: u32) -> Mat<R::Elem> {
    a.map(|e| r.mul_pi_pow(e, k))
}

pub fn mat_div_pi_exact<R: PiRing>(r: &R, a: &Mat<R::Elem>, k: u32) -> Result<Mat<R::Elem>> {
    let mut data = Vec::with_capacity(a.data.len());
    for e in &a.data {
        data.push(r.div_pi_exact(e, k)?);
    }
    Ok(Mat {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

pub fn mat_truncate<R: PiRing>(r: &R, a: &Mat<R::Elem>, k: u32) -> Mat<R::Elem> {
    a.map(|e| r.truncate(e, k))
}

pub fn mat_is_zero<R: PiRing>(r: &R, a: &Mat<R::Elem>) -> bool {
    a.data.iter().all(|e| r.is_zero(e))
}

pub fn mat_congruent_mod<R: PiRing>(r: &R, a: &Mat<R::Elem>, b: &Mat<R::Elem>, k: u32) -> bool {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols));
    a.data
        .iter()
        .zip(&b.data)
        .all(|(x, y)| r.congruent_mod(x, y, k))
}

/// Minimum entry precision (the precision at which matrix identities can be
/// asserted).
pub fn mat_prec<R: PiRing>(r: &R, a: &Mat<R::Elem>) -> u32 {
    a.data.iter().map(|e| r.elem_prec(e)).min().unwrap_or(0)
}

/// Minimum pi-valuation over the entries; `None` when the matrix vanishes
/// at its tracked precision.
pub fn mat_valuation<R: PiRing>(r: &R, a: &Mat<R::Elem>) -> Option<u32> {
    a.data.iter().filter_map(|e| r.pi_valuation(e)).min()
}

pub fn mat_is_symmetric<R: PiRing>(r: &R, a: &Mat<R::Elem>) -> bool {
    if a.rows != a.cols {
        return false;
    }
    let k = mat_prec(r, a);
    for i in 0..a.rows {
        for j in (i + 1)..a.cols {
            if !r.congruent_mod(a.at(i, j), a.at(j, i), k) {
                return false;
            }
        }
    }
    true
}

/// Inverse of a matrix whose residue is invertible, by Gauss-Jordan
/// elimination with unit pivots followed by a Newton polish
/// `Y <- Y(2 - XY)` until the product is exactly the identity at the
/// working precision.
pub fn mat_inv<R: PiRing>(r: &R, x: &Mat<R::Elem>) -> Result<Mat<R::Elem>> {
    assert_eq!(x.rows, x.cols, "inverse requires a square matrix");
    let n = x.rows;
    let mut a = x.clone();
    let mut y = mat_id(r, n);
    // match the identity's precision to the operand's
    let prec = mat_prec(r, x);
    y = y.map(|e| r.assume_precision(e, prec));
    for col in 0..n {
        let pivot_row = (col..n)
            .find(|&i| r.is_unit(a.at(i, col)))
            .ok_or(Error::SingularResidue)?;
        if pivot_row != col {
            for j in 0..n {
                let tmp = a.at(pivot_row, j).clone();
                *a.at_mut(pivot_row, j) = a.at(col, j).clone();
                *a.at_mut(col, j) = tmp;
                let tmp = y.at(pivot_row, j).clone();
                *y.at_mut(pivot_row, j) = y.at(col, j).clone();
                *y.at_mut(col, j) = tmp;
            }
        }
        let inv = r.invert(a.at(col, col))?;
        for j in 0..n {
            *a.at_mut(col, j) = r.mul(&inv, a.at(col, j));
            *y.at_mut(col, j) = r.mul(&inv, y.at(col, j));
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let factor = a.at(i, col).clone();
            if r.is_zero(&factor) {
                continue;
            }
            for j in 0..n {
                let t = r.mul(&factor, a.at(col, j));
                *a.at_mut(i, j) = r.sub(a.at(i, j), &t);
                let t = r.mul(&factor, y.at(col, j));
                *y.at_mut(i, j) = r.sub(y.at(i, j), &t);
            }
        }
    }
    // polish (a no-op when elimination was already exact)
    let id = mat_id::<R>(r, n).map(|e| r.assume_precision(&e, prec));
    let two = mat_scalar_mul(r, &r.assume_precision(&r.from_i64(2), prec), &id);
    for _ in 0..40 {
        let prod = mat_mul(r, x, &y);
        let k = mat_prec(r, &prod).min(mat_prec(r, &id));
        if mat_congruent_mod(r, &prod, &id, k) {
            return Ok(y);
        }
        y = mat_mul(r, &y, &mat_sub(r, &two, &prod));
    }
    Err(Error::HypothesisViolated(
        "matrix inversion did not converge".into(),
    ))
}

/// The unique square root congruent to one: for `Y = 1 mod pi`, returns
/// `Z = sum_k C(1/2, k) (Y - 1)^k` with `Z^2 = Y` and `Z = 1 mod pi`
/// (`p` odd makes the coefficients integral and the normalized root unique).
pub fn mat_sqrt_near_one<R: PiRing>(r: &R, y: &Mat<R::Elem>) -> Result<Mat<R::Elem>> {
    assert_eq!(y.rows, y.cols, "square root requires a square matrix");
    let n = y.rows;
    let prec = mat_prec(r, y);
    let id = mat_id::<R>(r, n).map(|e| r.assume_precision(&e, prec));
    if !mat_congruent_mod(r, y, &id, 1) {
        return Err(Error::NotCongruentToOne);
    }
    let dy = mat_sub(r, y, &id);
    let mut z = id.clone();
    let mut pow = id;
    for k in 1..=(prec + 1) {
        pow = mat_mul(r, &pow, &dy);
        if mat_is_zero(r, &pow) {
            break;
        }
        let coeff = r.binom_half(k);
        z = mat_add(r, &z, &mat_scalar_mul(r, &coeff, &pow));
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_field::FieldCtx;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ram() -> RamCtx {
        let f = FieldCtx::new(5, 2, Some(vec![2, 4, 1])).unwrap();
        let w = BaseCtx::new(f, 6).unwrap();
        RamCtx::new(w, 2, 1, &[0, 1], None).unwrap()
    }

    fn random_gl<R: PiRing, G: Rng>(r: &R, n: usize, rng: &mut G, sample: impl Fn(&mut G) -> R::Elem) -> Mat<R::Elem> {
        loop {
            let m = Mat::from_fn(n, n, |_, _| sample(rng));
            if mat_inv(r, &m).is_ok() {
                return m;
            }
        }
    }

    #[test]
    fn inverse_reference_cases() {
        let r = ram();
        let id = mat_id(&r, 2);
        assert_eq!(mat_inv(&r, &id).unwrap(), id);
        // X = 1 + pi E_{12} inverts to 1 - pi E_{12}
        let mut x = mat_id(&r, 2);
        *x.at_mut(0, 1) = r.pi();
        let inv = mat_inv(&r, &x).unwrap();
        let mut expect = mat_id(&r, 2);
        *expect.at_mut(0, 1) = RamCtx::neg(&r, &r.pi());
        let k = mat_prec(&r, &inv).min(mat_prec(&r, &expect));
        assert!(mat_congruent_mod(&r, &inv, &expect, k));
    }

    #[test]
    fn inverse_random_product_check() {
        let r = ram();
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..20 {
            let m = random_gl(&r, 2, &mut rng, |g| r.random(g, r.prec_pi()));
            let inv = mat_inv(&r, &m).unwrap();
            let prod = mat_mul(&r, &m, &inv);
            let id = mat_id(&r, 2);
            let k = mat_prec(&r, &prod);
            assert!(mat_congruent_mod(&r, &prod, &id, k));
            let prod = mat_mul(&r, &inv, &m);
            assert!(mat_congruent_mod(&r, &prod, &id, k));
        }
        // singular residue is rejected
        let mut sing = mat_zero(&r, 2, 2);
        *sing.at_mut(0, 0) = r.pi();
        *sing.at_mut(1, 1) = r.one();
        assert!(matches!(mat_inv(&r, &sing), Err(Error::SingularResidue)));
    }

    #[test]
    fn entrywise_power_consistency() {
        let r = ram();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let m = Mat::from_fn(2, 2, |_, _| r.random(&mut rng, r.prec_pi()));
        let a = mat_pow_ps(&r, &mat_pow_ps(&r, &m, 1), 1);
        let b = mat_pow_ps(&r, &m, 2);
        assert_eq!(a, b);
        assert_eq!(mat_pow_ps(&r, &mat_id(&r, 2), 1), mat_id(&r, 2));
    }

    #[test]
    fn scalar_square_root_reference() {
        // p = 5, K = 3, unramified scalar: sqrt(16) = 121 mod 125
        let f = FieldCtx::new(5, 1, None).unwrap();
        let w = BaseCtx::new(f, 3).unwrap();
        let r = RamCtx::new(w, 1, 1, &[0], Some(3)).unwrap();
        let y = Mat::from_fn(1, 1, |_, _| r.from_i64(16));
        let z = mat_sqrt_near_one(&r, &y).unwrap();
        let expect = r.from_i64(121);
        assert!(r.congruent_mod(z.at(0, 0), &expect, 3));
        // and z^2 = y
        let sq = mat_mul(&r, &z, &z);
        assert!(mat_congruent_mod(&r, &sq, &y, 3));
    }

    #[test]
    fn matrix_square_roots_square_back() {
        let r = ram();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..25 {
            // y = 1 + pi X
            let x = Mat::from_fn(2, 2, |_, _| r.random(&mut rng, r.prec_pi()));
            let y = mat_add(&r, &mat_id(&r, 2), &mat_mul_pi_pow(&r, &x, 1));
            let z = mat_sqrt_near_one(&r, &y).unwrap();
            let sq = mat_mul(&r, &z, &z);
            let k = mat_prec(&r, &sq).min(mat_prec(&r, &y));
            assert!(mat_congruent_mod(&r, &sq, &y, k));
            assert!(mat_congruent_mod(&r, &z, &mat_id(&r, 2), 1));
            // the other root -z is not congruent to one (p odd)
            assert!(!mat_congruent_mod(&r, &mat_neg(&r, &z), &mat_id(&r, 2), 1));
        }
        // non-congruent input is rejected
        let bad = mat_scalar_mul(&r, &r.from_i64(2), &mat_id(&r, 2));
        assert!(matches!(
            mat_sqrt_near_one(&r, &bad),
            Err(Error::NotCongruentToOne)
        ));
    }

    #[test]
    fn series_ring_matrices() {
        let r = ram();
        let t = SeriesCtx::new(r, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        // x = 1 + u as a matrix of series
        let x = Mat::from_fn(2, 2, |i, j| {
            let base = if i == j { t.one() } else { t.zero() };
            t.add(&base, &t.var(i * 2 + j))
        });
        let xi = mat_inv(&t, &x).unwrap();
        let prod = mat_mul(&t, &x, &xi);
        let id = mat_id(&t, 2);
        let k = mat_prec(&t, &prod);
        assert!(mat_congruent_mod(&t, &prod, &id, k));
        // sqrt over the series ring
        let g = Mat::from_fn(2, 2, |_, _| t.random(&mut rng, t.ram().prec_pi()));
        let y = mat_add(&t, &id, &mat_mul_pi_pow(&t, &g, 1));
        let z = mat_sqrt_near_one(&t, &y).unwrap();
        let sq = mat_mul(&t, &z, &z);
        let k = mat_prec(&t, &sq).min(mat_prec(&t, &y));
        assert!(mat_congruent_mod(&t, &sq, &y, k));
    }
}
