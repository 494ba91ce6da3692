//! The truncated coordinate ring `T = R[[u_1, .., u_v]] / (total degree > D)`
//! over the ramified ring, used as the coefficient ring of "jet mode"
//! connection computations (the variables are the entries of `x - 1` for an
//! `N x N` matrix argument `x`, so `v = N^2`).
//!
//! Elements are sparse maps from exponent multi-indices to ramified-ring
//! coefficients, all truncated to one uniform pi-precision; absent keys are
//! zero. The augmentation ideal `P = (u)` and the maximal ideal
//! `M = (pi, u)` are available through reduction operations.

use crate::error::{Error, Result};
use crate::ram_ring::{RamCtx, RpiElem};
use rand::Rng;
use std::collections::BTreeMap;

/// Exponent multi-index over the `v` series variables.
pub type Expo = Vec<u16>;

/// A truncated multivariate series over `R`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesElem {
    /// Sorted term map; zero coefficients are never stored.
    pub(crate) terms: BTreeMap<Expo, RpiElem>,
    pub(crate) prec: u32,
}

impl SeriesElem {
    pub fn prec(&self) -> u32 {
        self.prec
    }

    /// Sparse view of the nonzero terms.
    pub fn terms(&self) -> impl Iterator<Item = (&Expo, &RpiElem)> {
        self.terms.iter()
    }
}

/// Context for the degree-truncated series ring.
#[derive(Debug, Clone)]
pub struct SeriesCtx {
    ram: RamCtx,
    n_mat: usize,
    nvars: usize,
    degree_cap: u16,
}

impl SeriesCtx {
    /// Series in the entries of an `N x N` matrix minus one, truncated past
    /// total degree `D >= 1`.
    pub fn new(ram: RamCtx, n_mat: usize, degree_cap: u16) -> Result<Self> {
        if n_mat == 0 {
            return Err(Error::ConfigInvalid("matrix size N must be >= 1".into()));
        }
        if degree_cap == 0 {
            return Err(Error::ConfigInvalid("degree cap D must be >= 1".into()));
        }
        Ok(SeriesCtx {
            nvars: n_mat * n_mat,
            ram,
            n_mat,
            degree_cap,
        })
    }

    pub fn ram(&self) -> &RamCtx {
        &self.ram
    }

    pub fn n_mat(&self) -> usize {
        self.n_mat
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree_cap(&self) -> u16 {
        self.degree_cap
    }

    fn zero_expo(&self) -> Expo {
        vec![0; self.nvars]
    }

    fn degree(e: &Expo) -> u32 {
        e.iter().map(|&x| x as u32).sum()
    }

    /// Drops zero coefficients and truncates the rest to `prec`.
    fn normal(&self, mut terms: BTreeMap<Expo, RpiElem>, prec: u32) -> SeriesElem {
        let mut out = BTreeMap::new();
        for (e, c) in terms.iter_mut() {
            let t = self.ram.truncate(c, prec);
            if !self.ram.is_zero(&t) {
                out.insert(e.clone(), t);
            }
        }
        SeriesElem { terms: out, prec }
    }

    // ----- constructors -----

    pub fn zero(&self) -> SeriesElem {
        SeriesElem {
            terms: BTreeMap::new(),
            prec: self.ram.prec_pi(),
        }
    }

    pub fn one(&self) -> SeriesElem {
        self.from_const(&self.ram.one())
    }

    pub fn from_i64(&self, v: i64) -> SeriesElem {
        self.from_const(&self.ram.from_i64(v))
    }

    /// Constant series.
    pub fn from_const(&self, c: &RpiElem) -> SeriesElem {
        let mut terms = BTreeMap::new();
        terms.insert(self.zero_expo(), c.clone());
        self.normal(terms, c.prec())
    }

    /// The variable `u_idx` (0-based; row-major entry of `x - 1`).
    pub fn var(&self, idx: usize) -> SeriesElem {
        assert!(idx < self.nvars, "variable index out of range");
        let mut e = self.zero_expo();
        e[idx] = 1;
        let mut terms = BTreeMap::new();
        terms.insert(e, self.ram.one());
        self.normal(terms, self.ram.prec_pi())
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R, prec: u32) -> SeriesElem {
        // a few random terms of each admissible degree
        let mut terms = BTreeMap::new();
        for _ in 0..(2 * self.nvars) {
            let mut e = self.zero_expo();
            let mut budget = rng.gen_range(0..=self.degree_cap as u32);
            while budget > 0 {
                let i = rng.gen_range(0..self.nvars);
                e[i] += 1;
                budget -= 1;
            }
            terms.insert(e, self.ram.random(rng, prec));
        }
        self.normal(terms, prec)
    }

    // ----- ring operations -----

    pub fn is_zero(&self, a: &SeriesElem) -> bool {
        a.terms.is_empty()
    }

    /// Units are series with unit constant term.
    pub fn is_unit(&self, a: &SeriesElem) -> bool {
        a.terms
            .get(&self.zero_expo())
            .is_some_and(|c| self.ram.is_unit(c))
    }

    pub fn add(&self, a: &SeriesElem, b: &SeriesElem) -> SeriesElem {
        let prec = a.prec.min(b.prec);
        let mut terms = a.terms.clone();
        for (e, c) in &b.terms {
            match terms.get_mut(e) {
                Some(t) => *t = self.ram.add(t, c),
                None => {
                    terms.insert(e.clone(), c.clone());
                }
            }
        }
        self.normal(terms, prec)
    }

    pub fn sub(&self, a: &SeriesElem, b: &SeriesElem) -> SeriesElem {
        self.add(a, &self.neg(b))
    }

    pub fn neg(&self, a: &SeriesElem) -> SeriesElem {
        let terms = a
            .terms
            .iter()
            .map(|(e, c)| (e.clone(), self.ram.neg(c)))
            .collect();
        self.normal(terms, a.prec)
    }

    pub fn mul(&self, a: &SeriesElem, b: &SeriesElem) -> SeriesElem {
        let prec = a.prec.min(b.prec);
        let mut terms: BTreeMap<Expo, RpiElem> = BTreeMap::new();
        for (ea, ca) in &a.terms {
            let da = Self::degree(ea);
            for (eb, cb) in &b.terms {
                if da + Self::degree(eb) > self.degree_cap as u32 {
                    continue;
                }
                let e: Expo = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                let c = self.ram.mul(ca, cb);
                match terms.get_mut(&e) {
                    Some(t) => *t = self.ram.add(t, &c),
                    None => {
                        terms.insert(e, c);
                    }
                }
            }
        }
        self.normal(terms, prec)
    }

    pub fn pow(&self, a: &SeriesElem, mut exp: u128) -> SeriesElem {
        let mut acc = self.truncate(&self.one(), a.prec);
        let mut base = a.clone();
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            exp >>= 1;
        }
        acc
    }

    /// `a^{p^s}` as a ring power.
    pub fn pow_ps(&self, a: &SeriesElem, s: u32) -> SeriesElem {
        let mut cur = a.clone();
        for _ in 0..s {
            cur = self.pow(&cur, self.ram.base().p() as u128);
        }
        cur
    }

    /// Inverse of a unit series (Newton; converges since the error lies in
    /// the ideal `(u)` and squares each step).
    pub fn invert(&self, a: &SeriesElem) -> Result<SeriesElem> {
        let c0 = a
            .terms
            .get(&self.zero_expo())
            .ok_or(Error::NotAUnit)?;
        if !self.ram.is_unit(c0) {
            return Err(Error::NotAUnit);
        }
        let seed = self.ram.assume_precision(&self.ram.invert(c0)?, a.prec);
        let mut y = self.from_const(&seed);
        let two = self.assume_precision(&self.from_i64(2), a.prec);
        let one = self.assume_precision(&self.one(), a.prec);
        loop {
            let ay = self.mul(a, &y);
            if ay == one {
                return Ok(y);
            }
            y = self.mul(&y, &self.sub(&two, &ay));
        }
    }

    pub fn truncate(&self, a: &SeriesElem, prec: u32) -> SeriesElem {
        let prec = prec.min(a.prec);
        self.normal(a.terms.clone(), prec)
    }

    /// Representative lift to a higher claimed precision (see
    /// `BaseCtx::assume_precision`).
    pub fn assume_precision(&self, a: &SeriesElem, prec: u32) -> SeriesElem {
        if prec <= a.prec {
            return self.truncate(a, prec);
        }
        let terms = a
            .terms
            .iter()
            .map(|(e, c)| (e.clone(), self.ram.assume_precision(c, prec)))
            .collect();
        self.normal(terms, prec.min(self.ram.max_prec()))
    }

    /// Congruence mod `pi^k`, coefficientwise; false if unknown that far.
    pub fn congruent_mod(&self, a: &SeriesElem, b: &SeriesElem, k: u32) -> bool {
        if a.prec < k || b.prec < k {
            return false;
        }
        let d = self.sub(a, b);
        d.terms.iter().all(|(_, c)| {
            self.ram
                .is_zero(&self.ram.truncate(c, k.min(c.prec())))
                && c.prec() >= k
        })
    }

    pub fn mul_pi_pow(&self, a: &SeriesElem, k: u32) -> SeriesElem {
        let prec = (a.prec + k).min(self.ram.max_prec());
        let terms = a
            .terms
            .iter()
            .map(|(e, c)| (e.clone(), self.ram.mul_pi_pow(c, k)))
            .collect();
        self.normal(terms, prec)
    }

    /// Exact coefficientwise division by `pi^k`.
    pub fn div_pi_exact(&self, a: &SeriesElem, k: u32) -> Result<SeriesElem> {
        if a.prec < k + 1 {
            return Err(Error::PrecisionExhausted {
                needed: k + 1,
                have: a.prec,
            });
        }
        let mut terms = BTreeMap::new();
        for (e, c) in &a.terms {
            terms.insert(e.clone(), self.ram.div_pi_exact(c, k)?);
        }
        Ok(self.normal(terms, a.prec - k))
    }

    /// Minimum pi-valuation over the coefficients (`None` when zero at the
    /// tracked precision).
    pub fn pi_valuation(&self, a: &SeriesElem) -> Option<u32> {
        a.terms
            .values()
            .filter_map(|c| self.ram.val_pi(c))
            .min()
    }

    // ----- augmentation structure -----

    /// Evaluation at `x = 1`, i.e. `u = 0`: the constant term.
    pub fn eval_at_one(&self, a: &SeriesElem) -> RpiElem {
        a.terms
            .get(&self.zero_expo())
            .cloned()
            .unwrap_or_else(|| self.ram.truncate(&self.ram.zero(), a.prec))
    }

    /// Canonical representative mod `pi^pi_power` (and mod the augmentation
    /// ideal `P = (u)` when `drop_positive_degree` is set). Idempotent.
    pub fn reduce_mod(&self, a: &SeriesElem, pi_power: u32, drop_positive_degree: bool) -> SeriesElem {
        let mut terms = BTreeMap::new();
        for (e, c) in &a.terms {
            if drop_positive_degree && Self::degree(e) > 0 {
                continue;
            }
            terms.insert(e.clone(), c.clone());
        }
        self.normal(terms, pi_power.min(a.prec))
    }

    /// Substitutes ring values for the variables (total evaluation).
    pub fn eval(&self, a: &SeriesElem, u_values: &[RpiElem]) -> RpiElem {
        assert_eq!(u_values.len(), self.nvars, "one value per variable");
        let mut acc = self.ram.truncate(&self.ram.zero(), a.prec);
        for (e, c) in &a.terms {
            let mut t = c.clone();
            for (i, &exp) in e.iter().enumerate() {
                for _ in 0..exp {
                    t = self.ram.mul(&t, &u_values[i]);
                }
            }
            acc = self.ram.add(&acc, &t);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_field::FieldCtx;
    use crate::witt_base::BaseCtx;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> SeriesCtx {
        let f = FieldCtx::new(5, 2, Some(vec![2, 4, 1])).unwrap();
        let w = BaseCtx::new(f, 6).unwrap();
        let r = RamCtx::new(w, 2, 1, &[0, 1], None).unwrap();
        SeriesCtx::new(r, 2, 2).unwrap()
    }

    #[test]
    fn truncation_by_degree() {
        let t = ctx();
        // (1 + u0)(1 - u0) = 1 - u0^2 at D = 2
        let one = t.one();
        let u0 = t.var(0);
        let a = t.add(&one, &u0);
        let b = t.sub(&one, &u0);
        let prod = t.mul(&a, &b);
        let expect = t.sub(&one, &t.mul(&u0, &u0));
        assert_eq!(prod, expect);
        // u0 * u1 at D = 1 vanishes
        let t1 = {
            let f = FieldCtx::new(5, 2, Some(vec![2, 4, 1])).unwrap();
            let w = BaseCtx::new(f, 6).unwrap();
            let r = RamCtx::new(w, 2, 1, &[0, 1], None).unwrap();
            SeriesCtx::new(r, 2, 1).unwrap()
        };
        let z = t1.mul(&t1.var(0), &t1.var(1));
        assert!(t1.is_zero(&z));
    }

    #[test]
    fn geometric_series_inverse() {
        let t = ctx();
        let a = t.add(&t.one(), &t.var(0));
        let inv = t.invert(&a).unwrap();
        // 1 - u0 + u0^2 at D = 2
        let u0 = t.var(0);
        let expect = t.add(&t.sub(&t.one(), &u0), &t.mul(&u0, &u0));
        assert_eq!(inv, expect);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..15 {
            let mut a = t.random(&mut rng, t.ram().prec_pi());
            // force a unit constant term
            a = t.add(&a, &t.from_const(&t.ram().random_unit(&mut rng, t.ram().prec_pi())));
            if !t.is_unit(&a) {
                continue;
            }
            let inv = t.invert(&a).unwrap();
            let prod = t.mul(&a, &inv);
            assert!(t.congruent_mod(&prod, &t.one(), prod.prec()));
        }
    }

    #[test]
    fn evaluation_at_one_is_a_ring_map() {
        let t = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..25 {
            let a = t.random(&mut rng, t.ram().prec_pi());
            let b = t.random(&mut rng, t.ram().prec_pi());
            let lhs = t.eval_at_one(&t.mul(&a, &b));
            let rhs = t.ram().mul(&t.eval_at_one(&a), &t.eval_at_one(&b));
            assert!(t.ram().congruent_mod(&lhs, &rhs, lhs.prec().min(rhs.prec())));
            let lhs = t.eval_at_one(&t.add(&a, &b));
            let rhs = t.ram().add(&t.eval_at_one(&a), &t.eval_at_one(&b));
            assert!(t.ram().congruent_mod(&lhs, &rhs, lhs.prec().min(rhs.prec())));
        }
        // a = 1 + pi u_{00} evaluates to 1; a = u_{01} evaluates to 0
        let a = t.add(&t.one(), &t.mul(&t.from_const(&t.ram().pi()), &t.var(0)));
        assert!(t.ram().congruent_mod(&t.eval_at_one(&a), &t.ram().one(), 5));
        assert!(t.ram().is_zero(&t.eval_at_one(&t.var(1))));
    }

    #[test]
    fn reduction_normal_forms() {
        let t = ctx();
        let r = t.ram();
        // pi*c + u*(..) reduces to 0 mod (pi, P)
        let a = t.add(
            &t.from_const(&r.mul_pi_pow(&r.from_i64(3), 1)),
            &t.mul(&t.var(2), &t.random(&mut ChaCha8Rng::seed_from_u64(23), r.prec_pi())),
        );
        let red = t.reduce_mod(&a, 1, true);
        assert!(t.is_zero(&red));
        // idempotence
        let b = t.random(&mut ChaCha8Rng::seed_from_u64(24), r.prec_pi());
        let r1 = t.reduce_mod(&b, 3, false);
        assert_eq!(t.reduce_mod(&r1, 3, false), r1);
    }

    #[test]
    fn associativity_and_distributivity() {
        let t = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..10 {
            let a = t.random(&mut rng, t.ram().prec_pi());
            let b = t.random(&mut rng, t.ram().prec_pi());
            let c = t.random(&mut rng, t.ram().prec_pi());
            assert_eq!(t.mul(&t.mul(&a, &b), &c), t.mul(&a, &t.mul(&b, &c)));
            assert_eq!(
                t.mul(&a, &t.add(&b, &c)),
                t.add(&t.mul(&a, &b), &t.mul(&a, &c))
            );
        }
    }

    #[test]
    fn division_and_valuation() {
        let t = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let a = t.random(&mut rng, t.ram().prec_pi() - 2);
        let b = t.mul_pi_pow(&a, 2);
        let back = t.div_pi_exact(&b, 2).unwrap();
        assert!(t.congruent_mod(&back, &a, back.prec().min(a.prec())));
        if let Some(v) = t.pi_valuation(&a) {
            assert_eq!(t.pi_valuation(&b), Some(v + 2));
        }
        // evaluation substitutes
        let u_vals: Vec<_> = (0..t.nvars())
            .map(|_| t.ram().mul_pi_pow(&t.ram().random(&mut rng, t.ram().prec_pi() - 1), 1))
            .collect();
        let one_u = t.add(&t.one(), &t.var(0));
        let ev = t.eval(&one_u, &u_vals);
        let expect = t.ram().add(&t.ram().one(), &u_vals[0]);
        assert!(t.ram().congruent_mod(&ev, &expect, ev.prec().min(expect.prec())));
    }
}
