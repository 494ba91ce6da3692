//! The unramified base ring `W`: a truncation of the Witt vectors of
//! `F_{p^m}`, realized as `(Z/p^K)[x]/(g)` where `g` is the monic degree-`m`
//! divisor of `x^{p^m} - x` lifting the residue-field modulus.
//!
//! With this choice of `g` the class of `x` is a Teichmueller element
//! (`x^{p^m} = x`), so the Frobenius lift is simply `x -> x^p` extended
//! `(Z/p^K)`-linearly, and it is a ring automorphism of order `m` that
//! reduces to the `p`-power map mod `p`.
//!
//! Every element carries an explicit precision `prec <= K`: it is known (and
//! stored canonically reduced) mod `p^prec`. All operations are exact at the
//! tracked precision; divisions by `p` lower it, integration raises it.

use crate::base_field::{FieldCtx, FqElem};
use crate::error::{Error, Result};
use crate::modarith::{addm, mulm, subm};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;

/// An element of `W` mod `p^prec`: coefficients of `1, x, .., x^{m-1}`,
/// each reduced mod `p^prec`. `prec == 0` is the degenerate "no information"
/// state with all coefficients zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WElem {
    pub(crate) c: Vec<u64>,
    pub(crate) prec: u32,
}

impl WElem {
    /// The p-adic precision this element is tracked at.
    pub fn prec(&self) -> u32 {
        self.prec
    }

    /// Raw coefficients, little-endian in the power basis.
    pub fn coeffs(&self) -> &[u64] {
        &self.c
    }

    /// Decimal-string serialization of the coefficients.
    pub fn to_decimal_strings(&self) -> Vec<String> {
        self.c.iter().map(|v| v.to_string()).collect()
    }
}

/// Context for `W = (Z/p^K)[x]/(g)` arithmetic.
#[derive(Debug, Clone)]
pub struct BaseCtx {
    field: FieldCtx,
    k_prec: u32,
    /// `p^0 .. p^K`.
    ppow: Vec<u64>,
    /// Monic modulus with Teichmueller roots, little-endian, `m+1` coeffs
    /// mod `p^K`. Divides `x^{p^m} - x` over `Z/p^K`.
    modulus_lift: Vec<u64>,
    /// Images `(x^p)^j mod g` for `j = 0..m`, i.e. the Frobenius lift on the
    /// power basis.
    frob_basis: Vec<WElem>,
}

impl BaseCtx {
    /// Builds `W` at precision `K >= 2` over the given residue field.
    pub fn new(field: FieldCtx, k_prec: u32) -> Result<Self> {
        if k_prec < 2 {
            return Err(Error::ConfigInvalid("precision K must be at least 2".into()));
        }
        let p = field.p();
        let mut ppow = Vec::with_capacity(k_prec as usize + 1);
        let mut cur: u128 = 1;
        for _ in 0..=k_prec {
            if cur >= 1 << 62 {
                return Err(Error::ConfigInvalid(format!(
                    "p^K = {p}^{k_prec} exceeds the supported range"
                )));
            }
            ppow.push(cur as u64);
            cur *= p as u128;
        }
        let modulus_lift = lift_modulus(&field, k_prec, &ppow)?;
        let mut ctx = BaseCtx {
            field,
            k_prec,
            ppow,
            modulus_lift,
            frob_basis: Vec::new(),
        };
        ctx.frob_basis = ctx.build_frob_basis()?;
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn field(&self) -> &FieldCtx {
        &self.field
    }

    pub fn p(&self) -> u64 {
        self.field.p()
    }

    pub fn m(&self) -> usize {
        self.field.m()
    }

    /// The working precision `K`.
    pub fn k_prec(&self) -> u32 {
        self.k_prec
    }

    /// `p^j` for `j <= K`.
    pub fn p_pow(&self, j: u32) -> u64 {
        self.ppow[j as usize]
    }

    /// The lifted modulus, little-endian, `m+1` coefficients mod `p^K`.
    pub fn modulus_lift(&self) -> &[u64] {
        &self.modulus_lift
    }

    // ----- constructors -----

    pub fn zero(&self) -> WElem {
        WElem {
            c: vec![0; self.m()],
            prec: self.k_prec,
        }
    }

    pub fn one(&self) -> WElem {
        self.from_i64(1)
    }

    /// The constant `v mod p^K` (negative values wrap).
    pub fn from_i64(&self, v: i64) -> WElem {
        let pk = self.ppow[self.k_prec as usize] as i128;
        let r = ((v as i128 % pk) + pk) % pk;
        let mut c = vec![0; self.m()];
        c[0] = r as u64;
        WElem {
            c,
            prec: self.k_prec,
        }
    }

    /// Element from raw coefficients at the given precision.
    pub fn from_coeffs(&self, coeffs: &[u64], prec: u32) -> Result<WElem> {
        if prec == 0 || prec > self.k_prec {
            return Err(Error::ConfigInvalid(format!(
                "precision {prec} out of range 1..={}",
                self.k_prec
            )));
        }
        if coeffs.len() > self.m() {
            return Err(Error::ConfigInvalid(format!(
                "expected at most {} coefficients, got {}",
                self.m(),
                coeffs.len()
            )));
        }
        let pj = self.ppow[prec as usize];
        let mut c = vec![0; self.m()];
        for (i, &a) in coeffs.iter().enumerate() {
            c[i] = a % pj;
        }
        Ok(WElem { c, prec })
    }

    /// Parses the decimal-string serialization.
    pub fn from_decimal_strings(&self, strings: &[String], prec: u32) -> Result<WElem> {
        let coeffs: Vec<u64> = strings
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::ConfigInvalid(format!("bad coefficient {s:?}")))
            })
            .collect::<Result<_>>()?;
        self.from_coeffs(&coeffs, prec)
    }

    /// Plain (non-Teichmueller) lift of a residue element, at precision `K`.
    pub fn lift_residue(&self, a: &FqElem) -> WElem {
        WElem {
            c: a.coeffs().to_vec(),
            prec: self.k_prec,
        }
    }

    /// Uniformly random element at the given precision.
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R, prec: u32) -> WElem {
        let prec = prec.clamp(1, self.k_prec);
        let pj = self.ppow[prec as usize];
        WElem {
            c: (0..self.m()).map(|_| rng.gen_range(0..pj)).collect(),
            prec,
        }
    }

    /// Uniformly random unit at the given precision.
    pub fn random_unit<R: Rng + ?Sized>(&self, rng: &mut R, prec: u32) -> WElem {
        loop {
            let a = self.random(rng, prec);
            if self.is_unit(&a) {
                return a;
            }
        }
    }

    // ----- basic ring operations -----

    pub fn is_zero(&self, a: &WElem) -> bool {
        a.c.iter().all(|&x| x == 0)
    }

    pub fn is_unit(&self, a: &WElem) -> bool {
        a.prec > 0 && !self.field.is_zero(&self.residue(a))
    }

    /// Reinterprets the stored representative at a higher claimed precision
    /// (a representative choice, valid wherever any lift of `a` serves,
    /// e.g. as a Newton seed). Lower targets truncate.
    pub fn assume_precision(&self, a: &WElem, prec: u32) -> WElem {
        let prec = prec.min(self.k_prec);
        if prec <= a.prec {
            return self.truncate(a, prec);
        }
        WElem {
            c: a.c.clone(),
            prec,
        }
    }

    /// Reduces mod `p^prec`, lowering (never raising) the tracked precision.
    pub fn truncate(&self, a: &WElem, prec: u32) -> WElem {
        let prec = prec.min(a.prec);
        let pj = self.ppow[prec as usize];
        WElem {
            c: a.c.iter().map(|&x| x % pj).collect(),
            prec,
        }
    }

    /// `a == b` as elements known mod `p^prec`.
    pub fn congruent_mod(&self, a: &WElem, b: &WElem, prec: u32) -> bool {
        if a.prec < prec || b.prec < prec {
            return false;
        }
        let pj = self.ppow[prec as usize];
        a.c.iter().zip(&b.c).all(|(&x, &y)| x % pj == y % pj)
    }

    pub fn add(&self, a: &WElem, b: &WElem) -> WElem {
        let prec = a.prec.min(b.prec);
        let pj = self.ppow[prec as usize];
        WElem {
            c: a.c
                .iter()
                .zip(&b.c)
                .map(|(&x, &y)| addm(x % pj, y % pj, pj))
                .collect(),
            prec,
        }
    }

    pub fn sub(&self, a: &WElem, b: &WElem) -> WElem {
        let prec = a.prec.min(b.prec);
        let pj = self.ppow[prec as usize];
        WElem {
            c: a.c
                .iter()
                .zip(&b.c)
                .map(|(&x, &y)| subm(x % pj, y % pj, pj))
                .collect(),
            prec,
        }
    }

    pub fn neg(&self, a: &WElem) -> WElem {
        let pj = self.ppow[a.prec as usize];
        WElem {
            c: a.c.iter().map(|&x| subm(0, x, pj)).collect(),
            prec: a.prec,
        }
    }

    pub fn mul(&self, a: &WElem, b: &WElem) -> WElem {
        let prec = a.prec.min(b.prec);
        if prec == 0 {
            return WElem {
                c: vec![0; self.m()],
                prec: 0,
            };
        }
        let pj = self.ppow[prec as usize];
        let m = self.m();
        let mut prod = vec![0u64; 2 * m];
        for i in 0..m {
            let x = a.c[i] % pj;
            if x == 0 {
                continue;
            }
            for j in 0..m {
                let y = b.c[j] % pj;
                prod[i + j] = addm(prod[i + j], mulm(x, y, pj), pj);
            }
        }
        // reduce by the monic modulus, coefficients taken mod p^prec
        for i in (m..2 * m).rev() {
            let t = prod[i];
            prod[i] = 0;
            if t == 0 {
                continue;
            }
            for j in 0..m {
                let g = self.modulus_lift[j] % pj;
                prod[i - m + j] = subm(prod[i - m + j], mulm(t, g, pj), pj);
            }
        }
        prod.truncate(m);
        WElem { c: prod, prec }
    }

    /// `a^e` by square-and-multiply (precision preserved).
    pub fn pow(&self, a: &WElem, mut e: u128) -> WElem {
        let mut acc = self.truncate(&self.one(), a.prec);
        let mut base = a.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    /// `a^{p^s}` by `s` chained `p`-th powers (no exponent overflow).
    pub fn pow_ps(&self, a: &WElem, s: u32) -> WElem {
        let mut cur = a.clone();
        for _ in 0..s {
            cur = self.pow(&cur, self.p() as u128);
        }
        cur
    }

    /// Multiplicative inverse of a unit, exact at the operand's precision.
    pub fn invert(&self, a: &WElem) -> Result<WElem> {
        if !self.is_unit(a) {
            return Err(Error::NotAUnit);
        }
        let r = self.field.inv(&self.residue(a))?;
        let mut y = self.truncate(&self.lift_residue(&r), a.prec);
        let two = self.truncate(&self.from_i64(2), a.prec);
        // Newton: y <- y(2 - ay), doubling correct digits each step
        let mut steps = 0;
        loop {
            let ay = self.mul(a, &y);
            if self.congruent_mod(&ay, &self.one(), a.prec) {
                return Ok(y);
            }
            y = self.mul(&y, &self.sub(&two, &ay));
            steps += 1;
            debug_assert!(steps <= 2 * (64 - (a.prec as u64).leading_zeros()) + 4);
        }
    }

    // ----- residue and lifts -----

    /// Reduction mod `p` into the residue field.
    pub fn residue(&self, a: &WElem) -> FqElem {
        let p = self.p();
        self.field
            .from_coeffs(&a.c.iter().map(|&x| x % p).collect::<Vec<_>>())
            .expect("coefficient count matches m")
    }

    /// The Teichmueller lift: the unique root of `z^{p^m} = z` over the
    /// given residue class, at full precision `K`.
    pub fn teichmueller(&self, a: &FqElem) -> WElem {
        let mut z = self.lift_residue(a);
        for _ in 0..self.k_prec {
            z = self.pow_ps(&z, self.m() as u32);
        }
        z
    }

    /// Whether `a` is fixed by `z -> z^{p^m}` at its tracked precision.
    pub fn is_teichmueller(&self, a: &WElem) -> bool {
        let zpm = self.pow_ps(a, self.m() as u32);
        self.congruent_mod(&zpm, a, a.prec)
    }

    // ----- Frobenius and derivation -----

    /// The Frobenius lift `phi^s` (a ring automorphism; `phi^m = id`).
    pub fn frobenius(&self, a: &WElem, s: u32) -> WElem {
        let r = (s as usize) % self.m();
        let mut cur = a.clone();
        for _ in 0..r {
            cur = self.apply_frob_once(&cur);
        }
        cur
    }

    fn apply_frob_once(&self, a: &WElem) -> WElem {
        let mut acc = self.truncate(&self.zero(), a.prec);
        for (j, fb) in self.frob_basis.iter().enumerate() {
            if a.c[j] == 0 {
                continue;
            }
            let scaled = self.scalar_mul(a.c[j], fb, a.prec);
            acc = self.add(&acc, &scaled);
        }
        acc
    }

    fn scalar_mul(&self, t: u64, a: &WElem, prec: u32) -> WElem {
        let prec = prec.min(a.prec);
        let pj = self.ppow[prec as usize];
        WElem {
            c: a.c.iter().map(|&x| mulm(t % pj, x % pj, pj)).collect(),
            prec,
        }
    }

    /// The degree-`s` derivation `delta a = (phi^s(a) - a^{p^s}) / p`.
    /// Costs one digit of precision.
    pub fn delta(&self, a: &WElem, s: u32) -> Result<WElem> {
        if a.prec < 2 {
            return Err(Error::PrecisionExhausted {
                needed: 2,
                have: a.prec,
            });
        }
        let d = self.sub(&self.frobenius(a, s), &self.pow_ps(a, s));
        self.div_p_exact(&d, 1)
    }

    /// Exact division by `p^k`; fails unless every coefficient is divisible.
    pub fn div_p_exact(&self, a: &WElem, k: u32) -> Result<WElem> {
        if a.prec < k + 1 {
            return Err(Error::PrecisionExhausted {
                needed: k + 1,
                have: a.prec,
            });
        }
        let pk = self.ppow[k as usize];
        if a.c.iter().any(|&x| x % pk != 0) {
            return Err(Error::NotDivisible);
        }
        Ok(WElem {
            c: a.c.iter().map(|&x| x / pk).collect(),
            prec: a.prec - k,
        })
    }

    /// Multiplication by `p^k`, raising absolute precision (capped at `K`).
    pub fn mul_p_pow(&self, a: &WElem, k: u32) -> WElem {
        let prec = (a.prec + k).min(self.k_prec);
        if prec <= k {
            return WElem {
                c: vec![0; self.m()],
                prec,
            };
        }
        let pj = self.ppow[prec as usize];
        let pk = self.ppow[k as usize];
        WElem {
            c: a.c.iter().map(|&x| mulm(x % pj, pk, pj)).collect(),
            prec,
        }
    }

    /// `p`-adic valuation, measured up to the tracked precision
    /// (`None` means the element vanishes at its precision).
    pub fn val_p(&self, a: &WElem) -> Option<u32> {
        if self.is_zero(a) {
            return None;
        }
        let mut v = 0;
        let mut cur = a.c.clone();
        let p = self.p();
        loop {
            if cur.iter().any(|&x| x % p != 0) {
                return Some(v);
            }
            for x in cur.iter_mut() {
                *x /= p;
            }
            v += 1;
            if v >= a.prec {
                return None;
            }
        }
    }

    /// The carry polynomial `(x^{p^s} + y^{p^s} - (x+y)^{p^s}) / p`,
    /// evaluated exactly as an integer polynomial (no precision loss).
    pub fn cp_carry(&self, x: &WElem, y: &WElem, s: u32) -> Result<WElem> {
        let ps_big = (self.p() as u128).checked_pow(s).filter(|&v| v <= 1 << 20);
        let ps = match ps_big {
            Some(v) => v as u64,
            None => {
                return Err(Error::ConfigInvalid(format!(
                    "p^s too large for carry evaluation (s = {s})"
                )))
            }
        };
        let prec = x.prec.min(y.prec);
        let pj = self.ppow[prec as usize];
        // binomial coefficients C(p^s, k) / p for 0 < k < p^s, exact integers
        let mut xp = self.truncate(&self.one(), prec);
        let mut ypows = Vec::with_capacity(ps as usize);
        ypows.push(self.truncate(&self.one(), prec));
        for i in 1..ps {
            let last = self.mul(ypows.last().unwrap(), y);
            ypows.push(last);
            let _ = i;
        }
        let mut acc = self.truncate(&self.zero(), prec);
        let mut binom = BigInt::from(1u32);
        let p_big = BigInt::from(self.p());
        for k in 1..ps {
            // C(ps, k) = C(ps, k-1) * (ps - k + 1) / k
            binom = binom * BigInt::from(ps - k + 1) / BigInt::from(k);
            let over_p = &binom / &p_big;
            debug_assert!((&over_p * &p_big) == binom, "C(p^s, k) divisible by p");
            let coeff = bigint_mod_u64(&over_p, pj);
            xp = self.mul(&xp, x);
            let term = self.scalar_mul(coeff, &self.mul(&xp, &ypows[(ps - k) as usize]), prec);
            acc = self.add(&acc, &term);
        }
        Ok(self.neg(&acc))
    }

    /// Inverse of the derivation: the unique `u = 0 mod p` with
    /// `delta u = b` (to the verifiable precision). Gains one digit:
    /// `u` is determined mod `p^{min(b.prec, K-1) + 1}`.
    pub fn p_integrate(&self, b: &WElem, s: u32) -> Result<WElem> {
        let target = b.prec.min(self.k_prec - 1);
        if target == 0 {
            return Err(Error::PrecisionExhausted { needed: 1, have: 0 });
        }
        // first digit: delta(p c) = phi^s(c) mod p, so c = Fr^{-s}(residue b)
        let c0 = self.field.inv_frobenius(&self.residue(b), s);
        let mut u = self.mul_p_pow(&self.truncate(&self.lift_residue(&c0), self.k_prec - 1), 1);
        for nu in 1..target {
            let du = self.delta(&u, s)?;
            let diff = self.sub(b, &du);
            let c = self.div_p_exact(&self.truncate(&diff, nu + 1), nu)?;
            let d = self.field.inv_frobenius(&self.residue(&c), s);
            let bump = self.mul_p_pow(
                &self.truncate(&self.lift_residue(&d), self.k_prec - nu - 1),
                nu + 1,
            );
            u = self.add(&u, &bump);
        }
        debug_assert!({
            let du = self.delta(&u, s).unwrap();
            self.congruent_mod(&du, b, target)
        });
        Ok(self.truncate(&u, target + 1))
    }

    /// The inverse of 2 (p is odd), at full precision.
    pub fn half(&self) -> WElem {
        self.invert(&self.from_i64(2)).expect("2 is a unit for odd p")
    }

    /// The binomial coefficient `C(1/2, k)` as an element of `Z/p^K`
    /// (p-integral for odd p), via exact rational arithmetic.
    pub fn binom_half(&self, k: u32) -> WElem {
        if k == 0 {
            return self.one();
        }
        let mut num = BigInt::from(1u32);
        let mut den = BigInt::from(1u32);
        for i in 0..k {
            num *= BigInt::from(1i64 - 2 * i as i64);
            den *= BigInt::from(2u64 * (i as u64 + 1));
        }
        // strip the common power of p (the quotient is p-integral)
        let p_big = BigInt::from(self.p());
        loop {
            let (qn, rn) = num.div_rem(&p_big);
            let (qd, rd) = den.div_rem(&p_big);
            if rn.is_zero() && rd.is_zero() {
                num = qn;
                den = qd;
            } else {
                break;
            }
        }
        let pk = BigInt::from(self.ppow[self.k_prec as usize]);
        let den_inv = modinv_bigint(&den, &pk);
        let val = bigint_mod_u64(&(num * den_inv), self.ppow[self.k_prec as usize]);
        let mut c = vec![0; self.m()];
        c[0] = val;
        WElem {
            c,
            prec: self.k_prec,
        }
    }

    // ----- construction internals -----

    fn build_frob_basis(&self) -> Result<Vec<WElem>> {
        let m = self.m();
        let x = self.gen_x();
        let xp = self.pow(&x, self.p() as u128);
        let mut basis = Vec::with_capacity(m);
        let mut cur = self.one();
        for j in 0..m {
            basis.push(cur.clone());
            if j + 1 < m {
                cur = self.mul(&cur, &xp);
            }
        }
        Ok(basis)
    }

    /// The class of `x` as an element.
    pub fn gen_x(&self) -> WElem {
        let m = self.m();
        let mut c = vec![0; m];
        if m == 1 {
            // x = -g[0]
            let pk = self.ppow[self.k_prec as usize];
            c[0] = subm(0, self.modulus_lift[0], pk);
        } else {
            c[1] = 1;
        }
        WElem {
            c,
            prec: self.k_prec,
        }
    }

    fn validate(&self) -> Result<()> {
        // the modulus reduces to the residue-field modulus
        let p = self.p();
        for (a, b) in self.modulus_lift.iter().zip(self.field.modulus()) {
            if a % p != *b {
                return Err(Error::ConfigInvalid(
                    "lifted modulus does not reduce to the residue modulus".into(),
                ));
            }
        }
        // x is Teichmueller: x^{p^m} = x at full precision
        let x = self.gen_x();
        if !self.congruent_mod(&self.pow_ps(&x, self.m() as u32), &x, self.k_prec) {
            return Err(Error::ConfigInvalid(
                "lifted modulus does not divide x^{p^m} - x".into(),
            ));
        }
        // frobenius is well defined: g(x^p) = 0
        let xp = self.pow(&x, p as u128);
        let mut acc = self.zero();
        let mut pw = self.one();
        for j in 0..=self.m() {
            let t = self.scalar_mul(self.modulus_lift[j], &pw, self.k_prec);
            acc = self.add(&acc, &t);
            if j < self.m() {
                pw = self.mul(&pw, &xp);
            }
        }
        if !self.is_zero(&acc) {
            return Err(Error::ConfigInvalid(
                "Frobenius image is not a root of the lifted modulus".into(),
            ));
        }
        // phi^m = id and phi = p-power map mod p, checked on the basis
        let mut img = x.clone();
        for _ in 0..self.m() {
            if !self.congruent_mod(&self.pow_ps(&img, 1), &self.frobenius(&img, 1), 1) {
                return Err(Error::ConfigInvalid(
                    "Frobenius lift does not reduce to the p-power map".into(),
                ));
            }
            img = self.frobenius(&img, 1);
        }
        if img != x {
            return Err(Error::ConfigInvalid("Frobenius lift does not have order m".into()));
        }
        Ok(())
    }
}

fn bigint_mod_u64(v: &BigInt, m: u64) -> u64 {
    let m_big = BigInt::from(m);
    let mut r = v % &m_big;
    if r.is_negative() {
        r += &m_big;
    }
    r.to_u64().expect("reduced value fits in u64")
}

fn modinv_bigint(a: &BigInt, m: &BigInt) -> BigInt {
    let e = a.extended_gcd(m);
    assert!(
        e.gcd == BigInt::from(1u32),
        "inverse exists: denominator is prime to p"
    );
    let mut x = e.x % m;
    if x.is_negative() {
        x += m;
    }
    x
}

/// Builds the monic degree-`m` divisor of `x^{p^m} - x` over `Z/p^K` that
/// lifts the residue modulus: lift arbitrarily, pass to the Teichmueller
/// element over the lift, and expand the product of `(X - theta^{p^i})`.
/// The symmetric functions of the conjugates are scalars, which is verified.
fn lift_modulus(field: &FieldCtx, k_prec: u32, ppow: &[u64]) -> Result<Vec<u64>> {
    let p = field.p();
    let m = field.m();
    let pk = ppow[k_prec as usize];
    // scratch ring (Z/p^K)[x]/(g0) over the plain lift g0
    let g0: Vec<u64> = field.modulus().to_vec();
    let mul = |a: &[u64], b: &[u64]| -> Vec<u64> {
        let mut prod = vec![0u64; 2 * m];
        for i in 0..m {
            if a[i] == 0 {
                continue;
            }
            for j in 0..m {
                prod[i + j] = addm(prod[i + j], mulm(a[i], b[j], pk), pk);
            }
        }
        for i in (m..2 * m).rev() {
            let t = prod[i];
            prod[i] = 0;
            if t == 0 {
                continue;
            }
            for j in 0..m {
                prod[i - m + j] = subm(prod[i - m + j], mulm(t, g0[j] % pk, pk), pk);
            }
        }
        prod.truncate(m);
        prod
    };
    let pow = |a: &[u64], mut e: u128| -> Vec<u64> {
        let mut acc = vec![0u64; m];
        acc[0] = 1;
        let mut base = a.to_vec();
        while e > 0 {
            if e & 1 == 1 {
                acc = mul(&acc, &base);
            }
            base = mul(&base, &base);
            e >>= 1;
        }
        acc
    };
    // Teichmueller element over the class of x
    let mut theta = vec![0u64; m];
    if m == 1 {
        theta[0] = subm(0, g0[0] % pk, pk);
    } else {
        theta[1] = 1;
    }
    for _ in 0..k_prec {
        for _ in 0..m {
            theta = pow(&theta, p as u128);
        }
    }
    // conjugates theta^{p^i} and the product of (X - conjugate)
    let mut conj = theta.clone();
    // polynomial in X with scratch-ring coefficients, little-endian
    let mut poly: Vec<Vec<u64>> = vec![{
        let mut one = vec![0u64; m];
        one[0] = 1;
        one
    }];
    for i in 0..m {
        let neg_conj: Vec<u64> = conj.iter().map(|&x| subm(0, x, pk)).collect();
        let mut next: Vec<Vec<u64>> = vec![vec![0u64; m]; poly.len() + 1];
        for (d, coeff) in poly.iter().enumerate() {
            // X * coeff
            for (t, &x) in coeff.iter().enumerate() {
                next[d + 1][t] = addm(next[d + 1][t], x, pk);
            }
            // (-conj) * coeff
            let prod = mul(coeff, &neg_conj);
            for (t, &x) in prod.iter().enumerate() {
                next[d][t] = addm(next[d][t], x, pk);
            }
        }
        poly = next;
        if i + 1 < m {
            conj = pow(&conj, p as u128);
        }
    }
    // coefficients must be scalars
    let mut out = Vec::with_capacity(m + 1);
    for coeff in &poly {
        if coeff[1..].iter().any(|&x| x != 0) {
            return Err(Error::ConfigInvalid(
                "symmetric functions of Teichmueller conjugates are not scalars".into(),
            ));
        }
        out.push(coeff[0]);
    }
    debug_assert_eq!(out[m], 1);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w5(k: u32) -> BaseCtx {
        BaseCtx::new(FieldCtx::new(5, 1, None).unwrap(), k).unwrap()
    }

    fn w25(k: u32) -> BaseCtx {
        BaseCtx::new(FieldCtx::new(5, 2, Some(vec![2, 4, 1])).unwrap(), k).unwrap()
    }

    #[test]
    fn teichmueller_of_two_mod_25() {
        let w = w5(2);
        let t = w.teichmueller(&w.field().from_u64(2));
        assert_eq!(t.coeffs(), &[7]);
    }

    #[test]
    fn teichmueller_is_delta_kernel() {
        // over Z/125 the elements with delta a = 0 (mod 25) are exactly
        // 0 and the roots of a^5 = a
        let w = w5(3);
        let mut kernel = Vec::new();
        for v in 0..125u64 {
            let a = w.from_coeffs(&[v], 3).unwrap();
            let d = w.delta(&a, 1).unwrap();
            if w.is_zero(&d) {
                kernel.push(v);
            }
        }
        let teich: Vec<u64> = (0..125u64)
            .filter(|&v| {
                let a = w.from_coeffs(&[v], 3).unwrap();
                w.congruent_mod(&w.pow(&a, 5), &a, 3)
            })
            .collect();
        assert_eq!(kernel, teich);
        assert_eq!(kernel.len(), 5); // 0 and the four 4th roots of unity
    }

    #[test]
    fn delta_reference_values() {
        let w = w5(6);
        let two = w.from_i64(2);
        assert_eq!(w.delta(&two, 1).unwrap(), w.truncate(&w.from_i64(-6), 5));
        let five = w.from_i64(5);
        assert_eq!(w.delta(&five, 1).unwrap(), w.truncate(&w.from_i64(-624), 5));
    }

    #[test]
    fn invert_reference_value() {
        let w = w5(3);
        let inv2 = w.invert(&w.from_i64(2)).unwrap();
        assert_eq!(inv2.coeffs(), &[63]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w2 = w25(6);
        for _ in 0..40 {
            let a = w2.random_unit(&mut rng, 6);
            let ai = w2.invert(&a).unwrap();
            assert_eq!(w2.mul(&a, &ai), w2.one());
        }
    }

    #[test]
    fn carry_reference_values() {
        let w3 = BaseCtx::new(FieldCtx::new(3, 1, None).unwrap(), 4).unwrap();
        let c = w3
            .cp_carry(&w3.from_i64(1), &w3.from_i64(1), 1)
            .unwrap();
        assert_eq!(c, w3.from_i64(-2));
        let w = w5(4);
        let c = w.cp_carry(&w.from_i64(1), &w.from_i64(2), 1).unwrap();
        assert_eq!(c, w.from_i64(-42));
    }

    #[test]
    fn derivation_sum_and_product_rules() {
        let w = w25(6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in [1u32, 2] {
            for _ in 0..60 {
                let a = w.random(&mut rng, 6);
                let b = w.random(&mut rng, 6);
                let da = w.delta(&a, s).unwrap();
                let db = w.delta(&b, s).unwrap();
                // delta(a+b) = delta a + delta b + C_p(a, b)
                let lhs = w.delta(&w.add(&a, &b), s).unwrap();
                let rhs = w.add(&w.add(&da, &db), &w.cp_carry(&a, &b, s).unwrap());
                assert!(w.congruent_mod(&lhs, &rhs, 5));
                // delta(ab) = a^{p^s} delta b + b^{p^s} delta a + p delta a delta b
                let lhs = w.delta(&w.mul(&a, &b), s).unwrap();
                let rhs = w.add(
                    &w.add(
                        &w.mul(&w.pow_ps(&a, s), &db),
                        &w.mul(&w.pow_ps(&b, s), &da),
                    ),
                    &w.mul_p_pow(&w.mul(&da, &db), 1),
                );
                assert!(w.congruent_mod(&lhs, &rhs, 5));
            }
        }
    }

    #[test]
    fn congruence_transfer_between_levels() {
        // a = b mod p^{v+1}  iff  delta a = delta b mod p^v, given a = b mod p^v
        let w = w25(6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..60 {
            let a = w.random(&mut rng, 6);
            let nu = rng.gen_range(1..4u32);
            let c = w.random_unit(&mut rng, 6);
            let b = w.add(&a, &w.mul_p_pow(&c, nu));
            assert!(w.congruent_mod(&a, &b, nu));
            let da = w.delta(&a, 1).unwrap();
            let db = w.delta(&b, 1).unwrap();
            let same_next = w.congruent_mod(&a, &b, nu + 1);
            let derived_same = w.congruent_mod(&da, &db, nu);
            assert_eq!(same_next, derived_same);
        }
    }

    #[test]
    fn integration_inverts_derivation() {
        let w = w25(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for s in [1u32, 2] {
            for _ in 0..40 {
                let b = w.random(&mut rng, 5);
                let u = w.p_integrate(&b, s).unwrap();
                assert_eq!(u.prec(), 6);
                assert_eq!(w.val_p(&u).map(|v| v >= 1), Some(true).filter(|_| !w.is_zero(&u)).or(Some(true)));
                let du = w.delta(&u, s).unwrap();
                assert!(w.congruent_mod(&du, &b, 5));
                // and on p-multiples the composite is the identity
                let a = w.mul_p_pow(&w.random(&mut rng, 5), 1);
                let back = w.p_integrate(&w.delta(&a, s).unwrap(), s).unwrap();
                assert!(w.congruent_mod(&back, &a, 6));
            }
        }
        // reference: the primitive of delta(5) is 5
        let five = w.from_i64(5);
        let d5 = w.delta(&five, 1).unwrap();
        let back = w.p_integrate(&d5, 1).unwrap();
        assert!(w.congruent_mod(&back, &five, 6));
    }

    #[test]
    fn frobenius_commutes_with_teichmueller() {
        let w = w25(6);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let alpha = w.field().random(&mut rng);
            let t = w.teichmueller(&alpha);
            assert!(w.is_teichmueller(&t));
            assert!(w.is_zero(&w.delta(&t, 1).unwrap()));
            for s in [1u32, 2, 3] {
                assert_eq!(
                    w.frobenius(&t, s),
                    w.teichmueller(&w.field().frobenius(&alpha, s))
                );
            }
        }
    }

    #[test]
    fn frobenius_is_an_order_m_ring_map() {
        let w = w25(6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let a = w.random(&mut rng, 6);
            let b = w.random(&mut rng, 6);
            assert_eq!(
                w.frobenius(&w.mul(&a, &b), 1),
                w.mul(&w.frobenius(&a, 1), &w.frobenius(&b, 1))
            );
            assert_eq!(
                w.frobenius(&w.add(&a, &b), 1),
                w.add(&w.frobenius(&a, 1), &w.frobenius(&b, 1))
            );
            assert_eq!(w.frobenius(&w.frobenius(&a, 1), 1), w.frobenius(&a, 2));
            assert_eq!(w.frobenius(&a, 2), a); // m = 2
            // phi(a) = a^p mod p
            assert!(w.congruent_mod(&w.frobenius(&a, 1), &w.pow_ps(&a, 1), 1));
        }
    }

    #[test]
    fn binom_half_squares_to_quarter() {
        // (sum C(1/2,k) t^k)^2 = 1 + t as a truncated identity; spot-check
        // via the scalar square root of 16 mod 125 being 121 (see matrix
        // tests), and directly: C(1/2,1) = 1/2, C(1/2,2) = -1/8
        let w = w5(3);
        let half = w.invert(&w.from_i64(2)).unwrap();
        assert_eq!(w.binom_half(1), half);
        let eighth = w.invert(&w.from_i64(-8)).unwrap();
        assert_eq!(w.binom_half(2), eighth);
    }

    #[test]
    fn valuation_and_exact_division() {
        let w = w5(4);
        let a = w.from_i64(50);
        assert_eq!(w.val_p(&a), Some(2));
        assert_eq!(w.div_p_exact(&a, 2).unwrap(), w.truncate(&w.from_i64(2), 2));
        assert_eq!(w.div_p_exact(&a, 1).unwrap(), w.truncate(&w.from_i64(10), 3));
        assert!(w.div_p_exact(&w.from_i64(3), 1).is_err());
        assert_eq!(w.val_p(&w.zero()), None);
    }

    #[test]
    fn serialization_round_trip() {
        let w = w25(6);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let a = w.random(&mut rng, 4);
            let s = a.to_decimal_strings();
            let b = w.from_decimal_strings(&s, 4).unwrap();
            assert_eq!(a, b);
        }
    }
}
