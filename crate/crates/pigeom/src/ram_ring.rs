//! The tame totally ramified extension `R = W[pi]/(pi^e - p)` with a family
//! of `n` higher Frobenius lifts `phi_i` (acting as `phi^s` on `W` and as
//! `pi -> zeta_i pi` with `zeta_i` a Teichmueller `e`-th root of unity) and
//! their pi-derivations `delta_i a = (phi_i(a) - a^{p^s}) / pi`, including
//! word-indexed compositions.
//!
//! Elements are coordinate vectors over the basis `1, pi, .., pi^{e-1}` with
//! an absolute pi-adic precision `prec`: coordinate `j` is meaningful (and
//! stored) mod `p^{ceil((prec - j)/e)}`.

use crate::base_field::FqElem;
use crate::error::{Error, Result};
use crate::witt_base::{BaseCtx, WElem};
use num_bigint::BigInt;
use rand::Rng;

/// A composition word over the directions `1..=n`; `phi_word` applies the
/// rightmost letter first.
pub type Word = Vec<usize>;

/// Element of `R` mod `pi^prec`, coordinates little-endian in `pi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpiElem {
    pub(crate) coords: Vec<WElem>,
    pub(crate) prec: u32,
}

impl RpiElem {
    pub fn prec(&self) -> u32 {
        self.prec
    }

    /// Coordinates with respect to the basis `1, pi, .., pi^{e-1}`.
    pub fn coords(&self) -> &[WElem] {
        &self.coords
    }
}

/// Context for `R = W[pi]/(pi^e - p)` with its family of Frobenius lifts.
#[derive(Debug, Clone)]
pub struct RamCtx {
    base: BaseCtx,
    e: usize,
    s: u32,
    n: usize,
    zeta_exps: Vec<u64>,
    /// Teichmueller e-th roots of unity, one per direction.
    zetas: Vec<WElem>,
    /// Working absolute pi-precision `M <= e*K`.
    prec_pi: u32,
}

impl RamCtx {
    /// Builds the ramified context. `zeta_exps[i]` is the exponent `j` with
    /// `zeta_{i+1} = tau^{j (p^m - 1)/e}` for `tau` the Teichmueller lift of
    /// the residue-field generator. `prec_pi` defaults to `e*(K-1)`.
    pub fn new(
        base: BaseCtx,
        e: usize,
        s: u32,
        zeta_exps: &[u64],
        prec_pi: Option<u32>,
    ) -> Result<Self> {
        if e == 0 {
            return Err(Error::ConfigInvalid("ramification index e must be >= 1".into()));
        }
        if s == 0 {
            return Err(Error::ConfigInvalid("Frobenius degree s must be >= 1".into()));
        }
        let n = zeta_exps.len();
        if n == 0 {
            return Err(Error::ConfigInvalid(
                "at least one arithmetic direction is required".into(),
            ));
        }
        let order_minus_one = base.field().order() - 1;
        if order_minus_one % (e as u64) != 0 {
            return Err(Error::ConfigInvalid(format!(
                "e = {e} does not divide p^m - 1 = {order_minus_one} (wild ramification)"
            )));
        }
        let max_prec = (e as u32) * base.k_prec();
        let prec_pi = prec_pi.unwrap_or((e as u32) * (base.k_prec() - 1));
        if prec_pi < 2 || prec_pi > max_prec {
            return Err(Error::ConfigInvalid(format!(
                "working pi-precision {prec_pi} out of range 2..={max_prec}"
            )));
        }
        let mut zetas = Vec::with_capacity(n);
        for &j in zeta_exps {
            let root = base.field().root_of_unity(e as u64, j)?;
            let z = base.teichmueller(&root);
            // zeta^e = 1 exactly at precision K
            if !base.congruent_mod(&base.pow(&z, e as u128), &base.one(), base.k_prec()) {
                return Err(Error::ConfigInvalid(
                    "root of unity is not an exact e-th root at full precision".into(),
                ));
            }
            zetas.push(z);
        }
        Ok(RamCtx {
            base,
            e,
            s,
            n,
            zeta_exps: zeta_exps.to_vec(),
            zetas,
            prec_pi,
        })
    }

    pub fn base(&self) -> &BaseCtx {
        &self.base
    }

    pub fn e(&self) -> usize {
        self.e
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    /// Number of arithmetic directions.
    pub fn n_dirs(&self) -> usize {
        self.n
    }

    pub fn zeta_exps(&self) -> &[u64] {
        &self.zeta_exps
    }

    /// Working pi-precision `M`.
    pub fn prec_pi(&self) -> u32 {
        self.prec_pi
    }

    /// Maximum representable pi-precision `e*K`.
    pub fn max_prec(&self) -> u32 {
        (self.e as u32) * self.base.k_prec()
    }

    /// The root of unity attached to direction `i` (1-based), as a `W`
    /// element at full precision.
    pub fn zeta(&self, i: usize) -> &WElem {
        &self.zetas[i - 1]
    }

    // ----- representation plumbing -----

    /// p-precision required of coordinate `j` at pi-precision `prec`.
    fn cprec(&self, j: usize, prec: u32) -> u32 {
        let j = j as u32;
        if prec <= j {
            0
        } else {
            (prec - j).div_ceil(self.e as u32)
        }
    }

    /// Canonicalizes a coordinate vector at the given precision.
    fn canonical(&self, coords: Vec<WElem>, prec: u32) -> RpiElem {
        debug_assert_eq!(coords.len(), self.e);
        let coords = coords
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let need = self.cprec(j, prec);
                debug_assert!(
                    w.prec() >= need,
                    "coordinate {j} carries p-precision {} < required {need}",
                    w.prec()
                );
                self.base.truncate(w, need)
            })
            .collect();
        RpiElem { coords, prec }
    }

    // ----- constructors -----

    pub fn zero(&self) -> RpiElem {
        self.canonical(vec![self.base.zero(); self.e], self.prec_pi)
    }

    pub fn one(&self) -> RpiElem {
        self.from_i64(1)
    }

    pub fn from_i64(&self, v: i64) -> RpiElem {
        self.embed_w(&self.base.from_i64(v))
    }

    /// Embeds a `W` element as the degree-zero coordinate.
    pub fn embed_w(&self, a: &WElem) -> RpiElem {
        let prec = self.prec_pi.min((self.e as u32) * a.prec());
        let mut coords = vec![self.base.zero(); self.e];
        coords[0] = a.clone();
        self.canonical(coords, prec)
    }

    /// The uniformizer `pi` (equal to `p` when `e = 1`).
    pub fn pi(&self) -> RpiElem {
        self.mul_pi_pow(&self.one(), 1)
    }

    /// Element from explicit coordinates at the given pi-precision.
    pub fn from_theta_coords(&self, coords: &[WElem], prec: u32) -> Result<RpiElem> {
        if coords.len() != self.e {
            return Err(Error::ConfigInvalid(format!(
                "expected {} coordinates, got {}",
                self.e,
                coords.len()
            )));
        }
        if prec > self.max_prec() {
            return Err(Error::ConfigInvalid(format!(
                "pi-precision {prec} exceeds maximum {}",
                self.max_prec()
            )));
        }
        for (j, w) in coords.iter().enumerate() {
            if w.prec() < self.cprec(j, prec) {
                return Err(Error::PrecisionExhausted {
                    needed: self.cprec(j, prec),
                    have: w.prec(),
                });
            }
        }
        Ok(self.canonical(coords.to_vec(), prec))
    }

    /// The coordinates of `a` in the basis `1, pi, .., pi^{e-1}`; the
    /// module-basis view of `R` over `W`. In particular `p/pi` has
    /// coordinates `(0, .., 0, 1)`.
    pub fn theta_coords(&self, a: &RpiElem) -> Vec<WElem> {
        a.coords.clone()
    }

    /// Teichmueller lift of a residue element, at working precision.
    pub fn teichmueller(&self, alpha: &FqElem) -> RpiElem {
        self.embed_w(&self.base.teichmueller(alpha))
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R, prec: u32) -> RpiElem {
        let prec = prec.clamp(1, self.max_prec());
        let coords = (0..self.e)
            .map(|j| {
                let cp = self.cprec(j, prec);
                if cp == 0 {
                    self.base.truncate(&self.base.zero(), 0)
                } else {
                    self.base.random(rng, cp)
                }
            })
            .collect();
        self.canonical(coords, prec)
    }

    pub fn random_unit<R: Rng + ?Sized>(&self, rng: &mut R, prec: u32) -> RpiElem {
        loop {
            let a = self.random(rng, prec);
            if self.is_unit(&a) {
                return a;
            }
        }
    }

    // ----- ring operations -----

    pub fn is_zero(&self, a: &RpiElem) -> bool {
        a.coords.iter().all(|w| self.base.is_zero(w))
    }

    pub fn is_unit(&self, a: &RpiElem) -> bool {
        a.prec > 0 && self.base.is_unit(&a.coords[0])
    }

    pub fn residue(&self, a: &RpiElem) -> FqElem {
        self.base.residue(&a.coords[0])
    }

    pub fn add(&self, a: &RpiElem, b: &RpiElem) -> RpiElem {
        let prec = a.prec.min(b.prec);
        let coords = a
            .coords
            .iter()
            .zip(&b.coords)
            .map(|(x, y)| self.base.add(x, y))
            .collect();
        self.canonical(coords, prec)
    }

    pub fn sub(&self, a: &RpiElem, b: &RpiElem) -> RpiElem {
        let prec = a.prec.min(b.prec);
        let coords = a
            .coords
            .iter()
            .zip(&b.coords)
            .map(|(x, y)| self.base.sub(x, y))
            .collect();
        self.canonical(coords, prec)
    }

    pub fn neg(&self, a: &RpiElem) -> RpiElem {
        let coords = a.coords.iter().map(|x| self.base.neg(x)).collect();
        self.canonical(coords, a.prec)
    }

    pub fn mul(&self, a: &RpiElem, b: &RpiElem) -> RpiElem {
        let prec = a.prec.min(b.prec);
        let e = self.e;
        let mut acc = vec![self.base.zero(); e];
        for i in 0..e {
            if self.base.is_zero(&a.coords[i]) && a.coords[i].prec() >= self.base.k_prec() {
                continue;
            }
            for j in 0..e {
                let t = self.base.mul(&a.coords[i], &b.coords[j]);
                if i + j < e {
                    acc[i + j] = self.base.add(&acc[i + j], &t);
                } else {
                    // pi^{i+j} = p * pi^{i+j-e}
                    acc[i + j - e] = self.base.add(&acc[i + j - e], &self.base.mul_p_pow(&t, 1));
                }
            }
        }
        self.canonical(acc, prec)
    }

    pub fn pow(&self, a: &RpiElem, mut exp: u128) -> RpiElem {
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

    /// `a^{p^s}` via `s` chained `p`-th powers.
    pub fn pow_ps(&self, a: &RpiElem, s: u32) -> RpiElem {
        let mut cur = a.clone();
        for _ in 0..s {
            cur = self.pow(&cur, self.base.p() as u128);
        }
        cur
    }

    pub fn truncate(&self, a: &RpiElem, prec: u32) -> RpiElem {
        let prec = prec.min(a.prec);
        self.canonical(a.coords.clone(), prec)
    }

    /// Reinterprets the stored representative at a higher claimed precision
    /// (a representative choice; see `BaseCtx::assume_precision`).
    pub fn assume_precision(&self, a: &RpiElem, prec: u32) -> RpiElem {
        let prec = prec.min(self.max_prec());
        if prec <= a.prec {
            return self.truncate(a, prec);
        }
        let coords = a
            .coords
            .iter()
            .enumerate()
            .map(|(j, w)| self.base.assume_precision(w, self.cprec(j, prec)))
            .collect();
        self.canonical(coords, prec)
    }

    /// `a == b mod pi^k`; false if either operand is not known that far.
    pub fn congruent_mod(&self, a: &RpiElem, b: &RpiElem, k: u32) -> bool {
        if a.prec < k || b.prec < k {
            return false;
        }
        let d = self.truncate(&self.sub(a, b), k);
        self.is_zero(&d)
    }

    /// Multiplication by `pi^k`, raising precision (capped at `e*K`).
    pub fn mul_pi_pow(&self, a: &RpiElem, k: u32) -> RpiElem {
        let mut cur = a.clone();
        for _ in 0..k {
            let prec = (cur.prec + 1).min(self.max_prec());
            let e = self.e;
            let mut coords = Vec::with_capacity(e);
            coords.push(self.base.mul_p_pow(&cur.coords[e - 1], 1));
            for j in 0..e - 1 {
                coords.push(cur.coords[j].clone());
            }
            cur = self.canonical(coords, prec);
        }
        cur
    }

    /// Exact division by `pi^k`; errors if `pi^k` does not divide at the
    /// tracked precision. Output precision drops by `k`.
    pub fn div_pi_exact(&self, a: &RpiElem, k: u32) -> Result<RpiElem> {
        let mut cur = a.clone();
        for _ in 0..k {
            if cur.prec < 2 {
                return Err(Error::PrecisionExhausted {
                    needed: 2,
                    have: cur.prec,
                });
            }
            let e = self.e;
            let mut coords = Vec::with_capacity(e);
            for j in 1..e {
                coords.push(cur.coords[j].clone());
            }
            // The constant coordinate must be divisible by p (pi^e = p).
            // When the rotated-in head needs no digits at the target
            // precision, only the divisibility check remains.
            let hp = self.cprec(0, cur.prec);
            let head = if hp == 0 {
                self.base.truncate(&self.base.zero(), 0)
            } else if hp == 1 {
                if self.base.val_p(&cur.coords[0]).is_some() {
                    return Err(Error::NotDivisible);
                }
                self.base.truncate(&self.base.zero(), 0)
            } else {
                self.base.div_p_exact(&cur.coords[0], 1)?
            };
            coords.push(head);
            cur = self.canonical(coords, cur.prec - 1);
        }
        Ok(cur)
    }

    /// pi-adic valuation up to the tracked precision (`None` if the element
    /// vanishes at its precision).
    pub fn val_pi(&self, a: &RpiElem) -> Option<u32> {
        let mut best: Option<u32> = None;
        for (j, w) in a.coords.iter().enumerate() {
            if let Some(v) = self.base.val_p(w) {
                let val = (self.e as u32) * v + j as u32;
                if val < a.prec {
                    best = Some(best.map_or(val, |b| b.min(val)));
                }
            }
        }
        best
    }

    /// Inverse of a unit, exact at the operand's precision.
    pub fn invert(&self, a: &RpiElem) -> Result<RpiElem> {
        if !self.is_unit(a) {
            return Err(Error::NotAUnit);
        }
        let r0 = self.base.field().inv(&self.residue(a))?;
        let seed = self.embed_w(&self.base.lift_residue(&r0));
        let mut y = self.assume_precision(&seed, a.prec);
        let two = self.assume_precision(&self.from_i64(2), a.prec);
        let one = self.assume_precision(&self.one(), a.prec);
        loop {
            let ay = self.mul(a, &y);
            if self.congruent_mod(&ay, &one, a.prec) {
                return Ok(y);
            }
            y = self.mul(&y, &self.sub(&two, &ay));
        }
    }

    /// The inverse of 2.
    pub fn half(&self) -> RpiElem {
        self.embed_w(&self.base.half())
    }

    // ----- Frobenius lifts and derivations -----

    /// The higher Frobenius lift `phi_i` for direction `i` (1-based):
    /// `phi^s` on `W`-coordinates and `pi -> zeta_i pi`.
    pub fn frobenius_dir(&self, a: &RpiElem, i: usize) -> RpiElem {
        assert!((1..=self.n).contains(&i), "direction out of range");
        let zeta = &self.zetas[i - 1];
        let mut zpow = self.base.one();
        let coords = a
            .coords
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let img = self.base.frobenius(w, self.s);
                let out = self.base.mul(&img, &zpow);
                if j + 1 < self.e {
                    zpow = self.base.mul(&zpow, zeta);
                }
                out
            })
            .collect();
        self.canonical(coords, a.prec)
    }

    /// Composite lift for a word (rightmost letter applied first).
    pub fn phi_word(&self, a: &RpiElem, word: &[usize]) -> RpiElem {
        let mut cur = a.clone();
        for &i in word.iter().rev() {
            cur = self.frobenius_dir(&cur, i);
        }
        cur
    }

    /// The pi-derivation `delta_i a = (phi_i(a) - a^{p^s}) / pi`.
    /// Costs one unit of pi-precision.
    pub fn delta_dir(&self, a: &RpiElem, i: usize) -> Result<RpiElem> {
        if a.prec < 2 {
            return Err(Error::PrecisionExhausted {
                needed: 2,
                have: a.prec,
            });
        }
        let d = self.sub(&self.frobenius_dir(a, i), &self.pow_ps(a, self.s));
        self.div_pi_exact(&d, 1)
    }

    /// The higher pi-derivation attached to a word:
    /// `(phi_word(a) - a^{p^{|word| s}}) / pi`.
    pub fn delta_word(&self, a: &RpiElem, word: &[usize]) -> Result<RpiElem> {
        let l = word.len() as u32;
        if a.prec < l + 1 {
            return Err(Error::PrecisionExhausted {
                needed: l + 1,
                have: a.prec,
            });
        }
        let d = self.sub(&self.phi_word(a, word), &self.pow_ps(a, l * self.s));
        self.div_pi_exact(&d, 1)
    }

    /// `delta_i(pi)` in closed form: `zeta_i - pi^{p^s - 1}`.
    pub fn delta_pi(&self, i: usize) -> RpiElem {
        let zeta = self.truncate(&self.embed_w(self.zeta(i)), self.prec_pi - 1);
        let ps = (self.base.p() as u128).pow(self.s);
        let pipow = self.pow(&self.truncate(&self.pi(), self.prec_pi - 1), ps - 1);
        self.sub(&zeta, &pipow)
    }

    /// The carry polynomial `(x^{p^s} + y^{p^s} - (x+y)^{p^s})/p` evaluated
    /// exactly over `R`; the pi-derivation sum rule uses it scaled by
    /// `p/pi = pi^{e-1}`.
    pub fn cp_carry(&self, x: &RpiElem, y: &RpiElem, s: u32) -> Result<RpiElem> {
        let ps_big = (self.base.p() as u128).checked_pow(s).filter(|&v| v <= 1 << 20);
        let ps = match ps_big {
            Some(v) => v as u64,
            None => {
                return Err(Error::ConfigInvalid(format!(
                    "p^s too large for carry evaluation (s = {s})"
                )))
            }
        };
        let prec = x.prec.min(y.prec);
        let mut ypows = Vec::with_capacity(ps as usize);
        ypows.push(self.truncate(&self.one(), prec));
        for _ in 1..ps {
            let last = self.mul(ypows.last().unwrap(), y);
            ypows.push(last);
        }
        let mut acc = self.truncate(&self.zero(), prec);
        let mut xp = self.truncate(&self.one(), prec);
        let mut binom = BigInt::from(1u32);
        let p_big = BigInt::from(self.base.p());
        for k in 1..ps {
            binom = binom * BigInt::from(ps - k + 1) / BigInt::from(k);
            let over_p = &binom / &p_big;
            let coeff_mod = {
                use num_traits::{Signed, ToPrimitive};
                let pk = BigInt::from(self.base.p_pow(self.base.k_prec()));
                let mut r = &over_p % &pk;
                if r.is_negative() {
                    r += &pk;
                }
                r.to_u64().expect("fits")
            };
            let coeff = self.embed_w(
                &self
                    .base
                    .from_coeffs(&[coeff_mod], self.base.k_prec())
                    .expect("constant"),
            );
            xp = self.mul(&xp, x);
            let term = self.mul(&coeff, &self.mul(&xp, &ypows[(ps - k) as usize]));
            acc = self.add(&acc, &term);
        }
        Ok(self.neg(&acc))
    }
}
