//! The residue field `F_{p^m}` for an odd prime `p`.
//!
//! Elements are coefficient vectors in the power basis of a fixed monic
//! irreducible modulus of degree `m` over `F_p`. The context also carries a
//! generator of the cyclic group `F_{p^m}^*`, used to produce roots of unity
//! of any order dividing `p^m - 1`.

use crate::error::{Error, Result};
use crate::modarith::{addm, is_prime_u64, mulm, powm, prime_factors, subm};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed seed for the deterministic modulus/generator search, so that a
/// context built from the same `(p, m)` is always identical and reports that
/// embed it are reproducible.
const SEARCH_SEED: u64 = 0x7061_6765_6f6d_6574;

/// An element of `F_{p^m}`: coefficients of `1, x, .., x^{m-1}`, each `< p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FqElem {
    pub(crate) c: Vec<u64>,
}

impl FqElem {
    /// Raw coefficients (little-endian in the power basis).
    pub fn coeffs(&self) -> &[u64] {
        &self.c
    }
}

/// Context for `F_{p^m}` arithmetic.
#[derive(Debug, Clone)]
pub struct FieldCtx {
    p: u64,
    m: usize,
    /// Monic irreducible modulus, little-endian, `m + 1` coefficients.
    modulus: Vec<u64>,
    /// A fixed generator of the multiplicative group.
    generator: FqElem,
    /// `p^m`.
    order: u64,
}

impl FieldCtx {
    /// Builds the field, searching for an irreducible modulus when none is
    /// given. The search is deterministic for fixed `(p, m)`.
    pub fn new(p: u64, m: usize, modulus: Option<Vec<u64>>) -> Result<Self> {
        if p < 3 || p % 2 == 0 || !is_prime_u64(p) {
            return Err(Error::ConfigInvalid(format!("p = {p} must be an odd prime")));
        }
        if m == 0 {
            return Err(Error::ConfigInvalid("m must be at least 1".into()));
        }
        let order = (p as u128).checked_pow(m as u32).filter(|&o| o < (1 << 62));
        let order = match order {
            Some(o) => o as u64,
            None => {
                return Err(Error::ConfigInvalid(format!(
                    "p^m = {p}^{m} exceeds the supported range"
                )))
            }
        };
        let modulus = match modulus {
            Some(f) => {
                let f: Vec<u64> = f.iter().map(|&a| a % p).collect();
                if f.len() != m + 1 || f[m] != 1 {
                    return Err(Error::ConfigInvalid(
                        "modulus must be monic of degree m".into(),
                    ));
                }
                if !poly_is_irreducible(&f, p, m) {
                    return Err(Error::ConfigInvalid("modulus is not irreducible".into()));
                }
                f
            }
            None => search_irreducible(p, m),
        };
        let mut ctx = FieldCtx {
            p,
            m,
            modulus,
            generator: FqElem { c: vec![0; m] },
            order,
        };
        ctx.generator = ctx.search_generator();
        Ok(ctx)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `p^m`, the number of field elements.
    pub fn order(&self) -> u64 {
        self.order
    }

    /// The monic modulus, little-endian, `m + 1` coefficients.
    pub fn modulus(&self) -> &[u64] {
        &self.modulus
    }

    /// The fixed multiplicative generator chosen at construction.
    pub fn generator(&self) -> &FqElem {
        &self.generator
    }

    pub fn zero(&self) -> FqElem {
        FqElem { c: vec![0; self.m] }
    }

    pub fn one(&self) -> FqElem {
        self.from_u64(1)
    }

    /// The constant element `v mod p`.
    pub fn from_u64(&self, v: u64) -> FqElem {
        let mut c = vec![0; self.m];
        c[0] = v % self.p;
        FqElem { c }
    }

    /// Element from raw coefficients (reduced mod `p`, padded to length `m`).
    pub fn from_coeffs(&self, coeffs: &[u64]) -> Result<FqElem> {
        if coeffs.len() > self.m {
            return Err(Error::ConfigInvalid(format!(
                "expected at most {} coefficients, got {}",
                self.m,
                coeffs.len()
            )));
        }
        let mut c = vec![0; self.m];
        for (i, &a) in coeffs.iter().enumerate() {
            c[i] = a % self.p;
        }
        Ok(FqElem { c })
    }

    pub fn is_zero(&self, a: &FqElem) -> bool {
        a.c.iter().all(|&x| x == 0)
    }

    pub fn add(&self, a: &FqElem, b: &FqElem) -> FqElem {
        FqElem {
            c: a.c
                .iter()
                .zip(&b.c)
                .map(|(&x, &y)| addm(x, y, self.p))
                .collect(),
        }
    }

    pub fn sub(&self, a: &FqElem, b: &FqElem) -> FqElem {
        FqElem {
            c: a.c
                .iter()
                .zip(&b.c)
                .map(|(&x, &y)| subm(x, y, self.p))
                .collect(),
        }
    }

    pub fn neg(&self, a: &FqElem) -> FqElem {
        FqElem {
            c: a.c.iter().map(|&x| subm(0, x, self.p)).collect(),
        }
    }

    pub fn mul(&self, a: &FqElem, b: &FqElem) -> FqElem {
        let prod = poly_mul_mod(&a.c, &b.c, &self.modulus, self.p);
        FqElem { c: prod }
    }

    /// `a^e` by square-and-multiply.
    pub fn pow(&self, a: &FqElem, mut e: u128) -> FqElem {
        let mut base = a.clone();
        let mut acc = self.one();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse of a nonzero element.
    pub fn inv(&self, a: &FqElem) -> Result<FqElem> {
        if self.is_zero(a) {
            return Err(Error::NotAUnit);
        }
        Ok(self.pow(a, (self.order - 2) as u128))
    }

    /// The `p^s`-power Frobenius `a -> a^{p^s}`. Because Frobenius has order
    /// `m`, the exponent is reduced to `p^{s mod m}` first.
    pub fn frobenius(&self, a: &FqElem, s: u32) -> FqElem {
        let r = (s as usize) % self.m;
        if r == 0 {
            return a.clone();
        }
        let e = (self.p as u128).pow(r as u32);
        self.pow(a, e)
    }

    /// The inverse of `frobenius(_, s)`: the unique `b` with `b^{p^s} = a`.
    /// Equals `frobenius(a, m*ceil(s/m) - s)`.
    pub fn inv_frobenius(&self, a: &FqElem, s: u32) -> FqElem {
        let r = (s as usize) % self.m;
        let back = (self.m - r) % self.m;
        self.frobenius(a, back as u32)
    }

    /// A primitive `e`-th root of unity raised to the `j`-th power:
    /// `g^{j (p^m - 1) / e}`. Requires `e | p^m - 1` (tameness).
    pub fn root_of_unity(&self, e: u64, j: u64) -> Result<FqElem> {
        if e == 0 || (self.order - 1) % e != 0 {
            return Err(Error::ConfigInvalid(format!(
                "e = {e} does not divide p^m - 1 = {}; the extension would not be tame",
                self.order - 1
            )));
        }
        let step = (self.order - 1) / e;
        Ok(self.pow(&self.generator, (step as u128) * (j as u128 % e as u128)))
    }

    /// Uniformly random element.
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> FqElem {
        FqElem {
            c: (0..self.m).map(|_| rng.gen_range(0..self.p)).collect(),
        }
    }

    /// Uniformly random nonzero element.
    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> FqElem {
        loop {
            let a = self.random(rng);
            if !self.is_zero(&a) {
                return a;
            }
        }
    }

    /// Enumerates every field element (for exhaustive desk-scale checks).
    pub fn all_elements(&self) -> Vec<FqElem> {
        let mut out = Vec::with_capacity(self.order as usize);
        let mut c = vec![0u64; self.m];
        loop {
            out.push(FqElem { c: c.clone() });
            let mut i = 0;
            loop {
                if i == self.m {
                    return out;
                }
                c[i] += 1;
                if c[i] < self.p {
                    break;
                }
                c[i] = 0;
                i += 1;
            }
        }
    }

    fn search_generator(&self) -> FqElem {
        let group = self.order - 1;
        let factors = prime_factors(group);
        let mut rng = ChaCha8Rng::seed_from_u64(SEARCH_SEED ^ self.order);
        loop {
            let cand = self.random_nonzero(&mut rng);
            let ok = factors
                .iter()
                .all(|&q| !self.eq_one(&self.pow(&cand, (group / q) as u128)));
            if ok {
                return cand;
            }
        }
    }

    fn eq_one(&self, a: &FqElem) -> bool {
        a.c[0] == 1 && a.c[1..].iter().all(|&x| x == 0)
    }
}

/// Product of two coefficient vectors reduced by the monic `modulus`.
fn poly_mul_mod(a: &[u64], b: &[u64], modulus: &[u64], p: u64) -> Vec<u64> {
    let m = modulus.len() - 1;
    let mut prod = vec![0u64; 2 * m.max(1)];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            prod[i + j] = addm(prod[i + j], mulm(x, y, p), p);
        }
    }
    poly_rem(&mut prod, modulus, p);
    prod.truncate(m);
    prod.resize(m, 0);
    prod
}

/// In-place remainder of `a` by the monic `modulus` over `F_p`.
fn poly_rem(a: &mut Vec<u64>, modulus: &[u64], p: u64) {
    let m = modulus.len() - 1;
    while a.len() > m {
        let t = *a.last().unwrap();
        let deg = a.len() - 1;
        a.pop();
        if t == 0 {
            continue;
        }
        for j in 0..m {
            let idx = deg - m + j;
            a[idx] = subm(a[idx], mulm(t, modulus[j], p), p);
        }
    }
}

fn poly_deg(a: &[u64]) -> Option<usize> {
    a.iter().rposition(|&x| x != 0)
}

/// Polynomial gcd over `F_p` (monic output; `None` degrees treated as zero).
fn poly_gcd(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    let mut f: Vec<u64> = a.to_vec();
    let mut g: Vec<u64> = b.to_vec();
    loop {
        let dg = match poly_deg(&g) {
            None => {
                // gcd is f, made monic
                if let Some(df) = poly_deg(&f) {
                    let lead_inv = powm(f[df], (p - 2) as u128, p);
                    let mut out: Vec<u64> =
                        f[..=df].iter().map(|&c| mulm(c, lead_inv, p)).collect();
                    out.truncate(df + 1);
                    return out;
                }
                return vec![];
            }
            Some(d) => d,
        };
        // f mod g
        let lead_inv = powm(g[dg], (p - 2) as u128, p);
        while let Some(df) = poly_deg(&f) {
            if df < dg {
                break;
            }
            let t = mulm(f[df], lead_inv, p);
            for j in 0..=dg {
                f[df - dg + j] = subm(f[df - dg + j], mulm(t, g[j], p), p);
            }
        }
        std::mem::swap(&mut f, &mut g);
    }
}

/// `x^{p^k} mod f`, computed by iterated `p`-th powers of `x`.
fn poly_x_pow_pk(f: &[u64], p: u64, k: usize) -> Vec<u64> {
    let m = f.len() - 1;
    let mut cur = vec![0u64; m];
    if m == 1 {
        // x = -f[0] in the quotient ring
        cur[0] = subm(0, f[0], p);
    } else {
        cur[1] = 1;
    }
    for _ in 0..k {
        cur = poly_pow_mod(&cur, p as u128, f, p);
    }
    cur
}

fn poly_pow_mod(a: &[u64], mut e: u128, f: &[u64], p: u64) -> Vec<u64> {
    let m = f.len() - 1;
    let mut acc = vec![0u64; m.max(1)];
    acc[0] = 1;
    let mut base = a.to_vec();
    while e > 0 {
        if e & 1 == 1 {
            acc = poly_mul_mod(&acc, &base, f, p);
        }
        base = poly_mul_mod(&base, &base, f, p);
        e >>= 1;
    }
    acc
}

/// Irreducibility of a monic degree-`m` polynomial over `F_p`:
/// `x^{p^m} = x mod f` and `gcd(x^{p^i} - x, f) = 1` for `0 < i < m`.
fn poly_is_irreducible(f: &[u64], p: u64, m: usize) -> bool {
    let x_in_ring: Vec<u64> = {
        let mut v = vec![0u64; m];
        if m == 1 {
            v[0] = subm(0, f[0], p);
        } else {
            v[1] = 1;
        }
        v
    };
    for i in 1..m {
        let xi = poly_x_pow_pk(f, p, i);
        let mut diff: Vec<u64> = xi
            .iter()
            .zip(&x_in_ring)
            .map(|(&a, &b)| subm(a, b, p))
            .collect();
        diff.resize(m, 0);
        let g = poly_gcd(&diff, f, p);
        if poly_deg(&g) != Some(0) && poly_deg(&g).is_some() {
            return false;
        }
    }
    let xm = poly_x_pow_pk(f, p, m);
    xm == x_in_ring
}

/// Deterministic random search for a monic irreducible of degree `m`.
fn search_irreducible(p: u64, m: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEARCH_SEED ^ (p << 8) ^ m as u64);
    loop {
        let mut f: Vec<u64> = (0..m).map(|_| rng.gen_range(0..p)).collect();
        f.push(1);
        // a degree-m polynomial with zero constant term is divisible by x
        if m > 1 && f[0] == 0 {
            continue;
        }
        if poly_is_irreducible(&f, p, m) {
            return f;
        }
    }
}
