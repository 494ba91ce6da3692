//! Delta-polynomials over `W`: sparse polynomials in the jet variables
//! `t, t', .., t^{(r)}`, their evaluation maps (substituting iterated
//! derivations of a point), the weighted degree grading, and Witt
//! coordinates recovered from ghost components.

use crate::error::{Error, Result};
use crate::base_field::FqElem;
use crate::witt_base::{BaseCtx, WElem};
use std::collections::BTreeMap;

/// Sparse polynomial in `t, t', .., t^{(order)}` with `W` coefficients.
/// Exponent vectors have length `order + 1`.
#[derive(Debug, Clone)]
pub struct DeltaPoly {
    terms: BTreeMap<Vec<u32>, WElem>,
    order: u32,
}

impl DeltaPoly {
    /// Builds a polynomial from raw terms; exponent vectors may have any
    /// length and are normalized (trailing zeros trimmed, duplicates
    /// summed, zero coefficients dropped).
    pub fn new(w: &BaseCtx, raw: Vec<(Vec<u32>, WElem)>) -> Self {
        let mut terms: BTreeMap<Vec<u32>, WElem> = BTreeMap::new();
        let mut order = 0u32;
        for (mut expo, coeff) in raw {
            while expo.last() == Some(&0) {
                expo.pop();
            }
            if w.is_zero(&coeff) {
                continue;
            }
            match terms.get_mut(&expo) {
                Some(c) => *c = w.add(c, &coeff),
                None => {
                    terms.insert(expo, coeff);
                }
            }
        }
        terms.retain(|_, c| !w.is_zero(c));
        for expo in terms.keys() {
            order = order.max(expo.len().saturating_sub(1) as u32);
        }
        DeltaPoly { terms, order }
    }

    /// The variable `t^{(i)}`.
    pub fn jet_var(w: &BaseCtx, i: u32) -> Self {
        let mut expo = vec![0u32; i as usize + 1];
        expo[i as usize] = 1;
        DeltaPoly::new(w, vec![(expo, w.one())])
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, WElem> {
        &self.terms
    }

    /// Weighted degree of one monomial under `deg t^{(i)} = p^{i s}`.
    pub fn monomial_degree(w: &BaseCtx, expo: &[u32], s: u32) -> u128 {
        let ps = (w.p() as u128).pow(s);
        let mut deg = 0u128;
        let mut scale = 1u128;
        for &e in expo {
            deg += scale * e as u128;
            scale *= ps;
        }
        deg
    }

    /// If every monomial has the same weighted degree, returns it.
    pub fn homogeneous_degree(&self, w: &BaseCtx, s: u32) -> Option<u128> {
        let mut deg = None;
        for expo in self.terms.keys() {
            let d = Self::monomial_degree(w, expo, s);
            match deg {
                None => deg = Some(d),
                Some(prev) if prev != d => return None,
                _ => {}
            }
        }
        deg
    }
}

/// Evaluates `P{a} = P(a, delta a, delta^2 a, ..)` with the degree-`s`
/// derivation; the result carries `a.prec - P.order` digits.
pub fn eval_delta_poly(w: &BaseCtx, poly: &DeltaPoly, a: &WElem, s: u32) -> Result<WElem> {
    if a.prec() <= poly.order {
        return Err(Error::PrecisionExhausted {
            needed: poly.order + 1,
            have: a.prec(),
        });
    }
    let mut jets = vec![a.clone()];
    for i in 0..poly.order {
        let next = w.delta(&jets[i as usize], s)?;
        jets.push(next);
    }
    let out_prec = a.prec() - poly.order;
    let mut acc = w.truncate(&w.zero(), out_prec);
    for (expo, coeff) in &poly.terms {
        let mut t = w.truncate(coeff, out_prec);
        for (i, &e) in expo.iter().enumerate() {
            for _ in 0..e {
                t = w.mul(&t, &jets[i]);
            }
        }
        acc = w.add(&acc, &t);
    }
    Ok(acc)
}

/// The residue-level evaluation map `e_P(a) = P{a} mod p`.
pub fn e_p(w: &BaseCtx, poly: &DeltaPoly, a: &WElem, s: u32) -> Result<FqElem> {
    Ok(w.residue(&eval_delta_poly(w, poly, a, s)?))
}

/// Witt coordinates `(x_0, .., x_r)` of `a`, determined by the ghost
/// identities `sum_{i<=j} p^i x_i^{p^{j-i}} = phi^j(a)` for `j <= r`
/// (derivation degree fixed to 1). Coordinate `x_j` carries
/// `a.prec - j` digits; `x_0 = a` and `x_1 = delta a`.
pub fn witt_coords(w: &BaseCtx, a: &WElem, r: u32) -> Result<Vec<WElem>> {
    if a.prec() <= r {
        return Err(Error::PrecisionExhausted {
            needed: r + 1,
            have: a.prec(),
        });
    }
    let mut xs = vec![a.clone()];
    for j in 1..=r {
        let mut rem = w.frobenius(a, j);
        for i in 0..j {
            let pw = w.pow_ps(&xs[i as usize], j - i);
            rem = w.sub(&rem, &w.mul_p_pow(&pw, i));
        }
        xs.push(w.div_p_exact(&rem, j)?);
    }
    Ok(xs)
}

/// Recomputes the ghost vector `(phi^0 a, .., phi^r a)` from Witt
/// coordinates (the inverse direction of `witt_coords`, for verification).
pub fn ghost_from_coords(w: &BaseCtx, xs: &[WElem]) -> Vec<WElem> {
    (0..xs.len())
        .map(|j| {
            let mut acc = w.truncate(&w.zero(), w.k_prec());
            for (i, x) in xs.iter().enumerate().take(j + 1) {
                let pw = w.pow_ps(x, (j - i) as u32);
                acc = w.add(&acc, &w.mul_p_pow(&pw, i as u32));
            }
            acc
        })
        .collect()
}
