//! Horizontal curves: twisted differential systems, parallel transport,
//! geodesics, and the induced residue-level maps.
//!
//! The state space is `W^m`. A first-order system prescribes
//! `delta^{(s)} u_k = F_k(u, phi^s u) / G(u, phi^s u)` for polynomials
//! `F_k`, `G` over `W`. When the denominator is a unit at the initial
//! residue, each mod-`p` class contains exactly one solution, and
//! [`ode_solve`] finds it digit by digit: at stage `nu` the defect
//! `(delta u - f) / p^nu` is killed by adding `p^{nu+1} b` with
//! `b^{(p^s)} = -defect mod p`, which is solvable because the residue
//! field is perfect.
//!
//! Connections enter through their direction matrices at the identity.
//! Writing those over the pi-power coordinates of the ramified extension
//! (which requires the ramification index, the number of directions, and
//! the matrix size to coincide) turns the parallel-transport and geodesic
//! equations into systems of the above shape over `W` itself; this is
//! what [`GeodesicCtx`] packages.

use std::collections::BTreeMap;

use crate::base_field::FqElem;
use crate::connections::ConnectionData;
use crate::delta_poly::{e_p, DeltaPoly};
use crate::error::{Error, Result};
use crate::matrix_ring::{mat_id, mat_inv, mat_mul, mat_sub, Mat};
use crate::ram_ring::RamCtx;
use crate::series_ring::SeriesCtx;
use crate::witt_base::{BaseCtx, WElem};

// ---------------------------------------------------------------------------
// sparse polynomials over W
// ---------------------------------------------------------------------------

/// A sparse polynomial over `W` in `nvars` variables, used to present the
/// right sides of twisted differential systems. By convention a system in
/// `m` unknowns uses `2m` variables: index `v < m` is the state variable
/// `u_v`, index `m + v` is its twist `phi^s(u_v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyW {
    nvars: usize,
    terms: BTreeMap<Vec<u16>, WElem>,
}

impl PolyW {
    /// Builds a polynomial from raw `(exponents, coefficient)` pairs.
    /// Duplicate monomials are summed; zero coefficients are dropped.
    pub fn new(w: &BaseCtx, nvars: usize, raw: Vec<(Vec<u16>, WElem)>) -> Result<Self> {
        let mut terms: BTreeMap<Vec<u16>, WElem> = BTreeMap::new();
        for (expo, coeff) in raw {
            if expo.len() != nvars {
                return Err(Error::ConfigInvalid(format!(
                    "monomial has {} exponents, polynomial has {} variables",
                    expo.len(),
                    nvars
                )));
            }
            match terms.get_mut(&expo) {
                Some(c) => *c = w.add(c, &coeff),
                None => {
                    terms.insert(expo, coeff);
                }
            }
        }
        terms.retain(|_, c| !w.is_zero(c));
        Ok(PolyW { nvars, terms })
    }

    /// The zero polynomial.
    pub fn zero(nvars: usize) -> Self {
        PolyW {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    /// A constant polynomial.
    pub fn constant(w: &BaseCtx, nvars: usize, c: &WElem) -> Self {
        let mut terms = BTreeMap::new();
        if !w.is_zero(c) {
            terms.insert(vec![0; nvars], c.clone());
        }
        PolyW { nvars, terms }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluates at the given point (one value per variable).
    pub fn eval(&self, w: &BaseCtx, point: &[WElem]) -> WElem {
        assert_eq!(point.len(), self.nvars, "evaluation point has wrong arity");
        let mut acc = w.zero();
        for (expo, coeff) in &self.terms {
            let mut t = coeff.clone();
            for (v, &e) in expo.iter().enumerate() {
                if e > 0 {
                    t = w.mul(&t, &w.pow(&point[v], e as u128));
                }
            }
            acc = w.add(&acc, &t);
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// twisted first-order systems
// ---------------------------------------------------------------------------

/// A twisted first-order system `delta^{(s)} u_k = F_k(u, phi^s u) / G(u,
/// phi^s u)` in `m` unknowns. Numerators and denominator live in `2m`
/// variables (state first, twists second).
#[derive(Clone, Debug)]
pub struct OdeSystem {
    m: usize,
    numerators: Vec<PolyW>,
    denominator: PolyW,
}

impl OdeSystem {
    pub fn new(m: usize, numerators: Vec<PolyW>, denominator: PolyW) -> Result<Self> {
        if numerators.len() != m {
            return Err(Error::ConfigInvalid(format!(
                "expected {m} numerators, got {}",
                numerators.len()
            )));
        }
        for f in numerators.iter().chain(std::iter::once(&denominator)) {
            if f.nvars() != 2 * m {
                return Err(Error::ConfigInvalid(format!(
                    "system polynomials must use {} variables, got {}",
                    2 * m,
                    f.nvars()
                )));
            }
        }
        Ok(OdeSystem {
            m,
            numerators,
            denominator,
        })
    }

    pub fn unknowns(&self) -> usize {
        self.m
    }

    pub fn numerators(&self) -> &[PolyW] {
        &self.numerators
    }

    pub fn denominator(&self) -> &PolyW {
        &self.denominator
    }

    /// The concatenated evaluation point `(u, phi^s u)`.
    fn point(&self, w: &BaseCtx, s: u32, u: &[WElem]) -> Vec<WElem> {
        let mut point = u.to_vec();
        point.extend(u.iter().map(|x| w.frobenius(x, s)));
        point
    }

    /// Evaluates the right side `F/G` at `u`; fails when the denominator
    /// is not a unit there.
    pub fn rhs(&self, w: &BaseCtx, s: u32, u: &[WElem]) -> Result<Vec<WElem>> {
        let point = self.point(w, s, u);
        let g = self.denominator.eval(w, &point);
        if !w.is_unit(&g) {
            return Err(Error::DegenerateDenominator);
        }
        let ginv = w.invert(&g)?;
        Ok(self
            .numerators
            .iter()
            .map(|f| w.mul(&f.eval(w, &point), &ginv))
            .collect())
    }
}

/// Solves `delta^{(s)} u = F/G (u, phi^s u)` with `u = u0 mod p`.
///
/// Precondition: the denominator is a unit at `u0` (checked). The stored
/// input precision of `u0` is irrelevant beyond its residue: any
/// representative seeds the same solution.
///
/// Runs `depth - 1` correction stages (`1 <= depth <= K`), after which
/// `delta^{(s)} u = F/G mod p^{depth-1}`; the returned vector carries full
/// stored precision `K`, and any two outputs whose defects vanish mod
/// `p^{K-1}` agree mod `p^K` (one extra digit is pinned by the defect of
/// the digit below it). Late stages fail with a precision error when
/// coefficient precision runs out before `depth - 1` digits are reached.
pub fn ode_solve(
    w: &BaseCtx,
    sys: &OdeSystem,
    s: u32,
    u0: &[WElem],
    depth: u32,
) -> Result<Vec<WElem>> {
    if u0.len() != sys.m {
        return Err(Error::ConfigInvalid(format!(
            "initial point has {} components, system has {}",
            u0.len(),
            sys.m
        )));
    }
    if depth < 1 || depth > w.k_prec() {
        return Err(Error::ConfigInvalid(format!(
            "depth {depth} out of range 1..={}",
            w.k_prec()
        )));
    }
    let mut u: Vec<WElem> = u0
        .iter()
        .map(|a| w.assume_precision(a, w.k_prec()))
        .collect();
    // denominator must be a unit along the whole mod-p class
    let _ = sys.rhs(w, s, &u)?;
    for nu in 0..depth - 1 {
        let fvals = sys.rhs(w, s, &u)?;
        for k in 0..sys.m {
            let diff = w.sub(&w.delta(&u[k], s)?, &fvals[k]);
            let c = w.div_p_exact(&diff, nu)?;
            let b = w
                .field()
                .inv_frobenius(&w.field().neg(&w.residue(&c)), s);
            let room = w.k_prec() - (nu + 1);
            let bump = w.mul_p_pow(&w.truncate(&w.lift_residue(&b), room.max(1)), nu + 1);
            u[k] = w.add(&u[k], &bump);
        }
    }
    Ok(u)
}

/// The defect `delta^{(s)} u - F/G (u, phi^s u)`, for checking candidate
/// solutions at their verifiable precision.
pub fn ode_residual(w: &BaseCtx, sys: &OdeSystem, s: u32, u: &[WElem]) -> Result<Vec<WElem>> {
    let fvals = sys.rhs(w, s, u)?;
    u.iter()
        .zip(fvals.iter())
        .map(|(x, f)| Ok(w.sub(&w.delta(x, s)?, f)))
        .collect()
}

// ---------------------------------------------------------------------------
// curves
// ---------------------------------------------------------------------------

/// A point of `W^n` together with its cached velocity `v = delta^{(s)} c`.
#[derive(Clone, Debug)]
pub struct Curve {
    c: Vec<WElem>,
    v: Vec<WElem>,
}

impl Curve {
    /// Caches the velocity; requires every component to carry at least two
    /// digits of precision.
    pub fn new(w: &BaseCtx, s: u32, c: Vec<WElem>) -> Result<Self> {
        let v = c.iter().map(|x| w.delta(x, s)).collect::<Result<_>>()?;
        Ok(Curve { c, v })
    }

    pub fn c(&self) -> &[WElem] {
        &self.c
    }

    pub fn v(&self) -> &[WElem] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }
}

// ---------------------------------------------------------------------------
// geodesic contexts
// ---------------------------------------------------------------------------

/// Connection data reduced to `W`: the identity values of the Christoffel
/// matrices decomposed over the pi-power coordinates, plus the coordinates
/// of `p/pi`. Requires the ramification index, the number of directions,
/// and the matrix size to coincide (`e = n = N`).
#[derive(Clone, Debug)]
pub struct GeodesicCtx {
    ram: RamCtx,
    n: usize,
    r_vec: Vec<WElem>,
    gamma: Vec<WElem>,
}

impl GeodesicCtx {
    fn idx(&self, k: usize, i: usize, j: usize, l: usize) -> usize {
        ((k * self.n + i) * self.n + j) * self.n + l
    }

    /// The coefficient ring `W` the reduced system lives over.
    pub fn base(&self) -> &BaseCtx {
        self.ram.base()
    }

    /// Frobenius degree of the underlying derivations.
    pub fn s(&self) -> u32 {
        self.ram.s()
    }

    fn default_r_vec(ram: &RamCtx) -> Result<Vec<WElem>> {
        let p = ram.base().p() as i64;
        let p_over_pi = ram.div_pi_exact(&ram.from_i64(p), 1)?;
        Ok(ram.theta_coords(&p_over_pi))
    }

    fn validate_shape(ram: &RamCtx, n: usize) -> Result<()> {
        if ram.e() != n || ram.n_dirs() != n {
            return Err(Error::ConfigInvalid(format!(
                "coordinate reduction needs e = n = N, got e = {}, directions = {}, size = {n}",
                ram.e(),
                ram.n_dirs()
            )));
        }
        Ok(())
    }

    /// Reduces a jet-mode connection: evaluates its Christoffel matrices at
    /// the identity and splits them over the pi-power coordinates.
    pub fn from_connection(t: &SeriesCtx, conn: &ConnectionData<SeriesCtx>) -> Result<Self> {
        let ram = t.ram().clone();
        let n = conn.lambdas[0].rows();
        Self::validate_shape(&ram, n)?;
        if conn.lambdas.len() != n {
            return Err(Error::ConfigInvalid(format!(
                "expected {n} direction matrices, got {}",
                conn.lambdas.len()
            )));
        }
        let gammas = crate::connections::christoffel_second(t, &conn.lambdas)?;
        let mut gamma = vec![ram.base().zero(); n * n * n * n];
        for (i, g) in gammas.iter().enumerate() {
            for j in 0..n {
                for k in 0..n {
                    let coords = ram.theta_coords(&t.eval_at_one(g.at(j, k)));
                    for (l, c) in coords.into_iter().enumerate() {
                        gamma[((k * n + i) * n + j) * n + l] = c;
                    }
                }
            }
        }
        Ok(GeodesicCtx {
            r_vec: Self::default_r_vec(&ram)?,
            ram,
            n,
            gamma,
        })
    }

    /// Builds a context from raw coordinate data `gamma[k][i][j][l]`
    /// (flattened row-major), as produced by [`Self::gamma_coeff`].
    pub fn from_gamma_theta(ram: &RamCtx, n: usize, gamma: Vec<WElem>) -> Result<Self> {
        Self::validate_shape(ram, n)?;
        if gamma.len() != n * n * n * n {
            return Err(Error::ConfigInvalid(format!(
                "expected {} coordinate entries, got {}",
                n * n * n * n,
                gamma.len()
            )));
        }
        Ok(GeodesicCtx {
            r_vec: Self::default_r_vec(ram)?,
            ram: ram.clone(),
            n,
            gamma,
        })
    }

    /// Replaces the coordinates of `p/pi` (they are data of the coordinate
    /// presentation, so relabelled presentations carry permuted vectors).
    pub fn with_r_vec(mut self, r_vec: Vec<WElem>) -> Result<Self> {
        if r_vec.len() != self.n {
            return Err(Error::ConfigInvalid(format!(
                "expected {} coordinates for p/pi, got {}",
                self.n,
                r_vec.len()
            )));
        }
        self.r_vec = r_vec;
        Ok(self)
    }

    pub fn ram(&self) -> &RamCtx {
        &self.ram
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The pi-power coordinates of `p/pi`.
    pub fn r_vec(&self) -> &[WElem] {
        &self.r_vec
    }

    /// The coordinate `l` of the Christoffel entry with upper index `k`,
    /// direction `i`, and lower index `j`, all 0-based.
    pub fn gamma_coeff(&self, k: usize, i: usize, j: usize, l: usize) -> &WElem {
        &self.gamma[self.idx(k, i, j, l)]
    }

    /// `sum_l gamma[k][i][j][l] * c_l` — the Christoffel entry contracted
    /// against a point.
    fn gamma_at(&self, k: usize, i: usize, j: usize, c: &[WElem]) -> WElem {
        let w = self.base();
        let mut acc = w.zero();
        for l in 0..self.n {
            acc = w.add(&acc, &w.mul(self.gamma_coeff(k, i, j, l), &c[l]));
        }
        acc
    }

    /// `(sum_l r_l c_l) * (sum_l phi^s(v_l))` — the denominator attached to
    /// a curve.
    fn denominator_value(&self, c: &[WElem], v: &[WElem]) -> WElem {
        let w = self.base();
        let mut rc = w.zero();
        for l in 0..self.n {
            rc = w.add(&rc, &w.mul(&self.r_vec[l], &c[l]));
        }
        let mut sv = w.zero();
        for x in v {
            sv = w.add(&sv, &w.frobenius(x, self.s()));
        }
        w.mul(&rc, &sv)
    }

    /// Whether the curve steers clear of both degeneracy hyperplanes: its
    /// position must avoid the kernel of `sum_l r_l y_l` and its velocity
    /// the kernel of `sum_l y_l`, both at the residue level.
    pub fn is_nondegenerate(&self, curve: &Curve) -> bool {
        let w = self.base();
        let f = w.field();
        let mut rc = f.zero();
        for l in 0..self.n {
            rc = f.add(&rc, &f.mul(&w.residue(&self.r_vec[l]), &w.residue(&curve.c[l])));
        }
        let mut sv = f.zero();
        for x in &curve.v {
            sv = f.add(&sv, &w.residue(x));
        }
        !f.is_zero(&rc) && !f.is_zero(&sv)
    }

    // ----- parallel transport -----

    /// The linear system governing parallel transport along `curve`:
    /// `delta^{(s)} w_k = sum_j M_kj phi^s(w_j) / D` with constant
    /// coefficients built from the contracted Christoffel entries.
    pub fn transport_system(&self, curve: &Curve) -> Result<OdeSystem> {
        if curve.len() != self.n {
            return Err(Error::ConfigInvalid(format!(
                "curve has {} components, context expects {}",
                curve.len(),
                self.n
            )));
        }
        if !self.is_nondegenerate(curve) {
            return Err(Error::DegenerateCurve);
        }
        let w = self.base();
        let s = self.s();
        let n = self.n;
        let vphi: Vec<WElem> = curve.v.iter().map(|x| w.frobenius(x, s)).collect();
        let mut numerators = Vec::with_capacity(n);
        for k in 0..n {
            let mut raw = Vec::new();
            for j in 0..n {
                let mut m_kj = w.zero();
                for i in 0..n {
                    m_kj = w.add(&m_kj, &w.mul(&self.gamma_at(k, i, j, &curve.c), &vphi[i]));
                }
                let mut expo = vec![0u16; 2 * n];
                expo[n + j] = 1;
                raw.push((expo, w.neg(&m_kj)));
            }
            numerators.push(PolyW::new(w, 2 * n, raw)?);
        }
        let d = self.denominator_value(&curve.c, &curve.v);
        let denominator = PolyW::constant(w, 2 * n, &d);
        OdeSystem::new(n, numerators, denominator)
    }

    /// Transports `w0` along `curve`: the unique solution of the transport
    /// system congruent to `w0` mod `p`. See [`ode_solve`] for `depth`.
    pub fn parallel_transport(
        &self,
        curve: &Curve,
        w0: &[WElem],
        depth: u32,
    ) -> Result<Vec<WElem>> {
        let sys = self.transport_system(curve)?;
        ode_solve(self.base(), &sys, self.s(), w0, depth)
    }

    /// The defect of the parallel-transport equation at `(curve, w)`.
    pub fn parallel_residual(&self, curve: &Curve, w_vec: &[WElem]) -> Result<Vec<WElem>> {
        let sys = self.transport_system(curve)?;
        ode_residual(self.base(), &sys, self.s(), w_vec)
    }

    /// The coefficient matrix `alpha` with `delta^{(s)} w = alpha *
    /// phi^s(w)` along `curve` (entries `M_kj / D` of the transport
    /// system).
    pub fn transport_alpha(&self, curve: &Curve) -> Result<Mat<WElem>> {
        let sys = self.transport_system(curve)?;
        let w = self.base();
        let d = sys.denominator.eval(w, &vec![w.zero(); 2 * self.n]);
        let dinv = w.invert(&d)?;
        let mut rows = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let mut row = Vec::with_capacity(self.n);
            for j in 0..self.n {
                let mut expo = vec![0u16; 2 * self.n];
                expo[self.n + j] = 1;
                let m_kj = sys.numerators[k]
                    .terms
                    .get(&expo)
                    .cloned()
                    .unwrap_or_else(|| w.zero());
                row.push(w.mul(&m_kj, &dinv));
            }
            rows.push(row);
        }
        Ok(Mat::from_rows(rows))
    }

    // ----- geodesics -----

    /// The combined position/velocity system whose solutions are geodesics:
    /// unknowns `(c, v)`, equations `delta c_k = v_k` and `delta v_k =
    /// -sum_ij (sum_l gamma[k][i][j][l] c_l) phi^s(v_i) phi^s(v_j) / G`
    /// with `G = (sum_l r_l c_l)(sum_l phi^s(v_l))`.
    pub fn geodesic_system(&self) -> Result<OdeSystem> {
        let w = self.base();
        let n = self.n;
        let nv = 4 * n; // variables: c, v, then their twists
        let mut numerators = Vec::with_capacity(2 * n);
        for k in 0..n {
            // numerator v_k * G, so that after division the rhs is exactly v_k
            let mut raw = Vec::new();
            for l in 0..n {
                for lp in 0..n {
                    let mut expo = vec![0u16; nv];
                    expo[l] += 1;
                    expo[n + k] += 1;
                    expo[3 * n + lp] += 1;
                    raw.push((expo, self.r_vec[l].clone()));
                }
            }
            numerators.push(PolyW::new(w, nv, raw)?);
        }
        for k in 0..n {
            let mut raw = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        let mut expo = vec![0u16; nv];
                        expo[l] += 1;
                        expo[3 * n + i] += 1;
                        expo[3 * n + j] += 1;
                        raw.push((expo, w.neg(self.gamma_coeff(k, i, j, l))));
                    }
                }
            }
            numerators.push(PolyW::new(w, nv, raw)?);
        }
        let mut raw = Vec::new();
        for l in 0..n {
            for lp in 0..n {
                let mut expo = vec![0u16; nv];
                expo[l] += 1;
                expo[3 * n + lp] += 1;
                raw.push((expo, self.r_vec[l].clone()));
            }
        }
        let denominator = PolyW::new(w, nv, raw)?;
        OdeSystem::new(2 * n, numerators, denominator)
    }

    /// Solves the geodesic system from tangent data `(c0, v0)`; only the
    /// residues matter. Returns the position and velocity parts.
    pub fn geodesic_from_tangent(
        &self,
        c0: &[WElem],
        v0: &[WElem],
        depth: u32,
    ) -> Result<(Vec<WElem>, Vec<WElem>)> {
        if c0.len() != self.n || v0.len() != self.n {
            return Err(Error::ConfigInvalid(format!(
                "tangent data must have {} + {} components",
                self.n, self.n
            )));
        }
        let w = self.base();
        let f = w.field();
        let mut rc = f.zero();
        for l in 0..self.n {
            rc = f.add(&rc, &f.mul(&w.residue(&self.r_vec[l]), &w.residue(&c0[l])));
        }
        let mut sv = f.zero();
        for x in v0 {
            sv = f.add(&sv, &w.residue(x));
        }
        if f.is_zero(&rc) || f.is_zero(&sv) {
            return Err(Error::DegenerateCurve);
        }
        let sys = self.geodesic_system()?;
        let mut u0 = c0.to_vec();
        u0.extend_from_slice(v0);
        let u = ode_solve(w, &sys, self.s(), &u0, depth)?;
        Ok((u[..self.n].to_vec(), u[self.n..].to_vec()))
    }

    /// The geodesic through `seed`'s tangent data, returned as a curve
    /// (velocity recomputed from the position part).
    pub fn geodesic(&self, seed: &Curve, depth: u32) -> Result<Curve> {
        let (c, _) = self.geodesic_from_tangent(&seed.c, &seed.v, depth)?;
        Curve::new(self.base(), self.s(), c)
    }

    // ----- equation defects and acceleration -----

    /// The first-order geodesic defect at explicit position/velocity data:
    /// `delta v_k + sum_ij (sum_l gamma[k][i][j][l] c_l) phi^s(v_i)
    /// phi^s(v_j) / D`.
    pub fn first_order_residual(&self, c: &[WElem], v: &[WElem]) -> Result<Vec<WElem>> {
        let w = self.base();
        let s = self.s();
        let d = self.denominator_value(c, v);
        if !w.is_unit(&d) {
            return Err(Error::DegenerateCurve);
        }
        let dinv = w.invert(&d)?;
        let vphi: Vec<WElem> = v.iter().map(|x| w.frobenius(x, s)).collect();
        let mut out = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let mut num = w.zero();
            for i in 0..self.n {
                for j in 0..self.n {
                    let term = w.mul(&self.gamma_at(k, i, j, c), &w.mul(&vphi[i], &vphi[j]));
                    num = w.add(&num, &term);
                }
            }
            out.push(w.add(&w.delta(&v[k], s)?, &w.mul(&num, &dinv)));
        }
        Ok(out)
    }

    /// The second-order geodesic defect of a curve (velocity taken as
    /// `delta c`, so one more digit of precision is spent than in the
    /// first-order form).
    pub fn second_order_residual(&self, curve: &Curve) -> Result<Vec<WElem>> {
        self.first_order_residual(&curve.c, &curve.v)
    }

    /// The defect of the parallel-transport equation written with explicit
    /// data, `delta w_k + sum_ij (sum_l gamma[k][i][j][l] c_l) phi^s(v_i)
    /// phi^s(w_j) / D` (equals [`Self::parallel_residual`]).
    pub fn parallel_residual_direct(&self, curve: &Curve, w_vec: &[WElem]) -> Result<Vec<WElem>> {
        let w = self.base();
        let s = self.s();
        let d = self.denominator_value(&curve.c, &curve.v);
        if !w.is_unit(&d) {
            return Err(Error::DegenerateCurve);
        }
        let dinv = w.invert(&d)?;
        let vphi: Vec<WElem> = curve.v.iter().map(|x| w.frobenius(x, s)).collect();
        let wphi: Vec<WElem> = w_vec.iter().map(|x| w.frobenius(x, s)).collect();
        let mut out = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let mut num = w.zero();
            for i in 0..self.n {
                for j in 0..self.n {
                    let term = w.mul(
                        &self.gamma_at(k, i, j, &curve.c),
                        &w.mul(&vphi[i], &wphi[j]),
                    );
                    num = w.add(&num, &term);
                }
            }
            out.push(w.add(&w.delta(&w_vec[k], s)?, &w.mul(&num, &dinv)));
        }
        Ok(out)
    }

    /// The acceleration vector of a curve: `a_k = (sum_l r_l c_l)(sum_l
    /// phi^s(v_l)) delta v_k + sum_ij (sum_l gamma[k][i][j][l] c_l)
    /// phi^s(v_i) phi^s(v_j)`. A curve is a geodesic exactly when this
    /// vanishes; no non-degeneracy is needed to evaluate it.
    pub fn acceleration(&self, curve: &Curve) -> Result<Vec<WElem>> {
        let w = self.base();
        let s = self.s();
        let d = self.denominator_value(&curve.c, &curve.v);
        let vphi: Vec<WElem> = curve.v.iter().map(|x| w.frobenius(x, s)).collect();
        let mut out = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let mut num = w.zero();
            for i in 0..self.n {
                for j in 0..self.n {
                    let term = w.mul(
                        &self.gamma_at(k, i, j, &curve.c),
                        &w.mul(&vphi[i], &vphi[j]),
                    );
                    num = w.add(&num, &term);
                }
            }
            out.push(w.add(&w.mul(&d, &w.delta(&curve.v[k], s)?), &num));
        }
        Ok(out)
    }

    // ----- residue-level maps -----

    /// Parallel transport read off through a jet polynomial: lifts the
    /// residue vector, transports it along `curve`, and evaluates `P` on
    /// each component at the residue level.
    pub fn par_map(
        &self,
        curve: &Curve,
        poly: &DeltaPoly,
        lambda: &[FqElem],
    ) -> Result<Vec<FqElem>> {
        let w = self.base();
        if lambda.len() != self.n {
            return Err(Error::ConfigInvalid(format!(
                "expected {} residue components, got {}",
                self.n,
                lambda.len()
            )));
        }
        if poly.order() + 2 > w.k_prec() {
            return Err(Error::PrecisionExhausted {
                needed: poly.order() + 2,
                have: w.k_prec(),
            });
        }
        let w0: Vec<WElem> = lambda.iter().map(|a| w.lift_residue(a)).collect();
        let transported = self.parallel_transport(curve, &w0, w.k_prec())?;
        transported
            .iter()
            .map(|x| e_p(w, poly, x, self.s()))
            .collect()
    }

    /// The exponential map at the residue level: shoots the geodesic with
    /// position residue `lambda0` and velocity residue `lambda1`, then
    /// evaluates `P` on the position. Fails when either datum lies on its
    /// degeneracy hyperplane.
    pub fn exp_map(
        &self,
        lambda0: &[FqElem],
        lambda1: &[FqElem],
        poly: &DeltaPoly,
    ) -> Result<Vec<FqElem>> {
        let w = self.base();
        let f = w.field();
        if lambda0.len() != self.n || lambda1.len() != self.n {
            return Err(Error::ConfigInvalid(format!(
                "expected {} + {} residue components",
                self.n, self.n
            )));
        }
        let mut rc = f.zero();
        for l in 0..self.n {
            rc = f.add(&rc, &f.mul(&w.residue(&self.r_vec[l]), &lambda0[l]));
        }
        let mut sv = f.zero();
        for x in lambda1 {
            sv = f.add(&sv, x);
        }
        if f.is_zero(&rc) || f.is_zero(&sv) {
            return Err(Error::HyperplaneViolation);
        }
        if poly.order() + 2 > w.k_prec() {
            return Err(Error::PrecisionExhausted {
                needed: poly.order() + 2,
                have: w.k_prec(),
            });
        }
        let c0: Vec<WElem> = lambda0.iter().map(|a| w.lift_residue(a)).collect();
        let v0: Vec<WElem> = lambda1.iter().map(|a| w.lift_residue(a)).collect();
        let (c, _) = self.geodesic_from_tangent(&c0, &v0, w.k_prec())?;
        c.iter().map(|x| e_p(w, poly, x, self.s())).collect()
    }
}

/// Converts the transport coefficient matrix from the twisted form
/// `delta w = alpha * phi^s(w)` to the power form `delta w = beta *
/// w^{(p^s)}`, via `beta = alpha (1 - p alpha)^{-1} = alpha + p alpha^2 +
/// ...` (substituting `phi^s(w) = w^{(p^s)} + p delta w`).
pub fn beta_from_alpha(w: &BaseCtx, alpha: &Mat<WElem>) -> Result<Mat<WElem>> {
    let n = alpha.rows();
    let id = mat_id::<BaseCtx>(w, n);
    let scaled = alpha.map(|e| w.mul_p_pow(e, 1));
    let inv = mat_inv(w, &mat_sub(w, &id, &scaled))?;
    Ok(mat_mul(w, alpha, &inv))
}

/// Solves a twisted system from a residue seed and reads the solution off
/// through a jet polynomial (one residue per component). `depth` as in
/// [`ode_solve`]; the polynomial's order must leave at least one digit of
/// verified accuracy.
pub fn trans_map(
    w: &BaseCtx,
    sys: &OdeSystem,
    s: u32,
    lambda: &[FqElem],
    poly: &DeltaPoly,
    depth: u32,
) -> Result<Vec<FqElem>> {
    if lambda.len() != sys.unknowns() {
        return Err(Error::ConfigInvalid(format!(
            "expected {} residue components, got {}",
            sys.unknowns(),
            lambda.len()
        )));
    }
    if poly.order() + 2 > w.k_prec() {
        return Err(Error::PrecisionExhausted {
            needed: poly.order() + 2,
            have: w.k_prec(),
        });
    }
    let u0: Vec<WElem> = lambda.iter().map(|a| w.lift_residue(a)).collect();
    let u = ode_solve(w, sys, s, &u0, depth)?;
    u.iter().map(|x| e_p(w, poly, x, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_field::FieldCtx;
    use crate::connections::{levi_civita_jet, TorsionSymbol};
    use crate::matrix_ring::mat_zero;
    use crate::ram_ring::RamCtx;
    use crate::series_ring::SeriesCtx;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const K: u32 = 6;

    fn ram_full() -> RamCtx {
        let f = FieldCtx::new(5, 2, Some(vec![2, 4, 1])).unwrap();
        let w = BaseCtx::new(f, K).unwrap();
        RamCtx::new(w, 2, 1, &[0, 1], Some(2 * K)).unwrap()
    }

    fn series(r: &RamCtx) -> SeriesCtx {
        SeriesCtx::new(r.clone(), 2, 2).unwrap()
    }

    fn random_metric<G: Rng>(r: &RamCtx, n: usize, rng: &mut G) -> crate::connections::Metric {
        loop {
            let mut q = Mat::from_fn(n, n, |_, _| r.random(rng, r.prec_pi()));
            for i in 0..n {
                for j in 0..i {
                    *q.at_mut(i, j) = q.at(j, i).clone();
                }
            }
            if let Ok(m) = crate::connections::Metric::new(r, q) {
                return m;
            }
        }
    }

    fn random_constant_torsion<G: Rng>(r: &RamCtx, n: usize, rng: &mut G) -> TorsionSymbol {
        let mats = (0..n)
            .map(|_| {
                let mut m = mat_zero(r, n, n);
                for i in 0..n {
                    for j in 0..i {
                        let v = r.from_i64(rng.gen_range(-1..=1i64));
                        *m.at_mut(i, j) = v.clone();
                        *m.at_mut(j, i) = RamCtx::neg(r, &v);
                    }
                }
                m
            })
            .collect();
        TorsionSymbol::Constant(mats)
    }

    fn connection_ctx(seed: u64) -> GeodesicCtx {
        let r = ram_full();
        let t = series(&r);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let metric = random_metric(&r, 2, &mut rng);
        let torsion = random_constant_torsion(&r, 2, &mut rng);
        let conn = levi_civita_jet(&t, &metric, &torsion, r.prec_pi()).unwrap();
        GeodesicCtx::from_connection(&t, &conn).unwrap()
    }

    fn flat_ctx() -> GeodesicCtx {
        let r = ram_full();
        let w = r.base().clone();
        GeodesicCtx::from_gamma_theta(&r, 2, vec![w.zero(); 16]).unwrap()
    }

    fn random_nondeg_curve<G: Rng>(ctx: &GeodesicCtx, rng: &mut G) -> Curve {
        let w = ctx.base().clone();
        loop {
            let c: Vec<WElem> = (0..ctx.n()).map(|_| w.random(rng, K)).collect();
            if let Ok(curve) = Curve::new(&w, ctx.s(), c) {
                if ctx.is_nondegenerate(&curve) {
                    return curve;
                }
            }
        }
    }

    fn assert_all_zero(w: &BaseCtx, xs: &[WElem], want_prec: u32) {
        for x in xs {
            assert_eq!(x.prec, want_prec, "defect carries unexpected precision");
            assert!(w.is_zero(x), "defect is nonzero at its stored precision");
        }
    }

    fn scale_vec(w: &BaseCtx, z: &WElem, xs: &[WElem]) -> Vec<WElem> {
        xs.iter().map(|x| w.mul(z, x)).collect()
    }

    #[test]
    fn constant_class_solutions_are_multiplicative_lifts() {
        let r = ram_full();
        let w = r.base().clone();
        let sys = OdeSystem::new(
            1,
            vec![PolyW::zero(2)],
            PolyW::constant(&w, 2, &w.one()),
        )
        .unwrap();
        let u = ode_solve(&w, &sys, 1, &[w.from_i64(2)], K).unwrap();
        let tau = w.teichmueller(&w.field().from_u64(2));
        assert!(w.congruent_mod(&u[0], &tau, K - 1));

        let one = ode_solve(&w, &sys, 1, &[w.one()], K).unwrap();
        assert!(w.congruent_mod(&one[0], &w.one(), K));

        let res = ode_residual(&w, &sys, 1, &u).unwrap();
        assert_all_zero(&w, &res, K - 1);
    }

    #[test]
    fn linear_system_solutions_are_unique_per_class() {
        let r = ram_full();
        let w = r.base().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = w.random(&mut rng, K);
        let b = w.random(&mut rng, K);
        let c = w.random(&mut rng, K);
        let f = PolyW::new(
            &w,
            2,
            vec![
                (vec![1, 0], a.clone()),
                (vec![0, 1], b.clone()),
                (vec![0, 0], c.clone()),
            ],
        )
        .unwrap();
        let sys = OdeSystem::new(1, vec![f], PolyW::constant(&w, 2, &w.one())).unwrap();

        let u0 = w.random(&mut rng, K);
        let u = ode_solve(&w, &sys, 1, &[u0.clone()], K).unwrap();
        let res = ode_residual(&w, &sys, 1, &u).unwrap();
        assert_all_zero(&w, &res, K - 1);
        assert!(w.congruent_mod(&u[0], &u0, 1));

        // a different representative of the same class gives the same solution
        let shifted = w.add(&u0, &w.mul_p_pow(&w.random(&mut rng, K), 1));
        let u2 = ode_solve(&w, &sys, 1, &[shifted], K).unwrap();
        assert!(w.congruent_mod(&u[0], &u2[0], K));

        // depth out of range is rejected
        assert!(matches!(
            ode_solve(&w, &sys, 1, &[u0], K + 1),
            Err(Error::ConfigInvalid(_))
        ));
    }

    #[test]
    fn degenerate_denominator_is_detected() {
        let r = ram_full();
        let w = r.base().clone();
        // G = y vanishes at the seed 0
        let g = PolyW::new(&w, 2, vec![(vec![1, 0], w.one())]).unwrap();
        let sys = OdeSystem::new(1, vec![PolyW::zero(2)], g).unwrap();
        assert!(matches!(
            ode_solve(&w, &sys, 1, &[w.zero()], K),
            Err(Error::DegenerateDenominator)
        ));
    }

    #[test]
    fn exhaustive_small_case_has_one_solution_per_class() {
        // Z/9: every residue class contains exactly one solution of
        // delta u = u + 1, detectable by exhaustive search.
        let f = FieldCtx::new(3, 1, None).unwrap();
        let w = BaseCtx::new(f, 2).unwrap();
        let rhs = PolyW::new(
            &w,
            2,
            vec![(vec![1, 0], w.one()), (vec![0, 0], w.one())],
        )
        .unwrap();
        let sys = OdeSystem::new(1, vec![rhs], PolyW::constant(&w, 2, &w.one())).unwrap();

        let mut per_class = vec![0u32; 3];
        for v in 0..9u64 {
            let u = w.from_coeffs(&[v], 2).unwrap();
            let res = ode_residual(&w, &sys, 1, &[u.clone()]).unwrap();
            if w.is_zero(&res[0]) {
                per_class[(v % 3) as usize] += 1;
                // the solver finds exactly this element
                let solved = ode_solve(&w, &sys, 1, &[u.clone()], 2).unwrap();
                assert!(w.congruent_mod(&solved[0], &u, 2));
            }
        }
        assert_eq!(per_class, vec![1, 1, 1]);
    }

    #[test]
    fn nondegeneracy_reference_examples() {
        let ctx = flat_ctx();
        let w = ctx.base().clone();
        // velocity (1, 0): position integrates the first component
        let c_good = vec![w.p_integrate(&w.one(), 1).unwrap(), w.one()];
        let good = Curve::new(&w, 1, c_good).unwrap();
        assert!(ctx.is_nondegenerate(&good));

        // position residue on the kernel of sum r_l y_l (second coordinate 0)
        let c_pos = vec![w.one(), w.mul_p_pow(&w.one(), 1)];
        let pos = Curve::new(&w, 1, c_pos).unwrap();
        assert!(!ctx.is_nondegenerate(&pos));

        // multiplicative components have zero velocity: velocity sum vanishes
        let tau = w.teichmueller(&w.field().generator().clone());
        let c_vel = vec![w.one(), tau];
        let vel = Curve::new(&w, 1, c_vel).unwrap();
        assert!(!ctx.is_nondegenerate(&vel));
    }

    #[test]
    fn flat_transport_fixes_multiplicative_lifts() {
        let ctx = flat_ctx();
        let w = ctx.base().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let curve = random_nondeg_curve(&ctx, &mut rng);
        let w0 = vec![w.random(&mut rng, K), w.random(&mut rng, K)];
        let moved = ctx.parallel_transport(&curve, &w0, K).unwrap();
        for (x, x0) in moved.iter().zip(w0.iter()) {
            let tau = w.teichmueller(&w.residue(x0));
            assert!(w.congruent_mod(x, &tau, K - 1));
        }
        let res = ctx.parallel_residual(&curve, &moved).unwrap();
        assert_all_zero(&w, &res, K - 1);
    }

    #[test]
    fn transport_solves_its_equation_and_scales_multiplicatively() {
        let ctx = connection_ctx(21);
        let w = ctx.base().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for round in 0..3 {
            let curve = random_nondeg_curve(&ctx, &mut rng);
            let w0 = vec![w.random(&mut rng, K), w.random(&mut rng, K)];
            let moved = ctx.parallel_transport(&curve, &w0, K).unwrap();
            for (x, x0) in moved.iter().zip(w0.iter()) {
                assert!(w.congruent_mod(x, x0, 1));
            }
            let res = ctx.parallel_residual(&curve, &moved).unwrap();
            assert_all_zero(&w, &res, K - 1);
            let direct = ctx.parallel_residual_direct(&curve, &moved).unwrap();
            assert_all_zero(&w, &direct, K - 1);

            // a multiplicative lift scales solutions to solutions
            let zeta = w.teichmueller(&w.field().generator().clone());
            let scaled = ctx
                .parallel_transport(&curve, &scale_vec(&w, &zeta, &w0), K)
                .unwrap();
            for (a, b) in scaled.iter().zip(scale_vec(&w, &zeta, &moved).iter()) {
                assert!(w.congruent_mod(a, b, K));
            }

            // both coefficient forms of the transport equation hold
            if round == 0 {
                let alpha = ctx.transport_alpha(&curve).unwrap();
                let beta = beta_from_alpha(&w, &alpha).unwrap();
                for k in 0..ctx.n() {
                    let mut lhs_a = w.zero();
                    let mut lhs_b = w.zero();
                    for j in 0..ctx.n() {
                        lhs_a = w.add(&lhs_a, &w.mul(alpha.at(k, j), &w.frobenius(&moved[j], 1)));
                        lhs_b = w.add(&lhs_b, &w.mul(beta.at(k, j), &w.pow_ps(&moved[j], 1)));
                    }
                    let dw = w.delta(&moved[k], 1).unwrap();
                    assert!(w.congruent_mod(&dw, &lhs_a, K - 1));
                    assert!(w.congruent_mod(&dw, &lhs_b, K - 1));
                }
            }
        }
    }

    #[test]
    fn geodesics_solve_both_equation_forms() {
        let ctx = connection_ctx(31);
        let w = ctx.base().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..3 {
            let seed_curve = random_nondeg_curve(&ctx, &mut rng);
            let v0: Vec<WElem> = seed_curve.v().to_vec();
            let c0: Vec<WElem> = seed_curve.c().to_vec();
            let (c, v) = ctx.geodesic_from_tangent(&c0, &v0, K).unwrap();

            // initial conditions at the residue level
            for (a, b) in c.iter().zip(c0.iter()) {
                assert!(w.congruent_mod(a, b, 1));
            }
            for (a, b) in v.iter().zip(v0.iter()) {
                assert!(w.congruent_mod(a, b, 1));
            }
            // the velocity part tracks the derivative of the position part
            for (a, b) in v.iter().zip(c.iter()) {
                assert!(w.congruent_mod(a, &w.delta(b, 1).unwrap(), K - 1));
            }

            // first-order defect vanishes at full verifiable precision
            let res1 = ctx.first_order_residual(&c, &v).unwrap();
            assert_all_zero(&w, &res1, K - 1);

            // second-order defect (velocity recomputed) spends one digit
            let curve = Curve::new(&w, 1, c.clone()).unwrap();
            let res2 = ctx.second_order_residual(&curve).unwrap();
            assert_all_zero(&w, &res2, K - 2);

            // acceleration of the solved curve vanishes
            let acc = ctx.acceleration(&curve).unwrap();
            for x in &acc {
                assert!(w.is_zero(&w.truncate(x, K - 2)));
            }

            // uniqueness: representatives only matter mod p
            let c0_shift: Vec<WElem> = c0
                .iter()
                .map(|x| w.add(x, &w.mul_p_pow(&w.random(&mut rng, K), 1)))
                .collect();
            let v0_shift: Vec<WElem> = v0
                .iter()
                .map(|x| w.add(x, &w.mul_p_pow(&w.random(&mut rng, K), 1)))
                .collect();
            let (c2, v2) = ctx.geodesic_from_tangent(&c0_shift, &v0_shift, K).unwrap();
            for (a, b) in c.iter().zip(c2.iter()) {
                assert!(w.congruent_mod(a, b, K));
            }
            for (a, b) in v.iter().zip(v2.iter()) {
                assert!(w.congruent_mod(a, b, K));
            }

            // multiplicative scaling sends geodesics to geodesics
            let zeta = w.teichmueller(&w.field().generator().clone());
            let zeta_ps = w.pow_ps(&zeta, 1);
            let (c3, v3) = ctx
                .geodesic_from_tangent(
                    &scale_vec(&w, &zeta, &c0),
                    &scale_vec(&w, &zeta_ps, &v0),
                    K,
                )
                .unwrap();
            for (a, b) in c3.iter().zip(scale_vec(&w, &zeta, &c).iter()) {
                assert!(w.congruent_mod(a, b, K));
            }
            for (a, b) in v3.iter().zip(scale_vec(&w, &zeta_ps, &v).iter()) {
                assert!(w.congruent_mod(a, b, K));
            }
        }
    }

    #[test]
    fn flat_geodesics_are_straight_lines() {
        let ctx = flat_ctx();
        let w = ctx.base().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let seed_curve = random_nondeg_curve(&ctx, &mut rng);
        let (_, v) = ctx
            .geodesic_from_tangent(seed_curve.c(), seed_curve.v(), K)
            .unwrap();
        for x in &v {
            // velocity components freeze to multiplicative lifts
            let dv = w.delta(x, 1).unwrap();
            assert!(w.is_zero(&w.truncate(&dv, K - 1)));
            let tau = w.teichmueller(&w.residue(x));
            assert!(w.congruent_mod(x, &tau, K - 1));
        }
    }

    #[test]
    fn acceleration_is_permutation_equivariant() {
        let ctx = connection_ctx(51);
        let w = ctx.base().clone();
        let n = ctx.n();
        let perm = [1usize, 0]; // the transposition on two indices
        let mut gamma_p = Vec::with_capacity(n * n * n * n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        gamma_p.push(
                            ctx.gamma_coeff(perm[k], perm[i], perm[j], perm[l]).clone(),
                        );
                    }
                }
            }
        }
        let r_p: Vec<WElem> = (0..n).map(|l| ctx.r_vec()[perm[l]].clone()).collect();
        let ctx_p = GeodesicCtx::from_gamma_theta(ctx.ram(), n, gamma_p)
            .unwrap()
            .with_r_vec(r_p)
            .unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for _ in 0..5 {
            let c: Vec<WElem> = (0..n).map(|_| w.random(&mut rng, K)).collect();
            let curve = Curve::new(&w, 1, c.clone()).unwrap();
            let c_p: Vec<WElem> = (0..n).map(|l| c[perm[l]].clone()).collect();
            let curve_p = Curve::new(&w, 1, c_p).unwrap();
            let acc = ctx.acceleration(&curve).unwrap();
            let acc_p = ctx_p.acceleration(&curve_p).unwrap();
            for k in 0..n {
                assert_eq!(acc_p[k].prec, acc[perm[k]].prec);
                assert!(w.congruent_mod(&acc_p[k], &acc[perm[k]], acc_p[k].prec));
            }
        }
    }

    #[test]
    fn par_map_identity_and_homogeneous_scaling() {
        let ctx = connection_ctx(61);
        let w = ctx.base().clone();
        let f = w.field().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let curve = random_nondeg_curve(&ctx, &mut rng);
        let lambda = vec![f.random(&mut rng), f.random(&mut rng)];

        // reading off at the base point returns the input
        let ident = DeltaPoly::jet_var(&w, 0);
        let out = ctx.par_map(&curve, &ident, &lambda).unwrap();
        assert_eq!(out, lambda);

        // a homogeneous read-out scales by the matching power
        let hom = DeltaPoly::new(&w, vec![(vec![2, 1], w.one())]);
        let d = hom.homogeneous_degree(&w, 1).expect("homogeneous");
        assert_eq!(d, 7);
        let gamma = f.generator().clone();
        let scaled_in: Vec<FqElem> = lambda.iter().map(|x| f.mul(&gamma, x)).collect();
        let lhs = ctx.par_map(&curve, &hom, &scaled_in).unwrap();
        let base_out = ctx.par_map(&curve, &hom, &lambda).unwrap();
        let factor = f.pow(&gamma, d);
        for (a, b) in lhs.iter().zip(base_out.iter()) {
            assert_eq!(*a, f.mul(&factor, b));
        }

        // read-outs beyond the verified accuracy are rejected
        let deep = DeltaPoly::jet_var(&w, K);
        assert!(matches!(
            ctx.par_map(&curve, &deep, &lambda),
            Err(Error::PrecisionExhausted { .. })
        ));
    }

    #[test]
    fn exp_map_reference_values_and_guards() {
        let ctx = flat_ctx();
        let w = ctx.base().clone();
        let f = w.field().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        // residues off both hyperplanes: second position coordinate nonzero,
        // velocity coordinates not summing to zero
        let lambda0 = vec![f.random(&mut rng), f.random_nonzero(&mut rng)];
        let lambda1 = loop {
            let cand = vec![f.random(&mut rng), f.random(&mut rng)];
            if !f.is_zero(&f.add(&cand[0], &cand[1])) {
                break cand;
            }
        };

        let at_base = ctx
            .exp_map(&lambda0, &lambda1, &DeltaPoly::jet_var(&w, 0))
            .unwrap();
        assert_eq!(at_base, lambda0);

        // with vanishing Christoffel data the first jet returns the velocity
        let at_jet = ctx
            .exp_map(&lambda0, &lambda1, &DeltaPoly::jet_var(&w, 1))
            .unwrap();
        assert_eq!(at_jet, lambda1);

        // hyperplane guards
        let bad0 = vec![f.random_nonzero(&mut rng), f.zero()];
        assert!(matches!(
            ctx.exp_map(&bad0, &lambda1, &DeltaPoly::jet_var(&w, 0)),
            Err(Error::HyperplaneViolation)
        ));
        let a = f.random_nonzero(&mut rng);
        let bad1 = vec![a.clone(), f.neg(&a)];
        assert!(matches!(
            ctx.exp_map(&lambda0, &bad1, &DeltaPoly::jet_var(&w, 0)),
            Err(Error::HyperplaneViolation)
        ));
    }

    /// Solves `M x = y` over the residue field by elimination; returns a
    /// solution when the (possibly overdetermined) system is consistent.
    fn field_solve(
        f: &FieldCtx,
        rows: Vec<Vec<FqElem>>,
        rhs: Vec<FqElem>,
        ncols: usize,
    ) -> Option<Vec<FqElem>> {
        let mut rows = rows;
        let mut rhs = rhs;
        let nrows = rows.len();
        let mut pivot_of_col = vec![usize::MAX; ncols];
        let mut rank = 0usize;
        for col in 0..ncols {
            let piv = (rank..nrows).find(|&r| !f.is_zero(&rows[r][col]));
            let Some(piv) = piv else { continue };
            rows.swap(rank, piv);
            rhs.swap(rank, piv);
            let inv = f.inv(&rows[rank][col]).unwrap();
            for c in 0..ncols {
                rows[rank][c] = f.mul(&rows[rank][c], &inv);
            }
            rhs[rank] = f.mul(&rhs[rank], &inv);
            for r in 0..nrows {
                if r != rank && !f.is_zero(&rows[r][col]) {
                    let factor = rows[r][col].clone();
                    for c in 0..ncols {
                        let t = f.mul(&factor, &rows[rank][c]);
                        rows[r][c] = f.sub(&rows[r][c], &t);
                    }
                    let t = f.mul(&factor, &rhs[rank]);
                    rhs[r] = f.sub(&rhs[r], &t);
                }
            }
            pivot_of_col[col] = rank;
            rank += 1;
        }
        for r in rank..nrows {
            if !f.is_zero(&rhs[r]) {
                return None;
            }
        }
        let mut x = vec![f.zero(); ncols];
        for col in 0..ncols {
            if pivot_of_col[col] != usize::MAX {
                x[col] = rhs[pivot_of_col[col]].clone();
            }
        }
        Some(x)
    }

    #[test]
    fn trans_map_is_polynomial_of_bounded_degree() {
        // For a linear system the read-out through t * t' is, as a function
        // of the residue seed, a polynomial of weighted degree at most
        // 1 + p^s — here 4, strictly below the generic bound 8 for maps
        // on a 9-element field.
        let f = FieldCtx::new(3, 2, None).unwrap();
        let w = BaseCtx::new(f.clone(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let a = w.random(&mut rng, 4);
        let b = w.random(&mut rng, 4);
        let rhs = PolyW::new(&w, 2, vec![(vec![1, 0], a), (vec![0, 1], b)]).unwrap();
        let sys = OdeSystem::new(1, vec![rhs], PolyW::constant(&w, 2, &w.one())).unwrap();
        let poly = DeltaPoly::new(&w, vec![(vec![1, 1], w.one())]);

        let points = f.all_elements();
        let values: Vec<FqElem> = points
            .iter()
            .map(|lam| trans_map(&w, &sys, 1, &[lam.clone()], &poly, 4).unwrap()[0].clone())
            .collect();

        let degree_bound = 4usize;
        let rows: Vec<Vec<FqElem>> = points
            .iter()
            .map(|x| (0..=degree_bound as u128).map(|e| f.pow(x, e)).collect())
            .collect();
        let coeffs = field_solve(&f, rows, values.clone(), degree_bound + 1)
            .expect("read-out must interpolate at bounded degree");

        for (x, y) in points.iter().zip(values.iter()) {
            let mut acc = f.zero();
            for (e, cf) in coeffs.iter().enumerate() {
                acc = f.add(&acc, &f.mul(cf, &f.pow(x, e as u128)));
            }
            assert_eq!(acc, *y);
        }
    }
}
