//! First-order jet points of the matrix group, their twisted group law,
//! the additive-group operations on the coefficient space, and the
//! logarithmic-derivative route to Christoffel symbols.
//!
//! A jet point is a tuple `(a_0, a_1, ..., a_n)` of `N x N` matrices with
//! `a_0` residue-invertible: the base point together with one coefficient
//! matrix per direction. The product twists the higher components,
//!
//! `c_i = a_0^{(p^s)} b_i + a_i b_0^{(p^s)} + pi a_i b_i
//!        + pi^{-1} (a_0^{(p^s)} b_0^{(p^s)} - (a_0 b_0)^{(p^s)})`,
//!
//! precisely so that `a |-> (a, delta_1 a, ..., delta_n a)` becomes a
//! group homomorphism. The last term divides exactly: its numerator is
//! divisible by `p` entrywise (the residue power map is a ring map), and
//! it is evaluated as `(p/pi) * (numerator / p)`, spending one unit of
//! working precision.

use crate::connections::ConnectionData;
use crate::error::{Error, Result};
use crate::matrix_ring::{
    mat_add, mat_congruent_mod, mat_div_pi_exact, mat_id, mat_inv, mat_mul, mat_mul_pi_pow,
    mat_neg, mat_pow_ps, mat_prec, mat_sub, Mat,
};
use crate::ram_ring::{RamCtx, RpiElem};

/// A point of the first-order jet space of the matrix group: a base point
/// and one coefficient matrix per direction.
#[derive(Clone, Debug, PartialEq)]
pub struct JetPoint {
    a0: Mat<RpiElem>,
    a: Vec<Mat<RpiElem>>,
}

impl JetPoint {
    /// Validates shapes and residue-invertibility of the base point.
    pub fn new(r: &RamCtx, a0: Mat<RpiElem>, a: Vec<Mat<RpiElem>>) -> Result<Self> {
        let size = a0.rows();
        if a0.cols() != size {
            return Err(Error::ConfigInvalid("base point must be square".into()));
        }
        mat_inv(r, &a0)?;
        for m in &a {
            if m.rows() != size || m.cols() != size {
                return Err(Error::ConfigInvalid(
                    "coefficient matrices must match the base point's size".into(),
                ));
            }
        }
        Ok(JetPoint { a0, a })
    }

    /// The group identity `(1, 0, ..., 0)`.
    pub fn identity(r: &RamCtx, directions: usize, size: usize) -> Self {
        JetPoint {
            a0: mat_id::<RamCtx>(r, size),
            a: (0..directions)
                .map(|_| Mat::from_fn(size, size, |_, _| r.zero()))
                .collect(),
        }
    }

    pub fn a0(&self) -> &Mat<RpiElem> {
        &self.a0
    }

    pub fn a(&self) -> &[Mat<RpiElem>] {
        &self.a
    }

    pub fn directions(&self) -> usize {
        self.a.len()
    }

    pub fn size(&self) -> usize {
        self.a0.rows()
    }
}

/// The exactly divided twist term `pi^{-1}(x^{(p^s)} y^{(p^s)} -
/// (xy)^{(p^s)})`, computed as `(p/pi) * (numerator / p)`.
fn twist_term(r: &RamCtx, x: &Mat<RpiElem>, y: &Mat<RpiElem>) -> Result<Mat<RpiElem>> {
    let s = r.s();
    let lhs = mat_mul(r, &mat_pow_ps(r, x, s), &mat_pow_ps(r, y, s));
    let rhs = mat_pow_ps(r, &mat_mul(r, x, y), s);
    let over_p = mat_div_pi_exact(r, &mat_sub(r, &lhs, &rhs), r.e() as u32)?;
    Ok(mat_mul_pi_pow(r, &over_p, r.e() as u32 - 1))
}

/// The twisted group law. Spends one unit of working precision on the
/// exactly divided term.
pub fn jet_mul(r: &RamCtx, x: &JetPoint, y: &JetPoint) -> Result<JetPoint> {
    if x.size() != y.size() || x.directions() != y.directions() {
        return Err(Error::ConfigInvalid(
            "jet points must have matching shapes".into(),
        ));
    }
    let s = r.s();
    let c0 = mat_mul(r, &x.a0, &y.a0);
    let a0ps = mat_pow_ps(r, &x.a0, s);
    let b0ps = mat_pow_ps(r, &y.a0, s);
    let twist = twist_term(r, &x.a0, &y.a0)?;
    let c = x
        .a
        .iter()
        .zip(y.a.iter())
        .map(|(ai, bi)| {
            let mut acc = mat_mul(r, &a0ps, bi);
            acc = mat_add(r, &acc, &mat_mul(r, ai, &b0ps));
            acc = mat_add(r, &acc, &mat_mul_pi_pow(r, &mat_mul(r, ai, bi), 1));
            mat_add(r, &acc, &twist)
        })
        .collect();
    Ok(JetPoint { a0: c0, a: c })
}

/// The group inverse, solved from `x * y = identity`: the base point
/// inverts as a matrix, and each coefficient matrix solves a linear
/// equation with residue-invertible leading coefficient.
pub fn jet_inv(r: &RamCtx, x: &JetPoint) -> Result<JetPoint> {
    let s = r.s();
    let b0 = mat_inv(r, &x.a0)?;
    let b0ps = mat_pow_ps(r, &b0, s);
    let a0ps = mat_pow_ps(r, &x.a0, s);
    let twist = twist_term(r, &x.a0, &b0)?;
    let b = x
        .a
        .iter()
        .map(|ai| {
            // 0 = (a0^{(p^s)} + pi a_i) b_i + a_i b0^{(p^s)} + twist
            let lead = mat_add(r, &a0ps, &mat_mul_pi_pow(r, ai, 1));
            let lead_inv = mat_inv(r, &lead)?;
            let rest = mat_add(r, &mat_mul(r, ai, &b0ps), &twist);
            Ok(mat_neg(r, &mat_mul(r, &lead_inv, &rest)))
        })
        .collect::<Result<_>>()?;
    Ok(JetPoint { a0: b0, a: b })
}

/// The coefficient-space group law `a +_pi b = a + b + pi a b`.
pub fn lie_add(r: &RamCtx, a: &Mat<RpiElem>, b: &Mat<RpiElem>) -> Mat<RpiElem> {
    mat_add(
        r,
        &mat_add(r, a, b),
        &mat_mul_pi_pow(r, &mat_mul(r, a, b), 1),
    )
}

/// The coefficient-space inverse `-a + pi a^2 - pi^2 a^3 + ...` (a finite
/// sum at working precision).
pub fn lie_neg(r: &RamCtx, a: &Mat<RpiElem>) -> Mat<RpiElem> {
    let mut acc = mat_neg(r, a);
    let mut power = a.clone();
    let bound = mat_prec(r, a) + 1;
    for k in 2..=bound.max(2) {
        power = mat_mul(r, &power, a);
        let term = mat_mul_pi_pow(r, &power, k - 1);
        acc = if k % 2 == 0 {
            mat_add(r, &acc, &term)
        } else {
            mat_sub(r, &acc, &term)
        };
    }
    acc
}

/// The isomorphism from the coefficient-space group onto the kernel of
/// reduction, `a -> 1 + pi a`; it turns `+_pi` into matrix
/// multiplication.
pub fn g_to_g1(r: &RamCtx, a: &Mat<RpiElem>) -> Mat<RpiElem> {
    mat_add(
        r,
        &mat_id::<RamCtx>(r, a.rows()),
        &mat_mul_pi_pow(r, a, 1),
    )
}

/// The logarithmic derivative of a pointwise connection at a base point
/// `g`: forms the jet of `g^t` under the connection, divides by the jet
/// of `g^t` under the trivial connection, and returns the coefficient
/// part. The result equals the Christoffel matrices of the second kind
/// evaluated at `g`, one unit of working precision later.
pub fn log_derivative(
    r: &RamCtx,
    conn: &ConnectionData<RamCtx>,
    g: &Mat<RpiElem>,
) -> Result<Vec<Mat<RpiElem>>> {
    let s = r.s();
    let n = g.rows();
    let gt = g.transpose();
    let gpst = mat_pow_ps(r, g, s).transpose();
    let id = mat_id::<RamCtx>(r, n);
    // coefficient matrices of the jet of g^t: ((Lambda_i - 1)/pi)^t g^{(p^s)t}
    let jets = conn
        .lambdas
        .iter()
        .map(|l| {
            let quot = mat_div_pi_exact(r, &mat_sub(r, l, &id), 1)?;
            Ok(mat_mul(r, &quot.transpose(), &gpst))
        })
        .collect::<Result<Vec<_>>>()?;
    let moving = JetPoint::new(r, gt.clone(), jets)?;
    let still = JetPoint::new(
        r,
        gt,
        (0..conn.lambdas.len())
            .map(|_| Mat::from_fn(n, n, |_, _| r.zero()))
            .collect(),
    )?;
    let quotient = jet_mul(r, &moving, &jet_inv(r, &still)?)?;
    debug_assert!({
        let prec = mat_prec(r, &quotient.a0);
        mat_congruent_mod(r, &quotient.a0, &mat_id::<RamCtx>(r, n), prec)
    });
    Ok(quotient.a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_field::FieldCtx;
    use crate::connections::{christoffel_second, levi_civita_at, Metric, TorsionSymbol};
    use crate::matrix_ring::{mat_zero, PiRing};
    use crate::witt_base::BaseCtx;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ram() -> RamCtx {
        let f = FieldCtx::new(5, 2, Some(vec![2, 4, 1])).unwrap();
        let w = BaseCtx::new(f, 6).unwrap();
        RamCtx::new(w, 2, 1, &[0, 1], None).unwrap()
    }

    fn scalar_ram() -> RamCtx {
        let f = FieldCtx::new(5, 1, None).unwrap();
        let w = BaseCtx::new(f, 6).unwrap();
        RamCtx::new(w, 1, 1, &[0], None).unwrap()
    }

    fn random_mat<G: Rng>(r: &RamCtx, n: usize, rng: &mut G) -> Mat<RpiElem> {
        Mat::from_fn(n, n, |_, _| r.random(rng, r.prec_pi()))
    }

    fn random_invertible<G: Rng>(r: &RamCtx, n: usize, rng: &mut G) -> Mat<RpiElem> {
        loop {
            let m = random_mat(r, n, rng);
            if mat_inv(r, &m).is_ok() {
                return m;
            }
        }
    }

    fn random_point<G: Rng>(r: &RamCtx, dirs: usize, n: usize, rng: &mut G) -> JetPoint {
        let a0 = random_invertible(r, n, rng);
        let a = (0..dirs).map(|_| random_mat(r, n, rng)).collect();
        JetPoint::new(r, a0, a).unwrap()
    }

    fn random_metric<G: Rng>(r: &RamCtx, n: usize, rng: &mut G) -> Metric {
        loop {
            let mut q = Mat::from_fn(n, n, |_, _| r.random(rng, r.prec_pi()));
            for i in 0..n {
                for j in 0..i {
                    *q.at_mut(i, j) = q.at(j, i).clone();
                }
            }
            if let Ok(m) = Metric::new(r, q) {
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

    #[test]
    fn scalar_product_reference_value() {
        let r = scalar_ram();
        // pi = p = 5, N = 1: (1,2)(1,3) has coefficient 3 + 2 + 5*6 = 35
        let mk = |v: i64| {
            JetPoint::new(
                &r,
                Mat::from_fn(1, 1, |_, _| r.one()),
                vec![Mat::from_fn(1, 1, |_, _| r.from_i64(v))],
            )
            .unwrap()
        };
        let prod = jet_mul(&r, &mk(2), &mk(3)).unwrap();
        let want = r.from_i64(35);
        let got = prod.a()[0].at(0, 0);
        assert!(r.congruent_mod(got, &want, r.elem_prec(got)));
    }

    #[test]
    fn identity_and_inverse_laws() {
        let r = ram();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let id = JetPoint::identity(&r, 2, 2);
        for _ in 0..5 {
            let x = random_point(&r, 2, 2, &mut rng);
            let xe = jet_mul(&r, &x, &id).unwrap();
            let ex = jet_mul(&r, &id, &x).unwrap();
            for (got, want) in xe.a().iter().chain(ex.a().iter()).zip(
                x.a().iter().chain(x.a().iter()),
            ) {
                let prec = mat_prec(&r, got);
                assert!(mat_congruent_mod(&r, got, want, prec));
            }
            assert!(mat_congruent_mod(
                &r,
                xe.a0(),
                x.a0(),
                mat_prec(&r, xe.a0())
            ));

            let inv = jet_inv(&r, &x).unwrap();
            for prod in [jet_mul(&r, &x, &inv).unwrap(), jet_mul(&r, &inv, &x).unwrap()] {
                let prec = mat_prec(&r, prod.a0());
                assert!(mat_congruent_mod(
                    &r,
                    prod.a0(),
                    &mat_id::<RamCtx>(&r, 2),
                    prec
                ));
                for m in prod.a() {
                    let prec = mat_prec(&r, m);
                    assert!(mat_congruent_mod(&r, m, &mat_zero(&r, 2, 2), prec));
                }
            }
        }
    }

    #[test]
    fn products_are_associative() {
        let r = ram();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let x = random_point(&r, 2, 2, &mut rng);
            let y = random_point(&r, 2, 2, &mut rng);
            let z = random_point(&r, 2, 2, &mut rng);
            let left = jet_mul(&r, &jet_mul(&r, &x, &y).unwrap(), &z).unwrap();
            let right = jet_mul(&r, &x, &jet_mul(&r, &y, &z).unwrap()).unwrap();
            let prec = mat_prec(&r, left.a0()).min(mat_prec(&r, right.a0()));
            assert!(mat_congruent_mod(&r, left.a0(), right.a0(), prec));
            for (l, rr) in left.a().iter().zip(right.a().iter()) {
                let prec = mat_prec(&r, l).min(mat_prec(&r, rr));
                assert!(prec + 2 >= r.prec_pi(), "unexpected precision drain");
                assert!(mat_congruent_mod(&r, l, rr, prec));
            }
        }
    }

    #[test]
    fn kernel_points_multiply_by_coefficient_addition() {
        let r = ram();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let id = mat_id::<RamCtx>(&r, 2);
        for _ in 0..5 {
            let a: Vec<Mat<RpiElem>> = (0..2).map(|_| random_mat(&r, 2, &mut rng)).collect();
            let b: Vec<Mat<RpiElem>> = (0..2).map(|_| random_mat(&r, 2, &mut rng)).collect();
            let x = JetPoint::new(&r, id.clone(), a.clone()).unwrap();
            let y = JetPoint::new(&r, id.clone(), b.clone()).unwrap();
            let prod = jet_mul(&r, &x, &y).unwrap();
            assert!(mat_congruent_mod(
                &r,
                prod.a0(),
                &id,
                mat_prec(&r, prod.a0())
            ));
            for ((ai, bi), ci) in a.iter().zip(b.iter()).zip(prod.a().iter()) {
                let want = lie_add(&r, ai, bi);
                let prec = mat_prec(&r, ci);
                assert!(mat_congruent_mod(&r, ci, &want, prec));
            }
        }
    }

    #[test]
    fn coefficient_group_reference_and_inverses() {
        let r = scalar_ram();
        // scalar pi = p = 5: 1 +_pi 1 = 2 + 5
        let one = Mat::from_fn(1, 1, |_, _| r.one());
        let sum = lie_add(&r, &one, &one);
        assert!(r.congruent_mod(sum.at(0, 0), &r.from_i64(7), r.prec_pi()));

        let r2 = ram();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let zero = mat_zero(&r2, 2, 2);
        for _ in 0..20 {
            let a = random_mat(&r2, 2, &mut rng);
            assert_eq!(lie_add(&r2, &zero, &a), a);
            let neg = lie_neg(&r2, &a);
            let back = lie_add(&r2, &a, &neg);
            assert!(mat_congruent_mod(&r2, &back, &zero, mat_prec(&r2, &back)));
            let back2 = lie_add(&r2, &neg, &a);
            assert!(mat_congruent_mod(&r2, &back2, &zero, mat_prec(&r2, &back2)));
        }
    }

    #[test]
    fn kernel_embedding_is_a_homomorphism() {
        let r = ram();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = random_mat(&r, 2, &mut rng);
            let b = random_mat(&r, 2, &mut rng);
            let lhs = mat_mul(&r, &g_to_g1(&r, &a), &g_to_g1(&r, &b));
            let rhs = g_to_g1(&r, &lie_add(&r, &a, &b));
            assert!(mat_congruent_mod(&r, &lhs, &rhs, mat_prec(&r, &lhs)));
        }
        // injectivity at one digit below working precision
        let m = r.prec_pi();
        let a = random_mat(&r, 2, &mut rng).map(|e| r.truncate(e, m - 1));
        let mut b = a.clone();
        *b.at_mut(0, 0) = r.add(
            b.at(0, 0),
            &r.mul_pi_pow(&r.one(), m - 2),
        );
        let b = b.map(|e| r.truncate(e, m - 1));
        assert!(!mat_congruent_mod(&r, &a, &b, m - 1));
        let ga = g_to_g1(&r, &a);
        let gb = g_to_g1(&r, &b);
        assert!(!mat_congruent_mod(&r, &ga, &gb, m));
    }

    #[test]
    fn log_derivative_vanishes_for_trivial_connections() {
        let r = ram();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let id = mat_id::<RamCtx>(&r, 2);
        // the trivial connection has identity direction matrices
        let conn = ConnectionData {
            lambdas: vec![id.clone(), id.clone()],
            a_mats: vec![id.clone(), id.clone()],
            b_mat: id.clone(),
        };
        let g = random_invertible(&r, 2, &mut rng);
        let out = log_derivative(&r, &conn, &g).unwrap();
        for m in &out {
            assert!(mat_congruent_mod(&r, m, &mat_zero(&r, 2, 2), mat_prec(&r, m)));
        }

        // the unit metric with no torsion: the solved connection at g = 1 is
        // trivial, so the logarithmic derivative vanishes as well
        let metric = Metric::new(&r, id.clone()).unwrap();
        let torsion = TorsionSymbol::zero(&r, 2);
        let solved = levi_civita_at(&r, &metric, &torsion, &id, r.prec_pi()).unwrap();
        let out = log_derivative(&r, &solved, &id).unwrap();
        for m in &out {
            assert!(mat_congruent_mod(&r, m, &mat_zero(&r, 2, 2), mat_prec(&r, m)));
        }
    }

    #[test]
    fn log_derivative_recovers_christoffel_matrices() {
        let r = ram();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let metric = random_metric(&r, 2, &mut rng);
            let torsion = random_constant_torsion(&r, 2, &mut rng);
            let g = random_invertible(&r, 2, &mut rng);
            let conn = levi_civita_at(&r, &metric, &torsion, &g, r.prec_pi()).unwrap();
            let via_jets = log_derivative(&r, &conn, &g).unwrap();
            let direct = christoffel_second(&r, &conn.lambdas).unwrap();
            for (a, b) in via_jets.iter().zip(direct.iter()) {
                let prec = mat_prec(&r, a).min(mat_prec(&r, b));
                assert!(prec + 1 >= r.prec_pi(), "unexpected precision drain");
                assert!(mat_congruent_mod(&r, a, b, prec));
            }
        }
    }
}
