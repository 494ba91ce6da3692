//! Cross-ramification agreement checks: connection problems posed over
//! `W` are solved over several ramified extensions and the solutions are
//! compared after projection to the `W`-line of the pi-power coordinates.
//!
//! For a symmetric metric over `W` and a constant antisymmetric torsion
//! symbol over `W` scaled by `p/pi`, the solved direction matrices are
//! expected to have all higher pi-power coordinates equal to zero and the
//! `W`-coordinate equal across every ramification index, at the common
//! `p`-adic precision. An unscaled (ramification-dependent) torsion input
//! serves as a negative control and is reported as a disagreement.

use std::collections::{BTreeMap, BTreeSet};

use crate::connections::{chern_jet, levi_civita_jet, Metric, TorsionSymbol};
use crate::error::{Error, Result};
use crate::matrix_ring::Mat;
use crate::ram_ring::RamCtx;
use crate::series_ring::SeriesCtx;
use crate::witt_base::{BaseCtx, WElem};

/// How the torsion input is carried into each ramified ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TorsionScaling {
    /// Multiply by `p/pi` — the scaling under which agreement is asserted.
    POverPi,
    /// Embed unscaled — a ramification-dependent input, used as a negative
    /// control.
    Unscaled,
}

/// Where a comparison first failed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MismatchDetail {
    /// A pi-power coordinate with index >= 1 is nonzero.
    HigherCoordinate {
        e: usize,
        coordinate: usize,
        valuation_p: Option<u32>,
    },
    /// The `W`-coordinates of two ramifications differ.
    CrossRing {
        e_a: usize,
        e_b: usize,
        valuation_p: Option<u32>,
    },
}

/// The first failing entry of an agreement check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverconvMismatch {
    pub direction: usize,
    pub row: usize,
    pub col: usize,
    pub monomial: Vec<u16>,
    pub detail: MismatchDetail,
}

/// Outcome of a cross-ramification run.
#[derive(Clone, Debug)]
pub struct OverconvReport {
    pub e_list: Vec<usize>,
    /// `p`-adic precision at which `W`-coordinates were compared.
    pub compare_prec_p: u32,
    /// All higher pi-power coordinates vanish in every ramification.
    pub w_line_ok: bool,
    /// The `W`-coordinates agree across all ramifications.
    pub agree: bool,
    pub first_mismatch: Option<OverconvMismatch>,
}

impl OverconvReport {
    pub fn pass(&self) -> bool {
        self.w_line_ok && self.agree
    }
}

/// One direction matrix with every series coefficient split into pi-power
/// coordinates: monomial -> the `e` coordinate values.
type ProjectedMat = Vec<BTreeMap<Vec<u16>, Vec<WElem>>>;

fn project_direction_matrices(
    t: &SeriesCtx,
    lambdas: &[Mat<crate::series_ring::SeriesElem>],
) -> Vec<ProjectedMat> {
    let ram = t.ram();
    lambdas
        .iter()
        .map(|mat| {
            let mut flat = Vec::with_capacity(mat.rows() * mat.cols());
            for i in 0..mat.rows() {
                for j in 0..mat.cols() {
                    let mut entry = BTreeMap::new();
                    for (expo, coeff) in mat.at(i, j).terms() {
                        entry.insert(expo.clone(), ram.theta_coords(coeff));
                    }
                    flat.push(entry);
                }
            }
            flat
        })
        .collect()
}

fn run_family(
    base: &BaseCtx,
    s: u32,
    q: &Mat<WElem>,
    torsion: Option<(&[Mat<WElem>], TorsionScaling)>,
    e_list: &[usize],
    degree_cap: u16,
    depth_p: u32,
) -> Result<OverconvReport> {
    let n = q.rows();
    if q.cols() != n || n == 0 {
        return Err(Error::ConfigInvalid("metric must be square".into()));
    }
    if e_list.is_empty() {
        return Err(Error::ConfigInvalid(
            "need at least one ramification index".into(),
        ));
    }
    if depth_p < 1 || depth_p > base.k_prec() - 1 {
        return Err(Error::ConfigInvalid(format!(
            "comparison depth {depth_p} out of range 1..={}",
            base.k_prec() - 1
        )));
    }

    // solve the same problem over every ramification
    let mut projected: Vec<(usize, usize, Vec<ProjectedMat>)> = Vec::new();
    for &e in e_list {
        let zeta_exps: Vec<u64> = (0..n as u64).map(|i| i % e as u64).collect();
        let ram = RamCtx::new(base.clone(), e, s, &zeta_exps, None)?;
        let depth_e = (e as u32) * depth_p;
        if depth_e > ram.prec_pi() {
            return Err(Error::ConfigInvalid(format!(
                "depth {depth_p} exceeds working precision for e = {e}"
            )));
        }
        let t = SeriesCtx::new(ram.clone(), n, degree_cap)?;
        let metric = Metric::new(&ram, q.map(|x| ram.embed_w(x)))?;
        let conn = match torsion {
            None => chern_jet(&t, &metric)?,
            Some((mats, scaling)) => {
                let scaled: Vec<Mat<crate::ram_ring::RpiElem>> = mats
                    .iter()
                    .map(|m| {
                        m.map(|x| {
                            let emb = ram.embed_w(x);
                            match scaling {
                                TorsionScaling::POverPi => ram.mul_pi_pow(&emb, e as u32 - 1),
                                TorsionScaling::Unscaled => emb,
                            }
                        })
                    })
                    .collect();
                levi_civita_jet(&t, &metric, &TorsionSymbol::Constant(scaled), depth_e)?
            }
        };
        projected.push((e, depth_e as usize, project_direction_matrices(&t, &conn.lambdas)));
    }

    // higher pi-power coordinates must vanish at their verified precision
    let mut first_mismatch = None;
    let mut w_line_ok = true;
    'wline: for (e, depth_e, mats) in &projected {
        for (dir, entries) in mats.iter().enumerate() {
            for (flat_idx, entry) in entries.iter().enumerate() {
                for (expo, coords) in entry {
                    for (l, coord) in coords.iter().enumerate().skip(1) {
                        let verified =
                            ((*depth_e as u32).saturating_sub(l as u32)).div_ceil(*e as u32);
                        let at = verified.min(coord.prec);
                        if !base.is_zero(&base.truncate(coord, at)) {
                            w_line_ok = false;
                            first_mismatch = Some(OverconvMismatch {
                                direction: dir,
                                row: flat_idx / n,
                                col: flat_idx % n,
                                monomial: expo.clone(),
                                detail: MismatchDetail::HigherCoordinate {
                                    e: *e,
                                    coordinate: l,
                                    valuation_p: base.val_p(coord),
                                },
                            });
                            break 'wline;
                        }
                    }
                }
            }
        }
    }

    // W-coordinates must agree across ramifications at the common precision
    let mut agree = true;
    let (e0, _, ref mats0) = projected[0];
    'cross: for (e, _, mats) in projected.iter().skip(1) {
        for (dir, (entries0, entries)) in mats0.iter().zip(mats.iter()).enumerate() {
            for (flat_idx, (entry0, entry)) in entries0.iter().zip(entries.iter()).enumerate() {
                let keys: BTreeSet<&Vec<u16>> = entry0.keys().chain(entry.keys()).collect();
                for expo in keys {
                    let zero = base.truncate(&base.zero(), depth_p);
                    let a = entry0.get(expo).map_or(zero.clone(), |c| c[0].clone());
                    let b = entry.get(expo).map_or(zero, |c| c[0].clone());
                    let at = depth_p.min(a.prec).min(b.prec);
                    if !base.congruent_mod(&a, &b, at) {
                        agree = false;
                        if first_mismatch.is_none() {
                            first_mismatch = Some(OverconvMismatch {
                                direction: dir,
                                row: flat_idx / n,
                                col: flat_idx % n,
                                monomial: expo.clone(),
                                detail: MismatchDetail::CrossRing {
                                    e_a: e0,
                                    e_b: *e,
                                    valuation_p: base.val_p(&base.sub(&a, &b)),
                                },
                            });
                        }
                        break 'cross;
                    }
                }
            }
        }
    }

    Ok(OverconvReport {
        e_list: e_list.to_vec(),
        compare_prec_p: depth_p,
        w_line_ok,
        agree,
        first_mismatch,
    })
}

/// Solves the metric-plus-torsion connection problem over each
/// ramification in `e_list` (torsion carried per `scaling`) and reports
/// `W`-line membership and cross-ring agreement of the direction
/// matrices. `depth_p` is the `p`-adic depth: each ramification solves to
/// `e * depth_p` pi-digits.
pub fn lc_overconvergence_check(
    base: &BaseCtx,
    s: u32,
    q: &Mat<WElem>,
    torsion: &[Mat<WElem>],
    e_list: &[usize],
    degree_cap: u16,
    depth_p: u32,
    scaling: TorsionScaling,
) -> Result<OverconvReport> {
    if torsion.len() != q.rows() {
        return Err(Error::ConfigInvalid(format!(
            "expected {} torsion matrices, got {}",
            q.rows(),
            torsion.len()
        )));
    }
    run_family(
        base,
        s,
        q,
        Some((torsion, scaling)),
        e_list,
        degree_cap,
        depth_p,
    )
}

/// The closed-form (square-root) connection across ramifications; no
/// torsion input.
pub fn chern_overconvergence_check(
    base: &BaseCtx,
    s: u32,
    q: &Mat<WElem>,
    e_list: &[usize],
    degree_cap: u16,
    depth_p: u32,
) -> Result<OverconvReport> {
    run_family(base, s, q, None, e_list, degree_cap, depth_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_field::FieldCtx;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const K: u32 = 5;

    fn base() -> BaseCtx {
        let f = FieldCtx::new(5, 2, Some(vec![2, 4, 1])).unwrap();
        BaseCtx::new(f, K).unwrap()
    }

    fn id_w(w: &BaseCtx, n: usize) -> Mat<WElem> {
        Mat::from_fn(n, n, |i, j| if i == j { w.one() } else { w.zero() })
    }

    fn zero_w(w: &BaseCtx, n: usize) -> Mat<WElem> {
        Mat::from_fn(n, n, |_, _| w.zero())
    }

    fn random_symmetric_invertible<G: Rng>(w: &BaseCtx, n: usize, rng: &mut G) -> Mat<WElem> {
        loop {
            let mut q = Mat::from_fn(n, n, |_, _| w.random(rng, w.k_prec()));
            for i in 0..n {
                for j in 0..i {
                    *q.at_mut(i, j) = q.at(j, i).clone();
                }
            }
            // residue-invertibility for n = 2: det is a unit
            let det = w.sub(
                &w.mul(q.at(0, 0), q.at(1, 1)),
                &w.mul(q.at(0, 1), q.at(1, 0)),
            );
            if w.is_unit(&det) {
                return q;
            }
        }
    }

    fn random_antisymmetric<G: Rng>(w: &BaseCtx, n: usize, rng: &mut G) -> Vec<Mat<WElem>> {
        (0..n)
            .map(|_| {
                let mut m = zero_w(w, n);
                for i in 0..n {
                    for j in 0..i {
                        let v = w.from_i64(rng.gen_range(-1..=1i64));
                        *m.at_mut(i, j) = v.clone();
                        *m.at_mut(j, i) = w.neg(&v);
                    }
                }
                m
            })
            .collect()
    }

    fn nonzero_antisymmetric(w: &BaseCtx, n: usize) -> Vec<Mat<WElem>> {
        let mut mats = vec![zero_w(w, n); n];
        *mats[0].at_mut(0, 1) = w.one();
        *mats[0].at_mut(1, 0) = w.from_i64(-1);
        mats
    }

    #[test]
    fn trivial_metric_agrees_across_ramifications() {
        let w = base();
        let q = id_w(&w, 2);
        let torsion = vec![zero_w(&w, 2); 2];
        let report =
            lc_overconvergence_check(&w, 1, &q, &torsion, &[1, 2], 2, K - 1, TorsionScaling::POverPi)
                .unwrap();
        assert!(report.pass(), "{:?}", report.first_mismatch);

        let chern = chern_overconvergence_check(&w, 1, &q, &[1, 2], 2, K - 1).unwrap();
        assert!(chern.pass(), "{:?}", chern.first_mismatch);
    }

    #[test]
    fn random_metrics_agree_across_three_ramifications() {
        let w = base();
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let q = random_symmetric_invertible(&w, 2, &mut rng);
        let torsion = vec![zero_w(&w, 2); 2];
        let report = lc_overconvergence_check(
            &w,
            1,
            &q,
            &torsion,
            &[1, 2, 4],
            2,
            K - 1,
            TorsionScaling::POverPi,
        )
        .unwrap();
        assert!(report.pass(), "{:?}", report.first_mismatch);
        assert_eq!(report.compare_prec_p, K - 1);

        let chern = chern_overconvergence_check(&w, 1, &q, &[1, 2, 4], 2, K - 1).unwrap();
        assert!(chern.pass(), "{:?}", chern.first_mismatch);
    }

    #[test]
    fn scaled_torsion_agrees_and_unscaled_is_flagged() {
        let w = base();
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let q = random_symmetric_invertible(&w, 2, &mut rng);
        let torsion = {
            let mut t = random_antisymmetric(&w, 2, &mut rng);
            // make sure the control has something to disagree about
            if t.iter().all(|m| m.entries().iter().all(|x| w.is_zero(x))) {
                t = nonzero_antisymmetric(&w, 2);
            }
            t
        };
        let good = lc_overconvergence_check(
            &w,
            1,
            &q,
            &torsion,
            &[1, 2],
            2,
            K - 1,
            TorsionScaling::POverPi,
        )
        .unwrap();
        assert!(good.pass(), "{:?}", good.first_mismatch);

        let control = lc_overconvergence_check(
            &w,
            1,
            &q,
            &nonzero_antisymmetric(&w, 2),
            &[1, 2],
            2,
            K - 1,
            TorsionScaling::Unscaled,
        )
        .unwrap();
        assert!(!control.pass(), "negative control must be flagged");
        assert!(control.first_mismatch.is_some());
    }

    #[test]
    fn scalar_square_root_matches_reference_value() {
        // scalar metric q = 2 over p = 5: the solved coefficient is -4,
        // the same element of W for every ramification
        let w = base();
        let q = Mat::from_fn(1, 1, |_, _| w.from_i64(2));
        let report = chern_overconvergence_check(&w, 1, &q, &[1, 2], 2, K - 1).unwrap();
        assert!(report.pass(), "{:?}", report.first_mismatch);

        let zeta_exps = vec![0u64];
        let ram = RamCtx::new(w.clone(), 1, 1, &zeta_exps, None).unwrap();
        let t = SeriesCtx::new(ram.clone(), 1, 2).unwrap();
        let metric = Metric::new(&ram, q.map(|x| ram.embed_w(x))).unwrap();
        let conn = chern_jet(&t, &metric).unwrap();
        let value = ram.theta_coords(&t.eval_at_one(conn.lambdas[0].at(0, 0)));
        assert!(w.congruent_mod(&value[0], &w.from_i64(-4), K - 1));
    }
}
