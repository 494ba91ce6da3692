//! JSON configuration schema and element codecs.
//!
//! Ring elements travel as decimal-string coefficient arrays:
//!
//! * a residue-field element is an array of `m` decimal strings (its
//!   polynomial coefficients);
//! * a `W` element is an array of `m` decimal strings (coefficients mod
//!   `p^K`);
//! * an element of the ramified ring is an array of up to `e` uniformizer
//!   coordinates, each itself a `W` coefficient array.
//!
//! Plain integers (JSON numbers or a single decimal string, possibly
//! negative) are accepted on input as embedded constants.

use pigeom::connections::ResidualReport;
use pigeom::{BaseCtx, FieldCtx, FqElem, Mat, RamCtx, RpiElem, WElem};
use serde::Deserialize;
use serde_json::{json, Value};

/// CLI-level failure: always a configuration/input problem (exit code 2).
/// Identity failures are never errors; they are reported through the
/// `pass` flag of the JSON report (exit code 1).
pub type CliResult<T> = Result<T, String>;

/// Converts a library error into a configuration diagnostic. The library's
/// error messages name the violated invariant.
pub fn lib<T>(r: pigeom::Result<T>) -> CliResult<T> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// configuration file
// ---------------------------------------------------------------------------

/// Top-level configuration file: the ring tower plus a per-command problem.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub ring: RingConfig,
    #[serde(default)]
    pub problem: Value,
}

/// Parameters of the ring tower `F_{p^m} -> W -> R = W[pi]/(pi^e - p)`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingConfig {
    /// Odd prime `p`.
    pub p: u64,
    /// Residue-field degree `m`.
    pub m: usize,
    /// Number of Witt digits carried by `W = (Z/p^K)[x]/(g)`.
    #[serde(rename = "K")]
    pub k: u32,
    /// Optional explicit little-endian modulus `g` (length `m + 1`); when
    /// absent a deterministic search picks one with multiplicative roots.
    #[serde(default)]
    pub modulus: Option<Vec<u64>>,
    /// Ramification index; must divide `p^m - 1` (tameness).
    #[serde(default = "one_usize")]
    pub e: usize,
    /// Frobenius degree `s >= 1` of each lift.
    #[serde(default = "one_u32")]
    pub s: u32,
    /// Number of commuting lifts; defaults to `zeta_exps.len()` (or 1).
    #[serde(default)]
    pub n: Option<usize>,
    /// Matrix size for connection problems; defaults to `n`.
    #[serde(default, rename = "N")]
    pub n_mat: Option<usize>,
    /// Exponents `j_i` giving the twist `zeta_i = zeta_e^{j_i}` of each
    /// lift; defaults to `0, 1, .., n-1` reduced mod `e`.
    #[serde(default)]
    pub zeta_exps: Option<Vec<u64>>,
    /// Working uniformizer precision; defaults to `e (K - 1)`.
    #[serde(default)]
    pub prec_pi: Option<u32>,
    /// Total-degree cap for jet-series computations; defaults to 2.
    #[serde(default, rename = "D")]
    pub degree_cap: Option<u16>,
}

fn one_usize() -> usize {
    1
}

fn one_u32() -> u32 {
    1
}

/// The resolved ring tower shared by every command.
pub struct Ring {
    pub ram: RamCtx,
    pub n_mat: usize,
    pub degree_cap: u16,
}

impl Ring {
    pub fn build(cfg: &RingConfig) -> CliResult<Ring> {
        let field = lib(FieldCtx::new(cfg.p, cfg.m, cfg.modulus.clone()))?;
        let base = lib(BaseCtx::new(field, cfg.k))?;
        let exps: Vec<u64> = match (&cfg.zeta_exps, cfg.n) {
            (Some(z), maybe_n) => {
                if let Some(n) = maybe_n {
                    if n != z.len() {
                        return Err(format!(
                            "n = {n} disagrees with zeta_exps (length {})",
                            z.len()
                        ));
                    }
                }
                z.clone()
            }
            (None, Some(n)) => (0..n as u64).map(|i| i % cfg.e as u64).collect(),
            (None, None) => vec![0],
        };
        let ram = lib(RamCtx::new(base, cfg.e, cfg.s, &exps, cfg.prec_pi))?;
        let n_mat = cfg.n_mat.unwrap_or(exps.len());
        if n_mat == 0 {
            return Err("matrix size N must be >= 1".into());
        }
        let degree_cap = cfg.degree_cap.unwrap_or(2);
        Ok(Ring {
            ram,
            n_mat,
            degree_cap,
        })
    }

    pub fn base(&self) -> &BaseCtx {
        self.ram.base()
    }

    pub fn field(&self) -> &FieldCtx {
        self.ram.base().field()
    }

    /// The fully resolved ring block included in every report. Contains
    /// the chosen modulus and field generator so reports are reproducible
    /// bit for bit from the configuration alone.
    pub fn json(&self) -> Value {
        let w = self.base();
        let f = self.field();
        json!({
            "p": w.p(),
            "m": w.m(),
            "K": w.k_prec(),
            "modulus": w.modulus_lift().iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            "generator": f.generator().coeffs().iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            "e": self.ram.e(),
            "s": self.ram.s(),
            "n": self.ram.n_dirs(),
            "N": self.n_mat,
            "zeta_exps": self.ram.zeta_exps(),
            "zetas": (1..=self.ram.n_dirs()).map(|i| w_json(self.ram.zeta(i))).collect::<Vec<_>>(),
            "prec_pi": self.ram.prec_pi(),
            "max_prec": self.ram.max_prec(),
            "D": self.degree_cap,
        })
    }
}

// ---------------------------------------------------------------------------
// element wire format
// ---------------------------------------------------------------------------

/// Input form of one ring element.
#[derive(Deserialize, Clone)]
#[serde(untagged)]
pub enum Wire {
    /// Integer constant.
    Num(i64),
    /// Integer constant as a decimal string.
    Str(String),
    /// Coefficient array of a `W` element (length <= m).
    Coeffs(Vec<String>),
    /// Uniformizer-coordinate array (length <= e) of `W` coefficient
    /// arrays.
    Theta(Vec<Vec<String>>),
}

fn parse_int(s: &str) -> CliResult<i64> {
    s.trim()
        .parse::<i64>()
        .map_err(|_| format!("bad integer literal {s:?}"))
}

/// Parses a `W` element at full precision `K`.
pub fn parse_w(w: &BaseCtx, wire: &Wire) -> CliResult<WElem> {
    match wire {
        Wire::Num(v) => Ok(w.from_i64(*v)),
        Wire::Str(s) => Ok(w.from_i64(parse_int(s)?)),
        Wire::Coeffs(c) => lib(w.from_decimal_strings(c, w.k_prec())),
        Wire::Theta(_) => Err("expected a base-ring element, got uniformizer coordinates".into()),
    }
}

/// Parses an element of the ramified ring at working precision.
pub fn parse_rpi(ram: &RamCtx, wire: &Wire) -> CliResult<RpiElem> {
    let w = ram.base();
    match wire {
        Wire::Num(v) => Ok(ram.from_i64(*v)),
        Wire::Str(s) => Ok(ram.from_i64(parse_int(s)?)),
        Wire::Coeffs(c) => Ok(ram.embed_w(&lib(w.from_decimal_strings(c, w.k_prec()))?)),
        Wire::Theta(rows) => {
            if rows.len() > ram.e() {
                return Err(format!(
                    "element has {} uniformizer coordinates, ring has e = {}",
                    rows.len(),
                    ram.e()
                ));
            }
            let mut coords = Vec::with_capacity(ram.e());
            for row in rows {
                coords.push(lib(w.from_decimal_strings(row, w.k_prec()))?);
            }
            while coords.len() < ram.e() {
                coords.push(w.zero());
            }
            lib(ram.from_theta_coords(&coords, ram.prec_pi()))
        }
    }
}

/// Parses a residue-field element.
pub fn parse_fq(f: &FieldCtx, wire: &Wire) -> CliResult<FqElem> {
    let p = f.p() as i64;
    match wire {
        Wire::Num(v) => Ok(f.from_u64(v.rem_euclid(p) as u64)),
        Wire::Str(s) => Ok(f.from_u64(parse_int(s)?.rem_euclid(p) as u64)),
        Wire::Coeffs(c) => {
            let coeffs: Vec<u64> = c
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<u64>()
                        .map_err(|_| format!("bad coefficient {s:?}"))
                })
                .collect::<CliResult<_>>()?;
            lib(f.from_coeffs(&coeffs))
        }
        Wire::Theta(_) => {
            Err("expected a residue-field element, got uniformizer coordinates".into())
        }
    }
}

/// Parses an `N x N` matrix over the ramified ring.
pub fn parse_rpi_mat(ram: &RamCtx, rows: &[Vec<Wire>], n: usize) -> CliResult<Mat<RpiElem>> {
    check_shape(rows, n)?;
    let mut out = Vec::with_capacity(n * n);
    for row in rows {
        for w in row {
            out.push(parse_rpi(ram, w)?);
        }
    }
    Ok(Mat::from_fn(n, n, |i, j| out[i * n + j].clone()))
}

/// Parses an `N x N` matrix over `W`.
pub fn parse_w_mat(w: &BaseCtx, rows: &[Vec<Wire>], n: usize) -> CliResult<Mat<WElem>> {
    check_shape(rows, n)?;
    let mut out = Vec::with_capacity(n * n);
    for row in rows {
        for e in row {
            out.push(parse_w(w, e)?);
        }
    }
    Ok(Mat::from_fn(n, n, |i, j| out[i * n + j].clone()))
}

fn check_shape(rows: &[Vec<Wire>], n: usize) -> CliResult<()> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(format!("expected an {n} x {n} matrix"));
    }
    Ok(())
}

/// Parses a vector of `W` elements of the given length.
pub fn parse_w_vec(w: &BaseCtx, wires: &[Wire], len: usize, what: &str) -> CliResult<Vec<WElem>> {
    if wires.len() != len {
        return Err(format!("{what} must have {len} components, got {}", wires.len()));
    }
    wires.iter().map(|x| parse_w(w, x)).collect()
}

/// Parses a vector of residue-field elements of the given length.
pub fn parse_fq_vec(f: &FieldCtx, wires: &[Wire], len: usize, what: &str) -> CliResult<Vec<FqElem>> {
    if wires.len() != len {
        return Err(format!("{what} must have {len} components, got {}", wires.len()));
    }
    wires.iter().map(|x| parse_fq(f, x)).collect()
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

pub fn w_json(a: &WElem) -> Value {
    json!(a.to_decimal_strings())
}

pub fn rpi_json(ram: &RamCtx, a: &RpiElem) -> Value {
    json!(ram
        .theta_coords(a)
        .iter()
        .map(w_json)
        .collect::<Vec<_>>())
}

pub fn fq_json(a: &FqElem) -> Value {
    json!(a
        .coeffs()
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>())
}

pub fn w_vec_json(v: &[WElem]) -> Value {
    json!(v.iter().map(w_json).collect::<Vec<_>>())
}

pub fn fq_vec_json(v: &[FqElem]) -> Value {
    json!(v.iter().map(fq_json).collect::<Vec<_>>())
}

pub fn rpi_mat_json(ram: &RamCtx, m: &Mat<RpiElem>) -> Value {
    json!((0..m.rows())
        .map(|i| (0..m.cols())
            .map(|j| rpi_json(ram, m.at(i, j)))
            .collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

pub fn w_mat_json(m: &Mat<WElem>) -> Value {
    json!((0..m.rows())
        .map(|i| (0..m.cols()).map(|j| w_json(m.at(i, j))).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

/// Residual report: pass flag, the precision each congruence was checked
/// at, and per-instance residual valuations (`null` = vanishes).
pub fn residual_json(rep: &ResidualReport) -> Value {
    json!({
        "pass": rep.pass,
        "checked_prec": rep.checked_prec,
        "valuations": rep.valuations,
    })
}

/// Deserializes the per-command problem block.
pub fn problem<T: for<'de> Deserialize<'de>>(v: &Value) -> CliResult<T> {
    serde_json::from_value(v.clone()).map_err(|e| format!("bad problem block: {e}"))
}
