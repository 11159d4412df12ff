//! Critical mass thresholds `‖Q_p‖₂²`, `‖W_q‖₂²`, their persistent table,
//! and the hypothesis checker for the stability results.

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::{LazyLock, Mutex};

use serde::{Deserialize, Serialize};

use crate::energy::{classify, Criticality, NonlinearitySpec, ProblemSpec, Term, CRITICAL_REL_TOL};
use crate::error::{Error, Result};
use crate::grid::{make_grid, Grid};
use crate::petviashvili::{petviashvili_solve, petviashvili_solve_with, PetviashviliOptions};
pub use crate::petviashvili::ReferenceKind;

pub const THRESHOLD_CSV_HEADER: &str = "kind,N,exponent,beta,L,M,mass_sq,residual";

/// Residual tolerance of reference solves behind thresholds.
pub const REFERENCE_TOL: f64 = 1e-10;

/// Boundary-decay tolerance for the coarse companion solve that only feeds
/// the error bar; its edge values sit at the spectral noise floor.
pub const COMPANION_DECAY_TOL: f64 = 1e-6;

/// Grids used for reference solves, finest first.
pub fn reference_grids(dim: usize) -> Result<Vec<Grid>> {
    match dim {
        1 => Ok(vec![make_grid(1, 50.0, 1024)?]),
        2 => Ok(vec![make_grid(2, 50.0, 256)?]),
        3 => Ok(vec![make_grid(3, 56.0, 96)?, make_grid(3, 56.0, 64)?]),
        _ => Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub kind: ReferenceKind,
    pub dim: usize,
    pub exponent: f64,
    pub beta: Option<f64>,
    pub extent: f64,
    pub points: usize,
    pub mass_sq: f64,
    pub residual: f64,
}

impl ThresholdEntry {
    fn matches(&self, kind: ReferenceKind, dim: usize, exponent: f64, beta: Option<f64>) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= CRITICAL_REL_TOL * a.abs().max(b.abs());
        self.kind == kind
            && self.dim == dim
            && close(self.exponent, exponent)
            && match (self.beta, beta) {
                (None, None) => true,
                (Some(a), Some(b)) => close(a, b),
                _ => false,
            }
    }

    fn same_key(&self, other: &Self) -> bool {
        self.matches(other.kind, other.dim, other.exponent, other.beta)
            && self.extent == other.extent
            && self.points == other.points
    }

    fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.17e},{:e}",
            self.kind,
            self.dim,
            self.exponent,
            self.beta.map(|b| b.to_string()).unwrap_or_default(),
            self.extent,
            self.points,
            self.mass_sq,
            self.residual
        )
    }

    fn from_csv_row(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Parse(format!("threshold row '{line}'"));
        if cols.len() != 8 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            kind: match cols[0] {
                "Q" => ReferenceKind::Q,
                "W" => ReferenceKind::W,
                _ => return Err(bad()),
            },
            dim: cols[1].parse().map_err(|_| bad())?,
            exponent: num(cols[2])?,
            beta: if cols[3].is_empty() { None } else { Some(num(cols[3])?) },
            extent: num(cols[4])?,
            points: cols[5].parse().map_err(|_| bad())?,
            mass_sq: num(cols[6])?,
            residual: num(cols[7])?,
        })
    }
}

/// A threshold value with an uncertainty from two grid resolutions (zero
/// when only one resolution is available).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdEstimate {
    pub mass_sq: f64,
    pub error_bar: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    entries: Vec<ThresholdEntry>,
}

impl ThresholdTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[ThresholdEntry] {
        &self.entries
    }

    /// Inserts or replaces the row with the same key.
    pub fn insert(&mut self, entry: ThresholdEntry) {
        if let Some(slot) = self.entries.iter_mut().find(|e| e.same_key(&entry)) {
            *slot = entry;
        } else {
            self.entries.push(entry);
        }
    }

    /// Rows for one reference state, finest grid first.
    fn rows(&self, kind: ReferenceKind, dim: usize, exponent: f64, beta: Option<f64>) -> Vec<&ThresholdEntry> {
        let mut rows: Vec<&ThresholdEntry> =
            self.entries.iter().filter(|e| e.matches(kind, dim, exponent, beta)).collect();
        rows.sort_by(|a, b| b.points.cmp(&a.points).then(b.extent.total_cmp(&a.extent)));
        rows
    }

    /// Mass from the finest grid on record.
    pub fn lookup(&self, kind: ReferenceKind, dim: usize, exponent: f64, beta: Option<f64>) -> Option<f64> {
        self.rows(kind, dim, exponent, beta).first().map(|e| e.mass_sq)
    }

    pub fn estimate(&self, kind: ReferenceKind, dim: usize, exponent: f64, beta: Option<f64>) -> Option<ThresholdEstimate> {
        let rows = self.rows(kind, dim, exponent, beta);
        let fine = rows.first()?;
        let error_bar = rows.get(1).map(|c| (fine.mass_sq - c.mass_sq).abs()).unwrap_or(0.0);
        Some(ThresholdEstimate { mass_sq: fine.mass_sq, error_bar })
    }

    /// Solves for the reference state on every default grid not yet present.
    pub fn ensure(&mut self, kind: ReferenceKind, dim: usize, exponent: f64, beta: Option<f64>) -> Result<ThresholdEstimate> {
        for (i, grid) in reference_grids(dim)?.into_iter().enumerate() {
            let have = self.rows(kind, dim, exponent, beta).iter().any(|e| {
                e.points == grid.points(0) && e.extent == grid.extent(0)
            });
            if !have {
                let decay_tol = if i == 0 { PetviashviliOptions::default().decay_tol } else { COMPANION_DECAY_TOL };
                let opts = PetviashviliOptions { tol: REFERENCE_TOL, decay_tol, ..Default::default() };
                let state = petviashvili_solve_with(kind, exponent, beta, &grid, &opts)?;
                self.insert(ThresholdEntry {
                    kind,
                    dim,
                    exponent,
                    beta,
                    extent: grid.extent(0),
                    points: grid.points(0),
                    mass_sq: state.mass_sq,
                    residual: state.residual,
                });
            }
        }
        Ok(self.estimate(kind, dim, exponent, beta).expect("rows were just inserted"))
    }

    /// Ensures thresholds for every critical component of `prob`.
    pub fn ensure_for(&mut self, prob: &ProblemSpec) -> Result<()> {
        let dim = prob.grid.dim();
        for c in classify(&prob.nonlinearity, dim) {
            if c.criticality == Criticality::Critical {
                let (kind, beta) = reference_of(&c.term);
                self.ensure(kind, dim, c.term.exponent(), beta)?;
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{THRESHOLD_CSV_HEADER}")?;
        for e in &self.entries {
            writeln!(w, "{}", e.to_csv_row())?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut table = Self::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != THRESHOLD_CSV_HEADER {
                    return Err(Error::Parse(format!("unexpected threshold header '{line}'")));
                }
                continue;
            }
            if !line.trim().is_empty() {
                table.insert(ThresholdEntry::from_csv_row(&line)?);
            }
        }
        Ok(table)
    }

    /// Reads the table under a shared lock; a missing file is an empty table.
    pub fn load(path: &Path) -> Result<Self> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::new()),
            Err(e) => return Err(e.into()),
        };
        file.lock_shared()?;
        let table = Self::read_csv(&file);
        file.unlock()?;
        table
    }

    /// Merges this table into the file under an exclusive lock. Rows in
    /// memory win over rows on disk with the same key.
    pub fn store(&self, path: &Path) -> Result<()> {
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
        file.lock()?;
        let result = (|| {
            let mut text = String::new();
            file.read_to_string(&mut text)?;
            let mut merged = if text.trim().is_empty() { Self::new() } else { Self::read_csv(text.as_bytes())? };
            for e in &self.entries {
                merged.insert(e.clone());
            }
            let mut out = Vec::new();
            merged.write_csv(&mut out)?;
            file.set_len(0)?;
            file.seek(SeekFrom::Start(0))?;
            file.write_all(&out)?;
            file.sync_all()?;
            Ok(())
        })();
        file.unlock()?;
        result
    }
}

fn reference_of(term: &Term) -> (ReferenceKind, Option<f64>) {
    match *term {
        Term::Power { .. } => (ReferenceKind::Q, None),
        Term::Hartree { beta, .. } => (ReferenceKind::W, Some(beta)),
    }
}

static REFERENCE_MASS: LazyLock<Mutex<HashMap<(ReferenceKind, usize, u64, u64), f64>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

/// Threshold mass on the finest default grid, memoized for the process.
pub fn reference_mass_sq(kind: ReferenceKind, dim: usize, exponent: f64, beta: Option<f64>) -> Result<f64> {
    let key = (kind, dim, exponent.to_bits(), beta.map(f64::to_bits).unwrap_or(u64::MAX));
    if let Some(&m) = REFERENCE_MASS.lock().expect("reference cache poisoned").get(&key) {
        return Ok(m);
    }
    let grid = reference_grids(dim)?.remove(0);
    let m = petviashvili_solve(kind, exponent, beta, &grid, REFERENCE_TOL)?.mass_sq;
    REFERENCE_MASS.lock().expect("reference cache poisoned").insert(key, m);
    Ok(m)
}

/// Nonlinearity family named by the stability result that covers it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityResult {
    Power,
    DoublePower,
    Choquard,
    DoubleChoquard,
    Mixed,
}

impl fmt::Display for StabilityResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StabilityResult::Power => "power",
            StabilityResult::DoublePower => "double_power",
            StabilityResult::Choquard => "choquard",
            StabilityResult::DoubleChoquard => "double_choquard",
            StabilityResult::Mixed => "mixed",
        })
    }
}

/// Outcome of checking one case of a stability result.
///
/// `margin > 0` exactly when `applies`. When a side hypothesis (sign of `γ`,
/// an exponent equality or inequality) fails, `margin` is the slack of the
/// worst failing one; otherwise it is the slack of the case's defining
/// condition: `p_c − p` for the exponent-only case, `1 − ρ/threshold` for a
/// single mass condition, and `1 − [(√ρ/‖Q‖)^{4/N} + (√ρ/‖W‖)^{(2β+4)/N}]`
/// for the combined one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoremVerdict {
    pub result: StabilityResult,
    pub case_id: u8,
    pub applies: bool,
    pub threshold_used: Option<f64>,
    pub margin: f64,
    pub note: String,
}

/// `(√ρ/‖Q_p‖₂)^{4/N} + (√ρ/‖W_q‖₂)^{(2β+4)/N}` from squared thresholds.
pub fn combined_mass_sum(rho: f64, q_mass_sq: f64, w_mass_sq: f64, dim: usize, beta: f64) -> f64 {
    let n = dim as f64;
    let s = rho.sqrt();
    (s / q_mass_sq.sqrt()).powf(4.0 / n) + (s / w_mass_sq.sqrt()).powf((2.0 * beta + 4.0) / n)
}

struct Exponent {
    value: f64,
    critical: f64,
    label: &'static str,
}

impl Exponent {
    fn below(&self) -> Condition {
        Condition {
            slack: self.critical - self.value,
            text: format!("{} < {}", self.label, self.critical),
            tol: CRITICAL_REL_TOL * self.critical,
        }
    }

    fn at(&self) -> Condition {
        let d = (self.value - self.critical).abs();
        let tol = CRITICAL_REL_TOL * self.critical;
        Condition {
            slack: if d <= tol { 0.0 } else { -d },
            text: format!("{} = {}", self.label, self.critical),
            tol: -1.0,
        }
    }
}

/// A hypothesis with its slack; it holds when `slack > tol`.
struct Condition {
    slack: f64,
    text: String,
    tol: f64,
}

impl Condition {
    fn holds(&self) -> bool {
        self.slack > self.tol
    }
}

enum Defining {
    Exponents(Vec<Condition>),
    Mass { kind: ReferenceKind, exponent: f64, beta: Option<f64> },
    Combined { p: f64, q: f64, beta: f64 },
}

struct Case {
    id: u8,
    side: Vec<Condition>,
    defining: Defining,
}

fn cases(spec: &NonlinearitySpec, dim: usize, gamma: f64) -> (StabilityResult, Vec<Case>) {
    let pc = 1.0 + 4.0 / dim as f64;
    let qc = |beta: f64| 1.0 + (2.0 + beta) / dim as f64;
    let g = || Condition { slack: gamma, text: "gamma > 0".into(), tol: 0.0 };
    match *spec {
        NonlinearitySpec::Power { p } => {
            let e = Exponent { value: p, critical: pc, label: "p" };
            (
                StabilityResult::Power,
                vec![
                    Case { id: 1, side: vec![g()], defining: Defining::Exponents(vec![e.below()]) },
                    Case {
                        id: 2,
                        side: vec![g(), e.at()],
                        defining: Defining::Mass { kind: ReferenceKind::Q, exponent: p, beta: None },
                    },
                ],
            )
        }
        NonlinearitySpec::DoublePower { p1, p2 } => {
            let e2 = Exponent { value: p2, critical: pc, label: "p2" };
            let e1 = Exponent { value: p1, critical: pc, label: "p1" };
            (
                StabilityResult::DoublePower,
                vec![
                    Case { id: 1, side: vec![g()], defining: Defining::Exponents(vec![e2.below()]) },
                    Case {
                        id: 2,
                        side: vec![g(), e1.below(), e2.at()],
                        defining: Defining::Mass { kind: ReferenceKind::Q, exponent: p2, beta: None },
                    },
                ],
            )
        }
        NonlinearitySpec::Hartree { q, beta } => {
            let e = Exponent { value: q, critical: qc(beta), label: "q" };
            (
                StabilityResult::Choquard,
                vec![
                    Case { id: 1, side: vec![g()], defining: Defining::Exponents(vec![e.below()]) },
                    Case {
                        id: 2,
                        side: vec![g(), e.at()],
                        defining: Defining::Mass { kind: ReferenceKind::W, exponent: q, beta: Some(beta) },
                    },
                ],
            )
        }
        NonlinearitySpec::DoubleHartree { q1, q2, beta } => {
            let e1 = Exponent { value: q1, critical: qc(beta), label: "q1" };
            let e2 = Exponent { value: q2, critical: qc(beta), label: "q2" };
            (
                StabilityResult::DoubleChoquard,
                vec![
                    Case { id: 1, side: vec![g()], defining: Defining::Exponents(vec![e2.below()]) },
                    Case {
                        id: 2,
                        side: vec![g(), e1.below(), e2.at()],
                        defining: Defining::Mass { kind: ReferenceKind::W, exponent: q2, beta: Some(beta) },
                    },
                ],
            )
        }
        NonlinearitySpec::Mixed { q, beta, p } => {
            let ep = Exponent { value: p, critical: pc, label: "p" };
            let eq = Exponent { value: q, critical: qc(beta), label: "q" };
            (
                StabilityResult::Mixed,
                vec![
                    Case { id: 1, side: vec![g()], defining: Defining::Exponents(vec![ep.below(), eq.below()]) },
                    Case {
                        id: 2,
                        side: vec![g(), ep.below(), eq.at()],
                        defining: Defining::Mass { kind: ReferenceKind::W, exponent: q, beta: Some(beta) },
                    },
                    Case {
                        id: 3,
                        side: vec![g(), ep.at(), eq.below()],
                        defining: Defining::Mass { kind: ReferenceKind::Q, exponent: p, beta: None },
                    },
                    Case {
                        id: 4,
                        side: vec![g(), ep.at(), eq.at()],
                        defining: Defining::Combined { p, q, beta },
                    },
                ],
            )
        }
    }
}

/// Checks every case of the stability result matching `prob.nonlinearity`.
///
/// Errors with [`Error::MissingThreshold`] when a component is critical and
/// `table` has no threshold for it.
pub fn check_theorem_conditions(prob: &ProblemSpec, table: &ThresholdTable) -> Result<Vec<TheoremVerdict>> {
    prob.validate()?;
    let dim = prob.grid.dim();
    let needed = |kind: ReferenceKind, exponent: f64, beta: Option<f64>| {
        table.lookup(kind, dim, exponent, beta).ok_or_else(|| {
            Error::MissingThreshold(format!("{kind} reference with exponent {exponent}, beta {beta:?}, N={dim}"))
        })
    };
    // fail fast on any critical component without a threshold
    for c in classify(&prob.nonlinearity, dim) {
        if c.criticality == Criticality::Critical {
            let (kind, beta) = reference_of(&c.term);
            needed(kind, c.term.exponent(), beta)?;
        }
    }
    let (result, list) = cases(&prob.nonlinearity, dim, prob.potential.gamma);
    let rho = prob.rho;
    let mut verdicts = Vec::with_capacity(list.len());
    for case in list {
        let failing: Vec<&Condition> = case.side.iter().filter(|c| !c.holds()).collect();
        let side_ok = failing.is_empty();
        let (defining_slack, threshold_used, defining_text) = match &case.defining {
            Defining::Exponents(conds) => {
                let worst = conds.iter().min_by(|a, b| a.slack.total_cmp(&b.slack)).expect("non-empty");
                let slack = if conds.iter().all(Condition::holds) { worst.slack } else { worst.slack.min(0.0) };
                (slack, None, conds.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(", "))
            }
            Defining::Mass { kind, exponent, beta } => {
                let t = if side_ok { Some(needed(*kind, *exponent, *beta)?) } else { table.lookup(*kind, dim, *exponent, *beta) };
                let slack = t.map(|t| 1.0 - rho / t).unwrap_or(f64::NAN);
                (slack, t, format!("rho < threshold({kind})"))
            }
            Defining::Combined { p, q, beta } => {
                let tq = if side_ok { Some(needed(ReferenceKind::Q, *p, None)?) } else { table.lookup(ReferenceKind::Q, dim, *p, None) };
                let tw = if side_ok {
                    Some(needed(ReferenceKind::W, *q, Some(*beta))?)
                } else {
                    table.lookup(ReferenceKind::W, dim, *q, Some(*beta))
                };
                let slack = match (tq, tw) {
                    (Some(tq), Some(tw)) => 1.0 - combined_mass_sum(rho, tq, tw, dim, *beta),
                    _ => f64::NAN,
                };
                (slack, None, "combined mass condition < 1".to_string())
            }
        };
        let (applies, margin, note) = if side_ok {
            let ok = defining_slack > 0.0;
            let note = if ok { format!("holds: {defining_text}") } else { format!("fails: {defining_text}") };
            (ok, defining_slack, note)
        } else {
            let worst = failing.iter().min_by(|a, b| a.slack.total_cmp(&b.slack)).expect("non-empty");
            let texts: Vec<&str> = failing.iter().map(|c| c.text.as_str()).collect();
            (false, worst.slack.min(0.0), format!("side hypothesis fails: {}", texts.join(", ")))
        };
        verdicts.push(TheoremVerdict { result, case_id: case.id, applies, threshold_used, margin, note });
    }
    Ok(verdicts)
}

/// Margin of the mass condition that makes a critical problem well posed,
/// ignoring the sign of `γ`; `None` when no component is critical.
///
/// Errors with [`Error::RefusedSupercritical`] when some component is above
/// its critical exponent.
pub fn critical_mass_margin(prob: &ProblemSpec, table: &ThresholdTable) -> Result<Option<f64>> {
    let dim = prob.grid.dim();
    let classes = classify(&prob.nonlinearity, dim);
    if let Some(c) = classes.iter().find(|c| c.criticality == Criticality::Supercritical) {
        return Err(Error::RefusedSupercritical(format!(
            "{} exponent {} > critical {}",
            prob.nonlinearity,
            c.term.exponent(),
            c.critical_exponent
        )));
    }
    let critical: Vec<&Term> = classes.iter().filter(|c| c.criticality == Criticality::Critical).map(|c| &c.term).collect();
    if critical.is_empty() {
        return Ok(None);
    }
    let mut positive = prob.clone();
    positive.potential.gamma = 1.0;
    let verdicts = check_theorem_conditions(&positive, table)?;
    let (_, list) = cases(&prob.nonlinearity, dim, 1.0);
    for (case, v) in list.iter().zip(&verdicts) {
        if case.side.iter().all(Condition::holds) && !matches!(case.defining, Defining::Exponents(_)) {
            return Ok(Some(v.margin));
        }
    }
    // a critical lower exponent in a double nonlinearity matches no case
    let e = critical[0];
    Err(Error::RefusedSupercritical(format!(
        "{}: critical lower exponent {} is outside every stability case",
        prob.nonlinearity,
        e.exponent()
    )))
}
