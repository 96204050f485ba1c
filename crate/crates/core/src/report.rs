//! JSON verification reports and the sweep CSV table.
//!
//! Pass flags are always derived from the stored numbers, so a report read
//! back from disk can be re-checked independently of the run that wrote it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::mobius::{BallImage, Decomposition};
use crate::monotonicity::{error_budget, CheckOutcome, MonotonicityReport, PrescribedPointResult};

pub const TOOL_NAME: &str = "mobius-mono";

pub const CSV_HEADER: &str = "r,s,J,J_err,I,I_err,QA,QI,vol_lhs,vol_rhs,vol_residual,vol_budget,wt_lhs,wt_rhs,wt_residual,wt_budget,pass";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("check `{name}` stores pass = {stored} but its numbers give {recomputed}")]
    PassMismatch { name: String, stored: bool, recomputed: bool },
    #[error("report stores all_pass = {stored} but its checks give {recomputed}")]
    AllPassMismatch { stored: bool, recomputed: bool },
}

/// How `residual` is compared against `budget`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `|residual| ≤ budget`
    TwoSided,
    /// `residual ≥ −budget`
    LowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub kind: CheckKind,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub residual: Option<f64>,
    pub budget: Option<f64>,
    pub pass: bool,
    #[serde(default)]
    pub tol_not_met: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl CheckRecord {
    pub fn two_sided(name: impl Into<String>, lhs: f64, rhs: f64, budget: f64) -> Self {
        CheckRecord {
            name: name.into(),
            kind: CheckKind::TwoSided,
            lhs: finite(lhs),
            rhs: finite(rhs),
            residual: finite(lhs - rhs),
            budget: finite(budget),
            pass: false,
            tol_not_met: false,
            error: None,
        }
        .recomputed()
    }

    pub fn from_outcome(name: impl Into<String>, o: &CheckOutcome) -> Self {
        let mut rec = CheckRecord::two_sided(name, o.lhs, o.rhs, o.budget);
        rec.residual = finite(o.residual);
        rec.tol_not_met = o.tol_not_met;
        rec.recomputed()
    }

    /// `lhs` is the measured quantity, `rhs` the lower bound.
    pub fn lower_bound(name: impl Into<String>, lhs: f64, rhs: f64, budget: f64) -> Self {
        CheckRecord {
            kind: CheckKind::LowerBound,
            ..CheckRecord::two_sided(name, lhs, rhs, budget)
        }
        .recomputed()
    }

    pub fn from_prescribed(name: impl Into<String>, p: &PrescribedPointResult) -> Self {
        let mut rec = CheckRecord::lower_bound(name, p.area, p.bound, p.budget);
        rec.residual = finite(p.slack);
        rec.recomputed()
    }

    pub fn failed(name: impl Into<String>, kind: CheckKind, error: impl Into<String>) -> Self {
        CheckRecord {
            name: name.into(),
            kind,
            lhs: None,
            rhs: None,
            residual: None,
            budget: None,
            pass: false,
            tol_not_met: false,
            error: Some(error.into()),
        }
    }

    /// Pass flag implied by the stored numbers.
    pub fn recompute_pass(&self) -> bool {
        if self.error.is_some() {
            return false;
        }
        match (self.residual, self.budget) {
            (Some(res), Some(budget)) => match self.kind {
                CheckKind::TwoSided => res.abs() <= budget,
                CheckKind::LowerBound => res >= -budget,
            },
            _ => false,
        }
    }

    fn recomputed(mut self) -> Self {
        self.pass = self.recompute_pass();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub b: Vec<f64>,
    pub radius: f64,
    /// Row-major linear part of `ψ`.
    pub psi_linear: Vec<Vec<f64>>,
    pub psi_translation: Vec<f64>,
    pub a: Vec<f64>,
    pub direction: Vec<f64>,
    pub phi_origin: Vec<f64>,
    /// `ψ` is orientation reversing (a mirror).
    pub psi_reverses_orientation: bool,
}

impl DecompositionSummary {
    pub fn of(dec: &Decomposition) -> Self {
        let m = &dec.psi.linear_part;
        DecompositionSummary {
            b: dec.b.as_slice().to_vec(),
            radius: dec.radius,
            psi_linear: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
            psi_translation: dec.psi.translation.as_slice().to_vec(),
            a: dec.a.as_slice().to_vec(),
            direction: dec.direction.as_slice().to_vec(),
            phi_origin: dec.phi_of_origin().as_slice().to_vec(),
            psi_reverses_orientation: m.determinant() < 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BallImageRecord {
    Ball { r: f64, center: Vec<f64>, radius: f64 },
    /// `{x : ⟨normal, x⟩ < offset}`
    HalfSpace { r: f64, normal: Vec<f64>, offset: f64 },
    /// Complement of the closed ball.
    Exterior { r: f64, center: Vec<f64>, radius: f64 },
}

impl BallImageRecord {
    pub fn of(r: f64, img: &BallImage) -> Self {
        match img {
            BallImage::Ball(b) => BallImageRecord::Ball {
                r,
                center: b.center.as_slice().to_vec(),
                radius: b.radius,
            },
            BallImage::HalfSpace(h) => BallImageRecord::HalfSpace {
                r,
                normal: h.unit_normal.as_slice().to_vec(),
                offset: h.offset,
            },
            BallImage::Exterior(b) => BallImageRecord::Exterior {
                r,
                center: b.center.as_slice().to_vec(),
                radius: b.radius,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub csv: Option<String>,
    pub rows: usize,
    pub constant_j: bool,
    pub max_normal_offset: f64,
    pub max_tangential_direction: f64,
    /// Row indices where some quadrature stopped at its depth limit.
    pub tol_not_met_rows: Vec<usize>,
}

impl SweepSummary {
    pub fn of(rep: &MonotonicityReport, csv: Option<String>) -> Self {
        SweepSummary {
            csv,
            rows: rep.radii.len(),
            constant_j: rep.constant_j,
            max_normal_offset: rep.equality.max_normal_offset,
            max_tangential_direction: rep.equality.max_tangential_direction,
            tol_not_met_rows: (0..rep.radii.len()).filter(|&i| row_tol_not_met(rep, i)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Option<Config>,
    pub decomposition: Option<DecompositionSummary>,
    #[serde(default)]
    pub ball_images: Vec<BallImageRecord>,
    #[serde(default)]
    pub checks: Vec<CheckRecord>,
    pub sweep: Option<SweepSummary>,
    pub timing: Timing,
    pub all_pass: bool,
}

impl ReportDocument {
    pub fn new(command: &str, config: Option<Config>) -> Self {
        ReportDocument {
            tool: TOOL_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            decomposition: None,
            ball_images: Vec::new(),
            checks: Vec::new(),
            sweep: None,
            timing: Timing::default(),
            all_pass: true,
        }
    }

    /// Recomputes every pass flag from the stored numbers.
    pub fn finalize(&mut self) {
        for c in &mut self.checks {
            c.pass = c.recompute_pass();
        }
        self.all_pass = self.checks.iter().all(|c| c.pass);
    }

    pub fn to_json(&mut self) -> String {
        self.finalize();
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Parses a report and confirms its pass flags match its numbers.
    pub fn from_json(src: &str) -> Result<Self, ReportError> {
        let doc: ReportDocument = serde_json::from_str(src)?;
        for c in &doc.checks {
            let recomputed = c.recompute_pass();
            if recomputed != c.pass {
                return Err(ReportError::PassMismatch {
                    name: c.name.clone(),
                    stored: c.pass,
                    recomputed,
                });
            }
        }
        let recomputed = doc.checks.iter().all(|c| c.pass);
        if recomputed != doc.all_pass {
            return Err(ReportError::AllPassMismatch {
                stored: doc.all_pass,
                recomputed,
            });
        }
        Ok(doc)
    }
}

fn row_tol_not_met(rep: &MonotonicityReport, i: usize) -> bool {
    let quads = [&rep.j[i], &rep.i[i], &rep.q_a[i], &rep.q_i[i]];
    quads.iter().any(|q| q.depth_hit)
        || (i > 0 && (rep.pairs[i - 1].volume.tol_not_met || rep.pairs[i - 1].weighted.tol_not_met))
}

/// Per-row pass flag: the pair ending at this radius satisfies both
/// identities and is monotone. The first row has no pair and passes.
pub fn row_pass(rep: &MonotonicityReport, i: usize) -> bool {
    if i == 0 {
        return true;
    }
    let p = &rep.pairs[i - 1];
    p.volume.pass && p.weighted.pass && p.monotone
}

fn num(out: &mut String, x: f64) {
    // 17 significant digits round-trip every f64
    write!(out, "{x:.16e}").expect("writing to a String");
}

/// Renders the sweep table. Byte-identical output for identical reports.
pub fn sweep_csv(rep: &MonotonicityReport) -> String {
    let mut out = String::with_capacity(256 * (rep.radii.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for i in 0..rep.radii.len() {
        let cells = [
            rep.radii[i],
            rep.s[i],
            rep.j[i].value,
            rep.j[i].error_estimate,
            rep.i[i].value,
            rep.i[i].error_estimate,
            rep.q_a[i].value,
            rep.q_i[i].value,
        ];
        for (n, x) in cells.iter().enumerate() {
            if n > 0 {
                out.push(',');
            }
            num(&mut out, *x);
        }
        if i == 0 {
            out.push_str(",,,,,,,,");
        } else {
            let p = &rep.pairs[i - 1];
            for o in [&p.volume, &p.weighted] {
                for x in [o.lhs, o.rhs, o.residual, o.budget] {
                    out.push(',');
                    num(&mut out, x);
                }
            }
        }
        out.push(',');
        out.push_str(if row_pass(rep, i) { "true" } else { "false" });
        out.push('\n');
    }
    out
}

/// Check records for every pair of a sweep.
pub fn sweep_checks(rep: &MonotonicityReport) -> Vec<CheckRecord> {
    let mut out = Vec::with_capacity(3 * rep.pairs.len());
    for (n, p) in rep.pairs.iter().enumerate() {
        let tag = format!("[{}, {}]", p.r_lo, p.r_hi);
        out.push(CheckRecord::from_outcome(format!("volume_identity {tag}"), &p.volume));
        out.push(CheckRecord::from_outcome(format!("weighted_identity {tag}"), &p.weighted));
        let (lo, hi) = (&rep.j[n], &rep.j[n + 1]);
        let budget = error_budget(lo.value, lo.error_estimate, 0.0) + error_budget(hi.value, hi.error_estimate, 0.0);
        let mut mono = CheckRecord::lower_bound(format!("monotone_J {tag}"), hi.value, lo.value, budget);
        mono.tol_not_met = lo.depth_hit || hi.depth_hit;
        out.push(mono);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::QuadratureResult;
    use crate::monotonicity::EqualityDiagnostics;

    fn q(v: f64) -> QuadratureResult {
        QuadratureResult {
            value: v,
            error_estimate: 1e-9,
            cells_used: 1,
            depth_hit: false,
        }
    }

    fn tiny_report() -> MonotonicityReport {
        MonotonicityReport {
            radii: vec![0.5, 1.0],
            s: vec![0.1, 0.4],
            j: vec![q(1.0), q(1.5)],
            i: vec![q(0.5), q(0.75)],
            q_a: vec![q(2.0), q(3.0)],
            q_i: vec![q(1.0), q(1.5)],
            pairs: vec![crate::monotonicity::PairResult {
                r_lo: 0.5,
                r_hi: 1.0,
                volume: CheckOutcome::new(0.5, 1e-9, 0.5 + 1e-10, 1e-9),
                weighted: CheckOutcome::new(0.25, 1e-9, 0.25, 1e-9),
                monotone: true,
            }],
            constant_j: false,
            equality: EqualityDiagnostics {
                max_normal_offset: 0.1,
                max_tangential_direction: 0.2,
                samples: 10,
            },
            pass: true,
        }
    }

    #[test]
    fn csv_layout() {
        let csv = sweep_csv(&tiny_report());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first.len(), 17);
        assert!(first[8..16].iter().all(|c| c.is_empty()));
        assert_eq!(first[0], "5.0000000000000000e-1");
        let second: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(second.len(), 17);
        assert_eq!(second[16], "true");
        for cell in &second[..16] {
            let x: f64 = cell.parse().unwrap();
            assert_eq!(format!("{x:.16e}"), *cell);
        }
    }

    #[test]
    fn pass_flags_survive_round_trip() {
        let mut doc = ReportDocument::new("sweep", None);
        doc.checks = sweep_checks(&tiny_report());
        doc.checks.push(CheckRecord::lower_bound("slack", 1.0, 1.1, 0.01));
        doc.checks.push(CheckRecord::failed("broken", CheckKind::TwoSided, "boom"));
        let json = doc.to_json();
        assert!(!doc.all_pass);
        let back = ReportDocument::from_json(&json).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.checks.iter().filter(|c| c.pass).count(), 3);
    }

    #[test]
    fn tampered_flags_are_rejected() {
        let mut doc = ReportDocument::new("verify", None);
        doc.checks.push(CheckRecord::two_sided("x", 1.0, 1.5, 0.1));
        let json = doc.to_json().replace("\"pass\": false", "\"pass\": true");
        assert!(matches!(ReportDocument::from_json(&json), Err(ReportError::PassMismatch { .. })));
    }

    #[test]
    fn non_finite_numbers_fail() {
        let rec = CheckRecord::two_sided("nan", f64::NAN, 0.0, 1.0);
        assert!(!rec.pass && rec.residual.is_none());
    }
}
