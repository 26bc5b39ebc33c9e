use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::OutputFormat;
use crate::activators::{ConvergenceRow, GrowthCertificate, SobolevReport, Stage};
use crate::error::{Error, Result};
use crate::fdl_verifier::LossReport;
use crate::speeds::{DensityRow, MembershipReport, PropagationSpeed};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        Cell::Float(v.unwrap_or(f64::NAN))
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Named table with a fixed column set.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self { name: name.into(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header of `{}`", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match cell {
                    Cell::Float(v) => write!(out, "{v:.16e}").unwrap(),
                    Cell::Int(v) => write!(out, "{v}").unwrap(),
                    Cell::Bool(v) => write!(out, "{v}").unwrap(),
                    Cell::Text(s) => out.push_str(&csv_quote(s)),
                }
            }
            out.push('\n');
        }
        out
    }

    /// One object per row, keys in column order; non-finite floats become `null`.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push('{');
            for (i, (col, cell)) in self.columns.iter().zip(row).enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "\"{col}\":").unwrap();
                match cell {
                    Cell::Float(v) if v.is_finite() => write!(out, "{v:.16e}").unwrap(),
                    Cell::Float(_) => out.push_str("null"),
                    Cell::Int(v) => write!(out, "{v}").unwrap(),
                    Cell::Bool(v) => write!(out, "{v}").unwrap(),
                    Cell::Text(s) => out.push_str(&serde_json::Value::from(s.as_str()).to_string()),
                }
            }
            out.push_str("}\n");
        }
        out
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::JsonLines => self.to_json_lines(),
        }
    }

    pub fn file_name(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => format!("{}.csv", self.name),
            OutputFormat::JsonLines => format!("{}.jsonl", self.name),
        }
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Writes every table into `dir`, creating it if needed. Returns the paths written.
pub fn emit(tables: &[Table], dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut paths = Vec::with_capacity(tables.len());
    for t in tables {
        let path = dir.join(t.file_name(format));
        std::fs::write(&path, t.render(format)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        paths.push(path);
    }
    Ok(paths)
}

pub const LOSS_COLUMNS: [&str; 9] =
    ["lambda", "a", "b", "sup_log_gain", "delta_hat", "kov_exp", "hyp_ceiling", "tar_ceiling", "pass"];

pub fn loss_table(report: &LossReport) -> Table {
    let mut t = Table::new("loss", &LOSS_COLUMNS);
    for r in &report.rows {
        t.push(vec![
            r.lambda.into(),
            r.a.into(),
            r.b.into(),
            r.sup_log_gain.into(),
            r.delta_hat.into(),
            r.kov_exp.into(),
            r.hyp_ceiling.into(),
            r.tar_ceiling.into(),
            r.pass.into(),
        ]);
    }
    t
}

/// Per-zone ceilings and measured gains, plus the failure text of incomplete rows.
pub fn zone_table(report: &LossReport) -> Table {
    let mut t = Table::new(
        "zones",
        &[
            "lambda",
            "two_zone",
            "ceiling_a",
            "ceiling_b",
            "ceiling_t0",
            "measured_a",
            "measured_b",
            "measured_t0",
            "tarama_k",
            "failure",
        ],
    );
    for r in &report.rows {
        let (two, ceil, meas, k) = match &r.chain {
            Some(c) => (c.two_zone, c.ceilings, c.measured, c.constants.k),
            None => (false, [f64::NAN; 3], [f64::NAN; 3], f64::NAN),
        };
        t.push(vec![
            r.lambda.into(),
            two.into(),
            ceil[0].into(),
            ceil[1].into(),
            ceil[2].into(),
            meas[0].into(),
            meas[1].into(),
            meas[2].into(),
            k.into(),
            r.failure.clone().unwrap_or_default().into(),
        ]);
    }
    t
}

pub const CERTIFICATE_COLUMNS: [&str; 9] = ["lambda", "gamma", "a", "b", "omega_l", "phi", "log_gain_at_b", "margin", "pass"];

/// Certificate records and their checkpoint rows.
pub fn certificate_tables(certs: &[GrowthCertificate]) -> (Table, Table) {
    let mut main = Table::new("certificates", &CERTIFICATE_COLUMNS);
    let mut cps = Table::new("checkpoints", &["lambda", "t", "log_ekov", "margin"]);
    for c in certs {
        main.push(vec![
            c.lambda.into(),
            c.gamma.into(),
            c.a.into(),
            c.b.into(),
            c.omega_l.into(),
            c.phi.into(),
            c.log_gain_at_b.into(),
            c.margin.into(),
            c.pass.into(),
        ]);
        for p in &c.checkpoints {
            cps.push(vec![c.lambda.into(), p.t.into(), p.log_ekov.into(), p.margin.into()]);
        }
    }
    (main, cps)
}

/// Window feasibility per frequency; infeasible rows carry the reason.
pub fn window_table(rows: &[ConvergenceRow]) -> Table {
    let mut t = Table::new(
        "windows",
        &["lambda", "feasible", "gamma", "a", "b", "omega_l", "na", "nb", "phi", "reason"],
    );
    for r in rows {
        let row = match &r.window {
            Some(w) => vec![
                r.lambda.into(),
                true.into(),
                w.gamma.into(),
                w.a.into(),
                w.b.into(),
                w.omega_l.into(),
                w.na.into(),
                w.nb.into(),
                w.phi().into(),
                "".into(),
            ],
            None => vec![
                r.lambda.into(),
                false.into(),
                f64::NAN.into(),
                f64::NAN.into(),
                f64::NAN.into(),
                f64::NAN.into(),
                0u64.into(),
                0u64.into(),
                f64::NAN.into(),
                r.reason.clone().unwrap_or_default().into(),
            ],
        };
        t.push(row);
    }
    t
}

pub fn convergence_table(rows: &[ConvergenceRow]) -> Table {
    let mut t = Table::new(
        "convergence",
        &["lambda", "feasible", "membership_pass", "d1_ratio", "d2_ratio", "distance", "sup_gap", "sup_gap_bound"],
    );
    for r in rows {
        let (d1, d2) = r.membership.as_ref().map_or((f64::NAN, None), |m| (m.d1_ratio, m.d2_ratio));
        t.push(vec![
            r.lambda.into(),
            r.feasible.into(),
            r.pass().into(),
            d1.into(),
            d2.into(),
            r.distance.into(),
            r.sup_gap.into(),
            r.sup_gap_bound.into(),
        ]);
    }
    t
}

pub fn membership_table(name: &str, reports: &[(String, MembershipReport)]) -> Table {
    let mut t = Table::new(
        name,
        &[
            "speed", "pass", "points", "min_c", "min_c_at", "max_c", "max_c_at", "d1_ratio", "d1_at", "d2_ratio", "d2_at",
        ],
    );
    for (label, m) in reports {
        t.push(vec![
            label.clone().into(),
            m.pass.into(),
            m.points.into(),
            m.min_c.into(),
            m.min_c_at.into(),
            m.max_c.into(),
            m.max_c_at.into(),
            m.d1_ratio.into(),
            m.d1_at.into(),
            m.d2_ratio.into(),
            m.d2_at.into(),
        ]);
    }
    t
}

/// `t,c,c1[,c2]` on `grid`.
pub fn speed_table(name: &str, c: &PropagationSpeed, grid: &[f64]) -> Result<Table> {
    let second = c.has_second_derivative();
    let mut t = Table::new(name, if second { &["t", "c", "c1", "c2"] } else { &["t", "c", "c1"] });
    for &s in grid {
        let j = c.jet(s)?;
        let mut row = vec![s.into(), j.c.into(), j.c1.into()];
        if second {
            row.push(j.c2.into());
        }
        t.push(row);
    }
    Ok(t)
}

pub fn density_table(rows: &[DensityRow]) -> Table {
    let mut t = Table::new("density", &["delta", "pass", "distance", "gamma_delta", "blend_ratio"]);
    for r in rows {
        t.push(vec![r.delta.into(), r.pass.into(), r.distance.into(), r.gamma_delta.into(), r.blend_ratio.into()]);
    }
    t
}

/// `n, sup deviation, ratio to the previous n`.
pub fn dependence_table(ns: &[u32], deviations: &[f64]) -> Table {
    let mut t = Table::new("dependence", &["n", "sup_deviation", "ratio"]);
    for (i, (&n, &d)) in ns.iter().zip(deviations).enumerate() {
        let ratio = if i == 0 { f64::NAN } else { d / deviations[i - 1] };
        t.push(vec![u64::from(n).into(), d.into(), ratio.into()]);
    }
    t
}

pub fn stage_table(stages: &[Stage]) -> Table {
    let mut t = Table::new(
        "stages",
        &[
            "stage",
            "lambda",
            "gamma",
            "a",
            "b",
            "omega_l",
            "attempts",
            "max_change",
            "membership_pass",
            "d1_ratio",
            "min_margin",
        ],
    );
    for s in stages {
        let min_margin = s.certificates.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
        t.push(vec![
            s.index.into(),
            s.lambda.into(),
            s.window.gamma.into(),
            s.window.a.into(),
            s.window.b.into(),
            s.window.omega_l.into(),
            s.attempts.into(),
            s.max_change.into(),
            s.membership.pass.into(),
            s.membership.d1_ratio.into(),
            min_margin.into(),
        ]);
    }
    t
}

/// Every stage's certificates, tagged by stage.
pub fn stage_certificate_table(stages: &[Stage]) -> Table {
    let mut cols = vec!["stage"];
    cols.extend(CERTIFICATE_COLUMNS);
    let mut t = Table::new("stage_certificates", &cols);
    for s in stages {
        let (main, _) = certificate_tables(&s.certificates);
        for row in main.rows {
            let mut r = vec![Cell::from(s.index)];
            r.extend(row);
            t.push(r);
        }
    }
    t
}

pub fn sobolev_tables(report: &SobolevReport) -> [Table; 3] {
    let mut rows = Table::new("sobolev", &["beta", "t", "stage", "lambda", "phi", "log_term", "running_max"]);
    for r in &report.rows {
        rows.push(vec![
            r.beta.into(),
            r.t.into(),
            r.stage.into(),
            r.lambda.into(),
            r.phi.into(),
            r.log_term.into(),
            r.running_max.into(),
        ]);
    }
    let mut sums =
        Table::new("sobolev_summary", &["beta", "t", "max_nondecreasing", "terms_nondecreasing", "insufficient_range"]);
    for s in &report.summaries {
        sums.push(vec![
            s.beta.into(),
            s.t.into(),
            s.max_nondecreasing.into(),
            s.terms_nondecreasing.into(),
            s.insufficient_range.into(),
        ]);
    }
    let mut data = Table::new("data_regularity", &["alpha", "lambda", "log_value", "holds"]);
    for d in &report.data_regularity {
        data.push(vec![d.alpha.into(), d.lambda.into(), d.log_value.into(), d.holds.into()]);
    }
    [rows, sums, data]
}
