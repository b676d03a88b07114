//! CSV tables and run reports. Numbers are written with 17 significant
//! digits, `.` as decimal point and `\n` line endings, so repeated runs give
//! byte-identical files.

use delaypmp_core::Mesh;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Table {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: impl IntoIterator<Item = f64>) {
        self.push(row.into_iter().map(Cell::Num).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            let cells: Vec<String> = r
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => fmt_num(*v),
                    Cell::Text(s) => s.clone(),
                })
                .collect();
            w.write_record(&cells).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// Names `prefix1..prefixN`.
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeshInfo {
    pub horizon: f64,
    pub delay: f64,
    pub h: f64,
    pub steps: usize,
    pub delay_steps: usize,
}

impl From<&Mesh> for MeshInfo {
    fn from(m: &Mesh) -> Self {
        MeshInfo { horizon: m.horizon(), delay: m.delay(), h: m.h(), steps: m.steps(), delay_steps: m.delay_steps() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `pass`, `fail`, `n/a` or `info`.
    pub verdict: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub problem: String,
    pub mesh: MeshInfo,
    pub checks: Vec<CheckLine>,
    pub notes: Vec<String>,
    pub outputs: Vec<String>,
    /// Wall-clock seconds; the only field that differs between runs.
    pub timing_s: f64,
}

impl RunReport {
    pub fn new(command: &str, problem: &str, mesh: &Mesh) -> RunReport {
        RunReport {
            command: command.to_string(),
            problem: problem.to_string(),
            mesh: mesh.into(),
            checks: Vec::new(),
            notes: Vec::new(),
            outputs: Vec::new(),
            timing_s: 0.0,
        }
    }

    pub fn check(&mut self, name: &str, value: f64, tolerance: f64, verdict: &str) {
        self.checks.push(CheckLine { name: name.to_string(), value, tolerance, verdict: verdict.to_string() });
    }

    /// A check passing when `value <= tolerance`.
    pub fn check_at_most(&mut self, name: &str, value: f64, tolerance: f64) -> bool {
        let ok = value <= tolerance;
        self.check(name, value, tolerance, if ok { "pass" } else { "fail" });
        ok
    }

    pub fn info(&mut self, name: &str, value: f64) {
        self.check(name, value, f64::NAN, "info");
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn render(&self) -> String {
        let m = &self.mesh;
        let mut s = format!(
            "command: {}\nproblem: {}\nmesh: T = {}, r = {}, h = {} ({} steps, {} per delay)\n",
            self.command, self.problem, m.horizon, m.delay, m.h, m.steps, m.delay_steps
        );
        for c in &self.checks {
            let tol = if c.tolerance.is_nan() { "-".to_string() } else { format!("{:.4e}", c.tolerance) };
            s.push_str(&format!("  {:<24} {:>14.6e} {:>12} {}\n", c.name, c.value, tol, c.verdict));
        }
        for n in &self.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        for o in &self.outputs {
            s.push_str(&format!("wrote {o}\n"));
        }
        s.push_str(&format!("time: {:.3} s\n", self.timing_s));
        s
    }

    pub fn to_json(&self) -> String {
        // NaN tolerances (info lines) become null.
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_seventeen_digits_and_newlines() {
        let mut t = Table::new(["t", "x1"]);
        t.push_nums([0.1, -1.0 / 3.0]);
        t.push(vec![Cell::Num(1.0), "exact".into()]);
        assert_eq!(t.to_csv(), "t,x1\n1.0000000000000001e-1,-3.3333333333333331e-1\n1.0000000000000000e0,exact\n");
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
    }
}
