//! CSV emitters. Comma-separated, `.` decimal point, comment lines start
//! with `#`. Floats use Rust's shortest round-trip formatting, so identical
//! runs produce byte-identical rows.

use std::fmt::Write as _;

use crate::analysis::SweepRow;
use crate::propagator::ProbabilityTrace;
use crate::theory::TheoryRow;

/// `# key = value` lines echoing a run's configuration.
#[derive(Debug, Clone, Default)]
pub struct Header {
    entries: Vec<(String, String)>,
}

impl Header {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_owned(), value.to_string()));
    }

    fn write(&self, out: &mut String) {
        for (k, v) in &self.entries {
            let _ = writeln!(out, "# {k} = {v}");
        }
    }
}

/// `t,p_mean,p_stderr[,p_noiseless]`, one row per grid sample.
pub fn trace_csv(header: &Header, trace: &ProbabilityTrace, noiseless: Option<&[f64]>) -> String {
    let mut out = String::new();
    header.write(&mut out);
    out.push_str("t,p_mean,p_stderr");
    if noiseless.is_some() {
        out.push_str(",p_noiseless");
    }
    out.push('\n');
    for (k, t) in trace.times().enumerate() {
        let _ = write!(out, "{t},{},{}", trace.p[k], trace.stderr[k]);
        if let Some(reference) = noiseless {
            let _ = write!(out, ",{}", reference[k]);
        }
        out.push('\n');
    }
    out
}

pub const SWEEP_COLUMNS: &str = "N,mu,nu,gamma,p_succ,p_stderr,t_max,avg_T,M,seed";

pub fn sweep_header_line() -> String {
    format!("{SWEEP_COLUMNS}\n")
}

pub fn sweep_row(row: &SweepRow) -> String {
    let m = &row.metrics;
    format!(
        "{},{},{},{},{},{},{},{},{},{}\n",
        row.point.n,
        row.point.rate,
        row.point.nu,
        row.gamma,
        m.p_succ,
        m.stderr_p,
        m.t_max,
        m.avg_running_time,
        m.trajectories,
        m.seed
    )
}

pub fn sweep_csv(header: &Header, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    header.write(&mut out);
    out.push_str(&sweep_header_line());
    for row in rows {
        out.push_str(&sweep_row(row));
    }
    out
}

pub const THEORY_COLUMNS: &str = "N,E0_exact,E1_exact,gap,overlap_lambda0,one_minus_psucc_pred,h_red_check";

pub fn theory_csv(header: &Header, rows: &[TheoryRow]) -> String {
    let mut out = String::new();
    header.write(&mut out);
    let _ = writeln!(out, "{THEORY_COLUMNS}");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n,
            r.e0_exact,
            r.e1_exact,
            r.gap,
            r.overlap_lambda0,
            r.one_minus_psucc_pred,
            if r.h_red_check { "pass" } else { "fail" }
        );
    }
    out
}

/// Splits CSV text into data rows, skipping comments and the column line.
pub fn data_rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| l.split(',').collect())
}
