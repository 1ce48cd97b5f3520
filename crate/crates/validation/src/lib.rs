//! Pass/fail bookkeeping for the acceptance suite.
//!
//! Each criterion collects named checks and prints a single summary line
//! straight to the process stdout, so the line shows up even when the test
//! harness captures output.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Duration;

#[derive(Clone, Debug, PartialEq)]
struct Check {
    label: String,
    pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    id: u32,
    title: &'static str,
    checks: Vec<Check>,
}

impl Report {
    pub fn new(id: u32, title: &'static str) -> Self {
        Report { id, title, checks: Vec::new() }
    }

    pub fn check(&mut self, label: impl Into<String>, pass: bool) -> &mut Self {
        self.checks.push(Check { label: label.into(), pass });
        self
    }

    /// `|got - want| <= tol`.
    pub fn within(&mut self, label: &str, got: f64, want: f64, tol: f64) -> &mut Self {
        self.check(format!("{label}={got:.6e} (want {want:.6e} +/- {tol:.3e})"), (got - want).abs() <= tol)
    }

    pub fn below(&mut self, label: &str, got: f64, limit: f64) -> &mut Self {
        self.check(format!("{label}={got:.3e} (< {limit:.3e})"), got < limit)
    }

    pub fn at_most(&mut self, label: &str, got: f64, limit: f64) -> &mut Self {
        self.check(format!("{label}={got:.4} (<= {limit:.4})"), got <= limit)
    }

    pub fn at_least(&mut self, label: &str, got: f64, floor: f64) -> &mut Self {
        self.check(format!("{label}={got:.4} (>= {floor:.4})"), got >= floor)
    }

    pub fn runtime(&mut self, took: Duration, budget: Duration) -> &mut Self {
        self.check(format!("runtime={:.2}s (< {}s)", took.as_secs_f64(), budget.as_secs()), took < budget)
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn line(&self) -> String {
        let mut s = format!(
            "acceptance criterion {:>2} {} {}:",
            self.id,
            if self.passed() { "PASS" } else { "FAIL" },
            self.title
        );
        for c in &self.checks {
            let _ = write!(s, " [{}{}]", if c.pass { "" } else { "MISS " }, c.label);
        }
        s
    }

    /// Prints the summary line and panics if any check failed.
    pub fn finish(&self) {
        let line = self.line();
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
        assert!(self.passed(), "{line}");
    }
}
