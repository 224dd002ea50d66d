//! Finite-difference gradient checks over the primitive, block or model
//! suites, in 64-bit.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use tride_autodiff::suite::{primitive_cases, GradCase};
use tride_autodiff::{GradCheckOptions, PrimitiveKind};
use tride_core::gradcases::{block_cases, model_case};

use crate::error::{CliError, Result};

/// Relative-error threshold above which a case fails.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Scope {
    Primitives,
    Blocks,
    Model,
    All,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Primitives => "primitives",
            Scope::Blocks => "blocks",
            Scope::Model => "model",
            Scope::All => "all",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub name: String,
    pub kind: Option<PrimitiveKind>,
    pub max_rel_error: f64,
    pub coords: usize,
    pub elapsed: Duration,
    /// Set when the check itself could not run.
    pub error: Option<String>,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.max_rel_error <= TOLERANCE
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckSummary {
    pub results: Vec<CaseResult>,
    pub elapsed: Duration,
}

impl GradCheckSummary {
    pub fn failures(&self) -> impl Iterator<Item = &CaseResult> {
        self.results.iter().filter(|r| !r.passed())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            let status = if r.passed() { "PASS" } else { "FAIL" };
            let op = r.kind.map(|k| format!(" [op {k}]")).unwrap_or_default();
            match &r.error {
                Some(e) => s.push_str(&format!("{status} {}{op}: {e}\n", r.name)),
                None => s.push_str(&format!(
                    "{status} {}{op}: max rel err {:.2e} over {} coords ({:.2?})\n",
                    r.name, r.max_rel_error, r.coords, r.elapsed
                )),
            }
        }
        let failed = self.failures().count();
        s.push_str(&format!(
            "{} cases, {failed} failed, {:.1?} total\n",
            self.results.len(),
            self.elapsed
        ));
        s
    }

    /// `Err` naming every failing case (and its op) when anything failed.
    pub fn into_result(self) -> Result<Self> {
        let failed: Vec<String> = self
            .failures()
            .map(|r| match r.kind {
                Some(k) => format!("{} (op {k})", r.name),
                None => r.name.clone(),
            })
            .collect();
        if failed.is_empty() {
            Ok(self)
        } else {
            Err(CliError::GradCheck(failed.join(", ")))
        }
    }
}

fn cases(scope: Scope) -> Vec<(GradCase, GradCheckOptions)> {
    let plain = GradCheckOptions::default;
    // the whole model is too large to sweep exhaustively; sample a few
    // coordinates per input and widen the step for flat directions
    let sampled = || GradCheckOptions {
        max_coords_per_input: Some(3),
        scale_step: true,
        ..Default::default()
    };
    let mut out = Vec::new();
    if matches!(scope, Scope::Primitives | Scope::All) {
        out.extend(primitive_cases().into_iter().map(|c| (c, plain())));
    }
    if matches!(scope, Scope::Blocks | Scope::All) {
        out.extend(block_cases().into_iter().map(|c| (c, plain())));
    }
    if matches!(scope, Scope::Model | Scope::All) {
        out.push((model_case(), sampled()));
    }
    out
}

/// Runs every case in `scope`. `fault` corrupts the backward rule of one
/// primitive kind (a negative control for the checker itself).
pub fn run(scope: Scope, fault: Option<PrimitiveKind>) -> GradCheckSummary {
    let start = Instant::now();
    let results = cases(scope)
        .into_iter()
        .map(|(case, opts)| {
            let opts = GradCheckOptions { fault, ..opts };
            let t = Instant::now();
            let (max_rel_error, coords, error) = match case.run(&opts) {
                Ok(r) => (r.max_rel_error, r.coords_checked, None),
                Err(e) => (f64::INFINITY, 0, Some(e.to_string())),
            };
            CaseResult {
                name: case.name,
                kind: case.kind,
                max_rel_error,
                coords,
                elapsed: t.elapsed(),
                error,
            }
        })
        .collect();
    GradCheckSummary {
        results,
        elapsed: start.elapsed(),
    }
}

pub fn parse_fault(s: &str) -> Result<PrimitiveKind> {
    PrimitiveKind::from_str(s).map_err(|e| CliError::contract(e.to_string()))
}
