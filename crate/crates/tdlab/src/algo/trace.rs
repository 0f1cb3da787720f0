use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::env::Policy;
use crate::error::Result;

/// Metrics of one training iteration. The cheap fields are always present;
/// the expensive ones are filled on the metric stride (every iteration in
/// population mode, every 10th by default in stochastic mode).
#[derive(Debug, Clone, Default)]
pub struct TraceRow {
    pub t: usize,
    /// Temporal-difference residual used by the update at this step.
    pub resid: f64,
    /// Norm of the applied update direction (stochastic g or population mean).
    pub update_norm: f64,
    /// `||W(t) - W*||` against the fixed-point oracle.
    pub dist_to_fixed_point: Option<f64>,
    /// `E_mu[(Q0(.;W(t)) - Q*)^2]`: linearized-value gap to the oracle.
    pub q0_gap: Option<f64>,
    /// `E_mu[(Q(.;W(t)) - Q*)^2]`: true-network gap to the oracle.
    pub true_gap: Option<f64>,
    /// `E_mu[(Q - Q0)^2(.;W(t))]`: local linearization error.
    pub lin_err: Option<f64>,
    /// First and second moments of the Bellman residual over the tuple law.
    pub resid_mean: Option<f64>,
    pub resid_second: Option<f64>,
    /// mu-weighted activation flip fraction relative to initialization.
    pub flip_fraction: Option<f64>,
    pub gbar_norm: Option<f64>,
    pub gbar0_norm: Option<f64>,
    /// `||gbar - gbar0||`: population semigradient linearization gap.
    pub gbar_gap: Option<f64>,
    /// One-point monotonicity inner product and its lower bound.
    pub mono_lhs: Option<f64>,
    pub mono_rhs: Option<f64>,
    /// Descent inequality sides, measured around this step.
    pub descent_lhs: Option<f64>,
    pub descent_rhs: Option<f64>,
    /// Exact variance of the stochastic semigradient at this iterate.
    pub var_g: Option<f64>,
}

/// Pass/fail bookkeeping for the per-iteration assertion suites.
#[derive(Debug, Clone, Default, Serialize)]
pub struct AssertionSummary {
    pub ball_checked: usize,
    pub ball_failures: usize,
    /// Most negative margin `radius - ||W - W0||` seen after projection.
    pub ball_worst_margin: f64,
    pub mono_checked: usize,
    pub mono_failures: usize,
    pub mono_worst_slack: f64,
    pub descent_checked: usize,
    pub descent_failures: usize,
    pub descent_worst_slack: f64,
    pub variance_checked: usize,
    pub variance_failures: usize,
    pub variance_worst_ratio: f64,
}

impl AssertionSummary {
    pub fn all_pass(&self) -> bool {
        self.ball_failures == 0
            && self.mono_failures == 0
            && self.descent_failures == 0
            && self.variance_failures == 0
    }
}

/// Full record of one run: per-iteration rows plus the averaged output.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    /// Average of the iterates `W(0), ..., W(T-1)`.
    pub w_bar: Vec<f64>,
    /// Final iterate `W(T-1)`.
    pub w_final: Vec<f64>,
    /// Output value table `Q(.;w_bar)` over all state-action pairs.
    pub q_out: Vec<f64>,
    /// `E_mu[(Q_out - Q*)^2]` when an oracle was attached.
    pub final_q0_gap: Option<f64>,
    /// Stepsize actually used.
    pub eta: f64,
    pub seed: u64,
    /// Burn-in actually performed (Markov mode only).
    pub burn_in: Option<usize>,
    /// Lemma-2 style variance ceiling measured at initialization
    /// (`12 E_mu[Q(x;W0)^2] + 12 B^2 + 3 rbar^2`).
    pub var_bound: Option<f64>,
    pub assertions: AssertionSummary,
    /// Boltzmann output policy (actor-critic runs only).
    pub pi_out: Option<Policy>,
    /// Expected return of `pi_out` (actor-critic runs only).
    pub j_out: Option<f64>,
}

impl RunTrace {
    /// Largest sampled value of a heavy metric across the run.
    pub fn max_metric(&self, pick: impl Fn(&TraceRow) -> Option<f64>) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(pick)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}

pub const TRACE_CSV_COLUMNS: &[&str] = &[
    "seed",
    "t",
    "resid",
    "update_norm",
    "dist_to_fixed_point",
    "q0_gap",
    "true_gap",
    "lin_err",
    "resid_mean",
    "resid_second",
    "flip_fraction",
    "gbar_norm",
    "gbar0_norm",
    "gbar_gap",
    "mono_lhs",
    "mono_rhs",
    "descent_lhs",
    "descent_rhs",
    "var_g",
];

fn push_field(line: &mut String, v: Option<f64>) {
    line.push(',');
    if let Some(v) = v {
        line.push_str(&format!("{v:.17e}"));
    }
}

/// Append one run to a CSV stream, one row per iteration. The column schema
/// is `TRACE_CSV_COLUMNS`; absent metrics are empty fields.
pub fn write_trace_rows<W: Write>(out: &mut W, seed: u64, rows: &[TraceRow]) -> Result<()> {
    let mut buf = String::new();
    for row in rows {
        buf.clear();
        buf.push_str(&format!("{seed},{}", row.t));
        push_field(&mut buf, Some(row.resid));
        push_field(&mut buf, Some(row.update_norm));
        push_field(&mut buf, row.dist_to_fixed_point);
        push_field(&mut buf, row.q0_gap);
        push_field(&mut buf, row.true_gap);
        push_field(&mut buf, row.lin_err);
        push_field(&mut buf, row.resid_mean);
        push_field(&mut buf, row.resid_second);
        push_field(&mut buf, row.flip_fraction);
        push_field(&mut buf, row.gbar_norm);
        push_field(&mut buf, row.gbar0_norm);
        push_field(&mut buf, row.gbar_gap);
        push_field(&mut buf, row.mono_lhs);
        push_field(&mut buf, row.mono_rhs);
        push_field(&mut buf, row.descent_lhs);
        push_field(&mut buf, row.descent_rhs);
        push_field(&mut buf, row.var_g);
        buf.push('\n');
        out.write_all(buf.as_bytes())?;
    }
    Ok(())
}

/// Write a full trace CSV with header.
pub fn write_trace_csv(path: &Path, seed: u64, trace: &RunTrace) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{}", TRACE_CSV_COLUMNS.join(","))?;
    write_trace_rows(&mut file, seed, &trace.rows)?;
    Ok(())
}
