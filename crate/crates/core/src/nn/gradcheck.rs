//! Finite-difference verification of the ranking-loss gradients.

use super::model::batch_loss;
use super::{GraphBatch, GraphInput, Grads, Model, NnError, Tape};

/// A batch to differentiate: graph `i` pairs with query `i`; its negative
/// description is `negatives[i]`.
#[derive(Debug, Clone)]
pub struct Sample {
    pub graphs: Vec<GraphInput>,
    pub queries: Vec<Vec<u32>>,
    pub negatives: Vec<usize>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(tensor, row, col)` of the worst entry.
    pub worst: Option<(String, usize, usize)>,
    pub checked: usize,
    pub loss: f64,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// entries whose true gradient is (near) zero from dividing round-off by
/// round-off.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

pub const RELATIVE_FLOOR: f64 = 1e-6;

fn loss(model: &Model<f64>, s: &Sample) -> Result<f64, NnError> {
    let refs: Vec<&GraphInput> = s.graphs.iter().collect();
    let batch = GraphBatch::new(&refs);
    let mut tape = Tape::new(&model.params);
    let l = batch_loss(&mut tape, model, &batch, &s.queries, &s.negatives, s.margin)?;
    Ok(tape.value(l)[[0, 0]])
}

/// Analytic gradients of the sample's loss.
pub fn analytic_gradients(model: &Model<f64>, s: &Sample) -> Result<(f64, Grads<f64>), NnError> {
    let refs: Vec<&GraphInput> = s.graphs.iter().collect();
    let batch = GraphBatch::new(&refs);
    let mut tape = Tape::new(&model.params);
    let l = batch_loss(&mut tape, model, &batch, &s.queries, &s.negatives, s.margin)?;
    Ok((tape.value(l)[[0, 0]], tape.backward(l)))
}

/// Compares analytic gradients to central differences with step `eps`
/// over every parameter entry. `tamper` may alter the analytic gradients
/// first, which is how the harness checks that it can fail.
pub fn gradient_check_with(
    model: &Model<f64>,
    s: &Sample,
    eps: f64,
    tamper: impl FnOnce(&mut Grads<f64>),
) -> Result<GradCheckReport, NnError> {
    let (l0, mut grads) = analytic_gradients(model, s)?;
    tamper(&mut grads);
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
        loss: l0,
    };
    for pi in 0..model.params.len() {
        let (rows, cols) = model.params.tensors[pi].dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = probe.params.tensors[pi][[r, c]];
                probe.params.tensors[pi][[r, c]] = orig + eps;
                let up = loss(&probe, s)?;
                probe.params.tensors[pi][[r, c]] = orig - eps;
                let down = loss(&probe, s)?;
                probe.params.tensors[pi][[r, c]] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads.get(pi).map_or(0.0, |g| g[[r, c]]);
                let err = relative_error(analytic, numeric, RELATIVE_FLOOR);
                report.checked += 1;
                if err > report.max_relative_error {
                    report.max_relative_error = err;
                    report.worst = Some((model.params.names[pi].clone(), r, c));
                }
            }
        }
    }
    Ok(report)
}

pub fn gradient_check(model: &Model<f64>, s: &Sample, eps: f64) -> Result<GradCheckReport, NnError> {
    gradient_check_with(model, s, eps, |_| {})
}
