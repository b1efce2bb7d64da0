//! Finite-difference verification of taped gradients.
//!
//! Central differences with step 1e-5 balance truncation against roundoff at
//! 64-bit precision. Callers are expected to pick evaluation points away from
//! the kinks of relu6 and the quantizer thresholds.

use crate::tape::{Tape, TapeOptions, Var};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// Outcome of checking one scalar-valued tape against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Per-input worst relative error, aligned with the point list.
    pub per_input: Vec<InputCheck>,
    pub tolerance: f64,
    /// Set when the tape quantizes and no surrogate was requested; finite
    /// differences are meaningless through a piecewise-constant node.
    pub skipped: Option<&'static str>,
}

#[derive(Debug, Clone)]
pub struct InputCheck {
    pub max_relative_error: f64,
    pub worst_coordinate: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.skipped.is_none()
            && self
                .per_input
                .iter()
                .all(|c| c.max_relative_error < self.tolerance)
    }

    pub fn max_error(&self) -> f64 {
        self.per_input
            .iter()
            .map(|c| c.max_relative_error)
            .fold(0.0, f64::max)
    }
}

/// Checks `d out / d point_i` for a scalar-valued function of the points.
///
/// `build` must record the function onto the given tape, returning the scalar
/// output; it is called once per perturbed evaluation. When the recorded tape
/// contains quantize nodes the check is skipped unless `quantize_as_identity`
/// is set, in which case both the analytic and numeric sides run against the
/// straight-through surrogate.
pub fn grad_check<F>(
    build: F,
    points: &[Tensor],
    tolerance: f64,
    quantize_as_identity: bool,
) -> GradCheckReport
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let options = TapeOptions { quantize_identity: quantize_as_identity };
    let eval = |pts: &[Tensor]| -> (Tape, Vec<Var>, Var) {
        let mut tape = Tape::with_options(options);
        let vars: Vec<Var> = pts.iter().map(|p| tape.input(p.clone())).collect();
        let out = build(&mut tape, &vars);
        (tape, vars, out)
    };

    let (tape, vars, out) = eval(points);
    if tape.contains_quantize() && !quantize_as_identity {
        return GradCheckReport {
            per_input: Vec::new(),
            tolerance,
            skipped: Some("non-differentiable, straight-through"),
        };
    }
    let grads = tape
        .backward_scalar(out)
        .expect("grad_check output must be scalar");

    let mut per_input = Vec::with_capacity(points.len());
    for (pi, point) in points.iter().enumerate() {
        let analytic = grads.get_or_zeros(&tape, vars[pi]);
        let mut worst = 0.0f64;
        let mut worst_coord = 0;
        for j in 0..point.len() {
            let mut plus = points.to_vec();
            plus[pi].data_mut()[j] += FD_STEP;
            let mut minus = points.to_vec();
            minus[pi].data_mut()[j] -= FD_STEP;
            let (tp, _, op) = eval(&plus);
            let (tm, _, om) = eval(&minus);
            let numeric = (tp.value(op).item() - tm.value(om).item()) / (2.0 * FD_STEP);
            let a = analytic.data()[j];
            let denom = a.abs().max(numeric.abs()).max(1.0);
            let rel = (a - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
                worst_coord = j;
            }
        }
        per_input.push(InputCheck { max_relative_error: worst, worst_coordinate: worst_coord });
    }
    GradCheckReport { per_input, tolerance, skipped: None }
}
