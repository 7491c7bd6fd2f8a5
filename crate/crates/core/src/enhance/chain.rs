use super::{bias_correct, compute_mask, histogram_match, BiasField, BinaryMask, ReferenceHistogram};
use super::{DEFAULT_CONV_TOL, DEFAULT_LEVELS, DEFAULT_MATCH_POINTS, DEFAULT_MAX_ITERS};
use crate::volume::Volume;
use crate::{Outcome, Result};

/// Output of the full enhancement chain.
#[derive(Debug, Clone)]
pub struct Enhanced {
    pub volume: Volume,
    pub mask: BinaryMask,
    pub field: BiasField,
    pub bias_iterations: usize,
    pub bias_converged: bool,
    pub bias_shift: f64,
}

/// Histogram matching, mask construction and bias correction with the
/// default parameters.
pub fn enhance_volume(v: &Volume, reference: &ReferenceHistogram) -> Result<Outcome<Enhanced>> {
    let matched = histogram_match(v, reference, DEFAULT_LEVELS, DEFAULT_MATCH_POINTS)?;
    let mut warnings = matched.warnings;
    let mask = compute_mask(&matched.value)?;
    let bc = bias_correct(&matched.value, &mask, DEFAULT_MAX_ITERS, DEFAULT_CONV_TOL)?;
    if !bc.converged {
        warnings.push(format!("bias correction stopped after {} iterations without converging", bc.iterations));
    }
    Ok(Outcome::with_warnings(
        Enhanced {
            volume: bc.corrected,
            mask,
            field: bc.field,
            bias_iterations: bc.iterations,
            bias_converged: bc.converged,
            bias_shift: bc.shift,
        },
        warnings,
    ))
}
