use serde::{Deserialize, Serialize};

use super::network::{Mode, Model, Sample};
use crate::autodiff::Tape;
use crate::error::Result;

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter name, relative error)` per parameter group.
    pub groups: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn group<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a (String, f64)> + 'a {
        self.groups.iter().filter(move |(n, _)| n.starts_with(prefix))
    }
}

fn loss(model: &Model, samples: &[&Sample]) -> Result<f64> {
    let batch = model.make_batch(samples)?;
    let mut tape = Tape::new();
    let fw = model.forward(&mut tape, &batch, Mode::Eval)?;
    let l = tape.softmax_cross_entropy(fw.logits, &batch.labels);
    Ok(tape.value(l).data()[0])
}

/// Checks the cross-entropy gradient of every parameter group in evaluation mode
/// (no dropout, frozen batch-norm). At most `max_entries` evenly spaced entries
/// are perturbed per group. The error of a group is
/// `max |analytic − numeric| / max(‖analytic‖∞, ‖numeric‖∞)` over the checked
/// entries, or the absolute difference when both gradients vanish.
pub fn gradient_check(model: &Model, samples: &[&Sample], step: f64, max_entries: usize) -> Result<GradCheckReport> {
    let batch = model.make_batch(samples)?;
    let mut tape = Tape::new();
    let fw = model.forward(&mut tape, &batch, Mode::Eval)?;
    let l = tape.softmax_cross_entropy(fw.logits, &batch.labels);
    let grads = tape.backward(l);

    let mut probe = model.clone();
    let mut groups = Vec::new();
    for (gi, entry) in model.params.entries.iter().enumerate() {
        let analytic = grads.get_or_zeros(fw.param_vars[gi], entry.tensor.shape());
        let n = entry.tensor.len();
        let stride = n.div_ceil(max_entries.max(1)).max(1);
        let mut worst_abs = 0.0f64;
        let (mut amax, mut nmax) = (0.0f64, 0.0f64);
        for e in (0..n).step_by(stride) {
            let orig = entry.tensor.data()[e];
            probe.params.entries[gi].tensor.data_mut()[e] = orig + step;
            let plus = loss(&probe, samples)?;
            probe.params.entries[gi].tensor.data_mut()[e] = orig - step;
            let minus = loss(&probe, samples)?;
            probe.params.entries[gi].tensor.data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[e];
            worst_abs = worst_abs.max((a - numeric).abs());
            amax = amax.max(a.abs());
            nmax = nmax.max(numeric.abs());
        }
        let scale = amax.max(nmax);
        let err = if scale > 1e-10 { worst_abs / scale } else { worst_abs };
        groups.push((entry.name.clone(), err));
    }
    let max_rel_error = groups.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, groups })
}
