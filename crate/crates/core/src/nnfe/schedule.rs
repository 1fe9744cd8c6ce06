use super::{NnError, TrainConfig};

/// Starting learning rate is `max_lr / INITIAL_DIV`.
pub const INITIAL_DIV: f64 = 25.0;
/// Final learning rate is `max_lr / FINAL_DIV`.
pub const FINAL_DIV: f64 = 2500.0;

/// One-cycle learning rate at `step` of `epochs · steps_per_epoch`.
///
/// Linear warm-up from `max_lr/25` to `max_lr` over the first 45% of steps,
/// linear cool-down back to `max_lr/25` over the next 45%, then linear
/// annealing to `max_lr/2500` ending exactly on the last step.
pub fn one_cycle_lr(step: usize, config: &TrainConfig) -> Result<f64, NnError> {
    let total = config.total_steps();
    if step >= total {
        return Err(NnError::StepOutOfRange { step, total });
    }
    let max = config.max_lr;
    let initial = max / INITIAL_DIV;
    let last = total - 1;
    let peak = (0.45 * total as f64).round() as usize;
    let valley = (0.9 * total as f64).round() as usize;

    let lerp = |from: f64, to: f64, at: usize, start: usize, end: usize| {
        if end <= start {
            to
        } else {
            from + (to - from) * (at - start) as f64 / (end - start) as f64
        }
    };

    Ok(if step <= peak.min(last) {
        lerp(initial, max, step, 0, peak)
    } else if step <= valley.min(last) {
        lerp(max, initial, step, peak, valley)
    } else {
        lerp(initial, max / FINAL_DIV, step, valley, last)
    })
}
