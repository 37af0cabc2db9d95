use crate::model::{window_align, BaseRecord, RecordFlags, Resolution, PARAM_COUNT};

use super::PqError;

/// Value indices aggregated as square-mean-root (RMS magnitudes).
const RMS_FIELDS: [usize; 6] = [1, 2, 3, 4, 5, 6];

/// Combines records of one point and one resolution that fall in the same
/// `target` window into a single record at `target`.
///
/// RMS voltages and currents aggregate as `sqrt(mean(x²))`, every other value
/// as the arithmetic mean. Flags are the union of the inputs, with
/// `INCOMPLETE` added when fewer inputs arrived than the window holds.
pub fn aggregate_window(inputs: &[BaseRecord], target: Resolution) -> Result<BaseRecord, PqError> {
    let first = inputs.first().ok_or(PqError::EmptyWindow)?;
    let (point_id, source) = (first.point_id, first.resolution);
    if !target.duration_ms().is_multiple_of(source.duration_ms()) {
        return Err(PqError::IncompatibleResolution);
    }
    let window = window_align(first.ts_ms, target);

    let mut sums = [0.0f64; PARAM_COUNT];
    let mut flags = RecordFlags::empty();
    for r in inputs {
        if r.point_id != point_id || r.resolution != source {
            return Err(PqError::MixedKeys);
        }
        if window_align(r.ts_ms, target) != window {
            return Err(PqError::OutOfWindow);
        }
        flags |= r.flags;
        for (i, v) in r.values().iter().enumerate() {
            sums[i] += if RMS_FIELDS.contains(&i) { v * v } else { *v };
        }
    }

    let n = inputs.len() as f64;
    let mut means = sums.map(|s| s / n);
    for i in RMS_FIELDS {
        means[i] = means[i].sqrt();
    }
    let expected = target.duration_ms() / source.duration_ms();
    if (inputs.len() as u64) < expected {
        flags |= RecordFlags::INCOMPLETE;
    }

    let mut out = BaseRecord::zeroed(point_id, window, target);
    out.flags = flags;
    out.set_values(&means);
    Ok(out)
}
