use gridmon_core::pq::{power_triplet, symmetrical_unbalance, Phasor};
use gridmon_core::{BaseRecord, RecordFlags, Resolution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::scenario::{InjectionKind, Scenario};

const PHASE_ANGLES: [f64; 3] = [0.0, -120.0, 120.0];
const LOAD_CURRENT_A: f64 = 10.0;
const LOAD_LAG_DEG: f64 = 25.0;

fn rng_for(seed: u64, point_id: u32, t_s: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&point_id.to_le_bytes());
    key[12..20].copy_from_slice(&t_s.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// One-second state of `point_id` at simulated second `t_s`: the R1S record
/// and its per-phase RMS voltages. Deterministic in (seed, point, t).
///
/// Panics if `point_id` is not a device of the scenario.
pub fn synthesize_base_record(scenario: &Scenario, point_id: u32, t_s: u64) -> (BaseRecord, [f64; 3]) {
    let spec = scenario.device(point_id).expect("point is part of the scenario");
    let sigma = spec.noise_sigma_pu;
    let mut rng = rng_for(scenario.seed, point_id, t_s);

    // fixed draw order keeps every field stable if another changes
    let noise = Normal::new(0.0, sigma).expect("sigma validated");
    let draws: [f64; 3] = std::array::from_fn(|_| noise.sample(&mut rng));
    let freq_jitter: f64 = rng.random_range(-0.01..=0.01);
    let thd: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.01..=0.03));

    let mut vrms = [1.0; 3];
    let mut forced = [false; 3];
    for inj in &scenario.injected {
        if inj.point_id != point_id || inj.kind == InjectionKind::LinkOutage || !inj.active_at(t_s) {
            continue;
        }
        for (k, v) in vrms.iter_mut().enumerate() {
            if inj.phase_mask & (1 << k) != 0 {
                *v = inj.depth_pu;
                forced[k] = true;
            }
        }
    }
    for k in 0..3 {
        if !forced[k] && sigma > 0.0 {
            vrms[k] = (1.0 + draws[k]).max(0.0);
        }
    }

    let mut r = BaseRecord::zeroed(point_id, scenario.record_ts(t_s), Resolution::R1S);
    r.flags = RecordFlags::empty();
    r.frequency_hz = if sigma > 0.0 { 50.0 + freq_jitter } else { 50.0 };
    r.vrms_pu = vrms;
    r.thd_v = thd;

    let v_ph: [(f64, f64); 3] = std::array::from_fn(|k| (vrms[k] * spec.nominal_voltage_v, PHASE_ANGLES[k]));
    let i_ph: [(f64, f64); 3] =
        std::array::from_fn(|k| (LOAD_CURRENT_A * vrms[k], PHASE_ANGLES[k] - LOAD_LAG_DEG));
    r.irms_a = std::array::from_fn(|k| i_ph[k].0);
    let pw = power_triplet(&v_ph, &i_ph);
    r.p_w = pw.p_w;
    r.q_var = pw.q_var;
    r.s_va = pw.s_va;

    let ph: [Phasor; 3] = std::array::from_fn(|k| Phasor::new(vrms[k], PHASE_ANGLES[k]));
    r.unbalance = symmetrical_unbalance(ph[0], ph[1], ph[2]).map_or(0.0, |s| s.unbalance);
    r.flicker_pst = 0.0;
    (r, vrms)
}
