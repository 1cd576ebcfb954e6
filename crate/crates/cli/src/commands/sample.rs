use quench::evolve::{ed_state, lattice_sites};
use quench::model::Schedule;
use quench::observables::{correlators_from_state, sample_snapshots};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{fmt, output_path, physics_meta, Output};
use crate::config::{RunConfig, ScheduleConfig};
use crate::error::CliError;

/// End-of-schedule state of the configured grid; a sudden schedule must name one detuning.
fn final_schedule(cfg: &RunConfig) -> Result<Schedule, CliError> {
    Ok(match cfg.require_schedule()? {
        ScheduleConfig::Sudden { pulse, detunings } => {
            if detunings.len() != 1 {
                return Err(CliError::Config {
                    key: "schedule.detunings".into(),
                    line: None,
                    message: format!("sampling needs exactly one detuning, got {}", detunings.len()),
                });
            }
            pulse.schedule(detunings[0])?
        }
        r @ ScheduleConfig::Ramp { .. } => r.ramp()?,
    })
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let geom = cfg.require_geometry()?;
    let inter = cfg.require_interaction()?;
    let shots = cfg.shots.ok_or_else(|| RunConfig::missing("sampling"))?;
    let schedule = final_schedule(cfg)?;
    let psi = ed_state(geom, inter, cfg.shift_mode, &schedule, &cfg.solver.evolve)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut set = sample_snapshots(&psi, geom, shots, &cfg.detection, &mut rng)?;
    let mut out = Output::new("sample", cfg);
    physics_meta(&mut out, cfg);
    out.meta("shots", shots)
        .meta("schedule_duration", schedule.duration())
        .meta("rydberg_removal_eff", cfg.detection.rydberg_removal_eff)
        .meta("filling", cfg.detection.filling)
        .meta("ground_detection_eff", cfg.detection.ground_detection_eff);
    for (k, v) in out.header_text().lines().filter_map(|l| l.strip_prefix("# ")?.split_once('=')) {
        set.metadata.insert(k.to_string(), v.to_string());
    }
    let snap_path = output_path(cfg, "snapshots.csv")?;
    std::fs::write(&snap_path, set.to_csv())?;

    // exact correlators of the sampled state and their expected imaged values
    let map = correlators_from_state(&psi, &lattice_sites(geom), cfg.analysis.window)?;
    let d = cfg.detection;
    let mut onsite_detected = 0.0;
    for i in 0..psi.n_sites() {
        let p = d.expected_ground(psi.expectation_sz(i)? + 0.5);
        onsite_detected += 4.0 * p * (1.0 - p);
    }
    onsite_detected /= psi.n_sites() as f64;
    let rows: Vec<Vec<String>> = map
        .entries()
        .iter()
        .map(|e| {
            let det = if e.dx == 0 && e.dy == 0 { onsite_detected } else { e.value * d.attenuation() };
            vec![e.dx.to_string(), e.dy.to_string(), fmt(e.value), fmt(det), e.n.to_string()]
        })
        .collect();
    let corr_path = output_path(cfg, "state_correlations.csv")?;
    out.write_csv(&corr_path, &["dx", "dy", "value", "detected", "n"], &rows)?;
    println!("{}\n{}", snap_path.display(), corr_path.display());
    Ok(())
}
