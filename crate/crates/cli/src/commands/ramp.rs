use quench::evolve::ed_checkpoints;
use quench::nlce::{capacity_warning, nlce_run, ClusterTable, NlceNode, NlceOptions, NLCE_MAX_ORDER};

use super::{fmt, output_path, physics_meta, Output};
use crate::config::{RunConfig, ScheduleConfig};
use crate::error::CliError;

const TARGETS: [(i32, i32); 3] = [(1, 0), (0, 1), (1, 1)];

/// Spread of the last three orders below which an expansion row counts as converged.
pub const NLCE_AGREEMENT: f64 = 1e-3;

const COLUMNS: [&str; 9] = ["t", "delta", "method", "order", "c10", "c01", "c11", "c1m1", "converged"];

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let geom = cfg.require_geometry()?;
    let inter = cfg.require_interaction()?;
    let sched_cfg = cfg.require_schedule()?;
    let ScheduleConfig::Ramp { omega, delta_initial, delta_final, ramp_rate, rise_time, checkpoints } = sched_cfg else {
        return Err(CliError::Config { key: "schedule.kind".into(), line: None, message: "ramp needs kind = \"ramp\"".into() });
    };
    let schedule = sched_cfg.ramp()?;
    let crossing = schedule.time_of_delta(0.0);

    let mut out = Output::new("ramp", cfg);
    physics_meta(&mut out, cfg);
    out.meta("omega", omega)
        .meta("delta_initial", delta_initial)
        .meta("delta_final", delta_final)
        .meta("ramp_rate", ramp_rate)
        .meta("rise_time", rise_time)
        .meta("duration", schedule.duration())
        .meta("delta_zero_crossing_time", crossing.map(|t| t.to_string()).unwrap_or_else(|| "none".into()))
        .meta("method", format!("{:?}", cfg.solver.method).to_lowercase());

    let mut rows: Vec<Vec<String>> = Vec::new();
    let lead = |t: f64| vec![fmt(t), fmt(schedule.delta(t))];

    if cfg.solver.method.ed() {
        let maps = ed_checkpoints(geom, inter, cfg.shift_mode, &schedule, &cfg.solver.evolve, checkpoints)?;
        for (&t, m) in checkpoints.iter().zip(&maps) {
            let c = TARGETS.map(|(dx, dy)| m.get(dx, dy).unwrap_or(f64::NAN));
            let diag = m.get(1, -1).unwrap_or(f64::NAN);
            if c.iter().chain([&diag]).any(|v| !v.is_finite()) {
                return Err(quench::Error::Numerical(format!("non-finite correlator at t = {t}")).into());
            }
            let mut r = lead(t);
            r.extend(["ed".to_string(), String::new()]);
            r.extend(c.iter().chain([&diag]).map(|&v| fmt(v)));
            r.push(String::new());
            rows.push(r);
        }
    }

    if cfg.solver.method.nlce() {
        let order = cfg.solver.order;
        if order == 0 || order > NLCE_MAX_ORDER {
            return Err(quench::Error::Capacity(format!("expansion order {order} outside 1..={NLCE_MAX_ORDER}")).into());
        }
        if let Some(w) = capacity_warning(order) {
            eprintln!("warning: {w}");
        }
        let table = ClusterTable::build(order, &geom.spacing, &inter.cutoff)?;
        let opts = NlceOptions { evolve: cfg.solver.evolve, shift_mode: cfg.shift_mode, euler_start: cfg.solver.euler_start };
        let node = NlceNode { interaction: *inter, schedule: schedule.clone(), times: checkpoints.clone() };
        let targets = [(1, 0), (0, 1), (1, 1), (1, -1)];
        let o = nlce_run(&table, &node, &targets, &opts)?;
        for (ti, &t) in checkpoints.iter().enumerate() {
            let at = |k: usize| targets.map(|d| o.partial_sum(ti, k, d).expect("target and order in range"));
            let converged = order >= 3 && (order - 2..=order).all(|k| at(k).iter().zip(at(order)).all(|(a, b)| (a - b).abs() < NLCE_AGREEMENT));
            for k in 1..=order {
                let mut r = lead(t);
                r.extend(["nlce".to_string(), k.to_string()]);
                r.extend(at(k).iter().map(|&v| fmt(v)));
                r.push(converged.to_string());
                rows.push(r);
            }
            let mut r = lead(t);
            r.extend(["nlce".to_string(), "resummed".to_string()]);
            r.extend(targets.iter().map(|&d| fmt(o.resummed(ti, d).expect("target in range"))));
            r.push(converged.to_string());
            rows.push(r);
        }
        out.meta("order", order).meta("euler_start", cfg.solver.euler_start).meta("nlce_agreement", NLCE_AGREEMENT);
    }

    let path = output_path(cfg, "ramp.csv")?;
    out.write_csv(&path, &COLUMNS, &rows)?;
    println!("{}", path.display());
    Ok(())
}
