use quench::evolve::{ed_state, lattice_sites, QuantumState};
use quench::nlce::{capacity_warning, nlce_batch, ClusterTable, NlceNode, NlceOptions, NLCE_MAX_ORDER};
use quench::observables::{correlators_from_state, onsite_detected, Window};
use rayon::prelude::*;

use super::{fmt, output_path, physics_meta, Output};
use crate::config::{RunConfig, ScheduleConfig};
use crate::error::CliError;

const TARGETS: [(i32, i32); 3] = [(1, 0), (0, 1), (1, 1)];

const COLUMNS: [&str; 13] =
    ["delta", "method", "order", "occupation", "c00", "c10", "c01", "c11", "c00_detected", "c10_detected", "c01_detected", "c11_detected", "resum_fallback"];

struct Row {
    delta: f64,
    method: &'static str,
    order: String,
    occupation: f64,
    c: [f64; 3],
    fallback: bool,
}

impl Row {
    fn record(&self, alpha: f64) -> Vec<String> {
        let n = self.occupation;
        let a2 = alpha * alpha;
        let mut r = vec![fmt(self.delta), self.method.to_string(), self.order.clone(), fmt(n), fmt(4.0 * n * (1.0 - n))];
        r.extend(self.c.iter().map(|&v| fmt(v)));
        r.push(fmt(onsite_detected(n, alpha)));
        r.extend(self.c.iter().map(|&v| fmt(v * a2)));
        r.push(self.fallback.to_string());
        r
    }
}

fn mean_occupation(psi: &QuantumState) -> quench::Result<f64> {
    let n = psi.n_sites();
    let mut s = 0.0;
    for i in 0..n {
        s += psi.expectation_sz(i)? + 0.5;
    }
    Ok(s / n as f64)
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let geom = cfg.require_geometry()?;
    let inter = cfg.require_interaction()?;
    let (pulse, detunings) = match cfg.require_schedule()? {
        ScheduleConfig::Sudden { pulse, detunings } => (*pulse, detunings.clone()),
        ScheduleConfig::Ramp { .. } => return Err(CliError::Config { key: "schedule.kind".into(), line: None, message: "sudden needs kind = \"sudden\"".into() }),
    };
    let schedules = detunings.iter().map(|&d| pulse.schedule(d)).collect::<quench::Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut out = Output::new("sudden", cfg);
    physics_meta(&mut out, cfg);
    out.meta("omega", pulse.omega)
        .meta("hold_time", pulse.hold_time)
        .meta("rise_time", pulse.rise_time)
        .meta("fall_time", pulse.fall_time)
        .meta("alpha", cfg.alpha)
        .meta("method", format!("{:?}", cfg.solver.method).to_lowercase());

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
        let nodes: Vec<NlceNode> = schedules.iter().map(|s| NlceNode::new(*inter, s.clone())).collect();
        let outputs = nlce_batch(&table, &nodes, &TARGETS, &opts)?;
        for (&delta, o) in detunings.iter().zip(&outputs) {
            for k in 1..=order {
                let c = TARGETS.map(|d| o.partial_sum(0, k, d).expect("target and order in range"));
                rows.push(Row { delta, method: "nlce", order: k.to_string(), occupation: o.mean_occupation(0, Some(k)), c, fallback: false });
            }
            let c = TARGETS.map(|d| o.resummed(0, d).expect("target in range"));
            rows.push(Row { delta, method: "nlce", order: "resummed".into(), occupation: o.mean_occupation(0, None), c, fallback: o.resum_fallback });
        }
        out.meta("order", order).meta("euler_start", cfg.solver.euler_start);
    }

    if cfg.solver.method.ed() {
        let sites = lattice_sites(geom);
        let window = Window::new(1, 1);
        let ed: Vec<(f64, [f64; 3])> = schedules
            .par_iter()
            .map(|s| {
                let psi = ed_state(geom, inter, cfg.shift_mode, s, &cfg.solver.evolve)?;
                let map = correlators_from_state(&psi, &sites, window)?;
                let c = TARGETS.map(|(dx, dy)| map.get(dx, dy).unwrap_or(f64::NAN));
                Ok((mean_occupation(&psi)?, c))
            })
            .collect::<quench::Result<_>>()?;
        for (&delta, (n, c)) in detunings.iter().zip(ed) {
            rows.push(Row { delta, method: "ed", order: String::new(), occupation: n, c, fallback: false });
        }
    }

    if rows.iter().any(|r| !r.occupation.is_finite() || r.c.iter().any(|v| !v.is_finite())) {
        return Err(quench::Error::Numerical("non-finite correlator in sudden scan".into()).into());
    }
    let records: Vec<Vec<String>> = rows.iter().map(|r| r.record(cfg.alpha)).collect();
    let path = output_path(cfg, "sudden.csv")?;
    out.write_csv(&path, &COLUMNS, &records)?;
    println!("{}", path.display());
    Ok(())
}
