//! CSV writers with fixed headers and column order. Cell, ramp and mode
//! indices are 1-based in every file.

use std::io::Write;

use crate::design::{Candidate, Comparison, DesignResult};
use crate::error::{Error, Result};
use crate::sim::{Metrics, Trajectory};
use crate::stability::DriftReport;

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Clock label such as `13:00` for hour `h` after `start_hour`.
pub fn hour_label(start_hour: u32, h: usize) -> String {
    format!("{:02}:00", (start_hour as usize + h) % 24)
}

/// `step,mode,q_1..q_K,n_1..n_K,r_1..r_K,f_1..f_K`, one row per step.
pub fn write_trajectory<W: Write>(traj: &Trajectory, cells: usize, w: W) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["step".to_string(), "mode".to_string()];
    for p in ["q", "n", "r", "f"] {
        header.extend((1..=cells).map(|k| format!("{p}_{k}")));
    }
    out.write_record(&header).map_err(csv_err)?;
    for r in &traj.records {
        let mut row = vec![r.step.to_string(), (r.mode + 1).to_string()];
        for v in [&r.queues, &r.densities, &r.inflow, &r.outflow] {
            row.extend(v.iter().map(|&x| num(x)));
        }
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Io(e.to_string()))
}

/// `period,time_avg_queue_veh,vht_veh_hr`: one row per hour, then `total`.
pub fn write_metrics<W: Write>(m: &Metrics, start_hour: u32, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["period", "time_avg_queue_veh", "vht_veh_hr"]).map_err(csv_err)?;
    for h in &m.hourly {
        out.write_record([hour_label(start_hour, h.hour), num(h.time_avg_queue_veh), num(h.vht_veh_hr)])
            .map_err(csv_err)?;
    }
    out.write_record(["total".to_string(), num(m.time_avg_queue_veh), num(m.vht_veh_hr)])
        .map_err(csv_err)?;
    out.flush().map_err(|e| Error::Io(e.to_string()))
}

/// `buffer,mode,probability,worst_net_flow,exact,queued_1..,n_1..` rows, then
/// `buffer,mean` rows with an empty mode column and a final `all` row.
pub fn write_drift_report<W: Write>(r: &DriftReport, probabilities: &[f64], w: W) -> Result<()> {
    let cells = r.buffer_means.len();
    let mut out = writer(w);
    let mut header: Vec<String> = ["buffer", "mode", "probability", "worst_net_flow", "exact"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=cells).map(|k| format!("queued_{k}")));
    header.extend((1..=cells).map(|k| format!("n_{k}")));
    out.write_record(&header).map_err(csv_err)?;
    for e in &r.entries {
        let mut row = vec![
            (e.buffer + 1).to_string(),
            (e.mode + 1).to_string(),
            num(probabilities[e.mode]),
            num(e.value),
            e.exact.to_string(),
        ];
        row.extend(e.queued.iter().map(|&q| u8::from(q).to_string()));
        row.extend(e.densities.iter().map(|&x| num(x)));
        out.write_record(&row).map_err(csv_err)?;
    }
    let blank = || vec![String::new(); 2 * cells];
    for (k, m) in r.buffer_means.iter().enumerate() {
        let mut row = vec![(k + 1).to_string(), String::new(), "1".into(), num(*m), String::new()];
        row.extend(blank());
        out.write_record(&row).map_err(csv_err)?;
    }
    let mut row = vec!["all".into(), String::new(), "1".into(), num(r.mean_drift), String::new()];
    row.extend(blank());
    out.write_record(&row).map_err(csv_err)?;
    out.flush().map_err(|e| Error::Io(e.to_string()))
}

/// `u_2,kappa_2,...,mean_drift` per candidate; an empty drift marks a
/// candidate whose bounds were undefined.
pub fn write_candidates<W: Write>(log: &[Candidate], first_ramp: usize, w: W) -> Result<()> {
    let mut out = writer(w);
    let ramps = log.first().map_or(0, |c| c.u.len());
    let mut header = Vec::new();
    for i in 0..ramps {
        header.push(format!("u_{}", first_ramp + i));
        header.push(format!("kappa_{}", first_ramp + i));
    }
    header.push("mean_drift".into());
    out.write_record(&header).map_err(csv_err)?;
    for c in log {
        let mut row = Vec::with_capacity(2 * ramps + 1);
        for (u, k) in c.u.iter().zip(&c.kappa) {
            row.push(num(*u));
            row.push(num(*k));
        }
        row.push(c.drift.map(num).unwrap_or_default());
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Single-ramp drift surface: one row per u, one column per kappa.
pub fn write_drift_surface<W: Write>(log: &[Candidate], w: W) -> Result<()> {
    if log.iter().any(|c| c.u.len() != 1) {
        return Err(Error::validation("drift surface", "needs a single-ramp grid"));
    }
    let mut us: Vec<f64> = Vec::new();
    let mut ks: Vec<f64> = Vec::new();
    for c in log {
        if !us.contains(&c.u[0]) {
            us.push(c.u[0]);
        }
        if !ks.contains(&c.kappa[0]) {
            ks.push(c.kappa[0]);
        }
    }
    let mut out = writer(w);
    let mut header = vec!["u\\kappa".to_string()];
    header.extend(ks.iter().map(|&k| num(k)));
    out.write_record(&header).map_err(csv_err)?;
    for &u in &us {
        let mut row = vec![num(u)];
        for &k in &ks {
            let d = log.iter().find(|c| c.u[0] == u && c.kappa[0] == k).and_then(|c| c.drift);
            row.push(d.map(num).unwrap_or_default());
        }
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Io(e.to_string()))
}

/// `ramp,u,kappa,stage_drift` per ramp, then `objective` and `feasible` rows.
pub fn write_design<W: Write>(r: &DesignResult, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["ramp", "u", "kappa", "stage_drift"]).map_err(csv_err)?;
    if let Some(p) = &r.policy {
        for (i, g) in p.gains().iter().enumerate() {
            let stage = r.stages.iter().find(|s| s.ramp == i + 2).map(|s| num(s.drift));
            out.write_record([
                (i + 2).to_string(),
                num(g.u_veh_per_hr),
                num(g.kappa_kmh),
                stage.unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
    }
    let label = if r.throughput.is_some() { "throughput" } else { "objective" };
    out.write_record([label.to_string(), String::new(), String::new(), num(r.objective)])
        .map_err(csv_err)?;
    out.write_record(["feasible".to_string(), String::new(), String::new(), r.feasible.to_string()])
        .map_err(csv_err)?;
    out.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Cells as rows, time bins as columns labelled by their start minute.
pub fn write_density_map<W: Write>(map: &[Vec<f64>], bin_minutes: f64, w: W) -> Result<()> {
    let mut out = writer(w);
    let bins = map.first().map_or(0, Vec::len);
    let mut header = vec!["cell".to_string()];
    header.extend((0..bins).map(|b| format!("t{}", num(b as f64 * bin_minutes))));
    out.write_record(&header).map_err(csv_err)?;
    for (k, row) in map.iter().enumerate() {
        let mut r = vec![(k + 1).to_string()];
        r.extend(row.iter().map(|&x| num(x)));
        out.write_record(&r).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Io(e.to_string()))
}

/// `strategy,period,queue_mean,queue_se,vht_mean,vht_se`, hourly rows then `total`.
pub fn write_comparison<W: Write>(c: &Comparison, start_hour: u32, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["strategy", "period", "queue_mean", "queue_se", "vht_mean", "vht_se"])
        .map_err(csv_err)?;
    for row in &c.rows {
        let periods = row
            .hourly
            .iter()
            .map(|h| (hour_label(start_hour, h.hour), h.queue, h.vht))
            .chain(std::iter::once(("total".to_string(), row.queue, row.vht)));
        for (label, q, v) in periods {
            out.write_record([
                row.name.clone(),
                label,
                num(q.mean),
                num(q.std_error),
                num(v.mean),
                num(v.std_error),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| Error::Io(e.to_string()))
}
