//! Result files: full JSON, or CSV with one row per job plus a trailing
//! aggregate row.
//!
//! In the aggregate row `job_id` is `TOTAL`, `actual_time` is the summed
//! busy time, `actual_energy` is total energy including idle, `deadline_met`
//! is the number of met deadlines and `normalized_completion` is the mean.
//! `finish` holds the accounting horizon and `feasible` the number of
//! decisions predicted to meet their deadline.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulator::SimulationResult;

pub const CSV_HEADER: [&str; 16] = [
    "job_id",
    "app_id",
    "device",
    "arrival",
    "deadline",
    "start",
    "finish",
    "core_clock",
    "mem_clock",
    "predicted_time",
    "predicted_energy",
    "feasible",
    "actual_time",
    "actual_energy",
    "deadline_met",
    "normalized_completion",
];

pub fn write_json(r: &SimulationResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(r)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_csv(r: &SimulationResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(r, f)
}

pub fn write_csv_to<W: Write>(r: &SimulationResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for j in &r.jobs {
        let d = &j.decision;
        out.write_record([
            j.job_id.clone(),
            j.app_id.clone(),
            j.device.to_string(),
            j.arrival.to_string(),
            j.deadline.to_string(),
            j.start.to_string(),
            j.finish.to_string(),
            d.chosen_config.core_clock.to_string(),
            d.chosen_config.mem_clock.to_string(),
            d.predicted_time.to_string(),
            d.predicted_energy.to_string(),
            d.feasible.to_string(),
            j.actual_time.to_string(),
            j.actual_energy.to_string(),
            j.deadline_met.to_string(),
            j.normalized_completion.to_string(),
        ])?;
    }
    let a = &r.aggregates;
    let busy: f64 = r.devices.iter().map(|d| d.busy_time).sum();
    out.write_record([
        "TOTAL".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        a.horizon.to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        (a.n_jobs - a.infeasible_decisions).to_string(),
        busy.to_string(),
        a.total_energy.to_string(),
        (a.n_jobs - a.violations).to_string(),
        a.mean_normalized_completion.to_string(),
    ])?;
    out.flush().map_err(|e| Error::io(Path::new("<csv>"), e))?;
    Ok(())
}
