//! Trace CSV reading and writing.
//!
//! Header: `app_id,mem_clock,core_clock,<feature names...>,avg_power,exec_time,energy`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::trace::types::{
    Dataset, DeviceSpec, FeatureSchema, FrequencyConfig, Measurement, TrainingRecord,
};

const LEADING: [&str; 3] = ["app_id", "mem_clock", "core_clock"];
const TRAILING: [&str; 3] = ["avg_power", "exec_time", "energy"];

pub fn load_dataset(path: impl AsRef<Path>, device: &DeviceSpec) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(std::io::BufReader::new(file), device)
}

pub fn read_dataset<R: Read>(reader: R, device: &DeviceSpec) -> Result<Dataset> {
    device.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() < LEADING.len() + TRAILING.len()
        || cols[..3] != LEADING
        || cols[cols.len() - 3..] != TRAILING
    {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header must be `{},<features...>,{}`",
                LEADING.join(","),
                TRAILING.join(",")
            ),
        });
    }
    let schema = FeatureSchema::from_names(&cols[3..cols.len() - 3]).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let n_feat = schema.len();

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() != cols.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", cols.len(), row.len()),
            });
        }
        let parse_f = |i: usize| -> Result<f64> {
            let s = row[i].trim();
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: `{s}` is not a number", cols[i]),
            })
        };
        let parse_u = |i: usize| -> Result<u32> {
            let s = row[i].trim();
            s.parse::<u32>().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: `{s}` is not a clock in MHz", cols[i]),
            })
        };
        let app_id = row[0].trim().to_string();
        let config = FrequencyConfig {
            mem_clock: parse_u(1)?,
            core_clock: parse_u(2)?,
        };
        let features = (3..3 + n_feat).map(parse_f).collect::<Result<Vec<_>>>()?;
        let base = 3 + n_feat;
        let measurement = Measurement {
            avg_power: parse_f(base)?,
            exec_time: parse_f(base + 1)?,
            energy: parse_f(base + 2)?,
        };
        records.push(TrainingRecord {
            app_id,
            config,
            features,
            measurement,
        });
    }

    // validate row by row so the error names the offending line
    for (i, r) in records.iter().enumerate() {
        let line = i + 2;
        let one = Dataset {
            schema: schema.clone(),
            device: device.clone(),
            records: vec![r.clone()],
            norm_stats: None,
        };
        one.validate().map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!(
                "line {line}: {}",
                m.trim_start_matches("record 0: ")
            )),
            other => Error::Validation(format!("line {line}: {other}")),
        })?;
    }
    Ok(Dataset {
        schema,
        device: device.clone(),
        records,
        norm_stats: None,
    })
}

pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_dataset_to(d, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dataset_to<W: Write>(d: &Dataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = LEADING.iter().map(|s| s.to_string()).collect();
    header.extend(d.schema.names());
    header.extend(TRAILING.iter().map(|s| s.to_string()));
    wtr.write_record(&header)?;
    for r in &d.records {
        let mut row = Vec::with_capacity(header.len());
        row.push(r.app_id.clone());
        row.push(r.config.mem_clock.to_string());
        row.push(r.config.core_clock.to_string());
        row.extend(r.features.iter().map(|v| v.to_string()));
        row.push(r.measurement.avg_power.to_string());
        row.push(r.measurement.exec_time.to_string());
        row.push(r.measurement.energy.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
