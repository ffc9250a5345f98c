use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::run::ExperimentRecord;
use crate::HarnessError;

pub const CSV_HEADER: [&str; 10] = [
    "sweep_axis",
    "sweep_value",
    "solver",
    "metric",
    "value",
    "trials",
    "excluded_trials",
    "seed",
    "pilot_source",
    "ms_per_trial",
];

/// 17 significant digits, so every finite value parses back exactly.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_results<W: Write>(records: &[ExperimentRecord], out: W) -> Result<(), HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::EmptyResults);
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.sweep_axis.clone(),
            format_number(r.sweep_value),
            r.solver.clone(),
            r.metric.clone(),
            format_number(r.value),
            r.trials.to_string(),
            r.excluded_trials.to_string(),
            r.seed.to_string(),
            r.pilot_source.clone(),
            r.ms_per_trial.map(format_number).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.into()))?;
    Ok(())
}

pub fn emit_results(
    records: &[ExperimentRecord],
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| HarnessError::Io(path.to_path_buf(), e))?;
    write_results(records, file)
}
