//! CSV boundaries of the analysis: measurements in, reports out.

use std::io::{Read, Write};

use num_traits::Float;

use super::resources::{CorrelationReport, GasMemory, MeasurementRow, CPU, MEMORY, STORAGE};
use super::AnalysisError;

/// Reads measurement rows, skipping `#` comment lines.
pub fn read_measurements<R: Read>(input: R) -> Result<Vec<MeasurementRow>, AnalysisError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    reader.deserialize().map(|r| r.map_err(AnalysisError::from)).collect()
}

pub fn write_measurements<W: Write>(rows: &[MeasurementRow], out: W) -> Result<(), AnalysisError> {
    let mut writer = csv::Writer::from_writer(out);
    for r in rows {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

/// `phase,resources,score` rows followed by `phase,gas_per_byte,slope` rows.
pub fn write_report<T: Float + std::fmt::Display, W: Write>(
    report: &CorrelationReport<T>,
    out: W,
) -> Result<(), AnalysisError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["phase", "resources", "score"])?;
    for r in &report.rows {
        writer.write_record([r.phase.to_string(), r.resources.clone(), r.score.to_string()])?;
    }
    for g in &report.gas_per_byte {
        writer.write_record([g.phase.to_string(), "gas_per_byte".to_string(), g.fit.slope.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// Long-format scatter points, one row per execution and resource.
pub fn write_scatter<W: Write>(rows: &[MeasurementRow], out: W) -> Result<(), AnalysisError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["phase", "resource", "value", "gas"])?;
    for r in rows {
        let points =
            [(MEMORY, r.mem_delta().to_string()), (CPU, r.time_ns.to_string()), (STORAGE, r.storage_alloc.to_string())];
        for (name, value) in points {
            writer.write_record([r.era.to_string(), name.to_string(), value, r.gas.to_string()])?;
        }
    }
    writer.flush()?;
    Ok(())
}
