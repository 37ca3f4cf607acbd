//! Per-step CSV log of the audit quantities.
//!
//! One row per step, reals printed with 17 significant digits so a value
//! survives the text round trip exactly and two runs can be compared byte for
//! byte. The column set is fixed; downstream tooling may key on the header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::thermo::AuditReport;

pub const CSV_HEADER: &str = "step,time,mass_diff,kinetic,internal,free_energy,entropy,\
viscous_diss,chemical_diss,thermal_diss,cd_residual,power_residual,\
energy_budget_residual,theta_floor_hits";

/// Formats one audit report as a CSV row (no trailing newline).
pub fn format_row(r: &AuditReport) -> String {
    format!(
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
        r.step,
        r.time,
        r.energy.mass_diff,
        r.energy.kinetic,
        r.energy.internal,
        r.energy.free_energy,
        r.energy.entropy,
        r.dissipation.viscous,
        r.dissipation.chemical,
        r.dissipation.thermal,
        r.cd_residual,
        r.power_identity_residual,
        r.energy_budget_residual,
        r.theta_floor_hits,
    )
}

/// Buffered CSV writer that owns its file and path.
pub struct CsvLog {
    out: BufWriter<File>,
    path: PathBuf,
}

impl CsvLog {
    /// Creates (truncates) the file and writes the header.
    pub fn create(path: &Path) -> Result<Self, Error> {
        let file = File::create(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut log = Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        log.line(CSV_HEADER)?;
        Ok(log)
    }

    fn line(&mut self, s: &str) -> Result<(), Error> {
        writeln!(self.out, "{s}").map_err(|e| Error::Io {
            path: self.path.display().to_string(),
            source: e,
        })
    }

    pub fn append(&mut self, report: &AuditReport) -> Result<(), Error> {
        let row = format_row(report);
        self.line(&row)
    }

    pub fn finish(mut self) -> Result<(), Error> {
        self.out.flush().map_err(|e| Error::Io {
            path: self.path.display().to_string(),
            source: e,
        })
    }
}
