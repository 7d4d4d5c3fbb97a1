//! CSV and file helpers. Floats are written in Rust's shortest round-trip
//! form so reruns produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const FMC_HEADER: [&str; 4] = ["trial", "i", "J_i", "cumulative"];
pub const SWEEP_HEADER: [&str; 6] = ["N", "trial", "J_tot", "J_tot_rel", "bound", "satisfied"];
pub const MEM_HEADER: [&str; 6] = ["trial", "k", "J_prime_k", "cumulative", "J_tot_base", "ratio"];
pub const CURVE_HEADER: [&str; 4] = ["iteration", "sequences", "bce", "bit_error"];
pub const EVAL_HEADER: [&str; 3] = ["sweep_value", "mean_bce", "bit_error"];
pub const DIAG_HEADER: [&str; 5] = ["step", "phase", "head", "slot", "weight"];

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub struct CsvOut {
    writer: csv::Writer<fs::File>,
    path: PathBuf,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        writer
            .write_record(header)
            .map_err(|e| CliError::Io(e.to_string()))?;
        Ok(CsvOut {
            writer,
            path: path.to_path_buf(),
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| CliError::Io(format!("{}: {e}", self.path.display())))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush()?;
        Ok(())
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}
