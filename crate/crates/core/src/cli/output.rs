use std::fs::File;
use std::path::Path;

use csv::{Terminator, Writer, WriterBuilder};

use super::CliError;

/// 17 significant digits, enough to round-trip an `f64`.
pub(crate) fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

/// RFC 4180 writer with LF record terminators.
pub(crate) fn csv_writer(path: &Path, header: &[&str]) -> Result<Writer<File>, CliError> {
    let mut w = WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(header)?;
    Ok(w)
}
