pub mod certify;
pub mod gain;
pub mod simulate;
pub mod synthesize;

use std::io::{ErrorKind, Write};

use crate::error::{CliError, CliResult};

/// Writes to stdout; a reader that closed the pipe early is not an error.
pub fn write_stdout(bytes: &[u8]) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(bytes).and_then(|_| out.flush()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(CliError::Write { path: "<stdout>".into(), source: e }),
        _ => Ok(()),
    }
}
