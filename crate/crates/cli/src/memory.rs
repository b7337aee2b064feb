use std::fs;

use crate::error::{CliError, CliResult};

/// MemAvailable from /proc/meminfo, if readable.
pub fn available_bytes() -> Option<u64> {
    let text = fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Dense diagonalization keeps the matrix, its eigenvectors and workspace.
pub fn dense_bytes(dim: usize) -> u64 {
    4 * (dim as u64).pow(2) * 8
}

/// The arrowhead path stores a handful of length-N vectors.
pub fn arrowhead_bytes(n: usize) -> u64 {
    (n as u64 + 1) * 8 * 24
}

pub fn ensure(required_bytes: u64) -> CliResult<()> {
    match available_bytes() {
        Some(available_bytes) if available_bytes < required_bytes => {
            Err(CliError::Memory { required_bytes, available_bytes })
        }
        _ => Ok(()),
    }
}
