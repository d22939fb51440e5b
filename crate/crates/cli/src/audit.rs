//! Post-hoc check of the main-effect/interaction hierarchy, working only from
//! the coefficient table on disk.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Default, PartialEq)]
pub struct AuditReport {
    pub groups: usize,
    /// Groups with a nonzero interaction cell but no nonzero main cell.
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn nonzero(cell: &str, path: &Path, line: usize) -> Result<bool, CliError> {
    if cell.trim().is_empty() {
        return Ok(false);
    }
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| CliError::Audit(format!("{}:{line}: not a number: '{cell}'", path.display())))?;
    Ok(v != 0.0)
}

/// A group (module or individual feature) may carry interactions only if at
/// least one of its rows has a nonzero main effect.
pub fn audit_hierarchy(path: &Path) -> Result<AuditReport, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Audit(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| CliError::Audit(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Audit(format!("{}: missing column '{name}'", path.display())))
    };
    let (group_col, main_col) = (col("group")?, col("main")?);
    let first_env = main_col + 1;

    // group -> (any main, any interaction)
    let mut seen: BTreeMap<String, (bool, bool)> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Audit(format!("{}:{line}: {e}", path.display())))?;
        let entry = seen.entry(rec[group_col].to_string()).or_default();
        entry.0 |= nonzero(&rec[main_col], path, line)?;
        for cell in rec.iter().skip(first_env) {
            entry.1 |= nonzero(cell, path, line)?;
        }
    }
    let violations = seen
        .iter()
        .filter(|(_, (main, inter))| *inter && !*main)
        .map(|(g, _)| g.clone())
        .collect();
    Ok(AuditReport {
        groups: seen.len(),
        violations,
    })
}
