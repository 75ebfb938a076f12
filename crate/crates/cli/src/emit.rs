//! Columnar plot-data emission.  Files are whitespace-separated columns with
//! `#` comment headers, readable by gnuplot (`plot "f.csv" using 1:2`) and by
//! dataframe loaders in comment-aware whitespace mode.  Every file carries
//! the manifest digest so plots can be traced back to the exact experiment.

use std::path::Path;

use crate::manifest::CliError;

/// Registered column layouts per plot kind.
const LAYOUTS: &[(&str, &[&str])] = &[
    ("growth", &["n", "count", "log_count"]),
    ("exponent", &["n", "alpha", "count", "new_in_shell"]),
    ("shrink", &["n", "count", "new_in_shell", "has_solution"]),
    ("spectral", &["n", "estimate", "minus_two_log", "envelope"]),
    ("boundary", &["r", "n", "gershgorin", "ratio", "dense"]),
    ("decay", &["k", "max_fourier", "etk_bound", "discrepancy"]),
    ("ergodic", &["n", "b1", "b2", "exact_error", "mc_mean", "mc_stderr"]),
];

/// Renders one table of plot data for the given kind.  Errors on an unknown
/// kind or on rows that do not match the registered column layout.
pub fn emit_plot_data(
    kind: &str,
    digest: &str,
    seeds: &[(&str, u64)],
    rows: &[Vec<String>],
) -> Result<String, CliError> {
    let columns = LAYOUTS
        .iter()
        .find(|(k, _)| *k == kind)
        .map(|(_, c)| *c)
        .ok_or_else(|| {
            CliError::validation(format!(
                "unknown plot kind {kind:?} (expected one of {})",
                LAYOUTS.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", ")
            ))
        })?;
    let mut out = String::new();
    out.push_str(&format!("# {kind} data\n"));
    out.push_str(&format!("# manifest-digest: {digest}\n"));
    if !seeds.is_empty() {
        let rendered: Vec<String> =
            seeds.iter().map(|(name, value)| format!("{name}={value}")).collect();
        out.push_str(&format!("# seeds: {}\n", rendered.join(" ")));
    }
    out.push_str(&format!("# columns: {}\n", columns.join(" ")));
    for row in rows {
        if row.len() != columns.len() {
            return Err(CliError::Other(format!(
                "internal: {kind} row has {} fields, layout needs {}",
                row.len(),
                columns.len()
            )));
        }
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    Ok(out)
}

/// Writes one plot-data file and returns its file name for the summary.
pub fn write_plot_file(
    dir: &Path,
    file_name: &str,
    kind: &str,
    digest: &str,
    seeds: &[(&str, u64)],
    rows: &[Vec<String>],
) -> Result<String, CliError> {
    let text = emit_plot_data(kind, digest, seeds, rows)?;
    std::fs::write(dir.join(file_name), text)?;
    Ok(file_name.to_string())
}

/// Fixed-width scientific float formatting: deterministic, locale-free, and
/// column-stable (`NaN` marks absent values for gnuplot).
pub fn ffmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.12e}")
    }
}
