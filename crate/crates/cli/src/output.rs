//! CSV rendering. Floats carry 17 significant digits so files round-trip bit for bit.

use crate::CliError;
use prftps::ConvergenceReport;

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a header and rows to a string.
pub fn render(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

pub fn convergence_csv(rep: &ConvergenceReport) -> Result<String, CliError> {
    render(
        &["t", "rounds_cumulative", "normalized_residual", "consensus_error"],
        rep.rows.iter().map(|r| {
            vec![
                r.t.to_string(),
                r.rounds_cumulative.to_string(),
                fmt_f64(r.normalized_residual),
                fmt_f64(r.consensus_error),
            ]
        }),
    )
}

/// Cumulative communication rounds against normalized residual.
pub fn emit_plotdata(rep: &ConvergenceReport) -> Result<String, CliError> {
    render(
        &["rounds", "normalized_residual"],
        rep.rows
            .iter()
            .map(|r| vec![r.rounds_cumulative.to_string(), fmt_f64(r.normalized_residual)]),
    )
}
