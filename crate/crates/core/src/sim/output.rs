//! CSV emitters for time series and RMSE summaries.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use crate::scalar::{to_f64, Real};
use crate::sim::scenario::{EstimatorKind, RmseRow, SeedRun};

/// Six significant digits.
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.5e}")
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, fields: &[String]) -> io::Result<()> {
    w.write_record(fields).map_err(io::Error::other)
}

/// Writes `t, x_true.., x_hat.., d_true.., d_hat..` (plus `Qd_diag..` for the
/// adaptive augmented filter) for one estimator of one seed.
///
/// Row `k` holds `t_k`, `x_k`, `x̂_{k|k}`, and the unknown input at `t_{k-1}`
/// next to its estimate.
pub fn write_timeseries<T: Real, W: Write>(
    out: W,
    run: &SeedRun<T>,
    kind: EstimatorKind,
) -> io::Result<()> {
    let series = run.estimate(kind).ok_or_else(|| {
        io::Error::new(io::ErrorKind::NotFound, format!("no {} estimates", kind.name()))
    })?;
    let n_x = run.truth.x[0].len();
    let n_d = run.truth.d[0].len();
    let with_qd = !series.qd_diag.is_empty();

    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n_x).map(|i| format!("x_true{i}")));
    header.extend((1..=n_x).map(|i| format!("x_hat{i}")));
    header.extend((1..=n_d).map(|i| format!("d_true{i}")));
    header.extend((1..=n_d).map(|i| format!("d_hat{i}")));
    if with_qd {
        header.extend((1..=n_d).map(|i| format!("Qd_diag{i}")));
    }
    write_row(&mut w, &header)?;

    for (i, x_hat) in series.x_hat.iter().enumerate() {
        let k = i + 1;
        let mut row = vec![fmt_sig(run.truth.t[k])];
        row.extend(run.truth.x[k].iter().map(|&v| fmt_sig(to_f64(v))));
        row.extend(x_hat.iter().map(|&v| fmt_sig(to_f64(v))));
        row.extend(run.truth.d[k - 1].iter().map(|&v| fmt_sig(to_f64(v))));
        row.extend(series.d_hat[i].iter().map(|&v| fmt_sig(to_f64(v))));
        if with_qd {
            row.extend(series.qd_diag[i].iter().map(|&v| fmt_sig(to_f64(v))));
        }
        write_row(&mut w, &row)?;
    }
    w.flush()
}

/// One row per (scenario, estimator) with seed-averaged RMSEs.
pub fn write_summary<W: Write>(out: W, rows: &[(String, RmseRow)]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n_x = rows.first().map(|(_, r)| r.x.len()).unwrap_or(0);
    let n_d = rows.first().map(|(_, r)| r.d.len()).unwrap_or(0);
    let mut header = vec!["case".to_string(), "estimator".to_string()];
    header.extend((1..=n_x).map(|i| format!("x{i}")));
    header.extend((1..=n_d).map(|i| format!("d{i}")));
    write_row(&mut w, &header)?;
    for (case, row) in rows {
        let mut rec = vec![case.clone(), row.estimator.label().to_string()];
        rec.extend(row.x.iter().map(|&v| fmt_sig(v)));
        rec.extend(row.d.iter().map(|&v| fmt_sig(v)));
        write_row(&mut w, &rec)?;
    }
    w.flush()
}

pub fn write_timeseries_file<T: Real>(
    path: &Path,
    run: &SeedRun<T>,
    kind: EstimatorKind,
) -> io::Result<()> {
    write_timeseries(io::BufWriter::new(File::create(path)?), run, kind)
}

pub fn write_summary_file(path: &Path, rows: &[(String, RmseRow)]) -> io::Result<()> {
    write_summary(io::BufWriter::new(File::create(path)?), rows)
}
