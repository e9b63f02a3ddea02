//! CSV readers and writers for fields, time series, controls and events.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces the values bit for bit.
//!
//! A [`ScalarField`] file starts with the line `nx,ny,x_lo,x_hi,y_lo,y_hi`
//! (the values, describing the grid), followed by `ny` rows of `nx` values,
//! bottom row first.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::control::{ControlBounds, ControlSignal};
use crate::error::{Error, Result};
use crate::grid::{Grid, Rect, ScalarField};
use crate::macroscopic::DensityTrajectory;
use crate::microscopic::Event;
use crate::observations::ObservationSeries;

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new().flexible(true).from_path(path)?)
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_path(path)?)
}

fn num<T: std::str::FromStr>(s: &str, path: &Path, line: u64) -> Result<T> {
    s.parse().map_err(|_| Error::invalid(format!("{}:{line}: `{s}` is not a number", path.display())))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// `<field>_t<seconds>.csv`.
pub fn field_file_name(field: &str, t: f64) -> String {
    format!("{field}_t{t}.csv")
}

pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    let g = field.grid();
    let e = g.extent();
    let mut w = writer(path)?;
    w.write_record([
        g.nx().to_string(),
        g.ny().to_string(),
        e.x_lo.to_string(),
        e.x_hi.to_string(),
        e.y_lo.to_string(),
        e.y_hi.to_string(),
    ])?;
    for row in field.values().chunks(g.nx()) {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    let mut rows = reader(path)?.into_records();
    let head = rows.next().ok_or_else(|| Error::invalid(format!("{}: empty field file", path.display())))??;
    if head.len() != 6 {
        return Err(Error::invalid(format!("{}: grid line needs nx,ny,x_lo,x_hi,y_lo,y_hi", path.display())));
    }
    let nx: usize = num(&head[0], path, 1)?;
    let ny: usize = num(&head[1], path, 1)?;
    let ext: Vec<f64> = (2..6).map(|k| num(&head[k], path, 1)).collect::<Result<_>>()?;
    let grid = Grid::new(Rect::new(ext[0], ext[1], ext[2], ext[3]), nx, ny)?;
    let mut values = Vec::with_capacity(grid.len());
    for rec in rows {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != nx {
            return Err(Error::invalid(format!(
                "{}:{line}: expected {nx} values, found {}",
                path.display(),
                rec.len()
            )));
        }
        for s in rec.iter() {
            values.push(num(s, path, line)?);
        }
    }
    if values.len() != grid.len() {
        return Err(Error::invalid(format!(
            "{}: expected {ny} rows, found {}",
            path.display(),
            values.len() / nx.max(1)
        )));
    }
    ScalarField::new(grid, values)
}

/// Two-column series with header `t,<name>`.
pub fn write_series(path: &Path, name: &str, series: &ObservationSeries) -> Result<()> {
    let rows: Vec<Vec<f64>> = series.times().iter().zip(series.values()).map(|(&t, &v)| vec![t, v]).collect();
    write_table(path, &["t", name], &rows)
}

/// Reads a two-column `t,<value>` series; the header line is skipped.
pub fn read_series(path: &Path) -> Result<ObservationSeries> {
    let rows = read_table(path, 2)?;
    let (t, v) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
    ObservationSeries::new(t, v)
}

/// Numeric table with a header line.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Numeric table with `columns` columns, skipping the header line.
pub fn read_table(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for rec in reader(path)?.into_records().skip(1) {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != columns {
            return Err(Error::invalid(format!(
                "{}:{line}: expected {columns} columns, found {}",
                path.display(),
                rec.len()
            )));
        }
        out.push(rec.iter().map(|s| num(s, path, line)).collect::<Result<Vec<f64>>>()?);
    }
    Ok(out)
}

/// `iter,J` history.
pub fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    let rows: Vec<Vec<f64>> = history.iter().enumerate().map(|(i, &j)| vec![i as f64, j]).collect();
    write_table(path, &["iter", "J"], &rows)
}

/// One row per control interval: `t_start,u1,u2,u3`.
pub fn write_controls(path: &Path, u: &ControlSignal) -> Result<()> {
    let rows: Vec<Vec<f64>> = u.breaks().iter().zip(u.values()).map(|(&t, v)| vec![t, v[0], v[1], v[2]]).collect();
    write_table(path, &["t_start", "u1", "u2", "u3"], &rows)
}

/// Inverse of [`write_controls`]; the last interval ends at `horizon`.
pub fn read_controls(path: &Path, horizon: f64, bounds: ControlBounds) -> Result<ControlSignal> {
    let rows = read_table(path, 4)?;
    let mut breaks: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    breaks.push(horizon);
    let values = rows.iter().map(|r| [r[1], r[2], r[3]]).collect();
    ControlSignal::new(breaks, values, bounds)
}

/// `agent_id,t,x,y,kind`.
pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["agent_id", "t", "x", "y", "kind"])?;
    for e in events {
        w.write_record([
            e.agent.to_string(),
            e.t.to_string(),
            e.position.0.to_string(),
            e.position.1.to_string(),
            e.kind.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `agent_id,t,x,y`.
pub fn write_agent_paths(path: &Path, rows: &[(usize, f64, f64, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["agent_id", "t", "x", "y"])?;
    for &(a, t, x, y) in rows {
        w.write_record([a.to_string(), t.to_string(), x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `y1`, `y2`, `y3` at every stored time into `dir` and returns the
/// file names.
pub fn write_trajectory(dir: &Path, traj: &DensityTrajectory) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for (t, state) in traj.times.iter().zip(&traj.states) {
        for (c, label) in ["y1", "y2", "y3"].iter().enumerate() {
            let name = field_file_name(label, *t);
            write_field(&dir.join(&name), state.component(c))?;
            names.push(name);
        }
    }
    Ok(names)
}

/// Writes `text` to `path`.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names_use_plain_seconds() {
        assert_eq!(field_file_name("y1", 800.0), "y1_t800.csv");
        assert_eq!(field_file_name("y3", 12.5), "y3_t12.5.csv");
    }

    #[test]
    fn field_layout_is_bottom_row_first() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(Rect::new(0.0, 3.0, 0.0, 2.0), 3, 2).unwrap();
        let f = ScalarField::new(g, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
        let p = dir.path().join("f.csv");
        write_field(&p, &f).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "3,2,0,3,0,2\n1,2,3\n4,5,6.5\n");
        assert_eq!(read_field(&p).unwrap(), f);
    }

    #[test]
    fn malformed_rows_are_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "2,2,0,1,0,1\n1,2\n3\n").unwrap();
        let err = read_field(&p).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
    }
}
