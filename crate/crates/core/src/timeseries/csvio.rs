//! CSV persistence: a `t` column followed by one column per channel.
//!
//! Values are written with the shortest representation that round-trips
//! exactly, so write→read is lossless.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{SeriesError, TimeSeries};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

fn parse_err(line: usize, message: impl Into<String>) -> CsvError {
    CsvError::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<TimeSeries, CsvError> {
    read_csv_from(File::open(path)?)
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<TimeSeries, CsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "empty file")),
    };
    if header.len() < 2 {
        return Err(parse_err(1, "header needs a time column and at least one channel"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let width = header.len();

    let mut time = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for rec in records {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} cells, found {}", rec.len()),
            ));
        }
        for (col, cell) in rec.iter().enumerate() {
            let value: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("non-numeric cell `{cell}` in column {}", col + 1)))?;
            if col == 0 {
                time.push((value, line));
            } else {
                columns[col - 1].push(value);
            }
        }
    }

    if time.len() < 2 {
        return Err(parse_err(1, "need at least two samples to infer the sample time"));
    }
    let (t0, _) = time[0];
    let (tn, _) = time[time.len() - 1];
    let dt = (tn - t0) / (time.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(parse_err(time[1].1, "time column must be increasing"));
    }
    for (k, (t, line)) in time.iter().enumerate() {
        if (t - (t0 + k as f64 * dt)).abs() > 1e-9 * dt {
            return Err(parse_err(*line, format!("non-uniform sampling at t = {t}")));
        }
    }

    Ok(TimeSeries::new(dt, names.into_iter().zip(columns).collect())?)
}

pub fn write_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<(), CsvError> {
    let mut file = std::io::BufWriter::new(File::create(path)?);
    write_csv_to(series, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn write_csv_to<W: Write>(series: &TimeSeries, out: &mut W) -> Result<(), CsvError> {
    let mut header = String::from("t");
    for name in series.names() {
        header.push(',');
        header.push_str(name);
    }
    writeln!(out, "{header}")?;
    let cols: Vec<&[f64]> = series.channels().map(|(_, c)| c).collect();
    let mut line = String::new();
    for k in 0..series.len() {
        line.clear();
        line.push_str(&format!("{}", series.time(k)));
        for c in &cols {
            line.push(',');
            line.push_str(&format!("{}", c[k]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_series() -> TimeSeries {
        let n = 100;
        let ch = |f: fn(f64) -> f64| (0..n).map(|k| f(k as f64 * 0.013)).collect::<Vec<_>>();
        TimeSeries::new(
            1e-3,
            vec![
                ("i_d", ch(f64::sin)),
                ("i_q", ch(|x| x.cos() * 1e-7)),
                ("f", ch(|x| 50.0 + x / 3.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let ts = sample_series();
        let mut buf = Vec::new();
        write_csv_to(&ts, &mut buf).unwrap();
        let back = read_csv_from(buf.as_slice()).unwrap();
        assert_eq!(back.names(), ts.names());
        assert_eq!(back.len(), ts.len());
        assert!((back.sample_time() - 1e-3).abs() < 1e-15);
        for (a, b) in ts.channels().zip(back.channels()) {
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let ts = sample_series();
        write_csv(&ts, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap().channel("f"), ts.channel("f"));
    }

    #[test]
    fn ragged_row_reports_line() {
        let text = "t,a,b,c\n0,1,2,3\n0.001,1,2\n0.002,1,2,3\n";
        match read_csv_from(text.as_bytes()) {
            Err(CsvError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_line() {
        let text = "t,a\n0,1\n0.001,x\n";
        match read_csv_from(text.as_bytes()) {
            Err(CsvError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("non-numeric"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_uniform_time_rejected() {
        let text = "t,a\n0,1\n1e-3,2\n2.5e-3,3\n";
        match read_csv_from(text.as_bytes()) {
            Err(CsvError::Parse { message, .. }) => assert!(message.contains("non-uniform")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn crlf_tolerated() {
        let text = "t,a\r\n0,1\r\n0.5,2\r\n1,3\r\n";
        let ts = read_csv_from(text.as_bytes()).unwrap();
        assert_eq!(ts.channel("a").unwrap(), [1.0, 2.0, 3.0]);
        assert_eq!(ts.sample_time(), 0.5);
    }
}
