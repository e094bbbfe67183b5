//! CSV and plot-data output.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::run::{MetricsRow, SweepRow};
use super::MetricsError;

pub const CSV_HEADER: &str = "protocol,node_count,networking_time_us,establish_util,data_util,seed";

/// Orders rows by protocol tag, node count, then seed.
pub fn sort_rows(rows: &mut [MetricsRow]) {
    rows.sort_by(|a, b| {
        (a.protocol.tag(), a.node_count, a.seed).cmp(&(b.protocol.tag(), b.node_count, b.seed))
    });
}

pub fn write_csv<W: Write>(rows: &[MetricsRow], w: W) -> Result<(), MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::Validation("no rows to write".into()));
    }
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut wtr = csv::Writer::from_writer(w);
    for r in &sorted {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<(), MetricsError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<MetricsRow>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(MetricsError::Validation(format!("unexpected CSV header `{}`", header.join(","))));
    }
    Ok(rdr.deserialize().collect::<Result<Vec<MetricsRow>, _>>()?)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<(), MetricsError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One TSV per figure (networking time, establishment and data-phase
/// utilization): node count down the rows, one column per protocol, values
/// averaged over seeds.
pub fn write_plot_data(rows: &[MetricsRow], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, MetricsError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let protocols: BTreeSet<&'static str> = rows.iter().map(|r| r.protocol.tag()).collect();
    let series: [(&str, fn(&MetricsRow) -> f64); 3] = [
        ("networking_time", |r| r.networking_time_us as f64 / 1e6),
        ("establish_util", |r| r.establish_util),
        ("data_util", |r| r.data_util),
    ];
    let mut written = Vec::new();
    for (name, value) in series {
        let mut cells: BTreeMap<(usize, &str), Vec<f64>> = BTreeMap::new();
        for r in rows {
            cells.entry((r.node_count, r.protocol.tag())).or_default().push(value(r));
        }
        let counts: BTreeSet<usize> = rows.iter().map(|r| r.node_count).collect();
        let mut out = String::from("node_count");
        for p in &protocols {
            out.push('\t');
            out.push_str(p);
        }
        out.push('\n');
        for n in counts {
            out.push_str(&n.to_string());
            for p in &protocols {
                out.push('\t');
                if let Some(v) = cells.get(&(n, *p)) {
                    out.push_str(&(v.iter().sum::<f64>() / v.len() as f64).to_string());
                }
            }
            out.push('\n');
        }
        let path = dir.join(format!("{name}.tsv"));
        fs::write(&path, out)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Protocol;

    fn row(p: Protocol, n: usize, seed: u64) -> MetricsRow {
        MetricsRow { protocol: p, node_count: n, networking_time_us: 1_000 * n as u64, establish_util: 0.1 + n as f64 / 1e3, data_util: 1.0 / 3.0, seed }
    }

    #[test]
    fn one_row_two_lines() {
        let mut buf = Vec::new();
        write_csv(&[row(Protocol::Pmac, 8, 1)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("pmac,8,8000,"));
    }

    #[test]
    fn out_of_order_rows_sorted() {
        let rows = vec![row(Protocol::Pmac, 16, 1), row(Protocol::Csma, 8, 2), row(Protocol::Pmac, 8, 1), row(Protocol::Csma, 8, 1)];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        let keys: Vec<(Protocol, usize, u64)> = back.iter().map(|r| (r.protocol, r.node_count, r.seed)).collect();
        assert_eq!(keys, vec![(Protocol::Csma, 8, 1), (Protocol::Csma, 8, 2), (Protocol::Pmac, 8, 1), (Protocol::Pmac, 16, 1)]);
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(write_csv(&[], Vec::new()).is_err());
    }

    #[test]
    fn bad_header_rejected() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn plot_data_files() {
        let dir = std::env::temp_dir().join(format!("plot-data-{}", std::process::id()));
        let files = write_plot_data(&[row(Protocol::Pmac, 8, 1), row(Protocol::Csma, 8, 1)], &dir).unwrap();
        assert_eq!(files.len(), 3);
        let t = fs::read_to_string(&files[0]).unwrap();
        assert_eq!(t.lines().next().unwrap(), "node_count\tcsma\tpmac");
        fs::remove_dir_all(dir).unwrap();
    }
}
