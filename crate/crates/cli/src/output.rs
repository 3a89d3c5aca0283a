//! Report emission. Everything except the manifest is a pure function of
//! the model, the configuration and the seed, so reruns are byte-identical.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::checks::{CheckOutcome, Table};
use crate::model::ModelSpec;
use crate::CliResult;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

pub fn table_csv(t: &Table) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.header).expect("in-memory write");
    for row in &t.rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
}

/// A gnuplot script plotting the table's CSV to a PNG of the same stem.
pub fn gnuplot_script(t: &Table) -> Option<String> {
    let p = t.plot.as_ref()?;
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str(&format!("set terminal pngcairo size 900,600\nset output '{}.png'\n", t.name));
    s.push_str(&format!("set xlabel '{}'\nset ylabel '{}'\n", t.header[p.x - 1], t.header[p.y - 1]));
    if !p.logscale.is_empty() {
        s.push_str(&format!("set logscale {}\n", p.logscale));
    }
    s.push_str("set key outside\n");
    match p.series {
        None => s.push_str(&format!("plot '{}.csv' skip 1 using {}:{} with linespoints notitle\n", t.name, p.x, p.y)),
        Some(c) => {
            let mut keys: Vec<&str> = t.rows.iter().map(|r| r[c - 1].as_str()).collect();
            keys.sort_unstable();
            keys.dedup();
            let parts: Vec<String> = keys
                .iter()
                .map(|k| {
                    format!(
                        "'{}.csv' skip 1 using (strcol({c}) eq '{k}' ? ${} : 1/0):{} with linespoints title '{k}'",
                        t.name, p.x, p.y
                    )
                })
                .collect();
            s.push_str(&format!("plot {}\n", parts.join(", \\\n     ")));
        }
    }
    Some(s)
}

/// The check's JSON report, with the run identity but no timestamps.
pub fn check_report(spec: &ModelSpec, seed: Option<u64>, outcome: &CheckOutcome) -> Value {
    json!({
        "check": outcome.name,
        "model": spec.name,
        "model_sha256": spec.sha256(),
        "code_version": CODE_VERSION,
        "seed": seed,
        "pass": outcome.pass,
        "summary": outcome.summary,
        "result": outcome.report,
    })
}

pub fn write_tables(dir: &Path, tables: &[Table]) -> CliResult<()> {
    for t in tables {
        fs::write(dir.join(format!("{}.csv", t.name)), table_csv(t))?;
        if let Some(g) = gnuplot_script(t) {
            fs::write(dir.join(format!("{}.gp", t.name)), g)?;
        }
    }
    Ok(())
}

pub fn write_check(dir: &Path, spec: &ModelSpec, seed: Option<u64>, outcome: &CheckOutcome) -> CliResult<()> {
    fs::write(dir.join(format!("{}.json", outcome.name)), to_json(&check_report(spec, seed, outcome)))?;
    write_tables(dir, &outcome.tables)
}

/// Run identity plus wall-clock times; the only non-reproducible file.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub model: String,
    pub model_sha256: String,
    pub code_version: &'static str,
    pub seed: Option<u64>,
    pub threads: usize,
    pub out: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub files: Vec<String>,
    pub checks: Vec<Value>,
}

pub fn write_manifest(dir: &Path, m: &Manifest) -> CliResult<()> {
    fs::write(dir.join("manifest.json"), to_json(m))?;
    Ok(())
}

pub fn list_files(dir: &Path) -> CliResult<Vec<String>> {
    let mut v: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    v.sort();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks::Plot;

    fn table() -> Table {
        Table {
            name: "t".into(),
            header: vec!["a".into(), "b,c".into()],
            rows: vec![vec!["1".into(), "x\"y".into()], vec!["2".into(), "z".into()]],
            plot: Some(Plot {
                x: 1,
                y: 2,
                logscale: "xy",
                series: None,
            }),
        }
    }

    #[test]
    fn csv_quotes_only_when_needed() {
        assert_eq!(table_csv(&table()), "a,\"b,c\"\n1,\"x\"\"y\"\n2,z\n");
    }

    #[test]
    fn gnuplot_reads_the_csv() {
        let g = gnuplot_script(&table()).unwrap();
        assert!(g.contains("'t.csv'") && g.contains("set logscale xy"));
        let mut t = table();
        t.plot = None;
        assert!(gnuplot_script(&t).is_none());
    }
}
