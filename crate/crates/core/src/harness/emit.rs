//! CSV and JSON result files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use super::config::{GammaValues, ScenarioConfig};
use super::sweep::ResultRow;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "snr_db,method,pd,far,de,trials,wall_time_s";

/// Six significant digits, fixed notation for moderate magnitudes.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0.00000".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    // Exponent after rounding, so 9.999996 becomes 10.0000.
    let sci = format!("{v:.5e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if !(-5..6).contains(&exp) {
        return sci;
    }
    format!("{:.*}", (5 - exp) as usize, v)
}

/// The value a reader recovers from [`format_sig`].
pub fn round_sig(v: f64) -> f64 {
    format_sig(v).parse().unwrap_or(v)
}

pub fn csv_row(r: &ResultRow) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        format_sig(r.snr_db),
        r.method.tag(),
        format_sig(r.pd),
        format_sig(r.far),
        format_sig(r.de),
        r.trials,
        r.wall_time_s.map(format_sig).unwrap_or_default()
    )
}

pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&csv_row(r));
        s.push('\n');
    }
    s
}

/// CSV file written row by row, flushed after each so an interrupted sweep
/// leaves every completed row on disk.
pub struct CsvSink {
    out: BufWriter<File>,
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{CSV_HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn push(&mut self, row: &ResultRow) -> Result<()> {
        writeln!(self.out, "{}", csv_row(row))?;
        self.out.flush()?;
        Ok(())
    }
}

fn number(v: f64) -> Value {
    let r = round_sig(v);
    if r.is_finite() { json!(r) } else { json!(format_sig(v)) }
}

/// JSON mirror of the CSV. The config is echoed as TOML, with the thresholds
/// actually used filled in, so it can be fed straight back to `run`.
pub fn json_value(cfg: &ScenarioConfig, gamma: &GammaValues, rows: &[ResultRow]) -> Result<Value> {
    let mut echo = cfg.clone();
    echo.gamma.set_values(gamma);
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "snr_db": number(r.snr_db),
                "method": r.method.tag(),
                "pd": number(r.pd),
                "far": number(r.far),
                "de": number(r.de),
                "trials": r.trials,
                "wall_time_s": r.wall_time_s.map(number),
            })
        })
        .collect();
    Ok(json!({
        "seed": cfg.seed,
        "config": echo.to_toml()?,
        "gamma": serde_json::to_value(gamma).map_err(|e| Error::Config(e.to_string()))?,
        "rows": rows,
    }))
}

pub fn write_json(path: &Path, cfg: &ScenarioConfig, gamma: &GammaValues, rows: &[ResultRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Dimension("result table is empty".into()));
    }
    let v = json_value(cfg, gamma, rows)?;
    let text = serde_json::to_string_pretty(&v).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Dimension("result table is empty".into()));
    }
    std::fs::write(path, csv_string(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::config::{parse_config_str, Method};
    use super::*;

    fn row(pd: f64, far: f64) -> ResultRow {
        ResultRow { snr_db: -5.0, method: Method::Gs, pd, far, de: pd * (1.0 - far), trials: 200, wall_time_s: None }
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig(1.0), "1.00000");
        assert_eq!(format_sig(0.0), "0.00000");
        assert_eq!(format_sig(-10.0), "-10.0000");
        assert_eq!(format_sig(0.123456789), "0.123457");
        assert_eq!(format_sig(0.005), "0.00500000");
        assert_eq!(format_sig(9.9999996), "10.0000");
        assert_eq!(format_sig(f64::INFINITY), "inf");
        assert_eq!(format_sig(1.5e7), "1.50000e7");
    }

    #[test]
    fn perfect_row() {
        let s = csv_string(&[row(1.0, 0.0)]);
        assert_eq!(s.lines().count(), 2);
        assert_eq!(s.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(s.lines().nth(1).unwrap(), "-5.00000,gs,1.00000,0.00000,1.00000,200,");
    }

    #[test]
    fn csv_and_json_agree() {
        let cfg = parse_config_str("layout = \"bumper_6x8\"\nsnr_db = [inf]\n").unwrap();
        let mut r = row(0.735, 1.0 / 3.0);
        r.snr_db = f64::INFINITY;
        r.wall_time_s = Some(1.23456789);
        let rows = vec![r, row(0.5, 0.5)];
        let csv = csv_string(&rows);
        let v = json_value(&cfg, &GammaValues::default(), &rows).unwrap();
        for (line, jr) in csv.lines().skip(1).zip(v["rows"].as_array().unwrap()) {
            let f: Vec<&str> = line.split(',').collect();
            let num = |x: &Value| x.as_f64().map(format_sig).unwrap_or_else(|| x.as_str().unwrap().to_string());
            assert_eq!(f[0], num(&jr["snr_db"]));
            assert_eq!(f[2], num(&jr["pd"]));
            assert_eq!(f[3], num(&jr["far"]));
            assert_eq!(f[4], num(&jr["de"]));
            assert_eq!(f[5], jr["trials"].to_string());
            assert_eq!(f[6], if jr["wall_time_s"].is_null() { String::new() } else { num(&jr["wall_time_s"]) });
        }
    }

    #[test]
    fn json_echo_reparses() {
        let cfg = parse_config_str("layout = \"bumper_6x8\"\nseed = 9\nsnr_db = [-5.0, inf]\n").unwrap();
        let gamma = GammaValues { height_gs: Some(0.25), ..Default::default() };
        let v = json_value(&cfg, &gamma, &[row(1.0, 0.0)]).unwrap();
        let back = parse_config_str(v["config"].as_str().unwrap()).unwrap();
        assert_eq!(back.seed, 9);
        assert_eq!(back.gamma.height_gs, Some(0.25));
        assert_eq!(back.snr_db, cfg.snr_db);
    }

    #[test]
    fn empty_table_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_csv(&dir.path().join("a.csv"), &[]).is_err());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let e = write_csv(Path::new("/nonexistent-dir/x/y.csv"), &[row(1.0, 0.0)]).unwrap_err();
        assert!(matches!(e, Error::Io(_)));
    }
}
