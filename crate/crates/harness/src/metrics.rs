//! Per-epoch metrics records and their file formats.
//!
//! Floats are rendered with 17 significant digits in both formats, so a
//! round-trip parse reproduces every value exactly. Files are written
//! atomically (temp file + rename).

use std::fs;
use std::path::Path;

use crate::config::OutputFormat;
use crate::error::{HarnessError, Result};

/// One row of training metrics. The clean/noisy training accuracies are
/// computed over the unflipped/flipped partitions of the corrupted
/// training set, against the recorded (possibly wrong) labels; the
/// predicted-class marginals are the class frequencies of the model's
/// training-set predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc_clean: f64,
    pub train_acc_noisy: f64,
    pub test_acc: f64,
    pub pred_marginals: Vec<f64>,
    pub wall_ms: u64,
}

fn render_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV header for a given class count.
pub fn csv_header(k: usize) -> String {
    let mut fields = vec![
        "epoch".to_string(),
        "lr".to_string(),
        "train_loss".to_string(),
        "train_acc_clean".to_string(),
        "train_acc_noisy".to_string(),
        "test_acc".to_string(),
    ];
    for i in 0..k {
        fields.push(format!("pred_marginal_{i}"));
    }
    fields.push("wall_ms".to_string());
    fields.join(",")
}

pub fn to_csv(records: &[MetricsRecord]) -> String {
    let k = records.first().map(|r| r.pred_marginals.len()).unwrap_or(0);
    let mut out = csv_header(k);
    out.push('\n');
    for r in records {
        let mut fields = vec![
            r.epoch.to_string(),
            render_f64(r.lr),
            render_f64(r.train_loss),
            render_f64(r.train_acc_clean),
            render_f64(r.train_acc_noisy),
            render_f64(r.test_acc),
        ];
        for &m in &r.pred_marginals {
            fields.push(render_f64(m));
        }
        fields.push(r.wall_ms.to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn to_jsonl(records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!(
            "{{\"epoch\":{},\"lr\":{},\"train_loss\":{},\"train_acc_clean\":{},\"train_acc_noisy\":{},\"test_acc\":{}",
            r.epoch,
            render_f64(r.lr),
            render_f64(r.train_loss),
            render_f64(r.train_acc_clean),
            render_f64(r.train_acc_noisy),
            render_f64(r.test_acc),
        ));
        for (i, &m) in r.pred_marginals.iter().enumerate() {
            out.push_str(&format!(",\"pred_marginal_{i}\":{}", render_f64(m)));
        }
        out.push_str(&format!(",\"wall_ms\":{}}}\n", r.wall_ms));
    }
    out
}

/// Writes the records to `path` in the requested format, atomically.
pub fn emit_metrics(records: &[MetricsRecord], path: &Path, format: OutputFormat) -> Result<()> {
    let content = match format {
        OutputFormat::Csv => to_csv(records),
        OutputFormat::Jsonl => to_jsonl(records),
    };
    let display = path.display().to_string();
    let tmp = path.with_extension(format!(
        "tmp.{}",
        std::process::id()
    ));
    fs::write(&tmp, content).map_err(|e| HarnessError::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(display, e))
}

/// Parses a CSV metrics file back into records.
pub fn parse_csv(content: &str, origin: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = content.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::config(origin, "empty metrics file"))?;
    let columns: Vec<&str> = header.split(',').collect();
    let k = columns
        .iter()
        .filter(|c| c.starts_with("pred_marginal_"))
        .count();
    if columns.len() != 7 + k {
        return Err(HarnessError::config(origin, "unexpected metrics header"));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(HarnessError::config(
                origin,
                format!("line {}: wrong field count", lineno + 2),
            ));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| HarnessError::config(origin, format!("bad float '{s}'")))
        };
        records.push(MetricsRecord {
            epoch: fields[0]
                .parse()
                .map_err(|_| HarnessError::config(origin, "bad epoch"))?,
            lr: parse_f(fields[1])?,
            train_loss: parse_f(fields[2])?,
            train_acc_clean: parse_f(fields[3])?,
            train_acc_noisy: parse_f(fields[4])?,
            test_acc: parse_f(fields[5])?,
            pred_marginals: fields[6..6 + k]
                .iter()
                .map(|s| parse_f(s))
                .collect::<Result<_>>()?,
            wall_ms: fields[6 + k]
                .parse()
                .map_err(|_| HarnessError::config(origin, "bad wall_ms"))?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<MetricsRecord> {
        vec![
            MetricsRecord {
                epoch: 0,
                lr: 0.01,
                train_loss: 1.2345678901234567,
                train_acc_clean: 0.5,
                train_acc_noisy: 0.125,
                test_acc: 0.625,
                pred_marginals: vec![0.3, 0.3, 0.4],
                wall_ms: 0,
            },
            MetricsRecord {
                epoch: 1,
                lr: 0.0099,
                train_loss: 0.9,
                train_acc_clean: 0.75,
                train_acc_noisy: 0.0625,
                test_acc: 0.8125,
                pred_marginals: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                wall_ms: 17,
            },
        ]
    }

    #[test]
    fn csv_has_header_plus_one_line_per_record() {
        let csv = to_csv(&sample_records());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "epoch,lr,train_loss,train_acc_clean,train_acc_noisy,test_acc,pred_marginal_0,pred_marginal_1,pred_marginal_2,wall_ms"
        );
    }

    #[test]
    fn header_enumerates_all_marginals() {
        let header = csv_header(10);
        assert!(header.contains("pred_marginal_0"));
        assert!(header.contains("pred_marginal_9"));
        assert!(!header.contains("pred_marginal_10"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let records = sample_records();
        let parsed = parse_csv(&to_csv(&records), "mem").unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let records = sample_records();
        let jsonl = to_jsonl(&records);
        for (line, record) in jsonl.lines().zip(&records) {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(value["epoch"].as_u64().unwrap() as usize, record.epoch);
            assert_eq!(value["lr"].as_f64().unwrap(), record.lr);
            assert_eq!(value["train_loss"].as_f64().unwrap(), record.train_loss);
            assert_eq!(
                value["pred_marginal_2"].as_f64().unwrap(),
                record.pred_marginals[2]
            );
            assert_eq!(value["wall_ms"].as_u64().unwrap(), record.wall_ms);
        }
    }

    #[test]
    fn emit_writes_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        emit_metrics(&sample_records(), &path, OutputFormat::Csv).unwrap();
        let content = fs::read_to_string(&path).unwrap();
        assert_eq!(content, to_csv(&sample_records()));
        // No temp droppings left behind.
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
