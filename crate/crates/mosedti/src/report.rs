//! Metrics and training-log CSVs.
//!
//! Every CSV starts with `#` comment lines echoing the resolved
//! configuration and its fingerprint; read them back with the comment
//! character set to `#`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use mosedti_core::ablation::{Variant, VariantOutcome};
use mosedti_core::config::RunConfig;
use mosedti_core::moe::Availability;
use mosedti_core::synergy::TrainingLog;

use crate::io::{IoError, Result};

pub const METRICS_HEADER: [&str; 10] = [
    "variant",
    "dataset",
    "shots",
    "availability",
    "seed",
    "ACC",
    "AUC",
    "AUPR",
    "pairs",
    "note",
];

/// One evaluated variant under one setting and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub variant: Variant,
    pub dataset: String,
    pub shots: usize,
    pub availability: Availability,
    pub seed: u64,
    pub acc: Option<f64>,
    pub auc: Option<f64>,
    pub aupr: Option<f64>,
    pub pairs: usize,
    pub note: String,
}

impl MetricsRow {
    pub fn from_outcome(o: &VariantOutcome, dataset: &str, shots: usize, seed: u64) -> Self {
        let (acc, auc, aupr, pairs, note) = match &o.metrics {
            Ok(m) => {
                let undefined = if m.auc.is_none() { "single-class test set" } else { "" };
                (Some(m.acc), m.auc, m.aupr, m.n, undefined.to_string())
            }
            Err(e) => (None, None, None, 0, e.clone()),
        };
        Self {
            variant: o.variant,
            dataset: dataset.into(),
            shots,
            availability: o.availability,
            seed,
            acc,
            auc,
            aupr,
            pairs,
            note,
        }
    }
}

pub fn fmt_metric(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), |v| format!("{v:.6}"))
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> IoError {
    IoError::Invalid(format!("{}: {e}", path.display()))
}

/// Comment block echoing the configuration.
pub fn config_preamble(config: &RunConfig) -> String {
    let mut s = format!("# config fingerprint {:016x}\n", config.fingerprint());
    for line in config.render().lines() {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s
}

fn write_csv(path: &Path, config: &RunConfig, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut buf = config_preamble(config).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(|e| csv_err(path, e))?;
        for r in rows {
            w.write_record(&r).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| csv_err(path, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|source| IoError::Read {
        path: path.into(),
        source,
    })?;
    f.write_all(&buf).map_err(|source| IoError::Read {
        path: path.into(),
        source,
    })
}

pub fn write_metrics(path: &Path, config: &RunConfig, rows: &[MetricsRow]) -> Result<()> {
    let records = rows
        .iter()
        .map(|r| {
            vec![
                r.variant.name().into(),
                r.dataset.clone(),
                r.shots.to_string(),
                r.availability.name().into(),
                r.seed.to_string(),
                fmt_metric(r.acc),
                fmt_metric(r.auc),
                fmt_metric(r.aupr),
                r.pairs.to_string(),
                r.note.clone(),
            ]
        })
        .collect();
    write_csv(path, config, &METRICS_HEADER, records)
}

/// Mean and sample standard deviation of the defined values.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: Variant,
    pub dataset: String,
    pub shots: usize,
    pub availability: Availability,
    /// Seeds with defined metrics, out of all seeds run.
    pub seeds: (usize, usize),
    pub acc: Option<(f64, f64)>,
    pub auc: Option<(f64, f64)>,
    pub aupr: Option<(f64, f64)>,
}

/// Groups rows by (dataset, shots, availability, variant) in that order.
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize, Availability, Variant), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.dataset.clone(), r.shots, r.availability, r.variant))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((dataset, shots, availability, variant), rs)| {
            let pick = |f: fn(&MetricsRow) -> Option<f64>| mean_std(&rs.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                variant,
                dataset,
                shots,
                availability,
                seeds: (rs.iter().filter(|r| r.auc.is_some()).count(), rs.len()),
                acc: pick(|r| r.acc),
                auc: pick(|r| r.auc),
                aupr: pick(|r| r.aupr),
            }
        })
        .collect()
}

fn pm(x: Option<(f64, f64)>) -> String {
    x.map_or_else(|| "NA".into(), |(m, s)| format!("{m:.4} ± {s:.4}"))
}

pub fn write_summary(path: &Path, config: &RunConfig, rows: &[SummaryRow]) -> Result<()> {
    let header = ["variant", "dataset", "shots", "availability", "seeds", "ACC", "AUC", "AUPR"];
    let records = rows
        .iter()
        .map(|r| {
            vec![
                r.variant.name().into(),
                r.dataset.clone(),
                r.shots.to_string(),
                r.availability.name().into(),
                format!("{}/{}", r.seeds.0, r.seeds.1),
                pm(r.acc),
                pm(r.auc),
                pm(r.aupr),
            ]
        })
        .collect();
    write_csv(path, config, &header, records)
}

/// One line per epoch, then one per pseudo-label batch, then warnings.
pub fn write_training_log(path: &Path, config: &RunConfig, log: &TrainingLog) -> Result<()> {
    let header = [
        "kind",
        "stage",
        "epoch",
        "loss",
        "generator",
        "candidates",
        "pseudo_positives",
        "pseudo_negatives",
        "positive_weight",
        "negative_weight",
        "message",
    ];
    let mut records = Vec::new();
    for e in &log.epochs {
        let mut r = vec![String::new(); header.len()];
        r[0] = "epoch".into();
        r[1] = e.stage.name().into();
        r[2] = e.epoch.to_string();
        r[3] = format!("{:.9}", e.loss);
        records.push(r);
    }
    for b in &log.batches {
        let mut r = vec![String::new(); header.len()];
        r[0] = "batch".into();
        r[1] = b.stage.name().into();
        r[4] = b.generator.name().into();
        r[5] = b.candidates.to_string();
        r[6] = b.pseudo_positives.to_string();
        r[7] = b.pseudo_negatives.to_string();
        r[8] = format!("{}", b.positive_weight);
        r[9] = format!("{}", b.negative_weight);
        records.push(r);
    }
    for w in &log.warnings {
        let mut r = vec![String::new(); header.len()];
        r[0] = "warning".into();
        r[10] = w.clone();
        records.push(r);
    }
    write_csv(path, config, &header, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: Variant, seed: u64, auc: Option<f64>) -> MetricsRow {
        MetricsRow {
            variant,
            dataset: "synthetic".into(),
            shots: 10,
            availability: Availability::Both,
            seed,
            acc: Some(0.5),
            auc,
            aupr: auc,
            pairs: 8,
            note: String::new(),
        }
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.7]), Some((0.7, 0.0)));
        assert_eq!(mean_std(&[]), None);
    }

    #[test]
    fn summary_groups_and_skips_undefined() {
        let rows = [
            row(Variant::MoseDti, 0, Some(0.8)),
            row(Variant::MoseDti, 1, None),
            row(Variant::TrueIntr, 0, Some(0.6)),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].variant, Variant::TrueIntr);
        assert_eq!(s[1].seeds, (1, 2));
        assert_eq!(s[1].auc, Some((0.8, 0.0)));
    }

    #[test]
    fn metrics_csv_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let cfg = RunConfig::default();
        write_metrics(&p, &cfg, &[row(Variant::MoseIntr, 3, None)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(&format!("# config fingerprint {:016x}\n", cfg.fingerprint())));
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&p).unwrap();
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), METRICS_HEADER);
        let rec = r.records().next().unwrap().unwrap();
        assert_eq!(&rec[0], "Mose-intr");
        assert_eq!(&rec[6], "NA");
    }
}
