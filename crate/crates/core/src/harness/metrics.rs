//! Append-only metrics records. The full log (metrics.jsonl) carries wall
//! clock and timestamps; the canonical report (metrics.json) strips them so
//! that identical (config, seed) reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    /// Metric name -> value; BTreeMap keeps serialization order canonical.
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_secs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
}

impl MetricsRecord {
    pub fn new(stage: &str, config_hash: &str, seed: u64) -> Self {
        MetricsRecord {
            stage: stage.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            metrics: BTreeMap::new(),
            wall_clock_secs: None,
            timestamp_unix: None,
        }
    }

    pub fn put(&mut self, key: &str, value: f64) -> &mut Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    pub fn stamp(&mut self, wall_clock_secs: f64) -> &mut Self {
        self.wall_clock_secs = Some(wall_clock_secs);
        self.timestamp_unix =
            Some(SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        self
    }

    /// Copy without the non-reproducible fields.
    pub fn canonical(&self) -> MetricsRecord {
        MetricsRecord {
            stage: self.stage.clone(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            metrics: self.metrics.clone(),
            wall_clock_secs: None,
            timestamp_unix: None,
        }
    }
}

/// Append one record to the running JSON-lines log.
pub fn append_jsonl(path: &Path, record: &MetricsRecord) -> Result<()> {
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(file, "{}", serde_json::to_string(record).expect("record serializes"))?;
    Ok(())
}

/// Write the canonical deterministic report (pretty JSON, stable order).
pub fn write_canonical(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let canonical: Vec<MetricsRecord> = records.iter().map(|r| r.canonical()).collect();
    let json = serde_json::to_string_pretty(&canonical).expect("records serialize");
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn read_canonical(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text).map_err(|e| crate::error::Error::format(e.to_string()))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_report_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = MetricsRecord::new("stage", "abc", 42);
        r.put("f1", 0.5).put("accuracy", 0.25);
        r.stamp(1.23);
        let p1 = dir.path().join("m1.json");
        let p2 = dir.path().join("m2.json");
        write_canonical(&p1, &[r.clone()]).unwrap();
        // A rerun with different wall clock produces the same canonical file.
        let mut r2 = r.clone();
        r2.stamp(99.0);
        write_canonical(&p2, &[r2]).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        let back = read_canonical(&p1).unwrap();
        assert_eq!(back[0].metrics["f1"], 0.5);
        assert!(back[0].wall_clock_secs.is_none());
    }
}
