use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: u8,
    /// 1-based within the stage.
    pub epoch: usize,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    /// `None` when there is no validation set or the correlation is undefined.
    pub val_srcc: Option<f64>,
    pub val_plcc: Option<f64>,
    pub val_score: Option<f64>,
    /// Learning rate at the epoch's first step.
    pub lr: f64,
    /// Wall time of the epoch, seconds.
    pub sec: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<EpochRecord>,
}

impl RunLog {
    pub fn push(&mut self, r: EpochRecord) {
        self.records.push(r);
    }

    pub fn extend(&mut self, other: RunLog) {
        self.records.extend(other.records);
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<RunLog> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("run log line {}: {e}", i + 1))))
            .collect::<Result<_>>()?;
        Ok(RunLog { records })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Records with the wall-clock column zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> RunLog {
        RunLog {
            records: self.records.iter().map(|r| EpochRecord { sec: 0.0, ..r.clone() }).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_with_nulls() {
        let mut log = RunLog::default();
        log.push(EpochRecord {
            stage: 1,
            epoch: 3,
            loss: 0.25,
            val_srcc: None,
            val_plcc: Some(0.5),
            val_score: None,
            lr: 1e-3,
            sec: 1.5,
        });
        let text = log.to_jsonl();
        assert!(text.starts_with(r#"{"stage":1,"epoch":3,"loss":0.25,"val_srcc":null"#));
        assert_eq!(RunLog::from_jsonl(&text).unwrap(), log);
    }
}
