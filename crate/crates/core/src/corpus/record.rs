use std::io::BufRead;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One review as it appears in an Amazon 5-core JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(rename = "reviewerID")]
    pub user_id: String,
    #[serde(rename = "asin")]
    pub item_id: String,
    #[serde(rename = "overall")]
    pub rating: f64,
    #[serde(rename = "reviewText", default)]
    pub review_text: String,
    #[serde(rename = "unixReviewTime", default)]
    pub timestamp: Option<i64>,
}

impl RawRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.user_id.is_empty() || self.item_id.is_empty() {
            return Err("empty user or item id".into());
        }
        if !(1.0..=5.0).contains(&self.rating) {
            return Err(format!("rating {} outside [1, 5]", self.rating));
        }
        Ok(())
    }
}

/// Records read from a stream plus the number of lines that were skipped.
#[derive(Debug, Default)]
pub struct RecordBatch {
    pub records: Vec<RawRecord>,
    pub skipped: usize,
}

/// Reads newline-delimited JSON. Malformed or invalid lines are skipped
/// and counted; blank lines are ignored.
pub fn read_records<R: BufRead>(reader: R) -> Result<RecordBatch> {
    let mut batch = RecordBatch::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawRecord>(&line) {
            Ok(rec) => match rec.validate() {
                Ok(()) => batch.records.push(rec),
                Err(why) => {
                    warn!("line {}: {why}", lineno + 1);
                    batch.skipped += 1;
                }
            },
            Err(e) => {
                warn!("line {}: {e}", lineno + 1);
                batch.skipped += 1;
            }
        }
    }
    Ok(batch)
}
