use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub t: usize,
    pub loss: f64,
    pub cum_loss: f64,
    pub comparator_cum_loss: f64,
    pub regret: f64,
    pub avg_regret: f64,
}

/// Per-round learner losses with the comparator's prefix sums.
///
/// Until [`RegretTrace::set_comparator`] is called the comparator columns
/// hold NaN.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    records: Vec<RegretRecord>,
}

impl RegretTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<RegretRecord>) -> Self {
        RegretTrace { records }
    }

    pub fn push_loss(&mut self, loss: f64) {
        let t = self.records.len() + 1;
        let cum_loss = self.records.last().map_or(0.0, |r| r.cum_loss) + loss;
        self.records.push(RegretRecord {
            t,
            loss,
            cum_loss,
            comparator_cum_loss: f64::NAN,
            regret: f64::NAN,
            avg_regret: f64::NAN,
        });
    }

    /// Fill the comparator columns from the comparator's per-round losses.
    pub fn set_comparator(&mut self, comparator_losses: &[f64]) -> Result<()> {
        if comparator_losses.len() != self.records.len() {
            return Err(Error::DimensionMismatch {
                context: "comparator losses",
                expected: self.records.len(),
                actual: comparator_losses.len(),
            });
        }
        let mut cum = 0.0;
        for (rec, &l) in self.records.iter_mut().zip(comparator_losses) {
            cum += l;
            rec.comparator_cum_loss = cum;
            rec.regret = rec.cum_loss - cum;
            rec.avg_regret = rec.regret / rec.t as f64;
        }
        Ok(())
    }

    pub fn records(&self) -> &[RegretRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&RegretRecord> {
        self.records.last()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn final_regret(&self) -> Option<f64> {
        self.last().map(|r| r.regret)
    }

    pub fn final_average_regret(&self) -> Option<f64> {
        self.last().map(|r| r.avg_regret)
    }
}
