use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{ColfError, Result};
use crate::schema::FeatureSchema;

/// Context ids of one impression, one per context field.
pub type ContextIds = SmallVec<[u32; 2]>;

/// One impression `x = (u, v, c)` with its click label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClickSample {
    pub day: u32,
    pub user_id: u32,
    pub item_id: u32,
    pub context_ids: ContextIds,
    pub label: u8,
}

impl ClickSample {
    pub fn new(day: u32, user_id: u32, item_id: u32, context_ids: &[u32], label: u8) -> Self {
        Self {
            day,
            user_id,
            item_id,
            context_ids: SmallVec::from_slice(context_ids),
            label,
        }
    }

    pub fn clicked(&self) -> bool {
        self.label == 1
    }
}

/// All labeled impressions collected on one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayPartition {
    pub day: u32,
    pub samples: Vec<ClickSample>,
}

impl DayPartition {
    pub fn new(day: u32, samples: Vec<ClickSample>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.day != day) {
            return Err(ColfError::InvalidInput(format!(
                "sample from day {} in partition for day {day}",
                s.day
            )));
        }
        if let Some(s) = samples.iter().find(|s| s.label > 1) {
            return Err(ColfError::InvalidInput(format!("label {} is not 0/1", s.label)));
        }
        Ok(Self { day, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn click_rate(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.clicked()).count() as f64 / self.samples.len() as f64
    }

    /// Distinct item ids, ascending.
    pub fn items(&self) -> Vec<u32> {
        let mut items: Vec<u32> = self.samples.iter().map(|s| s.item_id).collect();
        items.sort_unstable();
        items.dedup();
        items
    }
}

/// A sequence of day partitions in ascending contiguous day order.
///
/// `catalog`, when present, holds the active item set of each day (as
/// produced by the generator); streams read back from disk do not carry it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stream {
    pub schema: FeatureSchema,
    pub days: Vec<DayPartition>,
    pub catalog: Option<Vec<Vec<u32>>>,
}

impl Stream {
    pub fn new(schema: FeatureSchema, days: Vec<DayPartition>) -> Result<Self> {
        for pair in days.windows(2) {
            if pair[1].day != pair[0].day + 1 {
                return Err(ColfError::InvalidInput(format!(
                    "days must be ascending and contiguous, found {} after {}",
                    pair[1].day, pair[0].day
                )));
            }
        }
        for d in &days {
            if let Some(s) = d.samples.first() {
                schema.check_sample(s)?;
            }
        }
        Ok(Self {
            schema,
            days,
            catalog: None,
        })
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn n_samples(&self) -> usize {
        self.days.iter().map(DayPartition::len).sum()
    }

    pub fn first_day(&self) -> Option<u32> {
        self.days.first().map(|d| d.day)
    }

    pub fn last_day(&self) -> Option<u32> {
        self.days.last().map(|d| d.day)
    }

    pub fn day(&self, day: u32) -> Result<&DayPartition> {
        let first = self
            .first_day()
            .ok_or_else(|| ColfError::InvalidInput("stream has no days".into()))?;
        day.checked_sub(first)
            .and_then(|i| self.days.get(i as usize))
            .ok_or_else(|| {
                ColfError::InvalidInput(format!(
                    "day {day} outside stream range {first}..={}",
                    self.last_day().unwrap_or(first)
                ))
            })
    }

    /// Active item set on `day`: the generator's catalog when known, else
    /// the items observed in that day's impressions. Sorted ascending.
    pub fn item_set(&self, day: u32) -> Result<Vec<u32>> {
        let partition = self.day(day)?;
        match &self.catalog {
            Some(cat) => {
                let idx = (day - self.first_day().unwrap_or(day)) as usize;
                let mut items = cat[idx].clone();
                items.sort_unstable();
                Ok(items)
            }
            None => Ok(partition.items()),
        }
    }

    /// Copy holding only the first `n` days.
    pub fn truncated(&self, n: usize) -> Stream {
        Stream {
            schema: self.schema.clone(),
            days: self.days.iter().take(n).cloned().collect(),
            catalog: self
                .catalog
                .as_ref()
                .map(|c| c.iter().take(n).cloned().collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_rejects_foreign_day() {
        let s = ClickSample::new(2, 1, 1, &[0], 0);
        assert!(DayPartition::new(1, vec![s]).is_err());
    }

    #[test]
    fn stream_rejects_gaps() {
        let schema = FeatureSchema::ctr(1, 4).unwrap();
        let d1 = DayPartition::new(1, vec![ClickSample::new(1, 0, 0, &[0], 1)]).unwrap();
        let d3 = DayPartition::new(3, vec![ClickSample::new(3, 0, 0, &[0], 0)]).unwrap();
        assert!(Stream::new(schema, vec![d1, d3]).is_err());
    }

    #[test]
    fn day_lookup_checks_range() {
        let schema = FeatureSchema::ctr(0, 4).unwrap();
        let d = DayPartition::new(5, vec![ClickSample::new(5, 0, 0, &[], 1)]).unwrap();
        let s = Stream::new(schema, vec![d]).unwrap();
        assert_eq!(s.day(5).unwrap().day, 5);
        assert!(s.day(4).is_err());
        assert!(s.day(6).is_err());
    }
}
