use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sorted, disjoint, non-empty half-open intervals `[start, end)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventList {
    events: Vec<(usize, usize)>,
}

impl EventList {
    pub fn new(events: Vec<(usize, usize)>) -> Result<Self> {
        for (i, &(s, e)) in events.iter().enumerate() {
            if s >= e {
                return Err(Error::Metric(format!("event [{s}, {e}) is empty")));
            }
            if i > 0 && events[i - 1].1 > s {
                return Err(Error::Metric(format!(
                    "event [{s}, {e}) overlaps or precedes [{}, {})",
                    events[i - 1].0,
                    events[i - 1].1
                )));
            }
        }
        Ok(Self { events })
    }

    /// Maximal runs of ones.
    pub fn from_labels(labels: &[u8]) -> Self {
        let mut events = Vec::new();
        let mut start = None;
        for (t, &l) in labels.iter().enumerate() {
            match (l != 0, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    events.push((s, t));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            events.push((s, labels.len()));
        }
        Self { events }
    }

    pub fn to_labels(&self, len: usize) -> Result<Vec<u8>> {
        let mut out = vec![0u8; len];
        for &(s, e) in &self.events {
            if e > len {
                return Err(Error::Metric(format!("event [{s}, {e}) exceeds length {len}")));
            }
            out[s..e].iter_mut().for_each(|v| *v = 1);
        }
        Ok(out)
    }

    pub fn events(&self) -> &[(usize, usize)] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// One past the last covered index, zero when empty.
    pub fn end(&self) -> usize {
        self.events.last().map_or(0, |e| e.1)
    }
}
