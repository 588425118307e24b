//! The persisted event log and its query interface.

use std::io;
use std::path::Path;

use fibersense_core::engine::EventRecord;

use crate::jsonl::JsonlAppender;

/// All records of a run in emission order, optionally mirrored to an
/// append-only JSON-lines file.
#[derive(Default)]
pub struct EventStore {
    records: Vec<EventRecord>,
    log: Option<JsonlAppender>,
}

impl EventStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_log(path: &Path) -> io::Result<Self> {
        Ok(Self { records: Vec::new(), log: Some(JsonlAppender::open(path)?) })
    }

    pub fn append(&mut self, rec: EventRecord) -> io::Result<()> {
        if let Some(log) = &mut self.log {
            log.append(&rec)?;
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    /// Records with `t_s >= since` (and the given id), ordered by
    /// `(t_s, id, sequence)`.
    pub fn query(&self, since_t_s: Option<f64>, id: Option<u64>) -> Vec<EventRecord> {
        let mut hits: Vec<(usize, &EventRecord)> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| since_t_s.is_none_or(|s| r.t_s >= s) && id.is_none_or(|i| r.id == i))
            .collect();
        hits.sort_by(|(sa, a), (sb, b)| a.t_s.total_cmp(&b.t_s).then(a.id.cmp(&b.id)).then(sa.cmp(sb)));
        hits.into_iter().map(|(_, r)| r.clone()).collect()
    }
}
