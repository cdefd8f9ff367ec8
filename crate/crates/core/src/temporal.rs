//! Temporal layer: one ordered index per timestamp field.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::id::ParticleId;
use crate::model::TemporalMetadata;
use crate::{Error, Millis, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalField {
    TCreate,
    TModify,
    TAccess,
    TEventStart,
    TEventEnd,
}

impl TemporalField {
    pub const ALL: [TemporalField; 5] = [
        TemporalField::TCreate,
        TemporalField::TModify,
        TemporalField::TAccess,
        TemporalField::TEventStart,
        TemporalField::TEventEnd,
    ];

    pub fn get(self, t: &TemporalMetadata) -> Option<Millis> {
        match self {
            TemporalField::TCreate => Some(t.t_create),
            TemporalField::TModify => Some(t.t_modify),
            TemporalField::TAccess => Some(t.t_access),
            TemporalField::TEventStart => t.t_event_start,
            TemporalField::TEventEnd => t.t_event_end,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TemporalField::TCreate => "t_create",
            TemporalField::TModify => "t_modify",
            TemporalField::TAccess => "t_access",
            TemporalField::TEventStart => "t_event_start",
            TemporalField::TEventEnd => "t_event_end",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TemporalIndex {
    fields: [BTreeSet<(Millis, ParticleId)>; 5],
    current: BTreeMap<ParticleId, TemporalMetadata>,
}

impl TemporalIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    pub fn field_len(&self, field: TemporalField) -> usize {
        self.fields[field.slot()].len()
    }

    pub fn contains(&self, id: ParticleId) -> bool {
        self.current.contains_key(&id)
    }

    pub fn get(&self, id: ParticleId) -> Option<&TemporalMetadata> {
        self.current.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParticleId> + '_ {
        self.current.keys().copied()
    }

    /// Every (value, id) entry of one field index in index order.
    pub fn entries(&self, field: TemporalField) -> impl Iterator<Item = (Millis, ParticleId)> + '_ {
        self.fields[field.slot()].iter().copied()
    }

    pub fn insert(&mut self, id: ParticleId, t: TemporalMetadata) -> Result<()> {
        if self.current.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        for field in TemporalField::ALL {
            if let Some(v) = field.get(&t) {
                self.fields[field.slot()].insert((v, id));
            }
        }
        self.current.insert(id, t);
        Ok(())
    }

    pub fn remove(&mut self, id: ParticleId) -> Result<TemporalMetadata> {
        let t = self.current.remove(&id).ok_or(Error::NotFound(id))?;
        for field in TemporalField::ALL {
            if let Some(v) = field.get(&t) {
                self.fields[field.slot()].remove(&(v, id));
            }
        }
        Ok(t)
    }

    pub fn reindex(&mut self, id: ParticleId, old: &TemporalMetadata, new: TemporalMetadata) -> Result<()> {
        let current = self.current.get(&id).ok_or(Error::NotFound(id))?;
        if current != old {
            return Err(Error::StaleOldValue(id));
        }
        for field in TemporalField::ALL {
            let (before, after) = (field.get(old), field.get(&new));
            if before == after {
                continue;
            }
            let set = &mut self.fields[field.slot()];
            if let Some(v) = before {
                set.remove(&(v, id));
            }
            if let Some(v) = after {
                set.insert((v, id));
            }
        }
        self.current.insert(id, new);
        Ok(())
    }

    /// Ids whose `field` lies in `[lo, hi]`, ordered by (value, id).
    pub fn range_query(&self, field: TemporalField, lo: Millis, hi: Millis) -> Result<Vec<ParticleId>> {
        Ok(self.range_iter(field, lo, hi)?.collect())
    }

    pub fn range_iter(
        &self,
        field: TemporalField,
        lo: Millis,
        hi: Millis,
    ) -> Result<impl Iterator<Item = ParticleId> + '_> {
        if lo > hi {
            return Err(Error::InvertedRange { lo, hi });
        }
        Ok(self.fields[field.slot()]
            .range((lo, ParticleId::MIN)..=(hi, ParticleId::MAX))
            .map(|&(_, id)| id))
    }

    pub fn range_count(&self, field: TemporalField, lo: Millis, hi: Millis) -> Result<usize> {
        Ok(self.range_iter(field, lo, hi)?.count())
    }
}
