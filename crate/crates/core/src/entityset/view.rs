use std::ops::Range;

use super::{Entity, EntitySet};
use crate::error::Result;
use crate::time::Timestamp;

/// A point-in-time view: every time-indexed entity shows only rows strictly
/// before the cutoff; timeless entities are fully visible.
#[derive(Debug, Clone)]
pub struct EntitySetView<'a> {
    es: &'a EntitySet,
    cutoff: Option<Timestamp>,
    ends: Vec<usize>,
}

impl EntitySet {
    pub fn query_by_time(&self, cutoff: Timestamp) -> EntitySetView<'_> {
        EntitySetView {
            es: self,
            cutoff: Some(cutoff),
            ends: self.entities.iter().map(|e| e.rows_before(cutoff)).collect(),
        }
    }

    pub fn full_view(&self) -> EntitySetView<'_> {
        EntitySetView {
            es: self,
            cutoff: None,
            ends: self.entities.iter().map(Entity::n_rows).collect(),
        }
    }

    /// Row visibility for feature computation at `cutoff`, restricted to
    /// effective times at or after `lower` when given.
    ///
    /// A row *exists* at the cutoff when its own time index (if any) is before
    /// the cutoff and every parent row it references exists. A row is
    /// *visible* when it exists and its effective time is not before `lower`.
    pub fn snapshot(&self, cutoff: Option<Timestamp>, lower: Option<Timestamp>) -> Snapshot {
        let view = match cutoff {
            Some(c) => self.query_by_time(c),
            None => self.full_view(),
        };
        let mut exists: Vec<Vec<bool>> = self
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| (0..e.n_rows()).map(|r| r < view.ends[i]).collect())
            .collect();
        for &e in self.topo_order() {
            for rel in self.parent_relationships(e) {
                let (parent, _) = self.relationship_ends(rel);
                for row in 0..exists[e].len() {
                    if let Some(pr) = self.parent_of(rel, row) {
                        if !exists[parent][pr] {
                            exists[e][row] = false;
                        }
                    }
                }
            }
        }
        let visible = exists
            .iter()
            .enumerate()
            .map(|(e, rows)| {
                rows.iter()
                    .enumerate()
                    .map(|(r, &ok)| {
                        ok && match (lower, self.effective_time(e, r)) {
                            (Some(lo), Some(t)) => t >= lo,
                            _ => true,
                        }
                    })
                    .collect()
            })
            .collect();
        Snapshot {
            cutoff,
            lower,
            exists,
            visible,
        }
    }
}

impl<'a> EntitySetView<'a> {
    pub fn entityset(&self) -> &'a EntitySet {
        self.es
    }

    pub fn cutoff(&self) -> Option<Timestamp> {
        self.cutoff
    }

    pub fn visible_rows(&self, entity: &str) -> Result<Range<usize>> {
        let idx = self
            .es
            .entity(entity)
            .map(|_| self.es.entity_index(entity).expect("checked"))?;
        Ok(0..self.ends[idx])
    }

    pub fn n_visible(&self, entity: &str) -> Result<usize> {
        self.visible_rows(entity).map(|r| r.len())
    }

    pub fn visible_ids(&self, entity: &str) -> Result<Vec<&'a str>> {
        let e = self.es.entity(entity)?;
        Ok(self.visible_rows(entity)?.map(|r| e.id(r)).collect())
    }

    pub fn query_by_time(&self, cutoff: Timestamp) -> EntitySetView<'a> {
        let narrower = self.es.query_by_time(cutoff);
        EntitySetView {
            es: self.es,
            cutoff: match self.cutoff {
                Some(c) => Some(c.min(cutoff)),
                None => Some(cutoff),
            },
            ends: self.ends.iter().zip(&narrower.ends).map(|(a, b)| *a.min(b)).collect(),
        }
    }
}

/// Per-row visibility masks for one (cutoff, lower bound) pair.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub cutoff: Option<Timestamp>,
    pub lower: Option<Timestamp>,
    exists: Vec<Vec<bool>>,
    visible: Vec<Vec<bool>>,
}

impl Snapshot {
    pub fn exists(&self, entity: usize, row: usize) -> bool {
        self.exists[entity][row]
    }

    pub fn visible(&self, entity: usize, row: usize) -> bool {
        self.visible[entity][row]
    }

    pub fn exists_masks(&self) -> &[Vec<bool>] {
        &self.exists
    }
}
