//! Finite topological spaces given by a basis.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

pub type PointSet = BTreeSet<usize>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpaceError {
    #[error("topology generation exceeded {0} open sets")]
    CapExceeded(usize),
}

/// Default bound on the number of open sets generated from a basis.
pub const DEFAULT_OPEN_CAP: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FiniteSpace {
    pub points: Vec<String>,
    pub basis: Vec<PointSet>,
    /// All open sets, sorted by size and then lexicographically.
    pub opens: Vec<PointSet>,
}

impl FiniteSpace {
    /// Closes `basis` together with `∅` and the whole space under pairwise
    /// intersection and union.
    pub fn generate(points: Vec<String>, basis: Vec<PointSet>, cap: usize) -> Result<FiniteSpace, SpaceError> {
        let full: PointSet = (0..points.len()).collect();
        let mut opens: BTreeSet<PointSet> = basis.iter().cloned().collect();
        opens.insert(PointSet::new());
        opens.insert(full);
        loop {
            let cur: Vec<PointSet> = opens.iter().cloned().collect();
            let mut grew = false;
            for (i, a) in cur.iter().enumerate() {
                for b in &cur[i + 1..] {
                    grew |= opens.insert(a.intersection(b).copied().collect());
                    grew |= opens.insert(a.union(b).copied().collect());
                }
            }
            if opens.len() > cap {
                return Err(SpaceError::CapExceeded(cap));
            }
            if !grew {
                break;
            }
        }
        let mut opens: Vec<PointSet> = opens.into_iter().collect();
        opens.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let mut basis = basis;
        basis.dedup();
        Ok(FiniteSpace { points, basis, opens })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_open(&self, s: &PointSet) -> bool {
        self.opens.contains(s)
    }

    /// Re-checks the topology laws on the stored opens.
    pub fn is_topology(&self) -> bool {
        let full: PointSet = (0..self.len()).collect();
        self.is_open(&PointSet::new())
            && self.is_open(&full)
            && self.opens.iter().all(|a| {
                self.opens.iter().all(|b| {
                    self.is_open(&a.intersection(b).copied().collect()) && self.is_open(&a.union(b).copied().collect())
                })
            })
    }

    /// Smallest open set containing `p`.
    pub fn neighbourhood(&self, p: usize) -> PointSet {
        let mut n: PointSet = (0..self.len()).collect();
        for o in self.opens.iter().filter(|o| o.contains(&p)) {
            n = n.intersection(o).copied().collect();
        }
        n
    }

    /// `q` lies in every open containing `p`.
    pub fn specializes(&self, p: usize, q: usize) -> bool {
        self.neighbourhood(p).contains(&q)
    }

    pub fn is_discrete(&self) -> bool {
        (0..self.len()).all(|p| self.neighbourhood(p).len() == 1)
    }
}
