use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::instance::KnowledgeInstance;
use super::search::SearchResultGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrangementOrder {
    /// Each query's block in full, one after another.
    Sequential,
    /// Rank-wise round-robin across queries.
    Mixed,
}

impl ArrangementOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            ArrangementOrder::Sequential => "sequential",
            ArrangementOrder::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for ArrangementOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "sequential" => Ok(Self::Sequential),
            "mixed" => Ok(Self::Mixed),
            other => Err(format!("unknown arrangement order {other:?}")),
        }
    }
}

/// Merge per-query groups into one list of at most `cap` instances.
///
/// Groups are taken in `query_index` order. Mixed order emits position 1 of
/// every group, then position 2, and so on, skipping exhausted groups. An
/// instance whose id was already emitted is dropped.
pub fn arrange(
    groups: &[SearchResultGroup],
    order: ArrangementOrder,
    cap: usize,
) -> Vec<KnowledgeInstance> {
    let mut sorted: Vec<&SearchResultGroup> = groups.iter().collect();
    sorted.sort_by_key(|g| g.query_index);

    let emission: Box<dyn Iterator<Item = &KnowledgeInstance>> = match order {
        ArrangementOrder::Sequential => Box::new(sorted.iter().flat_map(|g| g.instances.iter())),
        ArrangementOrder::Mixed => {
            let depth = sorted.iter().map(|g| g.instances.len()).max().unwrap_or(0);
            Box::new(
                (0..depth).flat_map(move |pos| sorted.clone().into_iter().filter_map(move |g| g.instances.get(pos))),
            )
        }
    };

    let mut seen = HashSet::new();
    emission
        .filter(|inst| seen.insert(inst.id.as_str()))
        .take(cap)
        .cloned()
        .collect()
}
