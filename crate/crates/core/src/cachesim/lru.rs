use super::{EvictionPolicy, VictimContext};
use crate::trace::LineId;

/// Evicts the resident line with the oldest last access.
#[derive(Debug, Clone, Default)]
pub struct Lru;

pub fn policy_lru() -> Lru {
    Lru
}

impl EvictionPolicy for Lru {
    fn name(&self) -> String {
        "lru".into()
    }

    fn choose_victim(&mut self, ctx: &VictimContext<'_>) -> LineId {
        ctx.residents
            .iter()
            .min_by_key(|r| r.last_access)
            .map(|r| r.line)
            .expect("victim set is never empty")
    }
}
