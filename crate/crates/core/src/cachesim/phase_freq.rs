use super::{EvictionPolicy, VictimContext};
use crate::error::{Error, Result};
use crate::phases::{PhaseFrequencyTable, PhaseLabeling};
use crate::trace::{LineId, MemoryAccess, Trace};

/// Evicts the resident line that occurs least often in the current phase.
///
/// Lines missing from the table count as zero; ties go to the lowest line id.
#[derive(Debug, Clone)]
pub struct PhaseFrequency {
    labeling: PhaseLabeling,
    table: PhaseFrequencyTable,
    phase: usize,
}

pub fn policy_phase_freq(labeling: PhaseLabeling, table: PhaseFrequencyTable) -> PhaseFrequency {
    PhaseFrequency {
        labeling,
        table,
        phase: 0,
    }
}

impl EvictionPolicy for PhaseFrequency {
    fn name(&self) -> String {
        "phase_freq".into()
    }

    fn prepare(&mut self, trace: &Trace) -> Result<()> {
        if self.labeling.len() != trace.len() {
            return Err(Error::InvalidInput(format!(
                "phase labeling covers {} accesses but the trace has {}",
                self.labeling.len(),
                trace.len()
            )));
        }
        Ok(())
    }

    fn observe(&mut self, index: usize, _access: &MemoryAccess, _line: LineId) {
        self.phase = self.labeling.labels()[index];
    }

    fn choose_victim(&mut self, ctx: &VictimContext<'_>) -> LineId {
        ctx.candidates()
            .min_by_key(|&l| (self.table.count(self.phase, l), l))
            .expect("victim set is never empty")
    }
}
