use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of source seeds per source task in the full protocol.
pub const FULL_SOURCE_SEEDS: usize = 4;

/// One pairing of source sub-teams. `first` indexes the seeds of the first
/// source task (Chainball defence, kitchen left), `second` those of the
/// other (Chainball attack, kitchen right).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TeamSpec {
    pub team_id: usize,
    pub first: usize,
    pub second: usize,
}

/// Full cross product of source seeds. Anything other than four seeds per
/// task is rejected unless `allow_partial`.
pub fn compose_teams(first_seeds: usize, second_seeds: usize, allow_partial: bool) -> Result<Vec<TeamSpec>> {
    if !allow_partial && (first_seeds != FULL_SOURCE_SEEDS || second_seeds != FULL_SOURCE_SEEDS) {
        return Err(Error::config(format!(
            "expected {FULL_SOURCE_SEEDS} checkpoints per source task, got {first_seeds} and {second_seeds}"
        )));
    }
    if first_seeds == 0 || second_seeds == 0 {
        return Err(Error::config("each source task needs at least one checkpoint"));
    }
    Ok((0..first_seeds)
        .flat_map(|f| (0..second_seeds).map(move |s| (f, s)))
        .enumerate()
        .map(|(team_id, (first, second))| TeamSpec { team_id, first, second })
        .collect())
}
