//! Uniform sampling without replacement over the enumerated space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{OptimizerError, SessionContext, Strategy, Suggestion};

pub struct RandomStrategy {
    rng: ChaCha8Rng,
    /// Ranks not yet proposed; `None` until the first call.
    pool: Option<Vec<usize>>,
}

impl RandomStrategy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            pool: None,
        }
    }
}

impl Strategy for RandomStrategy {
    fn name(&self) -> &str {
        "random"
    }

    fn propose(&mut self, ctx: &SessionContext<'_>, count: usize) -> Result<Suggestion, OptimizerError> {
        let pool = self.pool.get_or_insert_with(|| {
            let seen: std::collections::HashSet<usize> = ctx
                .history
                .iter()
                .filter_map(|h| ctx.space.indices_of(&h.assignment).ok())
                .map(|idx| ctx.space.rank(&idx))
                .collect();
            (0..ctx.space.size()).filter(|r| !seen.contains(r)).collect()
        });
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            if pool.is_empty() {
                return Err(OptimizerError::SpaceExhausted);
            }
            let pick = self.rng.gen_range(0..pool.len());
            out.push(ctx.space.assignment_at(pool.swap_remove(pick)));
        }
        Ok(Suggestion::valid(out))
    }
}
