use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Smallest epoch the driver will run.
pub const MIN_EPOCH: usize = 8;

/// `ℓ_T = ⌈log₂(T/8)⌉`.
pub fn epoch_count(total: usize) -> Result<usize> {
    if total < 16 {
        return Err(config_err(format!("the epoch schedule needs at least 16 episodes, got {total}")));
    }
    let mut l = 0;
    while 8usize << l < total {
        l += 1;
    }
    Ok(l)
}

/// Nominal epoch lengths `T_ℓ = 2^ℓ` for `ℓ = 1..=ℓ_T`.
pub fn paper_epoch_lengths(total: usize) -> Result<Vec<usize>> {
    Ok((1..=epoch_count(total)?).map(|l| 1usize << l).collect())
}

/// Splits the post-warmup budget into `ℓ_T` epochs proportional to `2^ℓ`,
/// each at least [`MIN_EPOCH`], the last one absorbing rounding. Fewer
/// epochs are used when the budget cannot give each the minimum.
pub fn epoch_budgets(total: usize, warmup: usize) -> Result<Vec<usize>> {
    let remaining = total.saturating_sub(warmup);
    let mut count = epoch_count(total.max(16))?;
    if remaining == 0 {
        return Ok(Vec::new());
    }
    count = count.min((remaining / MIN_EPOCH).max(1));
    let weight: usize = (1..=count).map(|l| 1usize << l).sum();
    let mut out = Vec::with_capacity(count);
    let mut spent = 0;
    for l in 1..count {
        let share = (remaining as f64 * (1usize << l) as f64 / weight as f64).round() as usize;
        let b = share.max(MIN_EPOCH);
        out.push(b);
        spent += b;
    }
    out.push(remaining - spent);
    Ok(out)
}

/// Episode counts at which a run is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CheckpointSchedule {
    /// Powers of two from the warmup on, plus the warmup and the final budget.
    PowersOfTwo,
    /// Every `n` episodes from the warmup on, plus the warmup and the final budget.
    Every(usize),
    List(Vec<usize>),
}

impl Default for CheckpointSchedule {
    fn default() -> Self {
        CheckpointSchedule::PowersOfTwo
    }
}

/// Sorted, deduplicated checkpoints in `[warmup, total]`.
pub fn checkpoint_schedule(schedule: &CheckpointSchedule, warmup: usize, total: usize) -> Result<Vec<usize>> {
    let first = warmup.min(total).max(1);
    let mut out = vec![first, total];
    match schedule {
        CheckpointSchedule::PowersOfTwo => {
            let mut p = 1usize;
            while p <= total {
                if p >= first {
                    out.push(p);
                }
                p *= 2;
            }
        }
        CheckpointSchedule::Every(n) => {
            if *n == 0 {
                return Err(config_err("checkpoint spacing must be positive"));
            }
            out.extend((1..=total / n).map(|k| k * n).filter(|&t| t >= first));
        }
        CheckpointSchedule::List(v) => {
            if let Some(bad) = v.iter().find(|&&t| t < first || t > total) {
                return Err(config_err(format!("checkpoint {bad} lies outside [{first}, {total}]")));
            }
            out = v.clone();
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_lengths() {
        assert_eq!(paper_epoch_lengths(64).unwrap(), vec![2, 4, 8]);
        assert_eq!(paper_epoch_lengths(16).unwrap(), vec![2]);
        assert_eq!(epoch_count(1000).unwrap(), 7);
        assert!(epoch_count(15).is_err());
    }

    #[test]
    fn budgets_sum_to_the_remainder() {
        assert_eq!(epoch_budgets(100, 10).unwrap(), vec![8, 12, 24, 46]);
        assert_eq!(epoch_budgets(300, 100).unwrap(), vec![8, 8, 13, 25, 51, 95]);
        assert_eq!(epoch_budgets(1000, 10).unwrap(), vec![8, 16, 31, 62, 125, 249, 499]);
        assert_eq!(epoch_budgets(20, 10).unwrap(), vec![10]);
        assert_eq!(epoch_budgets(20, 15).unwrap(), vec![5]);
        assert!(epoch_budgets(20, 20).unwrap().is_empty());
        for total in 16..400 {
            for warmup in [0, 10, 100] {
                let b = epoch_budgets(total, warmup).unwrap();
                assert_eq!(b.iter().sum::<usize>(), total.saturating_sub(warmup));
            }
        }
    }

    #[test]
    fn checkpoints() {
        let c = checkpoint_schedule(&CheckpointSchedule::PowersOfTwo, 10, 100).unwrap();
        assert_eq!(c, vec![10, 16, 32, 64, 100]);
        let c = checkpoint_schedule(&CheckpointSchedule::Every(20), 10, 100).unwrap();
        assert_eq!(c, vec![10, 20, 40, 60, 80, 100]);
        assert!(checkpoint_schedule(&CheckpointSchedule::List(vec![5]), 10, 100).is_err());
    }
}
