use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bit widths a schedule group may use; 16 means "stored raw at half precision".
pub const SCHEDULE_BITS: [u8; 6] = [16, 8, 4, 3, 2, 1];

/// Default end ranks of the fixed leading groups: `[0, 2)` then `[2, 34)`.
pub const DEFAULT_PREFIX_ENDS: [usize; 2] = [2, 34];

/// Rank range `[r_begin, r_end)` of singular vectors stored at `bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RankGroup {
    pub bits: u8,
    pub r_begin: usize,
    pub r_end: usize,
}

impl RankGroup {
    pub fn width(&self) -> usize {
        self.r_end - self.r_begin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionSchedule {
    groups: Vec<RankGroup>,
    alpha: f64,
}

/// `16 · α · h_out · h_in`: the bit budget of a delta at compression ratio `α`.
pub fn budget_bits(alpha: f64, h_out: usize, h_in: usize) -> f64 {
    16.0 * alpha * h_out as f64 * h_in as f64
}

/// Largest rank count `r` with `k · r · (h_out + h_in) <= 16 · α · h_out · h_in`.
pub fn budget_ranks(bits: u8, alpha: f64, h_out: usize, h_in: usize) -> usize {
    assert!(bits >= 1, "bit width must be positive");
    let per_rank = bits as u64 * (h_out + h_in) as u64;
    if alpha == 1.0 / 16.0 {
        // exact integer path for the common ratio
        return ((h_out as u64 * h_in as u64) / per_rank) as usize;
    }
    (budget_bits(alpha, h_out, h_in) / per_rank as f64).floor().max(0.0) as usize
}

/// Parses `INT("+"INT)*` with each width in {16, 8, 4, 3, 2, 1}, strictly decreasing.
pub fn parse_spec(spec: &str) -> Result<Vec<u8>> {
    let invalid = |reason: String| Error::InvalidSchedule {
        spec: spec.to_string(),
        reason,
    };
    let mut bits = Vec::new();
    for part in spec.split('+') {
        let k: u8 = part
            .parse()
            .map_err(|_| invalid(format!("'{part}' is not a bit width")))?;
        if !SCHEDULE_BITS.contains(&k) {
            return Err(invalid(format!("{k} is not one of {SCHEDULE_BITS:?}")));
        }
        if bits.last().is_some_and(|&prev| prev <= k) {
            return Err(invalid("bit widths must be strictly decreasing".into()));
        }
        bits.push(k);
    }
    Ok(bits)
}

impl PrecisionSchedule {
    /// Validates contiguity from rank 0 and strictly decreasing widths.
    /// Empty groups are dropped.
    pub fn new(groups: Vec<RankGroup>, alpha: f64) -> Result<Self> {
        let groups: Vec<RankGroup> = groups.into_iter().filter(|g| g.r_end > g.r_begin).collect();
        let spec = groups.iter().map(|g| g.bits.to_string()).collect::<Vec<_>>().join("+");
        let invalid = |reason: &str| Error::InvalidSchedule {
            spec: spec.clone(),
            reason: reason.to_string(),
        };
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid("alpha must lie in [0, 1]"));
        }
        let mut next = 0;
        let mut prev_bits = u8::MAX;
        for g in &groups {
            if !SCHEDULE_BITS.contains(&g.bits) {
                return Err(invalid("unsupported bit width"));
            }
            if g.bits >= prev_bits {
                return Err(invalid("bit widths must be strictly decreasing"));
            }
            if g.r_begin != next {
                return Err(invalid("rank ranges must be contiguous from 0"));
            }
            next = g.r_end;
            prev_bits = g.bits;
        }
        Ok(PrecisionSchedule { groups, alpha })
    }

    pub fn groups(&self) -> &[RankGroup] {
        &self.groups
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn total_ranks(&self) -> usize {
        self.groups.last().map_or(0, |g| g.r_end)
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Code bits for a `h_out × h_in` delta: `Σ k · width · (h_out + h_in)`.
    pub fn payload_bits(&self, h_out: usize, h_in: usize) -> u64 {
        self.groups
            .iter()
            .map(|g| g.bits as u64 * g.width() as u64 * (h_out + h_in) as u64)
            .sum()
    }

    pub fn fits_budget(&self, h_out: usize, h_in: usize) -> bool {
        self.payload_bits(h_out, h_in) as f64 <= budget_bits(self.alpha, h_out, h_in)
    }

    /// Drops every rank at or beyond `max_ranks`, shortening the group that
    /// straddles it.
    pub fn truncated(&self, max_ranks: usize) -> PrecisionSchedule {
        let groups = self
            .groups
            .iter()
            .filter(|g| g.r_begin < max_ranks)
            .map(|g| RankGroup {
                r_end: g.r_end.min(max_ranks),
                ..*g
            })
            .collect();
        PrecisionSchedule {
            groups,
            alpha: self.alpha,
        }
    }

    /// `"8+3+2"`-style spec of the groups present.
    pub fn spec_string(&self) -> String {
        self.groups
            .iter()
            .map(|g| g.bits.to_string())
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl fmt::Display for PrecisionSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .groups
            .iter()
            .map(|g| format!("{}-bit [{}, {})", g.bits, g.r_begin, g.r_end))
            .collect();
        write!(f, "{}", parts.join(", "))
    }
}

/// Fixed leading rank boundaries for multi-precision specs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleConfig {
    pub prefix_ends: Vec<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            prefix_ends: DEFAULT_PREFIX_ENDS.to_vec(),
        }
    }
}

pub fn make_schedule(spec: &str, alpha: f64, h_out: usize, h_in: usize) -> Result<PrecisionSchedule> {
    make_schedule_with(spec, alpha, h_out, h_in, &ScheduleConfig::default())
}

/// All groups but the last take their fixed ranges from `config`; the last
/// group gets as many ranks as the remaining budget affords (rounded down).
pub fn make_schedule_with(
    spec: &str,
    alpha: f64,
    h_out: usize,
    h_in: usize,
    config: &ScheduleConfig,
) -> Result<PrecisionSchedule> {
    let bits = parse_spec(spec)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    let n_fixed = bits.len() - 1;
    if config.prefix_ends.len() < n_fixed {
        return Err(Error::InvalidSchedule {
            spec: spec.to_string(),
            reason: format!(
                "{} groups need {} fixed boundaries, {} configured",
                bits.len(),
                n_fixed,
                config.prefix_ends.len()
            ),
        });
    }
    let span = (h_out + h_in) as u64;
    let mut groups = Vec::with_capacity(bits.len());
    let mut begin = 0usize;
    let mut used_bits = 0u64;
    for (i, &k) in bits[..n_fixed].iter().enumerate() {
        let end = config.prefix_ends[i];
        if end <= begin {
            return Err(Error::InvalidSchedule {
                spec: spec.to_string(),
                reason: "fixed boundaries must increase".into(),
            });
        }
        used_bits += k as u64 * (end - begin) as u64 * span;
        groups.push(RankGroup {
            bits: k,
            r_begin: begin,
            r_end: end,
        });
        begin = end;
    }
    let budget = budget_bits(alpha, h_out, h_in);
    if used_bits as f64 > budget {
        return Err(Error::BudgetExhausted {
            needed: used_bits as f64,
            budget,
        });
    }
    let last = *bits.last().expect("parse_spec yields at least one width");
    let per_rank = last as u64 * span;
    let remaining = if alpha == 1.0 / 16.0 {
        ((h_out as u64 * h_in as u64 - used_bits) / per_rank) as usize
    } else {
        ((budget - used_bits as f64) / per_rank as f64).floor() as usize
    };
    groups.push(RankGroup {
        bits: last,
        r_begin: begin,
        r_end: begin + remaining,
    });
    PrecisionSchedule::new(groups, alpha)
}

/// `(h_out + h_in) / (h_out · h_in) · Σ k · width`.
pub fn avg_bitwidth(schedule: &PrecisionSchedule, h_out: usize, h_in: usize) -> f64 {
    schedule.payload_bits(h_out, h_in) as f64 / (h_out as f64 * h_in as f64)
}
