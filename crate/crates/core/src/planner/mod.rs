//! Bit budgets, precision schedules and the search over per-tier rank counts.

mod genetic;
mod schedule;

pub use genetic::{genetic_search, Allocation, GaParams, SearchResult, TIERS};
pub use schedule::{
    avg_bitwidth, budget_bits, budget_ranks, make_schedule, make_schedule_with, parse_spec, PrecisionSchedule,
    RankGroup, ScheduleConfig, DEFAULT_PREFIX_ENDS, SCHEDULE_BITS,
};
