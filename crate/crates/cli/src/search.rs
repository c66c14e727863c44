use mpdelta_core::analyzer::{ProxyObjective, SyntheticCase};
use mpdelta_core::numerics::Rng;
use mpdelta_core::planner::{genetic_search, make_schedule, Allocation, GaParams};

use crate::util::{parse_alpha, usage};

#[derive(clap::Args)]
pub struct Args {
    /// Seeds the search; the synthetic suite itself is fixed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Square size of the synthetic deltas.
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    /// Suite members (seeds 0..N) averaged by the proxy objective.
    #[arg(long, default_value_t = 10)]
    cases: u64,
    #[arg(long, default_value = "1/16", value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 128)]
    group_size: usize,
    #[arg(long, default_value_t = 32)]
    population: usize,
    #[arg(long, default_value_t = 40)]
    generations: usize,
    /// Hand-built schedule reported alongside the search result.
    #[arg(long, default_value = "8+3+2")]
    schedule: String,
}

pub fn run(a: Args) -> anyhow::Result<()> {
    if a.cases == 0 || a.hidden == 0 || a.population < 2 || a.generations == 0 {
        return Err(usage(
            "--cases, --hidden and --generations must be positive and --population at least 2",
        ));
    }
    let pairs = (0..a.cases)
        .map(|s| SyntheticCase::suite(s, a.hidden).map(|c| (c.delta, c.x)))
        .collect::<Result<Vec<_>, _>>()?;
    let proxy = ProxyObjective::new(pairs, a.alpha, a.group_size)?;
    let params = GaParams {
        population: a.population,
        generations: a.generations,
        ..GaParams::default()
    };
    let res = genetic_search(
        |al| proxy.score(al),
        a.alpha,
        a.hidden,
        a.hidden,
        &params,
        &mut Rng::new(a.seed),
    )?;

    for (g, v) in res.trace.iter().enumerate() {
        println!("generation {g:>3}  best {v:.6e}");
    }
    println!(
        "best {}  objective {:.6e}  evaluations {}",
        res.best, res.objective, res.evaluations
    );
    println!("schedule {}", res.best.to_schedule(a.alpha)?);
    let greedy = make_schedule(&a.schedule, a.alpha, a.hidden, a.hidden).and_then(|s| Allocation::from_schedule(&s));
    match greedy {
        Ok(al) => println!(
            "greedy \"{}\" {}  objective {:.6e}",
            a.schedule,
            al,
            proxy.evaluate(&al)?
        ),
        Err(e) => println!("greedy \"{}\" unavailable: {e}", a.schedule),
    }
    Ok(())
}
