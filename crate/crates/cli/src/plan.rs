use mpdelta_core::planner::{avg_bitwidth, budget_bits, make_schedule};

use crate::util::parse_alpha;

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, default_value_t = 4096)]
    h_out: usize,
    #[arg(long, default_value_t = 4096)]
    h_in: usize,
    #[arg(long, default_value = "8+3+2")]
    schedule: String,
    #[arg(long, default_value = "1/16", value_parser = parse_alpha)]
    alpha: f64,
}

pub fn run(a: Args) -> anyhow::Result<()> {
    let s = make_schedule(&a.schedule, a.alpha, a.h_out, a.h_in)?;
    println!("{:>4}  {:<12} {:>6} {:>12}", "bits", "ranks", "count", "code bits");
    for g in s.groups() {
        let range = format!("[{},{})", g.r_begin, g.r_end);
        let bits = g.bits as usize * g.width() * (a.h_out + a.h_in);
        println!("{:>4}  {:<12} {:>6} {:>12}", g.bits, range, g.width(), bits);
    }
    println!("total ranks {}", s.total_ranks());
    println!(
        "payload {} of {} budget bits",
        s.payload_bits(a.h_out, a.h_in),
        budget_bits(a.alpha, a.h_out, a.h_in)
    );
    println!("avg bitwidth {}", avg_bitwidth(&s, a.h_out, a.h_in));
    Ok(())
}
