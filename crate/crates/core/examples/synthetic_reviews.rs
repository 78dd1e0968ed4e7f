//! Writes a synthetic review file in the Amazon 5-core line format.
//!
//! `cargo run --example synthetic_reviews -- <users> <items> <ratings> [seed] > reviews.json`

use std::io::Write;

use hti::corpus::synthetic::{generate, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let mut spec = SyntheticSpec::default();
    if let [users, items, ratings, rest @ ..] = args.as_slice() {
        spec.n_users = *users as usize;
        spec.n_items = *items as usize;
        spec.n_ratings = *ratings as usize;
        spec.seed = rest.first().copied().unwrap_or(0);
    }
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    for record in generate(&spec) {
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
