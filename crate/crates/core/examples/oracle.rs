//! Brute-force reachability and downward-closure samples.

use ngvas::cli::parse_str;
use ngvas::oracle::{bfs_reach, bfs_reach_between, cover_sample};

fn main() -> ngvas::Result<()> {
    let n = parse_str(include_str!("../fixtures/tiny-nl.ngvas"))?.build(None)?;
    println!("{:?}", bfs_reach(&n, 4)?);
    println!("{:?}", bfs_reach_between(&n, &[0], &[2], 4)?);
    let ef = parse_str(include_str!("../fixtures/effect-free.ngvas"))?.build(None)?;
    for b in 1..4 {
        let dc: Vec<String> = cover_sample(&ef, b)?.iter().map(ToString::to_string).collect();
        println!("effect-free cover at {b}: {}", dc.join(" "));
    }
    Ok(())
}
