//! Karp-Miller trees under both approximators.

use ngvas::cli::parse_str;
use ngvas::coverability::{karp_miller, Approx};

fn main() -> ngvas::Result<()> {
    for src in [include_str!("../fixtures/tiny-nl.ngvas"), include_str!("../fixtures/transfer.ngvas")] {
        let n = parse_str(src)?.build(None)?;
        for ap in [Approx::Int, Approx::Nat(4)] {
            let t = karp_miller(&n, ap)?;
            println!("{} [{ap}]: {:?} with {} nodes", n.name, t.verdict, t.nodes.len());
        }
    }
    Ok(())
}
