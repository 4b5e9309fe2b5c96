//! Coverability grammars: a pump when unbounded, a decomposition otherwise.

use ngvas::cli::parse_str;
use ngvas::coverability::{cov_grammar, extract_decomposition, witness_pump, Approx};
use ngvas::rank::rank;

fn main() -> ngvas::Result<()> {
    for src in [include_str!("../fixtures/tiny-nl.ngvas"), include_str!("../fixtures/transfer.ngvas")] {
        let n = parse_str(src)?.build(None)?;
        let cg = cov_grammar(&n, Approx::Int)?;
        println!("{}: {:?}, {} symbols", n.name, cg.verdict, cg.symbols.len());
        if cg.is_bounded() {
            println!("  input rank {}", rank(&n)?);
            for p in extract_decomposition(&cg)? {
                println!("  part {} rank {}", p.name, rank(&p)?);
            }
        } else if let Some(z) = witness_pump(&cg)? {
            println!("  pump left {:?} right {:?}", z.left_effect(n.dim), z.right_effect(n.dim));
        }
    }
    Ok(())
}
