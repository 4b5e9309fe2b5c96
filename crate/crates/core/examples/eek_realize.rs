//! Derivations from production counts.

use ngvas::cli::parse_str;
use ngvas::eek::{hom_realize, realize};

fn main() -> ngvas::Result<()> {
    let n = parse_str(include_str!("../fixtures/tiny-nl.ngvas"))?.build(None)?;
    let g = &n.grammar;
    // S -> S S twice, S -> u twice, S -> w once
    let t = realize(g, &[2, 2, 1])?;
    let word: Vec<&str> = t.yield_word().into_iter().map(|s| g.sym_name(s)).collect();
    println!("realize  {}", word.join(" "));
    let t = hom_realize(g, &[2, 1, 1])?;
    let word: Vec<&str> = t.yield_word().into_iter().map(|s| g.sym_name(s)).collect();
    println!("homogeneous  {}", word.join(" "));
    for s in t.derivation().steps {
        println!("  at {} apply {}", s.pos, g.prod_string(s.prod));
    }
    Ok(())
}
