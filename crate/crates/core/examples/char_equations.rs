//! Characteristic systems and the support of their homogeneous version.

use ngvas::chareq::{build_char, support_of};
use ngvas::cli::parse_str;
use ngvas::numerics::{ilp_feasible, DEFAULT_NODE_BUDGET};

fn main() -> ngvas::Result<()> {
    for src in [include_str!("../fixtures/tiny-nl.ngvas"), include_str!("../fixtures/once.ngvas")] {
        let n = parse_str(src)?.build(None)?;
        let c = build_char(&n)?;
        let sol = ilp_feasible(&c.system, DEFAULT_NODE_BUDGET)?;
        println!("{}: Char solvable = {}", n.name, sol.is_some());
        let (hc, supp) = support_of(&n)?;
        for (p, x) in hc.x_p.iter().enumerate() {
            if let Some(x) = x {
                let inside = if supp.contains(x) { "in" } else { "outside" };
                println!("  {} {inside} the support", n.grammar.prod_string(p));
            }
        }
    }
    Ok(())
}
