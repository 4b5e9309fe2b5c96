//! Perfectness reports and the budget refinement of an imperfect system.

use std::collections::{BTreeMap, BTreeSet};

use ngvas::cli::parse_str;
use ngvas::perfectness::{check_conditions, refine_budget};
use ngvas::rank::rank;

fn main() -> ngvas::Result<()> {
    let n = parse_str(include_str!("../fixtures/once.ngvas"))?.build(None)?;
    let rep = check_conditions(&n, 4)?;
    for (c, v) in &rep.verdicts {
        println!("{c}: {v}");
    }
    // S -> t3 (production 3) is used exactly once
    let r = refine_budget(&n, &BTreeSet::from([3]), &BTreeMap::new(), 1)?;
    println!("{} rank {} -> {} rank {}", n.name, rank(&n)?, r.name, rank(&r)?);
    Ok(())
}
