//! Ranks of fixtures, and of a child against its parent.

use ngvas::cli::parse_str;
use ngvas::rank::{main_branch, rank};

fn main() -> ngvas::Result<()> {
    let p = parse_str(include_str!("../fixtures/with-child.ngvas"))?.build(None)?;
    println!("{} {}", p.name, rank(&p)?);
    for (_, c) in p.children() {
        println!("  child {} {}", c.name, rank(c)?);
    }
    println!("main branch {:?}", main_branch(&p)?);
    let mut q = p.clone();
    q.un.clear();
    println!("with Un cleared {}", rank(&q)?);
    Ok(())
}
