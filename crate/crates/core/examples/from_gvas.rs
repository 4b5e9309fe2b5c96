//! A plain grammar turned into nested strong components.

use ngvas::cli::parse_str;
use ngvas::ngvas::{strongdec, Kind};

fn show(n: &ngvas::ngvas::Ngvas, depth: usize) {
    let kind = if n.kind == Kind::Weak { "weak" } else { "strong" };
    println!("{:indent$}{} ({kind}, {:?})", "", n.name, n.shape(), indent = depth * 2);
    for (_, c) in n.children() {
        show(c, depth + 1);
    }
}

fn main() -> ngvas::Result<()> {
    for src in [include_str!("../fixtures/nested.ngvas"), include_str!("../fixtures/two-exit.ngvas")] {
        let n = parse_str(src)?.build(None)?;
        show(&n, 0);
        for part in strongdec(&n) {
            println!("  part {}", part.name);
        }
    }
    Ok(())
}
