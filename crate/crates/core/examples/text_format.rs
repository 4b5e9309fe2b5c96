//! Parse a system file, build the NGVAS and print the canonical form.

use ngvas::cli::{parse_str, render};
use ngvas::ngvas::validate;

fn main() -> ngvas::Result<()> {
    let model = parse_str(include_str!("../fixtures/with-child.ngvas"))?;
    print!("{}", render(&model));
    let n = model.build(None)?;
    println!("# {} has depth {} and {} violations", n.name, n.depth(), validate(&n).len());
    Ok(())
}
