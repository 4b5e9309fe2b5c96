//! Wide trees: k copies of a homogeneous derivation with logarithmic order.

use ngvas::cli::parse_str;
use ngvas::widetree::{build_wide_tree, height_bound, log_factor, order_of};

fn main() -> ngvas::Result<()> {
    let n = parse_str(include_str!("../fixtures/pump1.ngvas"))?.build(None)?;
    let v = [3, 1, 1, 1];
    for k in [1, 2, 4, 8, 16] {
        let t = build_wide_tree(&n.grammar, &v, k)?;
        println!(
            "k={k:2} height {:3} <= {:3}  order {} <= {}",
            t.tree.height(),
            height_bound(k, &v),
            order_of(&t),
            log_factor(k)
        );
    }
    let t = build_wide_tree(&n.grammar, &v, 3)?;
    std::fs::write(std::env::temp_dir().join("wide3.dot"), t.to_dot(&n.grammar))
        .expect("temp dir is writable");
    Ok(())
}
