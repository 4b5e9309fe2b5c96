//! Runs with effect b' + k·P·e for every k from the threshold on.

use ngvas::cli::parse_str;
use ngvas::iteration::plan;
use ngvas::vas::effect;

fn main() -> ngvas::Result<()> {
    let n = parse_str(include_str!("../fixtures/pump1.ngvas"))?.build(None)?;
    let p = plan(&n, &[0], &[1])?;
    println!("c = {}, k0 = {}, pump up {:?} down {:?}", p.c, p.k0, p.pump.up, p.pump.down);
    for k in p.k0..p.k0 + 3 {
        let it = p.iterate(k)?;
        println!(
            "k={k}: j1={} j2={} length {} effect {:?} enabled {}",
            it.j1,
            it.j2,
            it.run.len(),
            effect(&it.run, n.dim),
            it.enabled
        );
    }
    Ok(())
}
