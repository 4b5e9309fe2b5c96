//! Firing, hurdles and downward-closure types of generalized markings.

use ngvas::vas::{dc_type, effect, fire, fire_concrete, hurdle, ideal_parts, GMarking, Nw};

fn main() -> ngvas::Result<()> {
    let run = vec![vec![2, -1], vec![-3, 1], vec![1, 0]];
    println!("effect {:?}", effect(&run, 2));
    println!("hurdle {:?}", hurdle(&run, 2));
    println!("from (1,1): {:?}", fire_concrete(&[1, 1], &run));
    println!("from (1,0): {:?}", fire_concrete(&[1, 0], &run));
    let m = GMarking(vec![Nw::Fin(1), Nw::Omega]);
    if let Some(t) = fire(&m, &run)? {
        println!("from {m}: {t}");
    }
    let parts = ideal_parts(&m);
    let shown: Vec<String> = parts.iter().map(ToString::to_string).collect();
    println!("{m}↓ = {}, type {:?}", shown.join(" ∪ "), dc_type(&parts));
    Ok(())
}
