//! Acceptance suite. Prints one pass/fail line per criterion and exits
//! non-zero when any of them fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ngvas::cli::run_command;
use ngvas::coverability::{
    cov_grammar, extract_decomposition, karp_miller, required_signs, witness_pump, Approx, CgVerdict, KmVerdict,
};
use ngvas::eek::{check_converse, hom_realize, realize};
use ngvas::grammar::{Grammar, Production, Shape, Sym};
use ngvas::iteration::plan;
use ngvas::ngvas::{is_deconstruction, runs_bounded, Ngvas, DEFAULT_OMEGA_CAP};
use ngvas::numerics::{support, Bound, LinearIntSystem};
use ngvas::oracle::{all_runs, bfs_reach, classic_karp_miller, omega_patterns, vass_of};
use ngvas::perfectness::{check_conditions, refine_budget, Condition};
use ngvas::rank::rank;
use ngvas::vas::{dc_type, fire_concrete, ideal_parts, satisfies_mark_eq, GMarking, Nw, Vector};
use ngvas::widetree::{build_wide_tree, order_of};

use common::{all_fixtures, fixture, fixture_paths, with_descendants};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t <= limit, || format!("took {t:?}, limit {limit:?}"))
}

/// Counts of each nonterminal produced minus consumed under `v`.
fn nonterminal_balance(g: &Grammar, v: &[i64]) -> Vec<i64> {
    let mut out = vec![0; g.nonterminals.len()];
    for (p, &x) in g.productions.iter().zip(v) {
        out[p.lhs] -= x;
        for s in &p.rhs {
            if let Sym::N(a) = s {
                out[*a] += x;
            }
        }
    }
    out
}

/// All `v ≥ 1` of length `n` with `Σv ≤ max`.
fn positive_vectors(n: usize, max: i64) -> Vec<Vec<i64>> {
    fn go(n: usize, left: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        let rest = (n - cur.len() - 1) as i64;
        for x in 1..=left - rest {
            cur.push(x);
            go(n, left - x, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n as i64 <= max {
        go(n, max, &mut Vec::new(), &mut out);
    }
    out
}

fn random_wcnf(rng: &mut ChaCha8Rng) -> Grammar {
    loop {
        let nn = rng.gen_range(1..=4);
        let np = rng.gen_range(nn..=6);
        let mut prods: Vec<Production> = Vec::new();
        for i in 0..np {
            let lhs = if i < nn { i } else { rng.gen_range(0..nn) };
            let len = rng.gen_range(0..=2);
            let rhs = (0..len)
                .map(|_| if rng.gen_bool(0.5) { Sym::N(rng.gen_range(0..nn)) } else { Sym::T(rng.gen_range(0..2)) })
                .collect();
            let p = Production { lhs, rhs };
            if !prods.contains(&p) {
                prods.push(p);
            }
        }
        let used: BTreeSet<usize> = prods.iter().flat_map(|p| p.rhs.iter().filter_map(|s| s.terminal())).collect();
        let remap: BTreeMap<usize, usize> = used.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        for p in &mut prods {
            for s in &mut p.rhs {
                if let Sym::T(t) = s {
                    *t = remap[t];
                }
            }
        }
        let g = Grammar::new(
            (0..nn).map(|i| format!("N{i}")).collect(),
            (0..used.len()).map(|i| format!("t{i}")).collect(),
            0,
            prods,
        )
        .expect("generated grammar is in normal form");
        if g.all_useful() {
            return g;
        }
    }
}

fn eek_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut plain, mut hom) = (0, 0);
    for gi in 0..200 {
        let g = random_wcnf(&mut rng);
        for v in positive_vectors(g.num_prods(), 6) {
            let bal = nonterminal_balance(&g, &v);
            let is_eek = bal.iter().enumerate().all(|(a, &b)| b == -i64::from(a == g.start));
            let is_hom = bal.iter().all(|&b| b == 0);
            for (want, homogeneous) in [(is_eek, false), (is_hom, true)] {
                if !want {
                    continue;
                }
                let t = if homogeneous { hom_realize(&g, &v) } else { realize(&g, &v) }
                    .map_err(|e| format!("grammar {gi} {:?} v={v:?}: {e}", g.productions))?;
                ensure(t.prod_counts(g.num_prods()) == v, || format!("grammar {gi} v={v:?}: Parikh differs"))?;
                let ok = check_converse(&g, &t.derivation(), &t.yield_word()).map_err(|e| e.to_string())?;
                ensure(ok, || format!("grammar {gi} v={v:?}: converse check fails"))?;
                if homogeneous {
                    let nts = t.yield_word().iter().filter(|s| matches!(s, Sym::N(_))).count();
                    ensure(nts == 1 && t.yield_word().contains(&Sym::N(g.start)), || {
                        format!("grammar {gi} v={v:?}: yield is not w1.S.w2")
                    })?;
                    hom += 1;
                } else {
                    plain += 1;
                }
            }
        }
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("{plain} EEK and {hom} homEEK vectors over 200 grammars"))
}

fn wide_tree_bounds() -> Outcome {
    let start = Instant::now();
    let fixtures = all_fixtures();
    let mut checked = 0;
    let mut grammars = 0;
    for top in &fixtures {
        for n in with_descendants(top) {
            let g = &n.grammar;
            if !g.is_strongly_connected() || g.shape() != Shape::NonLinear {
                continue;
            }
            grammars += 1;
            let vs: Vec<Vec<i64>> = positive_vectors(g.num_prods(), 8)
                .into_iter()
                .filter(|v| nonterminal_balance(g, v).iter().all(|&b| b == 0))
                .collect();
            ensure(!vs.is_empty(), || format!("{}: no homogeneous vector to test", n.name))?;
            for v in &vs {
                let norm: i64 = v.iter().sum();
                for k in 1..=16usize {
                    let t = build_wide_tree(g, v, k).map_err(|e| format!("{} v={v:?} k={k}: {e}", n.name))?;
                    // ⌈1 + log2 k⌉ without floating point
                    let mut lf = 1;
                    while (1usize << (lf - 1)) < k {
                        lf += 1;
                    }
                    let h = t.tree.height();
                    ensure(h <= lf * norm as usize, || format!("{} v={v:?} k={k}: height {h}", n.name))?;
                    let o = order_of(&t);
                    ensure(o <= lf, || format!("{} v={v:?} k={k}: order {o}", n.name))?;
                    let want: Vec<i64> = v.iter().map(|x| k as i64 * x).collect();
                    ensure(t.tree.prod_counts(g.num_prods()) == want, || {
                        format!("{} v={v:?} k={k}: Parikh differs", n.name)
                    })?;
                    let y = t.tree.yield_word();
                    ensure(y.iter().filter(|s| matches!(s, Sym::N(_))).count() == 1, || {
                        format!("{} v={v:?} k={k}: yield has more than one nonterminal", n.name)
                    })?;
                    checked += 1;
                }
            }
        }
    }
    within(start, Duration::from_secs(5))?;
    Ok(format!("{checked} trees over {grammars} grammars"))
}

fn support_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut nonempty = 0;
    for i in 0..100 {
        let nv = rng.gen_range(1..=4);
        let nr = rng.gen_range(1..=2);
        let mut sys = LinearIntSystem::new();
        for j in 0..nv {
            sys.add_var(format!("x{j}"), Bound::NAT);
        }
        let rows: Vec<Vec<i64>> = (0..nr).map(|_| (0..nv).map(|_| rng.gen_range(-2..=2)).collect()).collect();
        for r in &rows {
            let terms: Vec<(usize, i64)> = r.iter().copied().enumerate().collect();
            sys.add_row(&terms, 0);
        }
        let got = support(&sys).map_err(|e| format!("system {i}: {e}"))?;
        let mut want = BTreeSet::new();
        let mut x = vec![0i64; nv];
        loop {
            let solves = rows.iter().all(|r| r.iter().zip(&x).map(|(a, b)| a * b).sum::<i64>() == 0);
            if solves {
                want.extend((0..nv).filter(|&j| x[j] > 0));
            }
            let Some(pos) = x.iter().position(|&v| v < 5) else { break };
            x[pos] += 1;
            for v in &mut x[..pos] {
                *v = 0;
            }
        }
        ensure(got == want, || format!("system {i} {rows:?}: LP {got:?}, brute force {want:?}"))?;
        if !want.is_empty() {
            nonempty += 1;
        }
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("100 systems, {nonempty} with non-empty support"))
}

fn mark_eq_soundness() -> Outcome {
    let mut runs = 0;
    let mut check = |name: &str, m: &[i64], r: &[Vector], m2: &[i64]| -> Result<(), String> {
        ensure(satisfies_mark_eq(m, r, m2), || format!("{name}: {m:?} --{r:?}--> {m2:?}"))?;
        runs += 1;
        Ok(())
    };
    for top in all_fixtures() {
        for n in with_descendants(&top) {
            let set = all_runs(n, 4, DEFAULT_OMEGA_CAP).map_err(|e| format!("{}: {e}", n.name))?;
            for t in &set {
                check(&n.name, &t.source, &t.word, &t.target)?;
            }
            if let Some(t) = bfs_reach(n, 6).map_err(|e| format!("{}: {e}", n.name))?.witness() {
                check(&n.name, &t.source, &t.word, &t.target)?;
            }
        }
    }
    let n = fixture("pump1");
    let p = plan(&n, &n.restriction.base, &[1]).map_err(|e| e.to_string())?;
    for k in p.k0..=p.k0 + 5 {
        let it = p.iterate(k).map_err(|e| e.to_string())?;
        check("pump1 iteration", &it.source, &it.run, &it.target)?;
    }
    Ok(format!("{runs} runs"))
}

/// A linear NGVAS for a random VASS: one nonterminal per state, `Q → t Q'`
/// per transition and `Q → ε` everywhere.
fn random_vass_ngvas(seed: u64) -> Ngvas {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(1..=2);
    let states = rng.gen_range(1..=3);
    let nt = rng.gen_range(states..=4);
    let mut trans: Vec<(usize, Vector, usize)> = Vec::new();
    for i in 0..nt {
        let from = if i + 1 < states { i } else { rng.gen_range(0..states) };
        let to = if i + 1 < states { i + 1 } else { rng.gen_range(0..states) };
        let u: Vector = (0..d).map(|_| rng.gen_range(-1..=1)).collect();
        trans.push((from, u, to));
    }
    let mut prods: Vec<Production> = trans
        .iter()
        .enumerate()
        .map(|(i, (f, _, t))| Production { lhs: *f, rhs: vec![Sym::T(i), Sym::N(*t)] })
        .collect();
    prods.extend((0..states).map(|q| Production { lhs: q, rhs: vec![] }));
    let g = Grammar::new(
        (0..states).map(|i| format!("Q{i}")).collect(),
        (0..trans.len()).map(|i| format!("t{}", i + 1)).collect(),
        0,
        prods,
    )
    .expect("normal form");
    let cin: Vec<i64> = (0..d).map(|_| rng.gen_range(0..=2)).collect();
    Ngvas::depth0(
        &format!("vass{seed}"),
        g,
        trans.into_iter().map(|t| t.1).collect(),
        GMarking::concrete(&cin),
        GMarking::omega(d),
    )
}

fn karp_miller_vs_classic() -> Outcome {
    let (mut pumping, mut bounded) = (0, 0);
    for seed in 0..20 {
        let n = random_vass_ngvas(seed);
        let v = vass_of(&n).map_err(|e| e.to_string())?;
        let want = omega_patterns(&classic_karp_miller(&v, 0, &n.cin).map_err(|e| e.to_string())?);
        let t = karp_miller(&n, Approx::Int).map_err(|e| e.to_string())?;
        let got: BTreeSet<(usize, BTreeSet<usize>)> = t.nodes.iter().map(|x| (x.sym, x.input.omega_set())).collect();
        let full = want.iter().any(|(_, o)| o.len() == n.dim);
        match t.verdict {
            KmVerdict::PumpingFound(_) => {
                ensure(full, || format!("seed {seed}: pumping, but the classic tree has no all-ω label"))?;
                ensure(got.is_subset(&want), || format!("seed {seed}: {got:?} not within {want:?}"))?;
                pumping += 1;
            }
            KmVerdict::Bounded(_) => {
                ensure(!full, || format!("seed {seed}: bounded, but the classic tree has an all-ω label"))?;
                ensure(got == want, || format!("seed {seed}: {got:?} vs {want:?}"))?;
                bounded += 1;
            }
        }
    }
    Ok(format!("{pumping} pumping, {bounded} bounded"))
}

fn cg_soundness() -> Outcome {
    let (mut unb, mut bdd, mut skipped, mut outside) = (0, 0, Vec::new(), Vec::new());
    for n in all_fixtures() {
        let cg = match cov_grammar(&n, Approx::Int) {
            Ok(cg) => cg,
            Err(ngvas::Error::Contract(_)) => {
                skipped.push(n.name.clone());
                continue;
            }
            Err(e) => return Err(format!("{}: {e}", n.name)),
        };
        match cg.verdict {
            CgVerdict::Unbounded(x) => {
                let z = witness_pump(&cg).map_err(|e| e.to_string())?;
                let z = z.ok_or_else(|| format!("{}: unbounded without a pump", n.name))?;
                let (up, down) = required_signs(&cg, x);
                let sum = |w: &[Vector]| -> Vec<i64> {
                    let mut s = vec![0; n.dim];
                    for u in w {
                        for (a, b) in s.iter_mut().zip(u) {
                            *a += b;
                        }
                    }
                    s
                };
                let (l, r) = (sum(&z.left), sum(&z.right));
                ensure(up.iter().all(|&i| l[i] >= 1) && down.iter().all(|&i| r[i] <= -1), || {
                    format!("{}: pump {l:?}/{r:?} misses signs {up:?}/{down:?}", n.name)
                })?;
                unb += 1;
            }
            CgVerdict::Bounded => {
                let parts = extract_decomposition(&cg).map_err(|e| e.to_string())?;
                let v = is_deconstruction(&n, &parts, 4).map_err(|e| e.to_string())?;
                ensure(v.holds, || format!("{}: {:?} {}", n.name, v.failed, v.detail))?;
                // The rank argument needs every rigid counter to be tracked
                // already; otherwise the new bound may land on a rigid counter.
                let rigid_ok = check_conditions(&n, 4)
                    .map_err(|e| e.to_string())?
                    .get(Condition::Rigid)
                    .is_some_and(|v| v.holds());
                let r = rank(&n).map_err(|e| e.to_string())?;
                for p in &parts {
                    let rp = rank(p).map_err(|e| e.to_string())?;
                    if rigid_ok {
                        ensure(rp < r, || format!("{}: part {} rank {rp} not below {r}", n.name, p.name))?;
                    } else if rp >= r {
                        outside.push(format!("{} (untracked rigid counter, rank {rp} vs {r})", n.name));
                    }
                }
                if rigid_ok {
                    bdd += 1;
                }
            }
        }
    }
    ensure(unb > 0 && bdd > 0, || format!("{unb} unbounded and {bdd} bounded fixtures"))?;
    let mut msg = format!("{unb} unbounded, {bdd} bounded with rank drop");
    if !skipped.is_empty() {
        msg += &format!(", no grammar for {}", skipped.join(" "));
    }
    if !outside.is_empty() {
        msg += &format!(", rank clause outside its premise: {}", outside.join(" "));
    }
    Ok(msg)
}

fn rank_laws() -> Outcome {
    let (mut pairs, mut enlarged) = (0, 0);
    for top in all_fixtures() {
        for n in with_descendants(&top) {
            let r = rank(n).map_err(|e| format!("{}: {e}", n.name))?;
            if !n.is_linear() {
                for (_, c) in n.children() {
                    let rc = rank(c).map_err(|e| format!("{}: {e}", c.name))?;
                    ensure(rc < r, || format!("{} rank {rc} not below parent {} {r}", c.name, n.name))?;
                    pairs += 1;
                }
            }
            for i in (0..n.dim).filter(|i| !n.un.contains(i)) {
                let mut m = n.clone();
                m.un.insert(i);
                let rm = rank(&m).map_err(|e| e.to_string())?;
                ensure(rm < r, || format!("{} with counter {} in Un: {rm} not below {r}", n.name, i + 1))?;
                enlarged += 1;
            }
        }
    }
    ensure(pairs > 0, || "no parent/child pair".into())?;
    Ok(format!("{pairs} parent/child pairs, {enlarged} enlargements"))
}

fn budget_refinement() -> Outcome {
    let n = fixture("once");
    let g = &n.grammar;
    let p = (0..g.num_prods()).find(|&p| g.prod_string(p) == "S -> t3").ok_or("no S -> t3")?;
    let r = refine_budget(&n, &BTreeSet::from([p]), &BTreeMap::new(), 1).map_err(|e| e.to_string())?;
    let (a, b) = (runs_bounded(&n, 4).map_err(|e| e.to_string())?, runs_bounded(&r, 4).map_err(|e| e.to_string())?);
    ensure(!a.is_empty(), || "no runs at bound 4".into())?;
    ensure(a == b, || format!("{} runs before, {} after", a.len(), b.len()))?;
    let v = is_deconstruction(&n, std::slice::from_ref(&r), 4).map_err(|e| e.to_string())?;
    ensure(v.holds, || format!("{:?} {}", v.failed, v.detail))?;
    let (ra, rb) = (rank(&n).map_err(|e| e.to_string())?, rank(&r).map_err(|e| e.to_string())?);
    ensure(rb < ra, || format!("rank {rb} not below {ra}"))?;
    Ok(format!("{} runs kept, rank {ra} -> {rb}", a.len()))
}

fn iteration_pump1() -> Outcome {
    let start = Instant::now();
    let n = fixture("pump1");
    let bprime = n.restriction.base.clone();
    let e = vec![1; n.restriction.periods.len()];
    let p = plan(&n, &bprime, &e).map_err(|e| e.to_string())?;
    let m_in = n.cin.to_concrete().ok_or("c_in is not concrete")?;
    let m_out = n.cout.to_concrete().ok_or("c_out is not concrete")?;
    for k in p.k0..=p.k0 + 5 {
        let it = p.iterate(k).map_err(|e| format!("k={k}: {e}"))?;
        ensure(it.source == m_in, || format!("k={k}: starts at {:?}", it.source))?;
        ensure(fire_concrete(&m_in, &it.run).as_ref() == Some(&m_out), || format!("k={k}: does not reach {m_out:?}"))?;
        let mut want = bprime.clone();
        for (per, &ej) in n.restriction.periods.iter().zip(&e) {
            for (w, x) in want.iter_mut().zip(per) {
                *w += k as i64 * ej * x;
            }
        }
        let mut eff = vec![0; n.dim];
        for u in &it.run {
            for (a, b) in eff.iter_mut().zip(u) {
                *a += b;
            }
        }
        ensure(eff == want, || format!("k={k}: effect {eff:?}, want {want:?}"))?;
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("k0 = {}", p.k0))
}

fn dc_type_value() -> Outcome {
    let m = GMarking(vec![Nw::Fin(1), Nw::Omega]);
    let t = dc_type(&ideal_parts(&m));
    ensure(t == vec![0, 2, 0], || format!("type {t:?}"))?;
    let listed = [GMarking(vec![Nw::Fin(0), Nw::Omega]), m];
    let t2 = dc_type(&listed);
    ensure(t2 == t, || format!("listed parts give {t2:?}"))?;
    Ok(format!("type {t:?}"))
}

fn cli_determinism() -> Outcome {
    let mut runs = 0;
    for path in fixture_paths() {
        let f = path.to_string_lossy().into_owned();
        let n = common::fixture(path.file_stem().and_then(|s| s.to_str()).expect("utf-8 name"));
        let ones: Vec<String> = (1..=n.grammar.num_prods()).map(|p| format!("p{p}=1")).collect();
        let ones = ones.join(",");
        let cmds: Vec<Vec<&str>> = vec![
            vec!["validate", &f],
            vec!["reach", &f, "--bound", "4"],
            vec!["eek", "realize", &f, "--counts", &ones],
            vec!["eek", "realize", &f, "--counts", &ones, "--hom"],
            vec!["widetree", &f, "--k", "5"],
            vec!["km", &f],
            vec!["km", &f, "--approx", "nat:4"],
            vec!["covgrammar", &f, "--extract"],
            vec!["rank", &f],
            vec!["perfect", &f, "--bound", "4"],
            vec!["iterate", &f],
        ];
        for mut c in cmds {
            c.push("--json");
            let (a, b) = (run_command(&c), run_command(&c));
            ensure(a == b, || format!("{c:?} differs between runs"))?;
            serde_json::from_str::<serde_json::Value>(&a.text).map_err(|e| format!("{c:?}: not JSON: {e}"))?;
            runs += 1;
        }
    }
    Ok(format!("{runs} commands"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("EEK round-trip", eek_round_trip),
        ("wide tree bounds", wide_tree_bounds),
        ("support via LP equals brute force", support_equivalence),
        ("marking equation soundness", mark_eq_soundness),
        ("Karp-Miller against a plain VASS tree", karp_miller_vs_classic),
        ("coverability grammar soundness", cg_soundness),
        ("rank laws", rank_laws),
        ("budget refinement", budget_refinement),
        ("iteration on pump1", iteration_pump1),
        ("type of (1,ω)↓", dc_type_value),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let ms = t.elapsed().as_millis();
        match res {
            Ok(detail) => println!("criterion {:2} {name}: pass ({detail}; {ms} ms)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:2} {name}: FAIL ({why}; {ms} ms)", i + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
