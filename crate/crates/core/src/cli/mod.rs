//! Command-line front end. `run_command` parses arguments, runs one command
//! and returns the report text together with the exit code:
//! 0 on success, 2 on a contract or input error, 3 when the verdict fails.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::chareq::full_hom;
use crate::coverability::{cov_grammar, extract_decomposition, karp_miller, witness_pump, Approx, CgVerdict, KmVerdict};
use crate::eek::{hom_realize, realize};
use crate::error::{Error, Result};
use crate::grammar::{Grammar, ParseTree, Sym};
use crate::iteration::plan;
use crate::ngvas::{validate, Ngvas};
use crate::oracle::{bfs_reach, bfs_reach_between, Reach};
use crate::perfectness::{check_conditions, Verdict};
use crate::rank::{main_branch, rank};
use crate::vas::{GMarking, Nw, Vector};
use crate::widetree::{build_wide_tree, height_bound, log_factor, order_of};

pub mod format;

pub use format::{parse_file, parse_str, render, Model};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONTRACT: i32 = 2;
pub const EXIT_FAILS: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "ngv", about = "Nested grammar vector addition systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Debug)]
struct Common {
    file: PathBuf,
    /// System to use; defaults to the last one in the file.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check structural and consistency requirements.
    Validate {
        #[command(flatten)]
        c: Common,
    },
    /// Bounded search for a run between two markings.
    Reach {
        #[command(flatten)]
        c: Common,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        #[arg(long, default_value_t = 6)]
        bound: usize,
    },
    /// Derivations from production counts.
    Eek {
        #[command(subcommand)]
        op: EekOp,
    },
    /// Wide tree for k copies of a homogeneous production vector.
    Widetree {
        #[command(flatten)]
        c: Common,
        #[arg(long)]
        k: usize,
        /// Production counts `p1=..,p2=..`; defaults to a full homogeneous solution.
        #[arg(long)]
        counts: Option<String>,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Karp-Miller tree.
    Km {
        #[command(flatten)]
        c: Common,
        #[arg(long, default_value = "int")]
        approx: String,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Coverability grammar.
    Covgrammar {
        #[command(flatten)]
        c: Common,
        #[arg(long, default_value = "int")]
        approx: String,
        /// Also extract a pump or a decomposition.
        #[arg(long)]
        extract: bool,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    Rank {
        #[command(flatten)]
        c: Common,
    },
    /// Perfectness conditions up to a bound.
    Perfect {
        #[command(flatten)]
        c: Common,
        #[arg(long, default_value_t = 6)]
        bound: usize,
    },
    /// Synthesize the k-th iterated run.
    Iterate {
        #[command(flatten)]
        c: Common,
        #[arg(long)]
        k: Option<usize>,
        /// Effect in the restriction; defaults to its base.
        #[arg(long)]
        bprime: Option<String>,
        /// Period multiplicities; defaults to all ones.
        #[arg(long)]
        e: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
enum EekOp {
    Realize {
        #[command(flatten)]
        c: Common,
        #[arg(long)]
        counts: String,
        /// Require a homogeneous derivation `S -> w S w'`.
        #[arg(long)]
        hom: bool,
    },
}

/// Report text and exit code of one command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub text: String,
    pub code: i32,
}

struct Report {
    value: Value,
    text: String,
    fails: bool,
}

/// Runs `argv` (without the program name) and returns the report.
pub fn run_command<S: AsRef<str>>(argv: &[S]) -> Outcome {
    let args = std::iter::once("ngv").chain(argv.iter().map(AsRef::as_ref));
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONTRACT } else { EXIT_OK };
            return Outcome { text: e.to_string(), code };
        }
    };
    let json = match &cli.cmd {
        Cmd::Eek { op: EekOp::Realize { c, .. } } => c.json,
        Cmd::Validate { c }
        | Cmd::Reach { c, .. }
        | Cmd::Widetree { c, .. }
        | Cmd::Km { c, .. }
        | Cmd::Covgrammar { c, .. }
        | Cmd::Rank { c }
        | Cmd::Perfect { c, .. }
        | Cmd::Iterate { c, .. } => c.json,
    };
    match dispatch(cli.cmd) {
        Ok(r) => {
            let code = if r.fails { EXIT_FAILS } else { EXIT_OK };
            let text = if json { pretty(&r.value) } else { r.text };
            Outcome { text, code }
        }
        Err(e) => {
            let text = if json { pretty(&json!({ "error": error_json(&e) })) } else { format!("error: {e}\n") };
            Outcome { text, code: EXIT_CONTRACT }
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

fn error_json(e: &Error) -> Value {
    let kind = match e {
        Error::Structural(_) => "structural",
        Error::Contract(_) => "contract",
        Error::Budget(_) => "budget",
        Error::Parse { .. } => "parse",
    };
    json!({ "kind": kind, "message": e.to_string() })
}

fn load(c: &Common) -> Result<Ngvas> {
    parse_file(&c.file)?.build(c.system.as_deref())
}

fn marking_json(m: &GMarking) -> Value {
    Value::Array(
        m.0.iter()
            .map(|x| match x {
                Nw::Fin(v) => json!(v),
                Nw::Omega => json!("w"),
            })
            .collect(),
    )
}

fn run_json(run: &[Vector]) -> Value {
    json!(run)
}

fn word_names(g: &Grammar, w: &[Sym]) -> Vec<String> {
    w.iter().map(|&s| g.sym_name(s).to_string()).collect()
}

fn parse_vector(s: &str, d: usize) -> Result<Vector> {
    let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
    let v: std::result::Result<Vector, _> = inner.split(',').map(|x| x.trim().parse::<i64>()).collect();
    match v {
        Ok(v) if v.len() == d => Ok(v),
        _ => Err(Error::Contract(format!("expected a vector of {d} integers, got {s:?}"))),
    }
}

/// `p1=2,p3=1` over 1-based production indices; missing entries are 0.
fn parse_counts(s: &str, nprods: usize) -> Result<Vec<i64>> {
    let mut v = vec![0; nprods];
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || Error::Contract(format!("bad count {part:?}, expected pN=COUNT"));
        let (k, c) = part.split_once('=').ok_or_else(bad)?;
        let i: usize = k.trim().strip_prefix('p').and_then(|x| x.parse().ok()).ok_or_else(bad)?;
        if i == 0 || i > nprods {
            return Err(Error::Contract(format!("production p{i} does not exist")));
        }
        v[i - 1] = c.trim().parse().map_err(|_| bad())?;
    }
    Ok(v)
}

fn write_dot(path: &Option<PathBuf>, dot: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, dot).map_err(|e| Error::Contract(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(())
}

fn tree_json(g: &Grammar, t: &ParseTree) -> Value {
    json!({
        "yield": word_names(g, &t.yield_word()),
        "height": t.height(),
        "steps": t.derivation().steps.iter().map(|s| json!([s.pos, s.prod + 1])).collect::<Vec<_>>(),
    })
}

fn dispatch(cmd: Cmd) -> Result<Report> {
    match cmd {
        Cmd::Validate { c } => {
            let n = load(&c)?;
            let vs = validate(&n);
            let text = if vs.is_empty() {
                format!("{}: valid\n", n.name)
            } else {
                vs.iter().map(|v| format!("{v}\n")).collect()
            };
            let list: Vec<Value> =
                vs.iter().map(|v| json!({ "code": v.code, "subject": v.subject, "message": v.message })).collect();
            Ok(Report { value: json!({ "system": n.name, "valid": vs.is_empty(), "violations": list }), text, fails: !vs.is_empty() })
        }
        Cmd::Reach { c, from, to, bound } => {
            let n = load(&c)?;
            let r = match (from, to) {
                (None, None) => bfs_reach(&n, bound)?,
                (Some(a), Some(b)) => bfs_reach_between(&n, &parse_vector(&a, n.dim)?, &parse_vector(&b, n.dim)?, bound)?,
                _ => return Err(Error::Contract("give both --from and --to, or neither".into())),
            };
            let (value, text) = match &r {
                Reach::Reachable(w) => (
                    json!({ "verdict": "reachable", "bound": bound, "source": w.source, "target": w.target, "run": run_json(&w.word) }),
                    format!("reachable in {} steps: {:?} -> {:?}\n", w.word.len(), w.source, w.target),
                ),
                Reach::NotWithinBound(b) => (
                    json!({ "verdict": "not-within-bound", "bound": b }),
                    format!("no run within bound {b}\n"),
                ),
            };
            Ok(Report { value, text, fails: false })
        }
        Cmd::Eek { op: EekOp::Realize { c, counts, hom } } => {
            let n = load(&c)?;
            let g = &n.grammar;
            let v = parse_counts(&counts, g.num_prods())?;
            let t = if hom { hom_realize(g, &v)? } else { realize(g, &v)? };
            let word = word_names(g, &t.yield_word());
            Ok(Report {
                value: json!({ "counts": v, "homogeneous": hom, "tree": tree_json(g, &t), "parikh_ok": t.prod_counts(g.num_prods()) == v }),
                text: format!("{}\n", word.join(" ")),
                fails: false,
            })
        }
        Cmd::Widetree { c, k, counts, dot } => {
            let n = load(&c)?;
            let g = &n.grammar;
            let v = match counts {
                Some(s) => parse_counts(&s, g.num_prods())?,
                None => {
                    let (hc, w) = full_hom(&n)?;
                    hc.x_p.iter().map(|x| x.map_or(0, |i| w[i])).collect()
                }
            };
            let t = build_wide_tree(g, &v, k)?;
            write_dot(&dot, &t.to_dot(g))?;
            let height = t.tree.height();
            let order = order_of(&t);
            let parikh: Vec<i64> = t.tree.prod_counts(g.num_prods());
            let exact = parikh.iter().zip(&v).all(|(a, b)| *a == k as i64 * b);
            let (hb, ob) = (height_bound(k, &v), log_factor(k));
            let ok = exact && height <= hb && order <= ob;
            Ok(Report {
                value: json!({ "k": k, "v": v, "height": height, "height_bound": hb, "order": order, "order_bound": ob, "parikh_exact": exact, "within_bounds": ok }),
                text: format!("k={k} height={height}/{hb} order={order}/{ob} parikh_exact={exact}\n"),
                fails: !ok,
            })
        }
        Cmd::Km { c, approx, dot } => {
            let n = load(&c)?;
            let ap: Approx = approx.parse()?;
            let t = karp_miller(&n, ap)?;
            write_dot(&dot, &t.to_dot(&n))?;
            let g = &n.grammar;
            let (verdict, extra) = match t.verdict {
                KmVerdict::PumpingFound(i) => ("pumping", json!({ "node": i })),
                KmVerdict::Bounded(cst) => ("bounded", json!({ "max_constant": cst })),
            };
            let nodes: Vec<Value> = t
                .nodes
                .iter()
                .map(|x| json!({ "in": marking_json(&x.input), "sym": g.nonterminals[x.sym], "out": marking_json(&x.output), "parent": x.parent }))
                .collect();
            Ok(Report {
                value: with_approx(json!({ "verdict": verdict, "detail": extra, "nodes": nodes }), ap),
                text: format!("{verdict} ({} nodes, {ap})\n", t.nodes.len()),
                fails: false,
            })
        }
        Cmd::Covgrammar { c, approx, extract, dot } => {
            let n = load(&c)?;
            let ap: Approx = approx.parse()?;
            let cg = cov_grammar(&n, ap)?;
            write_dot(&dot, &cg.to_dot())?;
            let verdict = match cg.verdict {
                CgVerdict::Bounded => "bounded",
                CgVerdict::Unbounded(_) => "unbounded",
            };
            let mut v = json!({ "verdict": verdict, "symbols": cg.symbols.len(), "rules": cg.rules.len() });
            let mut text = format!("{verdict}: {} symbols, {} rules ({ap})\n", cg.symbols.len(), cg.rules.len());
            if extract {
                if cg.is_bounded() {
                    let parts = extract_decomposition(&cg)?;
                    let mut list = Vec::new();
                    for p in &parts {
                        let r = rank(p)?;
                        text.push_str(&format!("  part {} rank {r}\n", p.name));
                        list.push(json!({ "name": p.name, "rank": r.to_string() }));
                    }
                    v["decomposition"] = json!({ "parts": list, "input_rank": rank(&n)?.to_string() });
                } else if let Some(z) = witness_pump(&cg)? {
                    let (l, r) = (z.left_effect(n.dim), z.right_effect(n.dim));
                    text.push_str(&format!("  pump at {}: left {l:?} right {r:?}\n", n.grammar.nonterminals[z.nonterminal]));
                    v["pump"] = json!({
                        "nonterminal": n.grammar.nonterminals[z.nonterminal],
                        "productions": z.prods.iter().map(|p| p + 1).collect::<Vec<_>>(),
                        "left": run_json(&z.left), "right": run_json(&z.right),
                        "left_effect": l, "right_effect": r,
                    });
                } else {
                    v["pump"] = Value::Null;
                    text.push_str("  no pump within the search bounds\n");
                }
            }
            Ok(Report { value: with_approx(v, ap), text, fails: false })
        }
        Cmd::Rank { c } => {
            let n = load(&c)?;
            let r = rank(&n)?;
            let mut rec = vec![r.constrained as u64];
            rec.extend(&r.srank);
            rec.push(r.index);
            Ok(Report {
                value: json!({ "system": n.name, "recrank": rec, "itrank": r.itrank, "main_branch": main_branch(&n)? }),
                text: format!("{r}\n"),
                fails: false,
            })
        }
        Cmd::Perfect { c, bound } => {
            let n = load(&c)?;
            let rep = check_conditions(&n, bound)?;
            let mut conds = serde_json::Map::new();
            let mut text = String::new();
            for (cond, v) in &rep.verdicts {
                text.push_str(&format!("{cond}: {v}\n"));
                conds.insert(
                    cond.name().to_string(),
                    match v {
                        Verdict::Holds => json!({ "verdict": "holds" }),
                        Verdict::Fails(w) => json!({ "verdict": "fails", "reason": w }),
                        Verdict::Unknown(b) => json!({ "verdict": "unknown", "bound": b }),
                    },
                );
            }
            Ok(Report {
                value: json!({ "system": n.name, "bound": bound, "conditions": conds, "perfect": rep.all_hold() }),
                text,
                fails: rep.any_fails(),
            })
        }
        Cmd::Iterate { c, k, bprime, e } => {
            let n = load(&c)?;
            let b = match bprime {
                Some(s) => parse_vector(&s, n.dim)?,
                None => n.restriction.base.clone(),
            };
            let e = match e {
                Some(s) => parse_vector(&s, n.restriction.periods.len())?,
                None => vec![1; n.restriction.periods.len()],
            };
            let p = plan(&n, &b, &e)?;
            let k = k.unwrap_or(p.k0);
            let it = p.iterate(k)?;
            let g = &p.grammar;
            let names = |ts: &[usize]| -> Vec<String> { ts.iter().map(|&t| g.terminals[t].clone()).collect() };
            let value = json!({
                "plan": {
                    "bprime": p.bprime, "e": p.e, "s": p.s, "h": p.h,
                    "pump": { "up": names(&p.pump.up), "down": names(&p.pump.down) },
                    "c": p.c, "cmax": p.cmax, "diff": p.diff, "gap": p.gap, "spread": p.spread, "k0": p.k0,
                },
                "k": k, "j1": it.j1, "j2": it.j2,
                "source": it.source, "target": it.target,
                "run": word_names(g, &it.tree.yield_word()),
                "effect": p.expected_effect(k),
                "enabled": it.enabled,
            });
            Ok(Report {
                value,
                text: format!(
                    "k={k} (k0={}, c={}) run of length {} from {:?} to {:?}\n",
                    p.k0,
                    p.c,
                    it.run.len(),
                    it.source,
                    it.target
                ),
                fails: false,
            })
        }
    }
}

fn with_approx(mut v: Value, ap: Approx) -> Value {
    match ap {
        Approx::Int => v["approx"] = json!("int"),
        Approx::Nat(b) => {
            v["approx"] = json!("nat");
            v["bound"] = json!(b);
        }
    }
    v
}
