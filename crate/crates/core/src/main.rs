//! Command-line surface over the library: parsing, elimination, normal
//! forms, the dichotomy driver, lattice computations, and the brute-force
//! differential oracle.
//!
//! Exit codes: 0 success, 1 negative verdict (a "no" or "disagree"
//! outcome), 2 usage or input error. All machine output (`--json`) is
//! canonical: fixed key order, rationals as `p/q` strings. Runtimes go to
//! stderr so JSON artifacts stay byte-stable.
//!
//! Environment: `OAGD_THREADS` caps the worker pool; `OAGD_OUT_DIR`, when
//! set, also writes each JSON artifact to `<dir>/<subcommand>.json`.

use clap::{Parser, Subcommand};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use oagd::defset::{AffineOp, BoolOp, DefSet};
use oagd::dichotomy::{
    build_chi, classify, extract_interval, order_relation, Classification,
};
use oagd::formula::{parse_formula, Formula};
use oagd::lattice::{
    acl_closure, has_small_quotients, mat_mul, smith_normal_form, AclMode, IMat, LatticeGroup,
};
use oagd::model::{parse_model, Elem, GroundModel};
use oagd::oracle::{brute_eval, brute_window, compare_report, Window};
use oagd::qe::{eliminate_quantifiers, formula_to_defset};
use oagd::rational::{format_rat, parse_rat};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "oagd", about = "definable sets over ordered abelian groups with small quotients")]
struct Cli {
    /// Ground model: z, q, or zp:<prime>.
    #[arg(long, global = true, default_value = "z")]
    model: String,
    /// Formula source text.
    #[arg(long, global = true, allow_hyphen_values = true)]
    formula: Option<String>,
    /// Read the formula from a file instead.
    #[arg(long, global = true)]
    file: Option<String>,
    /// Parameter bindings `k=v,...` with rational values.
    #[arg(long, global = true, allow_hyphen_values = true)]
    params: Option<String>,
    /// Window radius override.
    #[arg(long, global = true)]
    window: Option<i64>,
    /// Emit canonical JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Distinguished variable (defaults to x).
    #[arg(long, global = true, default_value = "x")]
    var: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a formula and report its shape.
    Parse,
    /// Eliminate quantifiers.
    Qe,
    /// Normalize a one-variable formula to a definable-set normal form.
    Normalize,
    /// Test membership of an element in the normalized set.
    Member {
        /// The element, as p/q.
        #[arg(long, allow_hyphen_values = true)]
        g: String,
    },
    /// Boolean combination of two normalized formulas.
    Bool {
        #[arg(long)]
        op: String,
        /// Second formula.
        #[arg(long)]
        rhs: String,
    },
    /// Affine image of a normalized formula.
    Affine {
        /// translate:<g>, reflect, divide:<n>, or scale:<n>.
        #[arg(long)]
        op: String,
    },
    /// Decide definability from the group structure alone.
    GroupDefinable,
    /// Extract an initial interval (0, b) with a replayable trace.
    ExtractOrder,
    /// Verify the recovered order against < on the window.
    OrderCheck,
    /// Check the bounded-interval detector against direct evaluation.
    ChiCheck,
    /// Run the dichotomy: group-definable or order-recovered.
    Classify,
    /// Smith normal form of an integer matrix.
    Snf {
        /// Matrix as JSON rows, e.g. [[2,0],[0,3]].
        #[arg(long)]
        matrix: String,
    },
    /// |G/mG| for a generated subgroup of Q^d.
    Quotient {
        /// Generators as JSON (arrays of "p/q" strings).
        #[arg(long)]
        gens: String,
        #[arg(long)]
        m: i64,
    },
    /// Table of |G/mG| for m up to a bound, with bound flags.
    SmallQuotients {
        #[arg(long)]
        gens: String,
        #[arg(long, default_value_t = 10)]
        up_to: i64,
    },
    /// Rank of a generated subgroup.
    Rank {
        #[arg(long)]
        gens: String,
    },
    /// Algebraic closure: rational span intersected with the group.
    Acl {
        #[arg(long)]
        gens: String,
        /// Points as JSON (arrays of "p/q" strings).
        #[arg(long)]
        points: String,
        /// discrete or dense.
        #[arg(long, default_value = "dense")]
        mode: String,
    },
    /// Brute-force membership table over the window.
    Oracle,
    /// Differential comparison: normal-form membership vs brute force.
    Compare,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Ok(n) = std::env::var("OAGD_THREADS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(&cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, String> {
    let model = parse_model(&cli.model).ok_or_else(|| format!("unknown model {:?}", cli.model))?;
    match &cli.cmd {
        Cmd::Parse => {
            let f = load_formula(cli, &model)?;
            let free: Vec<String> = f.free_vars().into_iter().collect();
            emit(
                cli,
                "parse",
                json!({
                    "formula": f.to_string(),
                    "free_vars": free,
                    "quantifier_free": f.is_quantifier_free(),
                }),
                &format!("{f}\nfree: {}", free.join(", ")),
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Qe => {
            let f = load_formula(cli, &model)?;
            let bound = f.substitute_params(&load_params(cli, &model)?, &model).err_str()?;
            let out = eliminate_quantifiers(&bound, &model);
            emit(
                cli,
                "qe",
                json!({ "input": f.to_string(), "result": out.to_string() }),
                &out.to_string(),
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Normalize => {
            let d = load_defset(cli, &model)?;
            emit(cli, "normalize", d.to_json(), &d.to_string());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Member { g } => {
            let d = load_defset(cli, &model)?;
            let g = parse_rat(g).ok_or_else(|| format!("bad element {g:?}"))?;
            if !model.contains(&g) {
                return Err(format!("{} is not in the ground model", format_rat(&g)));
            }
            let yes = d.member(&g);
            emit(
                cli,
                "member",
                json!({ "g": format_rat(&g), "member": yes }),
                if yes { "true" } else { "false" },
            );
            Ok(verdict_code(yes))
        }
        Cmd::Bool { op, rhs } => {
            let d = load_defset(cli, &model)?;
            let rhs_formula = parse_formula(rhs, &model).err_str()?;
            let e = formula_to_defset(&rhs_formula, &cli.var, &load_params(cli, &model)?, &model)
                .err_str()?;
            let op = match op.as_str() {
                "union" => BoolOp::Union,
                "intersect" => BoolOp::Intersect,
                "difference" => BoolOp::Difference,
                _ => return Err(format!("unknown boolean op {op:?}")),
            };
            let out = DefSet::boolean(op, &d, &e);
            emit(cli, "bool", out.to_json(), &out.to_string());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Affine { op } => {
            let d = load_defset(cli, &model)?;
            let op = parse_affine(op)?;
            let out = d.affine(&op);
            emit(cli, "affine", out.to_json(), &out.to_string());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::GroupDefinable => {
            let d = load_defset(cli, &model)?;
            let v = d.is_group_definable();
            let yes = v.is_yes();
            emit(cli, "group-definable", verdict_json(&v), &format!("{v:?}"));
            Ok(verdict_code(yes))
        }
        Cmd::ExtractOrder => {
            let d = load_defset(cli, &model)?;
            let r = extract_interval(&d).err_str()?;
            emit(
                cli,
                "extract-order",
                json!({
                    "b": r.b.as_ref().map(format_rat).unwrap_or_else(|| "inf".into()),
                    "interval": r.interval.to_json(),
                    "trace": r.trace.to_json(),
                }),
                &format!(
                    "b = {}\ninterval = {}",
                    r.b.as_ref().map(format_rat).unwrap_or_else(|| "inf".into()),
                    r.interval
                ),
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::OrderCheck => {
            let d = load_defset(cli, &model)?;
            let r = extract_interval(&d).err_str()?;
            let rel = order_relation(&r);
            let mut w = window_for(cli, model);
            w.radius = w.radius.min(200);
            let members: Vec<Elem> =
                w.carrier().into_iter().filter(|g| r.interval.member(g)).collect();
            let mut bad: Option<(Elem, Elem)> = None;
            'outer: for a in &members {
                for b in &members {
                    if rel.holds(a, b) != (a < b) {
                        bad = Some((a.clone(), b.clone()));
                        break 'outer;
                    }
                }
            }
            let replay = r.trace.replay();
            let agree = bad.is_none() && replay;
            emit(
                cli,
                "order-check",
                json!({
                    "verdict": if agree { "agree" } else { "disagree" },
                    "interval_members_in_window": members.len(),
                    "trace_replays": replay,
                    "counterexample": bad.as_ref().map(|(a, b)| json!([format_rat(a), format_rat(b)])),
                    "note": "window-relative verification",
                }),
                if agree { "agree" } else { "disagree" },
            );
            Ok(verdict_code(agree))
        }
        Cmd::ChiCheck => {
            let f = load_formula(cli, &model)?;
            let report = chi_check(cli, &f, &model)?;
            let agree = report["verdict"] == "agree";
            let text = report["verdict"].as_str().unwrap_or("").to_string();
            emit(cli, "chi-check", report, &text);
            Ok(verdict_code(agree))
        }
        Cmd::Classify => {
            let f = load_formula(cli, &model)?;
            let params = load_params(cli, &model)?;
            let c = classify(&f, &cli.var, &params, &model).err_str()?;
            let v = match &c {
                Classification::GroupDefinable { period, core_residues, added, removed } => json!({
                    "verdict": "GroupDefinable",
                    "period": period.to_string(),
                    "core_residues": core_residues.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
                    "added": added.iter().map(format_rat).collect::<Vec<_>>(),
                    "removed": removed.iter().map(format_rat).collect::<Vec<_>>(),
                }),
                Classification::OrderRecovered { result } => json!({
                    "verdict": "OrderRecovered",
                    "b": result.b.as_ref().map(format_rat).unwrap_or_else(|| "inf".into()),
                    "interval": result.interval.to_json(),
                    "trace": result.trace.to_json(),
                }),
            };
            let text = v["verdict"].as_str().unwrap_or("").to_string();
            emit(cli, "classify", v, &text);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Snf { matrix } => {
            let a = parse_imat(matrix)?;
            let r = smith_normal_form(&a);
            debug_assert_eq!(mat_mul(&mat_mul(&r.u, &a), &r.v), r.s);
            emit(
                cli,
                "snf",
                json!({ "u": imat_json(&r.u), "s": imat_json(&r.s), "v": imat_json(&r.v) }),
                &format!("S = {:?}", r.s),
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Quotient { gens, m } => {
            let g = load_group(gens)?;
            let card = g.quotient_card(&BigInt::from(*m)).err_str()?;
            emit(
                cli,
                "quotient",
                json!({ "card": card.to_string() }),
                &card.to_string(),
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::SmallQuotients { gens, up_to } => {
            let g = load_group(gens)?;
            let table = has_small_quotients(&g, &BigInt::from(*up_to));
            let rows: Vec<Value> = table
                .iter()
                .map(|e| {
                    json!({
                        "m": e.m.to_string(),
                        "card": e.card.to_string(),
                        "within_bound": e.within_bound,
                    })
                })
                .collect();
            let all_ok = table.iter().all(|e| e.within_bound);
            emit(
                cli,
                "small-quotients",
                json!({ "dim": g.dim(), "table": rows, "all_within_bound": all_ok }),
                &format!("{} entries, all within m^d: {all_ok}", table.len()),
            );
            Ok(verdict_code(all_ok))
        }
        Cmd::Rank { gens } => {
            let g = load_group(gens)?;
            emit(cli, "rank", json!({ "rank": g.rank() }), &g.rank().to_string());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Acl { gens, points, mode } => {
            let g = load_group(gens)?;
            let pts_v: Value = serde_json::from_str(points).err_str()?;
            let pts: Vec<Vec<BigRational>> = match &pts_v {
                Value::Array(arr) => {
                    let mut out = Vec::new();
                    for row in arr {
                        let row = row.as_array().ok_or("points must be arrays")?;
                        let mut v = Vec::new();
                        for x in row {
                            let s = x.as_str().ok_or("point entries must be \"p/q\" strings")?;
                            v.push(parse_rat(s).ok_or_else(|| format!("bad rational {s:?}"))?);
                        }
                        out.push(v);
                    }
                    out
                }
                _ => return Err("points must be a JSON array".into()),
            };
            let mode = match mode.as_str() {
                "discrete" => AclMode::Discrete,
                "dense" => AclMode::Dense,
                _ => return Err(format!("unknown mode {mode:?}")),
            };
            let cl = acl_closure(&g, &pts, mode).err_str()?;
            emit(cli, "acl", cl.to_json(), &format!("rank {}", cl.rank()));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Oracle => {
            let f = load_formula_bound(cli, &model)?;
            let w = window_for(cli, model);
            let started = std::time::Instant::now();
            let table = brute_window(&f, &cli.var, &w);
            eprintln!("runtime_ms: {}", started.elapsed().as_millis());
            let members: Vec<String> =
                table.iter().filter(|(_, b)| *b).map(|(g, _)| format_rat(g)).collect();
            emit(
                cli,
                "oracle",
                json!({
                    "checked": table.len(),
                    "members": members,
                    "note": "window-relative verification",
                }),
                &format!("{} members of {}", members.len(), table.len()),
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Compare => {
            let f = load_formula_bound(cli, &model)?;
            let d = formula_to_defset(&f, &cli.var, &BTreeMap::new(), &model).err_str()?;
            let w = window_for(cli, model);
            let started = std::time::Instant::now();
            let r = compare_report(&f, &cli.var, &d, &w);
            eprintln!("runtime_ms: {}", started.elapsed().as_millis());
            let agree = r.agree();
            let v = serde_json::to_value(&r).err_str()?;
            emit(cli, "compare", v, &r.verdict);
            Ok(verdict_code(agree))
        }
    }
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

trait ErrStr<T> {
    fn err_str(self) -> Result<T, String>;
}

impl<T, E: std::fmt::Display> ErrStr<T> for Result<T, E> {
    fn err_str(self) -> Result<T, String> {
        self.map_err(|e| e.to_string())
    }
}

fn verdict_code(yes: bool) -> ExitCode {
    if yes {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn load_formula(cli: &Cli, model: &GroundModel) -> Result<Formula, String> {
    let src = match (&cli.formula, &cli.file) {
        (Some(s), None) => s.clone(),
        (None, Some(path)) => std::fs::read_to_string(path).err_str()?,
        (Some(_), Some(_)) => return Err("use --formula or --file, not both".into()),
        (None, None) => return Err("a formula is required (--formula or --file)".into()),
    };
    parse_formula(&src, model).err_str()
}

/// Formula with parameters substituted.
fn load_formula_bound(cli: &Cli, model: &GroundModel) -> Result<Formula, String> {
    let f = load_formula(cli, model)?;
    f.substitute_params(&load_params(cli, model)?, model).err_str()
}

fn load_params(cli: &Cli, model: &GroundModel) -> Result<BTreeMap<String, Elem>, String> {
    let mut out = BTreeMap::new();
    if let Some(spec) = &cli.params {
        for pair in spec.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format!("bad parameter binding {pair:?}"))?;
            let val = parse_rat(v.trim()).ok_or_else(|| format!("bad rational {v:?}"))?;
            if !model.contains(&val) {
                return Err(format!("{} is not in the ground model", format_rat(&val)));
            }
            out.insert(k.trim().to_string(), val);
        }
    }
    Ok(out)
}

fn load_defset(cli: &Cli, model: &GroundModel) -> Result<DefSet, String> {
    let f = load_formula(cli, model)?;
    formula_to_defset(&f, &cli.var, &load_params(cli, model)?, model).err_str()
}

fn window_for(cli: &Cli, model: GroundModel) -> Window {
    match cli.window {
        Some(n) => Window::with_radius(model, n),
        None => Window::standard(model),
    }
}

fn parse_affine(op: &str) -> Result<AffineOp, String> {
    if op == "reflect" {
        return Ok(AffineOp::Reflect);
    }
    let (kind, arg) = op.split_once(':').ok_or_else(|| format!("unknown affine op {op:?}"))?;
    match kind {
        "translate" => {
            let g = parse_rat(arg).ok_or_else(|| format!("bad rational {arg:?}"))?;
            Ok(AffineOp::Translate(g))
        }
        "divide" => Ok(AffineOp::DivideBy(parse_positive(arg)?)),
        "scale" => Ok(AffineOp::ScaleBy(parse_positive(arg)?)),
        _ => Err(format!("unknown affine op {op:?}")),
    }
}

fn parse_positive(s: &str) -> Result<BigInt, String> {
    let n: BigInt = s.parse().err_str()?;
    if n.is_positive() {
        Ok(n)
    } else {
        Err(format!("expected a positive integer, got {s}"))
    }
}

fn parse_imat(s: &str) -> Result<IMat, String> {
    let v: Value = serde_json::from_str(s).err_str()?;
    let rows = v.as_array().ok_or("matrix must be a JSON array of rows")?;
    let mut out: IMat = Vec::new();
    for row in rows {
        let row = row.as_array().ok_or("matrix rows must be arrays")?;
        let mut r: Vec<BigInt> = Vec::new();
        for x in row {
            let n = x
                .as_i64()
                .map(BigInt::from)
                .or_else(|| x.as_str().and_then(|s| s.parse().ok()))
                .ok_or("matrix entries must be integers")?;
            r.push(n);
        }
        out.push(r);
    }
    if out.is_empty() || out.iter().any(|r| r.len() != out[0].len()) {
        return Err("matrix must be nonempty and rectangular".into());
    }
    Ok(out)
}

fn imat_json(a: &IMat) -> Value {
    Value::Array(
        a.iter()
            .map(|r| Value::Array(r.iter().map(|x| Value::String(x.to_string())).collect()))
            .collect(),
    )
}

fn load_group(gens: &str) -> Result<LatticeGroup, String> {
    let v: Value = if let Ok(text) = std::fs::read_to_string(gens) {
        serde_json::from_str(&text).err_str()?
    } else {
        serde_json::from_str(gens).err_str()?
    };
    LatticeGroup::from_json(&v).err_str()
}

fn verdict_json(v: &oagd::defset::Verdict) -> Value {
    match v {
        oagd::defset::Verdict::Yes { period, core_residues, added, removed } => json!({
            "verdict": "yes",
            "period": period.to_string(),
            "core_residues": core_residues.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
            "added": added.iter().map(format_rat).collect::<Vec<_>>(),
            "removed": removed.iter().map(format_rat).collect::<Vec<_>>(),
        }),
        oagd::defset::Verdict::No { residue, end } => json!({
            "verdict": "no",
            "residue": residue.to_string(),
            "end": match end {
                oagd::defset::End::NegInf => "-inf",
                oagd::defset::End::PosInf => "inf",
            },
        }),
    }
}

/// χ-contract check: for all (b, c) in the square window, χ(b, c) holds
/// iff b > 0 and φ(·, c) realizes exactly [0, b] on the window.
fn chi_check(cli: &Cli, f: &Formula, model: &GroundModel) -> Result<Value, String> {
    let mut zvars: Vec<String> = f.free_vars().into_iter().filter(|v| *v != cli.var).collect();
    if zvars.len() != 1 {
        return Err("chi-check expects free variables {x, z} with exactly one parameter".into());
    }
    let zvar = zvars.pop().unwrap();
    let (chi, y) = build_chi(f, &cli.var, model).err_str()?;
    let n = cli.window.unwrap_or(50);
    let w = Window::with_radius(*model, n.max(4) * 4);
    let mut checked = 0usize;
    let mut holds = 0usize;
    let mut counterexample: Option<(i64, i64)> = None;
    'outer: for b in -n..=n {
        for c in -n..=n {
            let mut asg = BTreeMap::new();
            asg.insert(y.clone(), BigRational::from_integer(BigInt::from(b)));
            asg.insert(zvar.clone(), BigRational::from_integer(BigInt::from(c)));
            let lhs = brute_eval(&chi, &asg, &w);
            let rhs = b > 0 && realizes_exactly(f, &cli.var, &zvar, b, c, &w);
            checked += 1;
            if lhs {
                holds += 1;
            }
            if lhs != rhs {
                counterexample = Some((b, c));
                break 'outer;
            }
        }
    }
    Ok(json!({
        "verdict": if counterexample.is_none() { "agree" } else { "disagree" },
        "checked": checked,
        "chi_holds": holds,
        "counterexample": counterexample.map(|(b, c)| json!([b, c])),
        "note": "window-relative verification",
    }))
}

/// Does φ(·, c) realize exactly [0, b] on the window?
fn realizes_exactly(
    f: &Formula,
    x: &str,
    z: &str,
    b: i64,
    c: i64,
    w: &Window,
) -> bool {
    let zero = BigRational::zero();
    let bq = BigRational::from_integer(BigInt::from(b));
    for g in w.carrier() {
        let mut asg = BTreeMap::new();
        asg.insert(z.to_string(), BigRational::from_integer(BigInt::from(c)));
        asg.insert(x.to_string(), g.clone());
        let truth = brute_eval(f, &asg, w);
        let expect = g >= zero && g <= bq;
        if truth != expect {
            return false;
        }
    }
    true
}

fn emit(cli: &Cli, name: &str, v: Value, text: &str) {
    if cli.json {
        let rendered = serde_json::to_string(&v).expect("serializable");
        println!("{rendered}");
        if let Ok(dir) = std::env::var("OAGD_OUT_DIR") {
            let path = std::path::Path::new(&dir).join(format!("{name}.json"));
            if let Err(e) = std::fs::write(&path, format!("{rendered}\n")) {
                eprintln!("warning: could not write {}: {e}", path.display());
            }
        }
    } else {
        println!("{text}");
    }
}
