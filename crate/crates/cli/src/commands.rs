//! The batch commands. Each one computes a node or α table, a JSON summary
//! and a set of checks; [`run`] writes the artifacts and turns the worst
//! failed check into an error.

use std::path::PathBuf;

use indiff_core::asymptotics::{large_alpha_sweep, power_grid, small_alpha_sweep, test_variables, Fit, SweepReport};
use indiff_core::bsde::{bmo_norms, bsde_scheme, comparison_check, edge_identity_residual, exact_decomposition, orthogonality_residual, BmoReport, BsdeSolution};
use indiff_core::measures::{density_process, entropy_by_steps, relative_entropy, verify_dynamic_entropy, verify_entropy_structure};
use indiff_core::superrep::{subreplication_surface, superhedge_capital, superreplication, SuperrepSurface};
use indiff_core::tree::describe;
use indiff_core::valuation::{arbitrage_bounds_check, dual_surface, optimality_certificate, property_checks, time_consistency_check, PropertyInputs};
use indiff_core::{indifference_surface, lp, Check, Claim, EventTree, MarketContext, Measure, Report, StoppingRule, Strategy, Tolerances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::build;
use crate::config::{Command, RunConfig, TreeSpec};
use crate::error::CliError;
use crate::output::{self, num, opt, Table};

/// Everything a command produces before it is written out.
pub struct Outcome {
    pub table: Table,
    pub summary: Map<String, Value>,
    /// Checks with the instance they belong to (`verify` only).
    pub checks: Vec<(Option<usize>, Check)>,
}

impl Outcome {
    fn new(table: Table) -> Self {
        Self {
            table,
            summary: Map::new(),
            checks: Vec::new(),
        }
    }

    fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    fn check(&mut self, c: Check) {
        self.checks.push((None, c));
    }

    fn report(&mut self, r: Report) {
        self.checks.extend(r.checks.into_iter().map(|c| (None, c)));
    }

    fn worst_failure(&self) -> Option<&(Option<usize>, Check)> {
        self.checks.iter().filter(|(_, c)| !c.passed()).min_by(|a, b| (a.1.margin + a.1.tolerance).total_cmp(&(b.1.margin + b.1.tolerance)))
    }
}

/// Paths of the written artifacts.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub json: PathBuf,
}

/// Execute the configured command and write `<command>-<seed>.{csv,json}`.
/// Artifacts are written before a failed check is reported.
pub fn run(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    cfg.validate()?;
    let mut out = match cfg.command {
        Command::Validate => validate(cfg)?,
        Command::Entropy => entropy(cfg)?,
        Command::Price => price(cfg)?,
        Command::Bsde => bsde(cfg)?,
        Command::Superrep => superrep(cfg)?,
        Command::SweepSmall => sweep_small(cfg)?,
        Command::SweepLarge => sweep_large(cfg)?,
        Command::Verify => verify(cfg)?,
    };
    let checks: Vec<Value> = out
        .checks
        .iter()
        .map(|(inst, c)| {
            let mut m = Map::new();
            if let Some(i) = inst {
                m.insert("instance".into(), json!(i));
            }
            m.insert("name".into(), json!(c.name));
            m.insert("margin".into(), json!(c.margin));
            m.insert("tolerance".into(), json!(c.tolerance));
            m.insert("worst_node".into(), json!(c.worst_node));
            m.insert("passed".into(), json!(c.passed()));
            Value::Object(m)
        })
        .collect();
    let failures = out.checks.iter().filter(|(_, c)| !c.passed()).count();
    let mut summary = Map::new();
    summary.insert("command".into(), json!(cfg.command.name()));
    summary.insert("seed".into(), json!(cfg.seed));
    summary.append(&mut out.summary);
    summary.insert("passed".into(), json!(failures == 0));
    summary.insert("failures".into(), json!(failures));
    summary.insert("checks".into(), Value::Array(checks));

    let stem = format!("{}-{}", cfg.command.name(), cfg.seed);
    let (csv, json_path) = output::write(&cfg.resolve(&cfg.output), &stem, &out.table, &Value::Object(summary))?;
    if let Some((inst, c)) = out.worst_failure() {
        let node = c.worst_node.map(|n| format!("node {}", n)).unwrap_or_else(|| "the root summary".into());
        let location = match inst {
            Some(i) => format!("instance {}, {}", i, node),
            None => node,
        };
        return Err(CliError::Check {
            name: c.name.clone(),
            location,
            margin: c.margin,
            tolerance: c.tolerance,
        });
    }
    Ok(Artifacts { csv, json: json_path })
}

fn node_header(tree: &EventTree, extra: &[&str], per_asset: &[&str]) -> Table {
    let mut h: Vec<String> = ["node", "time", "parent"].iter().map(|s| s.to_string()).collect();
    h.extend(extra.iter().map(|s| s.to_string()));
    for name in per_asset {
        h.extend((1..=tree.assets()).map(|j| format!("{}_{}", name, j)));
    }
    Table::new(h)
}

fn node_cells(tree: &EventTree, id: usize) -> Vec<String> {
    let n = tree.node(id);
    vec![id.to_string(), n.time.to_string(), opt(n.parent)]
}

/// Holdings at a nonterminal node; blank cells at terminal nodes.
fn holdings(tree: &EventTree, theta: &Strategy, id: usize) -> Vec<String> {
    if tree.is_terminal(id) {
        vec![String::new(); tree.assets()]
    } else {
        theta.get(id).iter().map(|x| num(*x)).collect()
    }
}

fn nonterminal(tree: &EventTree) -> impl Iterator<Item = usize> + '_ {
    (0..tree.len()).filter(|id| !tree.is_terminal(*id))
}

fn claim_label(cfg: &RunConfig) -> Value {
    match &cfg.claim {
        Some(crate::config::ClaimSpec::Table(_)) => json!("table"),
        Some(crate::config::ClaimSpec::Expr(s)) => json!(s),
        None => json!(build::DEFAULT_CLAIM),
    }
}

struct Setup {
    market: MarketContext,
    claim: Claim,
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let tree = build::tree(cfg, cfg.seed)?;
    let claim = build::claim(cfg, &tree)?;
    Ok(Setup {
        market: MarketContext::new(tree)?,
        claim,
    })
}

fn describe_setup(out: &mut Outcome, cfg: &RunConfig, tree: &EventTree) {
    out.put("tree", describe(tree));
    out.put("claim", claim_label(cfg));
}

fn random_strategy(tree: &EventTree, rng: &mut ChaCha8Rng, bound: f64) -> Strategy {
    let d = tree.assets();
    Strategy::from_fn(tree, |_| (0..d).map(|_| rng.gen_range(-bound..bound)).collect())
}

// ---- validate ----

/// Largest `t` such that a martingale kernel with every weight ≥ `t`
/// exists; positive iff the node is free of arbitrage. `−∞` if there is no
/// martingale kernel at all.
pub fn interior_margin(increments: &[f64], d: usize, k: usize) -> f64 {
    // Increments are rescaled to unit size: the feasible set is invariant.
    let scale = increments.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    // Variables q (k), t (1), slack s (k); rows q_i − t − s_i = 0, Σq = 1, Σ q ΔS = 0.
    let n = 2 * k + 1;
    let m = k + 1 + d;
    let mut a = vec![0.0; m * n];
    for i in 0..k {
        a[i * n + i] = 1.0;
        a[i * n + k] = -1.0;
        a[i * n + k + 1 + i] = -1.0;
    }
    for i in 0..k {
        a[k * n + i] = 1.0;
    }
    for j in 0..d {
        for i in 0..k {
            a[(k + 1 + j) * n + i] = increments[i * d + j] / scale;
        }
    }
    let mut b = vec![0.0; m];
    b[k] = 1.0;
    let mut c = vec![0.0; n];
    c[k] = 1.0;
    match lp::simplex_max(&c, &a, &b, m, n) {
        Some((v, _)) => v,
        None => f64::NEG_INFINITY,
    }
}

/// Smallest interior margin counted as strictly positive.
const INTERIOR_FLOOR: f64 = 1e-12;

fn validate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let tree = build::tree(cfg, cfg.seed)?;
    // A configured claim is parsed so that a bad expression is reported;
    // the tree check itself does not need one.
    if cfg.claim.is_some() {
        build::claim(cfg, &tree)?;
    }
    let arb = tree.validate_no_arbitrage();
    let d = tree.assets();
    let mut header: Vec<String> = ["node", "time", "parent", "p"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=d).map(|j| format!("s_{}", j)));
    header.extend((1..=tree.aux_dim()).map(|j| format!("x_{}", j)));
    header.extend(["interior_margin", "arbitrage_free"].iter().map(|s| s.to_string()));
    let mut table = Table::new(header);
    let mut margins = vec![f64::INFINITY; tree.len()];
    for id in 0..tree.len() {
        let mut row = node_cells(&tree, id);
        row.push(num(tree.node(id).prob));
        row.extend(tree.price(id).iter().map(|x| num(*x)));
        row.extend(tree.aux(id).iter().map(|x| num(*x)));
        if tree.is_terminal(id) {
            row.extend([String::new(), String::new()]);
        } else {
            margins[id] = interior_margin(&tree.increments(id), d, tree.node(id).child_count);
            row.push(num(margins[id]));
            row.push(arb.nodes[id].to_string());
        }
        table.push(row);
    }
    let mut out = Outcome::new(table);
    describe_setup(&mut out, cfg, &tree);
    out.put("nodes", tree.len());
    out.put("terminals", tree.terminal_count());
    out.put("horizon", tree.horizon());
    out.put("assets", d);
    out.put("arbitrage_free", arb.arbitrage_free);
    out.put("first_violation", json!(arb.first_violation()));
    out.put("min_interior_margin", nonterminal(&tree).map(|id| margins[id]).fold(f64::INFINITY, f64::min));
    out.check(Check::inequality("no arbitrage", nonterminal(&tree).map(|id| (id, margins[id] - INTERIOR_FLOOR)), 0.0));
    Ok(out)
}

// ---- entropy ----

fn entropy_checks(market: &MarketContext, tol: &Tolerances) -> (Report, Map<String, Value>) {
    let tree = &market.tree;
    let qe = market.qe();
    let p = Measure::reference(tree);
    let h = relative_entropy(tree, qe, &p);
    let by_steps = entropy_by_steps(tree, qe, &p);
    let structure = verify_entropy_structure(tree, &market.entropy);
    let dynamic = verify_dynamic_entropy(tree, &market.entropy);
    let mart = qe.martingale_residual(tree);
    let mut r = Report::default();
    r.push(Check::scalar("entropy structure", -structure, tol.equality));
    r.push(Check::scalar("dynamic entropy", -dynamic, tol.equality));
    r.push(Check::scalar("martingale property of Q^E", -mart, tol.constraint));
    r.push(Check::scalar("entropy equals root value", -(h - market.entropy.root_value()).abs(), tol.equality));
    r.push(Check::scalar("entropy chain rule", -(h - by_steps).abs(), tol.equality));
    let mut m = Map::new();
    m.insert("relative_entropy".into(), json!(h));
    m.insert("c_e".into(), json!(market.entropy.c_e()));
    m.insert("structure_residual".into(), json!(structure));
    m.insert("dynamic_residual".into(), json!(dynamic));
    m.insert("martingale_residual".into(), json!(mart));
    m.insert("newton_iterations".into(), json!(market.entropy.newton_iterations));
    m.insert("newton_residual".into(), json!(market.entropy.max_residual));
    (r, m)
}

fn entropy(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let tree = build::tree(cfg, cfg.seed)?;
    let market = MarketContext::new(tree)?;
    let tree = &market.tree;
    let qe = market.qe();
    let dens = density_process(tree, qe, &Measure::reference(tree));
    let theta_e = market.entropy.theta_e(tree);
    let mut table = node_header(tree, &["p", "q_e", "density", "cost_to_go"], &["lambda"]);
    for id in 0..tree.len() {
        let mut row = node_cells(tree, id);
        row.extend([num(tree.node(id).prob), num(qe.edge()[id]), num(dens.z[id]), num(market.entropy.value[id])]);
        row.extend(holdings(tree, &theta_e, id));
        table.push(row);
    }
    let mut out = Outcome::new(table);
    out.put("tree", describe(tree));
    let (report, mut m) = entropy_checks(&market, &cfg.tolerances);
    out.summary.append(&mut m);
    out.report(report);
    Ok(out)
}

// ---- price ----

fn price_checks(s: &Setup, alpha: f64, rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(Report, PriceData), CliError> {
    let tree = &s.market.tree;
    let qe = s.market.qe();
    let primal = indifference_surface(tree, &s.claim, alpha, qe)?;
    let dual = dual_surface(tree, &s.claim, alpha)?;
    let ve = qe.conditional_expectation(tree, s.claim.values());
    let sup = superreplication(tree, &s.claim)?;
    let c = &primal.surface.values;
    let mut r = Report::default();
    r.push(Check::equality("primal equals dual", (0..tree.len()).map(|i| (i, c[i] - dual.surface.values[i])), tol.equality));
    r.push(Check::inequality("lower bound E_QE[B]", (0..tree.len()).map(|i| (i, c[i] - ve[i])), tol.equality));
    r.push(Check::inequality("upper bound C*", (0..tree.len()).map(|i| (i, sup.values[i] - c[i])), tol.equality));
    let mut tests = vec![Strategy::zeros(tree)];
    tests.extend((0..3).map(|_| random_strategy(tree, rng, 3.0)));
    let mut sub: Option<Check> = None;
    let mut opt_check: Option<Check> = None;
    for theta in &tests {
        let rep = optimality_certificate(tree, qe, &primal, theta, tol);
        let mut it = rep.checks.into_iter();
        let (a, b) = (it.next().expect("two certificate checks"), it.next().expect("two certificate checks"));
        if sub.as_ref().map_or(true, |s| a.margin < s.margin) {
            sub = Some(a);
        }
        opt_check = Some(b);
    }
    r.push(sub.expect("at least one test strategy"));
    r.push(opt_check.expect("at least one test strategy"));
    Ok((
        r,
        PriceData {
            dual: dual.surface.values,
            ve,
            cstar: sup.values,
            primal,
        },
    ))
}

struct PriceData {
    primal: indiff_core::ValuationResult,
    dual: Vec<f64>,
    ve: Vec<f64>,
    cstar: Vec<f64>,
}

fn price(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let tree = &s.market.tree;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (report, data) = price_checks(&s, cfg.alpha, &mut rng, &cfg.tolerances)?;
    let c = &data.primal.surface.values;
    let mut table = node_header(tree, &["c", "c_dual", "gap", "e_qe", "c_star"], &["theta"]);
    for id in 0..tree.len() {
        let mut row = node_cells(tree, id);
        row.extend([num(c[id]), num(data.dual[id]), num(c[id] - data.dual[id]), num(data.ve[id]), num(data.cstar[id])]);
        row.extend(holdings(tree, &data.primal.strategy, id));
        table.push(row);
    }
    let mut out = Outcome::new(table);
    describe_setup(&mut out, cfg, tree);
    out.put("alpha", cfg.alpha);
    out.put("c0", c[0]);
    out.put("c0_dual", data.dual[0]);
    out.put("max_gap", (0..tree.len()).map(|i| (c[i] - data.dual[i]).abs()).fold(0.0, f64::max));
    out.put("e_qe_claim", data.ve[0]);
    out.put("c_star_0", data.cstar[0]);
    out.put("theta_0", data.primal.strategy.get(0).to_vec());
    out.put("newton_iterations", data.primal.diagnostics.newton_iterations);
    out.put("newton_residual", data.primal.diagnostics.max_residual);
    out.report(report);
    Ok(out)
}

// ---- bsde ----

fn bsde_checks(tree: &EventTree, qe: &Measure, routes: &[&BsdeSolution], tol: &Tolerances) -> Report {
    let mut r = Report::default();
    for sol in routes {
        let tag = sol.route.as_str();
        r.push(Check::scalar(format!("edge identity ({})", tag), -edge_identity_residual(tree, sol), tol.constraint));
        r.push(Check::scalar(format!("orthogonality ({})", tag), -orthogonality_residual(tree, sol, qe), tol.constraint));
        r.push(Check::inequality(format!("compensator nondecreasing ({})", tag), (1..tree.len()).map(|i| (i, sol.da[i])), tol.constraint));
    }
    r
}

fn bmo_json(b: &BmoReport) -> Value {
    json!({"bmo_psi": b.bmo_psi, "bmo_l": b.bmo_l, "bmo_l_residual": b.bmo_l_residual})
}

fn bsde(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let tree = &s.market.tree;
    let qe = s.market.qe();
    let scheme = bsde_scheme(tree, &s.claim, cfg.alpha, qe)?;
    let exact = exact_decomposition(tree, &indifference_surface(tree, &s.claim, cfg.alpha, qe)?.surface, qe)?;
    let mut table = node_header(
        tree,
        &["y_scheme", "y_exact", "dl_scheme", "dl_exact", "da_scheme", "da_exact", "qv_l_scheme", "qv_l_exact"],
        &["psi_scheme", "psi_exact"],
    );
    for id in 0..tree.len() {
        let mut row = node_cells(tree, id);
        for (a, b) in [(&scheme.values, &exact.values), (&scheme.dl, &exact.dl), (&scheme.da, &exact.da), (&scheme.qv_l, &exact.qv_l)] {
            row.extend([num(a[id]), num(b[id])]);
        }
        row.extend(holdings(tree, &scheme.psi, id));
        row.extend(holdings(tree, &exact.psi, id));
        table.push(row);
    }
    let mut out = Outcome::new(table);
    describe_setup(&mut out, cfg, tree);
    out.put("alpha", cfg.alpha);
    out.put("y0_scheme", scheme.values[0]);
    out.put("y0_exact", exact.values[0]);
    out.put("max_scheme_deviation", (0..tree.len()).map(|i| (scheme.values[i] - exact.values[i]).abs()).fold(0.0, f64::max));
    out.put("bmo_scheme", bmo_json(&bmo_norms(tree, &scheme, qe)));
    out.put("bmo_exact", bmo_json(&bmo_norms(tree, &exact, qe)));
    out.report(bsde_checks(tree, qe, &[&scheme, &exact], &cfg.tolerances));
    Ok(out)
}

// ---- superrep ----

fn superrep_checks(tree: &EventTree, qe: &Measure, claim: &Claim, sup: &SuperrepSurface, sub: &[f64], tol: &Tolerances) -> Report {
    let mut r = Report::default();
    r.push(Check::inequality("consumption nonnegative", (1..tree.len()).map(|i| (i, sup.dk[i])), tol.constraint));
    r.push(Check::inequality(
        "supermartingale under Q^E",
        nonterminal(tree).map(|id| (id, sup.values[id] - tree.children(id).map(|c| qe.edge()[c] * sup.values[c]).sum::<f64>())),
        tol.constraint,
    ));
    r.push(Check::scalar("superhedge from C*_0", sup.values[0] - superhedge_capital(tree, claim, &sup.psi_star), tol.equality));
    r.push(Check::inequality("subreplication below superreplication", (0..tree.len()).map(|i| (i, sup.values[i] - sub[i])), tol.constraint));
    r
}

fn superrep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let tree = &s.market.tree;
    let qe = s.market.qe();
    let sup = superreplication(tree, &s.claim)?;
    let sub = subreplication_surface(tree, &s.claim)?;
    let k = sup.k_star(tree);
    let mut table = node_header(tree, &["c_star", "c_sub", "dk", "k_star"], &["psi_star"]);
    for id in 0..tree.len() {
        let mut row = node_cells(tree, id);
        row.extend([num(sup.values[id]), num(sub[id]), num(sup.dk[id]), num(k[id])]);
        row.extend(holdings(tree, &sup.psi_star, id));
        table.push(row);
    }
    let mut out = Outcome::new(table);
    describe_setup(&mut out, cfg, tree);
    out.put("c_star_0", sup.root());
    out.put("c_sub_0", sub[0]);
    out.put("e_qe_claim", qe.conditional_expectation(tree, s.claim.values())[0]);
    out.put("psi_star_0", sup.psi_star.get(0).to_vec());
    out.put("superhedge_capital", superhedge_capital(tree, &s.claim, &sup.psi_star));
    out.report(superrep_checks(tree, qe, &s.claim, &sup, &sub, &cfg.tolerances));
    Ok(out)
}

// ---- sweeps ----

fn fit_json(f: &Option<Fit>) -> Value {
    match f {
        Some(f) => json!({"slope": f.slope, "intercept": f.intercept, "stderr": f.stderr}),
        None => Value::Null,
    }
}

fn sweep_table(rep: &SweepReport, columns: &[(&str, fn(&indiff_core::asymptotics::SweepRow) -> f64)]) -> Table {
    let mut table = Table::new(std::iter::once("alpha").chain(columns.iter().map(|(n, _)| *n)));
    for r in &rep.rows {
        let mut row = vec![num(r.alpha)];
        row.extend(columns.iter().map(|(_, f)| num(f(r))));
        table.push(row);
    }
    table
}

fn min_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::INFINITY, f64::min)
}

fn sweep_small(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let tree = &s.market.tree;
    let grid = cfg.alpha_grid.as_ref().map(|g| g.points()).unwrap_or_else(|| power_grid(-8, 0));
    let rep = small_alpha_sweep(tree, &s.claim, &grid, s.market.qe())?;
    let table = sweep_table(
        &rep,
        &[
            ("root_value", |r| r.root_value),
            ("gap", |r| r.gap),
            ("dist_sup", |r| r.dist_sup),
            ("dist_psi_sq", |r| r.dist_psi_sq),
            ("dist_l_sq", |r| r.dist_l_sq),
            ("bmo_psi", |r| r.bmo_psi),
            ("bmo_l", |r| r.bmo_l),
            ("identity_residual", |r| r.identity_residual),
            ("sandwich_margin", |r| r.sandwich_margin),
        ],
    );
    let tol = &cfg.tolerances;
    let mut out = Outcome::new(table);
    describe_setup(&mut out, cfg, tree);
    out.put("grid", grid.clone());
    out.put("slope", json!(rep.sup_fit.map(|f| f.slope)));
    out.put("value_fit", fit_json(&rep.sup_fit));
    out.put("strategy_fit", fit_json(&rep.strategy_fit));
    out.put("bmo_l_fit", fit_json(&rep.bmo_l_fit));
    // Rates are undefined when the distances vanish (attainable claims).
    if let Some(f) = rep.sup_fit {
        out.check(Check::scalar("value rate near 1", tol.rate - (f.slope - 1.0).abs(), 0.0));
    }
    if let Some(f) = rep.strategy_fit {
        out.check(Check::scalar("strategy rate at least 1", f.slope - (1.0 - tol.rate), 0.0));
    }
    out.check(Check::scalar("small-alpha identity", -rep.rows.iter().map(|r| r.identity_residual).fold(0.0, f64::max), tol.equality));
    out.check(Check::scalar("sandwich", min_of(rep.rows.iter().map(|r| r.sandwich_margin)), tol.equality));
    Ok(out)
}

fn sweep_large(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let tree = &s.market.tree;
    let grid = cfg.alpha_grid.as_ref().map(|g| g.points()).unwrap_or_else(|| power_grid(0, 10));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rules: Vec<StoppingRule> = (0..3).map(|_| StoppingRule::random(tree, 0.4, &mut rng)).collect();
    let tests = test_variables(tree, 10, cfg.seed);
    let rep = large_alpha_sweep(tree, &s.claim, &grid, s.market.qe(), &rules, &tests)?;
    let table = sweep_table(
        &rep,
        &[
            ("root_value", |r| r.root_value),
            ("gap", |r| r.gap),
            ("dist_sup", |r| r.dist_sup),
            ("comp_dist", |r| r.comp_dist),
            ("comp_dist_stopped", |r| r.comp_dist_stopped),
            ("strat_dist", |r| r.strat_dist),
            ("weak_dist", |r| r.weak_dist),
            ("bmo_psi", |r| r.bmo_psi),
            ("bmo_l", |r| r.bmo_l),
            ("bmo_l_residual", |r| r.bmo_l_residual),
            ("sandwich_margin", |r| r.sandwich_margin),
        ],
    );
    let tol = &cfg.tolerances;
    let norm = s.claim.sup_norm();
    let psi_bound = std::f64::consts::SQRT_2 * norm.exp();
    let l_bound = 2.0 * (2.0 * norm).exp();
    let psi_ratio = rep.rows.iter().map(|r| r.bmo_psi / psi_bound).fold(0.0, f64::max);
    let l_ratio = rep.rows.iter().map(|r| (1.0 + r.alpha) * r.bmo_l * r.bmo_l / l_bound).fold(0.0, f64::max);
    let steps = |f: fn(&indiff_core::asymptotics::SweepRow) -> f64| min_of(rep.rows.windows(2).map(|w| f(&w[1]) - f(&w[0])));
    let mut out = Outcome::new(table);
    describe_setup(&mut out, cfg, tree);
    out.put("grid", grid.clone());
    out.put("c_star_0", rep.cstar_root);
    let last = rep.rows.last().expect("grid has at least two points");
    out.put("final_gap", last.gap);
    out.put("final_comp_dist", last.comp_dist.max(last.comp_dist_stopped));
    out.put("final_strat_dist", last.strat_dist);
    out.put("final_weak_dist", last.weak_dist);
    out.put("bmo_psi_ratio", psi_ratio);
    out.put("bmo_l_ratio", l_ratio);
    out.put("bmo_l_fit", fit_json(&rep.bmo_l_fit));
    out.check(Check::scalar("C_0 nondecreasing in alpha", steps(|r| r.root_value), tol.equality));
    out.check(Check::scalar("gap nonincreasing in alpha", steps(|r| -r.gap), tol.equality));
    out.check(Check::scalar("sandwich", min_of(rep.rows.iter().map(|r| r.sandwich_margin)), tol.equality));
    out.check(Check::scalar("uniform bmo bound (psi)", 1.0 + tol.bmo_margin - psi_ratio, 0.0));
    out.check(Check::scalar("uniform bmo bound (L)", 1.0 + tol.bmo_margin - l_ratio, 0.0));
    Ok(out)
}

// ---- verify ----

/// Seed of instance `i`; instance 0 keeps the run seed.
fn instance_seed(seed: u64, i: usize) -> u64 {
    if i == 0 {
        seed
    } else {
        seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64)
    }
}

fn verify_instance(cfg: &RunConfig, seed: u64) -> Result<(String, Report), CliError> {
    let tol = &cfg.tolerances;
    let tree = build::tree(cfg, seed)?;
    let label = describe(&tree);
    let mut r = Report::default();
    let d = tree.assets();
    let check = Check::inequality(
        "no arbitrage",
        nonterminal(&tree).map(|id| (id, interior_margin(&tree.increments(id), d, tree.node(id).child_count) - INTERIOR_FLOOR)),
        0.0,
    );
    let free = check.passed();
    r.push(check);
    if !free {
        return Ok((label, r));
    }
    let s = Setup {
        claim: build::claim(cfg, &tree)?,
        market: MarketContext::new(tree)?,
    };
    let tree = &s.market.tree;
    let qe = s.market.qe();
    let alpha = cfg.alpha;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7665_7269_6679);

    r.extend(entropy_checks(&s.market, tol).0);
    let (price_report, data) = price_checks(&s, alpha, &mut rng, tol)?;
    r.extend(price_report);

    let norm = s.claim.sup_norm().max(1.0);
    let other = Claim::new(tree, s.claim.values().iter().map(|b| b + 0.5 * norm * rng.gen_range(-1.0..1.0)).collect())?;
    let mix_time = rng.gen_range(0..=tree.horizon());
    let width = tree.slice(mix_time).len();
    let input = PropertyInputs {
        claim: &s.claim,
        other: &other,
        alpha,
        alpha_prime: alpha * rng.gen_range(1.5..4.0),
        mix_time,
        mix: (0..width).map(|_| rng.gen_range(0.0..=1.0)).collect(),
        shift: (0..width).map(|_| rng.gen_range(-norm..=norm)).collect(),
        beta: rng.gen_range(0.3..3.0),
        gamma_low: rng.gen_range(0.1..0.9),
        gamma_high: rng.gen_range(1.1..3.0),
    };
    r.extend(property_checks(tree, qe, &input, tol)?);
    let strategies: Vec<Strategy> = (0..3).map(|_| random_strategy(tree, &mut rng, 2.0)).collect();
    r.extend(arbitrage_bounds_check(tree, qe, &s.claim, alpha, &strategies, tol)?);
    let tau = StoppingRule::random(tree, 0.4, &mut rng);
    let sigma = StoppingRule::random(tree, 0.4, &mut rng).earlier(tree, &tau);
    let dev = time_consistency_check(tree, qe, &s.claim, alpha, &sigma, &tau)?;
    r.push(Check::scalar("time consistency", -dev, tol.equality));

    let scheme = bsde_scheme(tree, &s.claim, alpha, qe)?;
    let exact = exact_decomposition(tree, &data.primal.surface, qe)?;
    r.extend(bsde_checks(tree, qe, &[&scheme, &exact], tol));
    let lower = Claim::new(tree, s.claim.values().iter().map(|b| b - rng.gen_range(0.0..0.5) * norm).collect())?;
    r.extend(comparison_check(tree, &s.claim, &lower, alpha, qe, tol)?);

    let sup = superreplication(tree, &s.claim)?;
    let sub = subreplication_surface(tree, &s.claim)?;
    r.extend(superrep_checks(tree, qe, &s.claim, &sup, &sub, tol));

    let small = small_alpha_sweep(tree, &s.claim, &power_grid(-6, -4), qe)?;
    r.push(Check::scalar("small-alpha identity", -small.rows.iter().map(|x| x.identity_residual).fold(0.0, f64::max), tol.equality));
    Ok((label, r))
}

fn verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fixed_tree = !matches!(&cfg.tree, TreeSpec::Random(spec) if spec.seed.is_none());
    let count = if fixed_tree { 1 } else { cfg.instances };
    let mut table = Table::new(["instance", "seed", "check", "margin", "tolerance", "worst_node", "passed"]);
    let mut checks = Vec::new();
    let mut instances = Vec::new();
    for i in 0..count {
        let seed = instance_seed(cfg.seed, i);
        let (label, report) = verify_instance(cfg, seed)?;
        for c in report.checks {
            table.push(vec![i.to_string(), seed.to_string(), c.name.clone(), num(c.margin), num(c.tolerance), opt(c.worst_node), c.passed().to_string()]);
            checks.push((Some(i), c));
        }
        instances.push(json!({"instance": i, "seed": seed, "tree": label}));
    }
    // Per-check aggregate in first-seen order.
    let mut names: Vec<String> = Vec::new();
    for (_, c) in &checks {
        if !names.contains(&c.name) {
            names.push(c.name.clone());
        }
    }
    let aggregate: Vec<Value> = names
        .iter()
        .map(|name| {
            let of: Vec<&(Option<usize>, Check)> = checks.iter().filter(|(_, c)| &c.name == name).collect();
            let worst = of.iter().min_by(|a, b| a.1.margin.total_cmp(&b.1.margin)).expect("name came from this list");
            json!({
                "check": name,
                "runs": of.len(),
                "failures": of.iter().filter(|(_, c)| !c.passed()).count(),
                "worst_margin": worst.1.margin,
                "worst_instance": worst.0,
                "worst_node": worst.1.worst_node,
            })
        })
        .collect();
    let mut out = Outcome::new(table);
    out.put("claim", claim_label(cfg));
    out.put("alpha", cfg.alpha);
    out.put("instances", Value::Array(instances));
    out.put("summary", Value::Array(aggregate));
    out.checks = checks;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_margin_of_a_symmetric_trinomial() {
        // Increments −1, 0, 1: the uniform kernel is a martingale kernel and
        // no martingale kernel has a smaller weight above 1/3.
        assert!((interior_margin(&[-1.0, 0.0, 1.0], 1, 3) - 1.0 / 3.0).abs() < 1e-12);
        // One-sided increments admit no martingale kernel at all.
        assert_eq!(interior_margin(&[1.0, 2.0], 1, 2), f64::NEG_INFINITY);
        // Zero on the boundary of the hull: martingale kernels exist but
        // must put zero weight on a child.
        assert!(interior_margin(&[0.0, 1.0], 1, 2).abs() < 1e-12);
    }

    #[test]
    fn instance_seeds_are_distinct() {
        let seeds: Vec<u64> = (0..50).map(|i| instance_seed(7, i)).collect();
        for (i, a) in seeds.iter().enumerate() {
            assert!(seeds[i + 1..].iter().all(|b| a != b));
        }
    }
}
