//! Command dispatch, JSON reports and CSV tables for the `parisi` binary.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cascade::{mc_free_energy, overlap_samples, psi_grid, psi_mc, CascadeSpec};
use crate::config::{Command, RunConfig};
use crate::cone::XiModel;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::path::{discretize, merged_grid, uparrow_certificate, MatrixPath, RampStepPath, StepPath};
use crate::suite::{run_suite, SuiteOptions};
use crate::transport::{
    concavity_probe, kantorovich_dual_gap, totally_ordered_support, transport_cost_lp, transport_cost_monotone, w2,
};
use crate::variational::{
    critical_point_solve, frechet_probe, gateaux_fd, hopflax_solve, parisi_solve, pde_residual, random_direction,
    uniqueness_probe, Assertion, Instance, Problem,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "parisi", version, about = "Parisi, Hopf–Lax and cascade computations for convex vector spin glasses")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for reports/ and tables/.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Suite only: run criteria whose name or group contains this string.
    #[arg(long)]
    pub filter: Option<String>,
}

/// A CSV table written next to the report.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.csv", self.name));
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Config(e.to_string()))?;
        w.write_record(&self.header).map_err(|e| Error::Config(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Error::Config(e.to_string()))?;
        }
        w.flush()?;
        Ok(path)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub name: String,
    pub assertion: Assertion,
}

/// What a command produced before it is wrapped into a report.
#[derive(Debug, Default)]
pub struct Outcome {
    pub result: Value,
    pub assertions: Vec<Verdict>,
    pub tables: Vec<Table>,
}

impl Outcome {
    fn assert(&mut self, name: impl Into<String>, a: Assertion) {
        self.assertions.push(Verdict { name: name.into(), assertion: a });
    }

    fn check(&mut self, name: impl Into<String>, ok: bool, detail: impl FnOnce() -> String) {
        let a = if ok { Assertion::Passed } else { Assertion::Failed(detail()) };
        self.assert(name, a);
    }

    pub fn failed(&self) -> bool {
        self.assertions.iter().any(|v| v.assertion.is_failure())
    }
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'static str,
    version: &'static str,
    config_hash: String,
    seed: Option<u64>,
    config: &'a RunConfig,
    status: &'static str,
    assertions: &'a [Verdict],
    result: &'a Value,
}

/// Serialized report; identical inputs give identical bytes.
pub fn render_report(command: Command, cfg: &RunConfig, outcome: &Outcome) -> String {
    let mut embedded = cfg.clone();
    embedded.out = None;
    let report = Report {
        command: command.name(),
        version: VERSION,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        config: &embedded,
        status: if outcome.failed() { "assertion_failed" } else { "ok" },
        assertions: &outcome.assertions,
        result: &outcome.result,
    };
    let mut s = serde_json::to_string_pretty(&report).expect("reports serialize");
    s.push('\n');
    s
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn f(x: f64) -> String {
    format!("{x}")
}

/// Monomial sums are certified before use; catalogue kinds pass through.
fn run_model(cfg: &RunConfig) -> Result<XiModel> {
    let mut model = cfg.model()?;
    if !model.is_admissible() {
        model.certify(cfg.certify.n_samples, cfg.seed.unwrap_or(0));
        if !model.is_admissible() {
            return Err(Error::Uncertified);
        }
    }
    Ok(model)
}

/// `q` as a step path: exact when it has no linear part, cell means otherwise.
fn step_path(cfg: &RunConfig, q: &RampStepPath) -> Result<(StepPath, bool)> {
    if q.slope() == 0.0 {
        Ok((q.step().clone(), false))
    } else {
        Ok((discretize(q, &merged_grid(cfg.psi_cells, &q.knots()))?, true))
    }
}

fn instance(cfg: &RunConfig, t: f64) -> Result<Instance> {
    Ok(Instance {
        t,
        q: cfg.path()?,
        model: run_model(cfg)?,
        law: cfg.law()?,
        cfg: cfg.variational.clone(),
    })
}

fn checked_measure(m: &DiscreteMeasure<f64>) -> Result<DiscreteMeasure<f64>> {
    DiscreteMeasure::new(m.atoms().to_vec(), m.weights().to_vec())
}

/// Runs one command on a prepared configuration.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    match command {
        Command::EvalPsi => {
            let q = cfg.path()?;
            let law = cfg.law()?;
            let (step, averaged) = step_path(cfg, &q)?;
            let psi = psi_grid(&step, &law, &cfg.grid)?;
            let mut result = json!({ "psi": psi, "averaged": averaged, "levels": step.levels() });
            if let Some(seed) = cfg.seed {
                let spec = CascadeSpec::for_path(&step, cfg.mc.m, seed)?;
                let mc = psi_mc(&step, &law, &spec, cfg.mc.n_samples)?;
                result["mc"] = to_value(&mc);
            }
            out.result = result;
        }
        Command::Parisi | Command::HopfLax => {
            let q = cfg.path()?;
            let model = run_model(cfg)?;
            let law = cfg.law()?;
            let mut runs = Vec::new();
            let mut table = Table::new(
                if command == Command::Parisi { "parisi_starts" } else { "hopf_lax_starts" },
                &["t", "index", "label", "value", "iterations", "converged"],
            );
            for &t in &cfg.t {
                let pr = Problem::new(t, &q, &model, &law, &cfg.variational)?;
                let r = if command == Command::Parisi { parisi_solve(&pr)? } else { hopflax_solve(&pr)? };
                out.check(format!("t={t}: some start converged"), !r.flagged, || "no start converged".into());
                for s in &r.starts {
                    table.push(vec![f(t), s.index.to_string(), s.label.clone(), f(s.value), s.iterations.to_string(), s.converged.to_string()]);
                }
                runs.push(json!({ "t": t, "report": to_value(&r) }));
            }
            out.tables.push(table);
            out.result = json!({ "runs": runs });
        }
        Command::Critpoint => {
            let q = cfg.path()?;
            let model = run_model(cfg)?;
            let law = cfg.law()?;
            let mut runs = Vec::new();
            let mut table = Table::new("critpoint_history", &["t", "iteration", "gradient_residual"]);
            for &t in &cfg.t {
                let pr = Problem::new(t, &q, &model, &law, &cfg.variational)?;
                let cp = critical_point_solve(&pr, &cfg.critical)?;
                let fp = parisi_solve(&pr)?.value;
                let gap = (cp.j_value - fp).abs();
                let tol = cfg.critical.tol;
                out.check(
                    format!("t={t}: fixed-point residuals"),
                    cp.converged && cp.relation_residual <= tol && cp.gradient_residual <= tol,
                    || format!("residuals {:e}, {:e} after {} iterations", cp.relation_residual, cp.gradient_residual, cp.iterations),
                );
                out.check(format!("t={t}: J equals the Parisi value"), gap <= 1e-3 * (1.0 + fp.abs()), || {
                    format!("|J − f̂| = {gap:e}")
                });
                for (i, r) in cp.history.iter().enumerate() {
                    table.push(vec![f(t), i.to_string(), f(*r)]);
                }
                runs.push(json!({ "t": t, "critical_point": to_value(&cp), "parisi_value": fp, "j_gap": gap }));
            }
            out.tables.push(table);
            out.result = json!({ "runs": runs });
        }
        Command::Uniqueness | Command::Gateaux | Command::PdeResidual | Command::Frechet => {
            let mut runs = Vec::new();
            let mut table = Table::new(
                match command {
                    Command::Uniqueness => "uniqueness_starts",
                    Command::Gateaux => "gateaux_quotients",
                    Command::PdeResidual => "pde_residual",
                    _ => "frechet_remainders",
                },
                match command {
                    Command::Uniqueness => &["t", "index", "label", "value", "converged"][..],
                    Command::Gateaux => &["t", "direction", "eps", "quotient"][..],
                    Command::PdeResidual => &["t", "dt", "dt_f", "xi_integral", "residual"][..],
                    _ => &["t", "direction", "level", "displacement", "remainder", "joint_remainder"][..],
                },
            );
            for &t in &cfg.t {
                let inst = instance(cfg, t)?;
                let base = uniqueness_probe(&inst)?;
                let run = match command {
                    Command::Uniqueness => {
                        out.assert(format!("t={t}: uniqueness"), base.assertion.clone());
                        for s in &base.solve.starts {
                            table.push(vec![f(t), s.index.to_string(), s.label.clone(), f(s.value), s.converged.to_string()]);
                        }
                        to_value(&base)
                    }
                    Command::Gateaux => {
                        let d = inst.model.dim();
                        let res = match cfg.probe.direction_resolution {
                            0 => cfg.variational.k * cfg.variational.refine,
                            n => n,
                        };
                        let mut reports = Vec::new();
                        for i in 0..cfg.probe.n_directions {
                            let kappa = random_direction(inst.cfg.seed, i as u64, d, res, false)?;
                            let g = gateaux_fd(&inst, &base, &kappa, &cfg.probe.eps)?;
                            out.assert(format!("t={t}: direction {i}"), g.assertion.clone());
                            for (e, qv) in g.eps.iter().zip(&g.quotients) {
                                table.push(vec![f(t), i.to_string(), f(*e), f(*qv)]);
                            }
                            reports.push(g);
                        }
                        json!({ "p_star": to_value(&base.p_star), "value": base.value, "directions": to_value(&reports) })
                    }
                    Command::PdeResidual => {
                        let r = pde_residual(&inst, &base, cfg.probe.dt)?;
                        out.assert(format!("t={t}: Hamilton–Jacobi residual"), r.assertion.clone());
                        table.push(vec![f(t), f(r.dt), f(r.dt_f), f(r.xi_integral), f(r.residual)]);
                        to_value(&r)
                    }
                    _ => {
                        let r = frechet_probe(&inst, &base, cfg.probe.n_directions, cfg.probe.levels)?;
                        out.assert(format!("t={t}: remainders"), r.assertion.clone());
                        for row in &r.rows {
                            table.push(vec![
                                f(t),
                                row.direction.to_string(),
                                row.level.to_string(),
                                f(row.displacement),
                                f(row.remainder),
                                f(row.joint_remainder),
                            ]);
                        }
                        to_value(&r)
                    }
                };
                runs.push(json!({ "t": t, "probe": run }));
            }
            out.tables.push(table);
            out.result = json!({ "runs": runs });
        }
        Command::McFreeEnergy | Command::OverlapHist => {
            let q = cfg.path()?;
            let model = run_model(cfg)?;
            let law = cfg.law()?;
            let (step, _) = step_path(cfg, &q)?;
            let seed = cfg.seed.expect("checked by prepare");
            let spec = CascadeSpec::for_path(&step, cfg.mc.m, seed)?;
            let mut rows = Vec::new();
            let mut table = if command == Command::McFreeEnergy {
                Table::new("free_energy", &["t", "n", "mean", "stderr"])
            } else {
                Table::new("overlap_histogram", &["t", "n", "entry", "bin_low", "bin_high", "count"])
            };
            for &t in &cfg.t {
                for &n in &cfg.n_spins {
                    if command == Command::McFreeEnergy {
                        let e = mc_free_energy(n, t, &step, &model, &law, &spec, cfg.mc.n_samples)?;
                        table.push(vec![f(t), n.to_string(), f(e.mean), f(e.stderr)]);
                        rows.push(json!({ "t": t, "n": n, "estimate": to_value(&e) }));
                    } else {
                        let draws = overlap_samples(n, t, &step, &model, &law, &spec, cfg.mc.n_samples)?;
                        let bins = cfg.mc.bins.max(1);
                        let entries = draws.first().map(|d| d.len()).unwrap_or(0);
                        let mut mean = vec![0.0; entries];
                        for (e, m) in mean.iter_mut().enumerate() {
                            let mut counts = vec![0usize; bins];
                            for d in &draws {
                                let x = d[e];
                                *m += x / draws.len() as f64;
                                let b = (((x + 1.0) / 2.0 * bins as f64).floor() as isize).clamp(0, bins as isize - 1) as usize;
                                counts[b] += 1;
                            }
                            for (b, c) in counts.iter().enumerate() {
                                let lo = -1.0 + 2.0 * b as f64 / bins as f64;
                                let hi = -1.0 + 2.0 * (b + 1) as f64 / bins as f64;
                                table.push(vec![f(t), n.to_string(), e.to_string(), f(lo), f(hi), c.to_string()]);
                            }
                        }
                        rows.push(json!({ "t": t, "n": n, "draws": draws.len(), "mean_overlap": mean }));
                    }
                }
            }
            out.tables.push(table);
            out.result = json!({ "runs": rows });
        }
        Command::Transport => {
            let model = run_model(cfg)?;
            let tc = cfg.transport.as_ref().expect("checked by prepare");
            let mu = checked_measure(&tc.mu)?;
            let nu = checked_measure(&tc.nu)?;
            let law = cfg.law.clone().map(|_| cfg.law()).transpose()?.unwrap_or(crate::cascade::SpinLaw::ising());
            let distance = w2(&mu, &nu)?;
            let concavity = concavity_probe(&mu, &nu, &tc.lambdas, &law, &cfg.grid)?;
            out.check("concavity", concavity.holds, || format!("min gap {:e}", concavity.min_gap));
            let mut runs = Vec::new();
            let mut conc = Table::new("concavity", &["lambda", "mixture", "chord", "gap"]);
            for r in &concavity.rows {
                conc.push(vec![f(r.lambda), f(r.mixture), f(r.chord), f(r.gap)]);
            }
            for &t in &cfg.t {
                let mono = transport_cost_monotone(t, &mu, &nu, &model)?;
                let plan = transport_cost_lp(t, &mu, &nu, &model)?;
                let dual = kantorovich_dual_gap(t, &mu, &nu, &model)?;
                out.check(format!("t={t}: monotone coupling is optimal"), (mono - plan.cost).abs() <= 1e-8, || {
                    format!("monotone {mono} vs LP {}", plan.cost)
                });
                out.check(format!("t={t}: dual gap"), dual.gap.abs() <= 1e-8, || format!("gap {:e}", dual.gap));
                let mut coupling = Table::new(&format!("coupling_t{t}"), &["row", "column", "mass"]);
                for (i, row) in plan.coupling.rows().iter().enumerate() {
                    for (j, m) in row.iter().enumerate() {
                        coupling.push(vec![i.to_string(), j.to_string(), f(*m)]);
                    }
                }
                out.tables.push(coupling);
                runs.push(json!({ "t": t, "monotone_cost": mono, "lp": to_value(&plan), "dual": to_value(&dual) }));
            }
            out.tables.push(conc);
            let support = match &tc.support {
                Some(s) => Some(to_value(&totally_ordered_support(&DiscreteMeasure::new(s.atoms().to_vec(), s.weights().to_vec())?))),
                None => None,
            };
            out.result = json!({ "w2": distance, "runs": runs, "concavity": to_value(&concavity), "support_order": support });
        }
        Command::CertifyModel => {
            let mut model = cfg.model()?;
            let report = model.certify(cfg.certify.n_samples, cfg.seed.expect("checked by prepare")).clone();
            out.check("model certified", report.passed(), || "a sampled check failed".into());
            out.result = json!({ "certification": to_value(&report), "admissible": model.is_admissible() });
        }
        Command::CertifyPath => {
            let q = cfg.path()?;
            let cert = uparrow_certificate(&q);
            out.check("path certified", cert.constant().is_some(), || "no ellipticity constant found".into());
            out.result = json!({ "certificate": to_value(&cert) });
        }
        Command::Suite => return Err(Error::Config("the suite is run through `run_suite`".into())),
    }
    Ok(out)
}

/// Writes `reports/<command>.json` and `tables/*.csv` under `out`.
pub fn write_outputs(out_dir: &Path, command: Command, cfg: &RunConfig, outcome: &Outcome) -> Result<PathBuf> {
    let reports = out_dir.join("reports");
    std::fs::create_dir_all(&reports)?;
    let path = reports.join(format!("{}.json", command.name()));
    std::fs::write(&path, render_report(command, cfg, outcome))?;
    for t in &outcome.tables {
        t.write(&out_dir.join("tables"))?;
    }
    Ok(path)
}

fn run_cli(cli: Cli) -> Result<i32> {
    if let Some(k) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None if cli.command == Command::Suite => RunConfig::default(),
        None => return Err(Error::Config("--config is required".into())),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    let out_dir = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    if cli.command == Command::Suite {
        let opts = SuiteOptions {
            seed: cfg.seed.unwrap_or(SuiteOptions::default().seed),
            filter: cli.filter.clone(),
            out: Some(out_dir),
        };
        let summary = run_suite(&opts, &mut std::io::stdout())?;
        return Ok(if summary.all_passed() { 0 } else { 2 });
    }
    if cli.filter.is_some() {
        return Err(Error::Config("--filter applies to `suite` only".into()));
    }
    cfg.prepare(cli.command)?;
    let outcome = execute(cli.command, &cfg)?;
    let path = write_outputs(&out_dir, cli.command, &cfg, &outcome)?;
    println!("{}", path.display());
    for v in &outcome.assertions {
        println!("{}: {}", v.name, v.assertion);
    }
    Ok(if outcome.failed() { 2 } else { 0 })
}

/// Entry point of the binary: exit 0 on success, 2 on a failed assertion, 1 on error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_path_psi_report() {
        let mut cfg = RunConfig::from_json(r#"{"q": {"type": "step", "values": [[[0.0]]]}}"#).unwrap();
        cfg.prepare(Command::EvalPsi).unwrap();
        let o = execute(Command::EvalPsi, &cfg).unwrap();
        assert_eq!(o.result["psi"], json!(0.0));
        let a = render_report(Command::EvalPsi, &cfg, &o);
        let b = render_report(Command::EvalPsi, &cfg, &o);
        assert_eq!(a, b);
        assert!(a.contains(&cfg.hash()));
    }

    #[test]
    fn certify_path_flags_the_zero_path() {
        let mut cfg = RunConfig::from_json(r#"{"q": {"type": "step", "values": [[[0.0]]]}}"#).unwrap();
        cfg.prepare(Command::CertifyPath).unwrap();
        assert!(execute(Command::CertifyPath, &cfg).unwrap().failed());
        let mut ramp = RunConfig::from_json(r#"{"q": {"type": "ramp_step", "values": [[[0.0]]], "ramp_c": 0.3}}"#).unwrap();
        ramp.prepare(Command::CertifyPath).unwrap();
        assert!(!execute(Command::CertifyPath, &ramp).unwrap().failed());
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main_with_args(["parisi", "no-such-command"]), 1);
        assert_eq!(main_with_args(["parisi", "parisi"]), 1);
        assert_eq!(main_with_args(["parisi", "--help"]), 0);
    }
}
