use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use num_complex::Complex64;
use rmflab_core::batch::{run_indexed, run_sums, run_variance, BatchConfig, BatchOutcome};
use rmflab_core::chaos::{critical_variance, EulerPlan, Height};
use rmflab_core::engine::{splitmix64, SampleOptions};
use rmflab_core::io::{self, RunStatus};
use rmflab_core::oracle::{self, Errs, IdentityReport, Point};
use rmflab_core::special::{self, RhoTable, DEFAULT_STEP, RHO_T_CAP};
use rmflab_core::stats::{self, EmpiricalSample};
use rmflab_core::{Engine, Model, MultiplicativeSpec, RmfError, SieveTables, SumSample};
use serde_json::json;

use crate::config::*;
use crate::CliError;

/// Offset mixed into the seed of draws that must be independent of the main batch.
const UNPAIRED_STREAM: u64 = 0x756e_7061_6972;

pub struct Ctx<'a> {
    pub workers: usize,
    pub dir: PathBuf,
    pub cancel: &'a AtomicBool,
}

impl Ctx<'_> {
    fn cfg(&self, n: usize, seed: u64) -> BatchConfig {
        BatchConfig::new(n, seed, self.workers)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }
}

/// Manifest fields produced by a command.
#[derive(Debug, Default)]
pub struct Record {
    pub master_seed: u64,
    pub x: Option<u64>,
    pub n: Option<u64>,
    pub epsilon: Option<f64>,
    pub model: Option<String>,
    pub spec: Option<MultiplicativeSpec>,
    pub completed: Option<u64>,
    pub cancelled: bool,
    /// Reports that did not pass; a nonzero count fails the run after all files are written.
    pub failures: usize,
}

impl Record {
    fn sampling(seed: u64, x: usize, n: usize, model: Model, spec: &MultiplicativeSpec) -> Self {
        Self {
            master_seed: seed,
            x: Some(x as u64),
            n: Some(n as u64),
            model: Some(model.name().to_string()),
            spec: Some(spec.clone()),
            ..Self::default()
        }
    }

    fn finish<R>(&mut self, out: &BatchOutcome<R>) {
        self.completed = Some(out.rows.len() as u64);
        self.cancelled |= out.cancelled;
    }

    pub fn status(&self) -> RunStatus {
        if self.cancelled {
            RunStatus::Cancelled
        } else {
            RunStatus::Complete
        }
    }
}

pub fn run(cmd: &Command, ctx: &Ctx<'_>) -> Result<Record, CliError> {
    match cmd {
        Command::Simulate(a) => simulate(a, ctx),
        Command::Variance(a) => variance(a, ctx),
        Command::Compare(a) => compare(a, ctx),
        Command::Moments(a) => moments(a, ctx),
        Command::Critical(a) => critical(a, ctx),
        Command::Rho(a) => rho(a, ctx),
        Command::Ceps(a) => ceps(a, ctx),
        Command::Wirsing(a) => wirsing(a, ctx),
        Command::Smooth(a) => smooth(a, ctx),
        Command::Verify(a) => verify(a, ctx),
        Command::Replay(_) => unreachable!("replay is resolved before dispatch"),
    }
}

fn check_x(x: usize) -> Result<(), RmfError> {
    if x < 2 {
        return Err(RmfError::InvalidArgument(format!("x must be >= 2, got {x}")));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<(), RmfError> {
    if n == 0 {
        return Err(RmfError::InvalidArgument("N must be >= 1".into()));
    }
    Ok(())
}

fn write_samples(ctx: &Ctx<'_>, rows: &[SumSample]) -> Result<(), CliError> {
    io::write_samples_csv(ctx.create("samples.csv")?, rows)?;
    Ok(())
}

fn write_reports(ctx: &Ctx<'_>, reports: &[IdentityReport]) -> Result<(), CliError> {
    io::write_reports_jsonl(ctx.create("reports.jsonl")?, reports)?;
    Ok(())
}

/// Real parts of `S`, the quantity compared against real mixtures.
fn real_parts(rows: &[SumSample]) -> Vec<f64> {
    rows.iter().map(|r| r.s.re).collect()
}

fn write_histogram(ctx: &Ctx<'_>, values: Vec<f64>) -> Result<(), CliError> {
    if values.is_empty() {
        return Ok(());
    }
    let sample = EmpiricalSample::new(values)?;
    io::write_histogram_csv(ctx.create("histogram.csv")?, &stats::histogram(&sample))?;
    Ok(())
}

/// Validated inputs for commands that sample `S_x`.
struct Sampling {
    model: Model,
    spec: MultiplicativeSpec,
    tables: SieveTables,
}

impl Sampling {
    fn new(a: &SimArgs) -> Result<Self, CliError> {
        check_x(a.x)?;
        check_n(a.n)?;
        a.grid.grid()?;
        let model = Model::from(a.model);
        let spec = a.family.spec()?;
        let tables = SieveTables::build(a.x)?;
        Ok(Self { model, spec, tables })
    }

    fn engine(&self) -> Result<Engine<'_>, RmfError> {
        Engine::new(self.model, &self.spec, &self.tables)
    }

    fn plan(&self) -> Result<EulerPlan, RmfError> {
        EulerPlan::new(self.model, &self.spec, &self.tables, self.tables.limit(), Height::Infinite)
    }
}

fn simulate(a: &SimulateArgs, ctx: &Ctx<'_>) -> Result<Record, CliError> {
    let s = Sampling::new(&a.sim)?;
    let engine = s.engine()?;
    let opts = SampleOptions { eps: a.eps, u: a.u, critical: false };
    if let Some(eps) = a.eps {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(RmfError::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")).into());
        }
    }
    let plan = if a.with_v { Some(s.plan()?) } else { None };
    let grid = a.sim.grid.grid()?;
    let out = run_sums(&engine, &opts, plan.as_ref().map(|p| (p, grid)), &ctx.cfg(a.sim.n, a.sim.seed), Some(ctx.cancel))?;
    let mut rec = Record::sampling(a.sim.seed, a.sim.x, a.sim.n, s.model, &s.spec);
    rec.epsilon = a.eps;
    rec.finish(&out);
    write_samples(ctx, &out.rows)?;
    write_histogram(ctx, real_parts(&out.rows))?;
    Ok(rec)
}

fn variance(a: &VarianceArgs, ctx: &Ctx<'_>) -> Result<Record, CliError> {
    check_x(a.y)?;
    check_n(a.n)?;
    let grid = a.grid.grid()?;
    let model = Model::from(a.model);
    let spec = a.family.spec()?;
    let tables = SieveTables::build(a.y)?;
    let plan = EulerPlan::new(model, &spec, &tables, a.y, a.height())?;
    let out = run_variance(&plan, &tables, grid, &ctx.cfg(a.n, a.seed), Some(ctx.cancel))?;
    let mut rec = Record::sampling(a.seed, a.y, a.n, model, &spec);
    rec.finish(&out);
    io::write_variance_csv(ctx.create("variance.csv")?, &out.rows)?;
    if !out.rows.is_empty() {
        let draw = rmflab_core::CoefficientDraw::sample(model, &tables, a.seed, 0);
        io::write_grid_csv(ctx.create("grid.csv")?, &plan.grid::<f64>(&draw, grid)?)?;
    }
    Ok(rec)
}

fn ks_report(name: &str, params: serde_json::Value, to_mixture: f64, to_gaussian: f64) -> IdentityReport {
    IdentityReport {
        name: name.to_string(),
        params,
        lhs: to_mixture,
        rhs: to_gaussian,
        errs: Errs { abs: to_gaussian - to_mixture, rel: to_mixture / to_gaussian, tol: 0.0, se: None },
        pass: to_mixture < to_gaussian,
    }
}

fn pairing_reports(prefix: &str, checks: &[stats::PairingCheck]) -> Vec<IdentityReport> {
    checks
        .iter()
        .map(|c| IdentityReport {
            name: format!("{prefix}.{}.{}", c.weight, c.test_fn),
            params: json!({ "weight": c.weight, "test_fn": c.test_fn }),
            lhs: c.lhs,
            rhs: c.rhs,
            errs: Errs { abs: c.diff.abs(), rel: c.diff.abs() / c.rhs.abs(), tol: 4.0 * c.se, se: Some(c.se) },
            pass: c.pass,
        })
        .collect()
}

/// Paired `(S, V)` rows with every `V` present.
fn paired(rows: &[SumSample]) -> (Vec<f64>, Vec<Complex64>) {
    rows.iter().map(|r| (r.v.expect("paired batch fills V"), r.s)).unzip()
}

fn compare(a: &SimArgs, ctx: &Ctx<'_>) -> Result<Record, CliError> {
    let s = Sampling::new(a)?;
    let engine = s.engine()?;
    let plan = s.plan()?;
    let grid = a.grid.grid()?;
    let out = run_sums(&engine, &SampleOptions::default(), Some((&plan, grid)), &ctx.cfg(a.n, a.seed), Some(ctx.cancel))?;
    let mut rec = Record::sampling(a.seed, a.x, a.n, s.model, &s.spec);
    rec.finish(&out);
    write_samples(ctx, &out.rows)?;
    write_histogram(ctx, real_parts(&out.rows))?;
    if out.cancelled || out.rows.len() < 2 {
        return Ok(rec);
    }
    let unpaired = run_variance(&plan, &s.tables, grid, &ctx.cfg(a.n, splitmix64(a.seed ^ UNPAIRED_STREAM)), Some(ctx.cancel))?;
    rec.cancelled |= unpaired.cancelled;
    io::write_variance_csv(ctx.create("variance.csv")?, &unpaired.rows)?;
    if unpaired.cancelled {
        return Ok(rec);
    }

    let s_sample = EmpiricalSample::new(real_parts(&out.rows))?;
    let (v_paired, z) = paired(&out.rows);
    let v_unpaired: Vec<f64> = unpaired.rows.iter().map(|r| r.v).collect();
    let mix_seed = splitmix64(a.seed ^ 0x6d69_78);
    let mixture = stats::mixture_sample(&v_unpaired, s.model, mix_seed)?;
    let mixture_paired = stats::mixture_sample(&v_paired, s.model, mix_seed ^ 1)?;
    let gaussian = stats::variance_matched_gaussian(&s_sample, mix_seed ^ 2)?;
    let ks_g = stats::ks_two_sample(&s_sample, &gaussian);
    let params = json!({ "x": a.x, "N": a.n, "theta": s.spec.theta, "model": s.model.name() });
    let mut reports = vec![
        ks_report("ks.unpaired_mixture_vs_gaussian", params.clone(), stats::ks_two_sample(&s_sample, &mixture), ks_g),
        ks_report("ks.paired_mixture_vs_gaussian", params, stats::ks_two_sample(&s_sample, &mixture_paired), ks_g),
    ];
    reports.extend(pairing_reports("stable_pairing", &stats::stable_pairing_check(&v_paired, &z, s.model, mix_seed ^ 3)?));
    reports.extend(pairing_reports(
        "stable_pairing_shuffled",
        &stats::shuffled_pairing_check(&v_paired, &z, s.model, mix_seed ^ 3)?,
    ));
    write_reports(ctx, &reports)?;
    Ok(rec)
}

/// `E|G|^{2q}` for the model's limiting Gaussian.
pub fn gaussian_abs_moment(model: Model, q: f64) -> Result<f64, RmfError> {
    match model {
        Model::Steinhaus => special::gamma(1.0 + q),
        Model::Rademacher => Ok(2f64.powf(q) / std::f64::consts::PI.sqrt() * special::gamma(0.5 + q)?),
    }
}

/// `E|S|^{2q}` against `c_q E[V^q]` from paired rows.
pub fn moment_reports(model: Model, rows: &[SumSample], qs: &[f64]) -> Result<Vec<IdentityReport>, RmfError> {
    let (v, z) = paired(rows);
    qs.iter()
        .map(|&q| {
            if !(q >= 0.0) {
                return Err(RmfError::InvalidArgument(format!("q must be >= 0, got {q}")));
            }
            let c = gaussian_abs_moment(model, q)?;
            let lhs: Vec<f64> = z.iter().map(|s| s.norm_sqr().powf(q)).collect();
            let rhs: Vec<f64> = v.iter().map(|vi| c * vi.powf(q)).collect();
            let (l, _) = stats::jackknife_mean(&lhs);
            let (r, _) = stats::jackknife_mean(&rhs);
            let (d, se) = stats::paired_difference(&lhs, &rhs)?;
            let tol = (4.0 * se).max(0.05 * r.abs());
            Ok(IdentityReport {
                name: "moment".into(),
                params: json!({ "q": q, "c_q": c, "N": rows.len() }),
                lhs: l,
                rhs: r,
                errs: Errs { abs: d.abs(), rel: d.abs() / r.abs(), tol, se: Some(se) },
                pass: d.abs() <= tol,
            })
        })
        .collect()
}

fn moments(a: &MomentsArgs, ctx: &Ctx<'_>) -> Result<Record, CliError> {
    if let Some(q) = a.q.iter().find(|q| !(**q >= 0.0)) {
        return Err(RmfError::InvalidArgument(format!("q must be >= 0, got {q}")).into());
    }
    let s = Sampling::new(&a.sim)?;
    let engine = s.engine()?;
    let plan = s.plan()?;
    let grid = a.sim.grid.grid()?;
    let out = run_sums(&engine, &SampleOptions::default(), Some((&plan, grid)), &ctx.cfg(a.sim.n, a.sim.seed), Some(ctx.cancel))?;
    let mut rec = Record::sampling(a.sim.seed, a.sim.x, a.sim.n, s.model, &s.spec);
    rec.finish(&out);
    write_samples(ctx, &out.rows)?;
    if !out.cancelled {
        write_reports(ctx, &moment_reports(s.model, &out.rows, &a.q)?)?;
    }
    Ok(rec)
}

fn critical(a: &CriticalArgs, ctx: &Ctx<'_>) -> Result<Record, CliError> {
    check_x(a.x)?;
    check_n(a.n)?;
    let grid = a.grid.grid()?;
    let model = Model::from(a.model);
    let spec = match a.family {
        FamilyArg::Unit if model == Model::Rademacher => MultiplicativeSpec::unit().restricted_to_squarefree(),
        FamilyArg::Unit => MultiplicativeSpec::unit(),
        FamilyArg::Moebius => MultiplicativeSpec::moebius(),
        _ => return Err(RmfError::InvalidArgument("critical needs --family unit or moebius".into()).into()),
    };
    let tables = SieveTables::build(a.x)?;
    let engine = Engine::new(model, &spec, &tables)?;
    let opts = SampleOptions { eps: None, u: false, critical: true };
    let out = run_indexed(&ctx.cfg(a.n, a.seed), Some(ctx.cancel), |i| {
        let draw = engine.draw(a.seed, i);
        let mut row = engine.sample(&draw, &opts)?;
        row.v = Some(critical_variance::<f64>(&draw, &spec, &tables, grid)?);
        Ok(row)
    })?;
    let mut rec = Record::sampling(a.seed, a.x, a.n, model, &spec);
    rec.finish(&out);
    write_samples(ctx, &out.rows)?;
    Ok(rec)
}

fn rho(a: &RhoArgs, ctx: &Ctx<'_>) -> Result<Record, CliError> {
    let table = RhoTable::solve(a.theta, a.tmax, a.step)?;
    io::write_rho_csv(ctx.create("rho.csv")?, &table)?;
    Ok(Record::default())
}

fn ceps(a: &CepsArgs, ctx: &Ctx<'_>) -> Result<Record, CliError> {
    let mut rows = Vec::new();
    for &theta in &a.theta {
        let table = RhoTable::solve(theta, RHO_T_CAP, DEFAULT_STEP)?;
        for &eps in &a.eps {
            rows.push((theta, eps, special::c_epsilon(&table, eps)?));
        }
    }
    io::write_ceps_csv(ctx.create("ceps.csv")?, &rows)?;
    Ok(Record::default())
}

fn family_record(spec: &MultiplicativeSpec, x: Option<f64>) -> Record {
    Record {
        x: x.map(|v| v as u64),
        spec: Some(spec.clone()),
        ..Record::default()
    }
}

fn max_x(xs: &[f64]) -> Result<usize, RmfError> {
    let top = xs.iter().copied().fold(0.0, f64::max);
    if xs.is_empty() || !(top >= 3.0) || top > 1e9 {
        return Err(RmfError::InvalidArgument("x values must lie in [3, 1e9]".into()));
    }
    Ok(top as usize)
}

fn wirsing(a: &WirsingArgs, ctx: &Ctx<'_>) -> Result<Record, CliError> {
    let spec = a.family.spec()?;
    let tables = SieveTables::build(max_x(&a.x)?)?;
    let mut w = ctx.create("wirsing.csv")?;
    use std::io::Write;
    writeln!(w, "x,sieved,predicted,ratio")?;
    for &x in &a.x {
        let sieved = special::sieved_mean(&spec, &tables, x)?;
        let pred = special::wirsing_prediction(&spec, &tables, x, !a.no_correction)?;
        writeln!(w, "{},{},{},{}", io::fmt_f64(x), io::fmt_f64(sieved), io::fmt_f64(pred), io::fmt_f64(sieved / pred))?;
    }
    w.flush()?;
    Ok(family_record(&spec, a.x.iter().copied().reduce(f64::max)))
}

fn smooth(a: &SmoothArgs, ctx: &Ctx<'_>) -> Result<Record, CliError> {
    let spec = a.family.spec()?;
    let tables = SieveTables::build(max_x(&[a.x])?)?;
    let table = RhoTable::solve(spec.theta, RHO_T_CAP, DEFAULT_STEP)?;
    let mut w = ctx.create("smooth.csv")?;
    use std::io::Write;
    writeln!(w, "x,u,y,observed,predicted")?;
    for &u in &a.u {
        if !(u >= 1.0) {
            return Err(RmfError::InvalidArgument(format!("u must be >= 1, got {u}")).into());
        }
        let y = a.x.powf(1.0 / u);
        let (obs, pred) = special::smooth_sum_check(&spec, &tables, a.x, y, &table)?;
        writeln!(w, "{},{},{},{},{}", io::fmt_f64(a.x), io::fmt_f64(u), io::fmt_f64(y), io::fmt_f64(obs), io::fmt_f64(pred))?;
    }
    w.flush()?;
    Ok(family_record(&spec, Some(a.x)))
}

/// The ten `(p, z_1, z_2)` local-factor configurations.
pub const CROSS_CONFIGS: [(u64, f64, f64, f64, f64); 10] = [
    (2, 0.5, 0.5, 0.0, 0.0),
    (2, 0.5, 0.5, 0.3, -0.3),
    (3, 0.5, 0.6, 1.0, 2.0),
    (5, 0.55, 0.5, 0.0, 3.0),
    (7, 0.5, 0.5, -1.5, 0.5),
    (11, 0.6, 0.6, 0.1, 0.2),
    (13, 0.5, 0.7, 5.0, -5.0),
    (17, 0.5, 0.5, 10.0, 0.0),
    (101, 0.5, 0.5, 0.0, 0.01),
    (997, 0.5, 0.55, 2.5, 2.5),
];

/// The weight families used by the `E[U_x^2]` suite.
pub fn ux_families() -> Result<Vec<MultiplicativeSpec>, RmfError> {
    Ok(vec![MultiplicativeSpec::theta_bigomega(0.49)?, MultiplicativeSpec::divisor_z(0.7)?])
}

/// Monte Carlo `E[U_x^2]` against the exact enumeration.
pub fn ux_monte_carlo(
    model: Model,
    spec: &MultiplicativeSpec,
    x: usize,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<IdentityReport, RmfError> {
    let exact = oracle::exact_ux_second_moment(model, spec, x)?;
    let tables = SieveTables::build(x)?;
    let engine = Engine::new(model, spec, &tables)?;
    let opts = SampleOptions { eps: None, u: true, critical: false };
    let rows = run_indexed(&BatchConfig::new(n, seed, workers), None, |i| {
        let u = engine.sample(&engine.draw(seed, i), &opts)?.u.expect("u requested");
        Ok(Complex64::new(u * u, 0.0))
    })?
    .into_complete()?;
    let (mean, se) = mean_se(&rows);
    Ok(IdentityReport::monte_carlo(
        "ux_second_moment.monte_carlo",
        json!({ "model": model.name(), "family": spec.family_name(), "x": x, "N": n }),
        mean,
        Complex64::new(exact, 0.0),
        se,
    ))
}

fn mean_se(z: &[Complex64]) -> (Complex64, f64) {
    let n = z.len() as f64;
    let m = z.iter().sum::<Complex64>() / n;
    let var = z.iter().map(|v| (v - m).norm_sqr()).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn verify(a: &VerifyArgs, ctx: &Ctx<'_>) -> Result<Record, CliError> {
    check_n(a.n)?;
    let all = a.suite == Suite::All;
    let mut reports = Vec::new();
    if all || a.suite == Suite::Param {
        reports.push(oracle::verify_param_bijection(a.mmax)?);
    }
    if all || a.suite == Suite::Ux {
        if a.xmax < 2 || a.xmax > oracle::UX_X_MAX {
            return Err(RmfError::OutOfRange { what: "xmax", value: a.xmax as f64, lo: 2.0, hi: oracle::UX_X_MAX as f64 }.into());
        }
        let mut xs: Vec<usize> = [2, 10, 50].into_iter().filter(|&x| x < a.xmax).collect();
        xs.push(a.xmax);
        for spec in ux_families()? {
            for (model, f) in [(Model::Steinhaus, spec.clone()), (Model::Rademacher, spec.clone().restricted_to_squarefree())] {
                for &x in &xs {
                    let lhs = oracle::exact_ux_second_moment(model, &f, x)?;
                    let rhs = oracle::formula_ux_second_moment(model, &f, x)?;
                    reports.push(IdentityReport::exact(
                        "ux_second_moment.exact_vs_formula",
                        json!({ "model": model.name(), "family": f.family_name(), "x": x }),
                        lhs,
                        rhs,
                        1e-10,
                    ));
                }
            }
        }
        let x_mc = a.xmax.min(50);
        reports.push(ux_monte_carlo(Model::Steinhaus, &ux_families()?[0], x_mc, a.n, a.seed, ctx.workers)?);
    }
    if all || a.suite == Suite::Cross {
        let spec = MultiplicativeSpec::theta_bigomega(0.49)?;
        let sq = spec.clone().restricted_to_squarefree();
        for (i, &(p, s1, s2, t1, t2)) in CROSS_CONFIGS.iter().enumerate() {
            let (z1, z2) = (Point { sigma: s1, s: t1 }, Point { sigma: s2, s: t2 });
            for (model, f) in [(Model::Steinhaus, &spec), (Model::Rademacher, &sq)] {
                reports.extend(oracle::cross_moment_check(model, f, p, z1, z2, a.n, a.seed.wrapping_add(i as u64))?);
            }
        }
    }
    if all || a.suite == Suite::Orthogonality {
        reports.extend(oracle::orthogonality_table(20, a.n, a.seed)?);
        reports.extend(oracle::fourfold_check(&[[2, 3, 6, 1], [2, 3, 5, 30], [6, 10, 15, 1], [4, 1, 1, 1]], a.n, a.seed)?);
    }
    write_reports(ctx, &reports)?;
    Ok(Record {
        master_seed: a.seed,
        n: Some(a.n as u64),
        failures: reports.iter().filter(|r| !r.pass).count(),
        ..Record::default()
    })
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)?;
    Ok(())
}
