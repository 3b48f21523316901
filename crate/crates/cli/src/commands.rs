//! The six CLI commands: solving, simulating, sweeping and reproducing
//! the reference experiments.

use anyhow::{bail, Context, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use vaoi_core::cmdp::{self, CmdpSolution, MdpConfig};
use vaoi_core::cosrp::{self, CoSrpPolicy, FractionalProgram, Scheme};
use vaoi_core::model::{ChannelModel, RateFunction, StreamConfig};
use vaoi_core::optimizer::{self, CosrpSolution, SolverConfig};
use vaoi_core::sim::{self, CoSrpAdapter};

use crate::config::ExperimentConfig;
use crate::output::{f, Csv, SvgChart};

/// Worker count for sweep dispatch: `VAOI_WORKERS` or the machine's
/// available parallelism.
fn worker_count(points: usize) -> usize {
    let configured = std::env::var("VAOI_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w >= 1);
    let fallback = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    configured.unwrap_or(fallback).min(points.max(1))
}

/// Runs `job` for every index on a small worker pool; results come back
/// ordered by index.
fn run_indexed<T, F>(points: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let workers = worker_count(points);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..points).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= points {
                    break;
                }
                let out = job(k);
                slots.lock().unwrap()[k] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("worker filled every slot"))
        .collect()
}

fn solve_instance(
    model: &ChannelModel,
    streams: &[StreamConfig],
    pbar: f64,
    scheme: Scheme,
    solver: &SolverConfig,
) -> Result<CosrpSolution> {
    let program = FractionalProgram::build(model, streams, pbar, scheme, RateFunction::Log1p)?;
    Ok(optimizer::solve(&program, solver)?)
}

pub fn cmd_solve_cosrp(config: &ExperimentConfig, out: &Path, scheme_flag: Option<Scheme>) -> Result<()> {
    let scheme = config.scheme(scheme_flag)?;
    let model = config.channel_model()?;
    let streams = config.streams()?;
    let mut csv = Csv::new(
        &config.comment_line(),
        "scheme,pbar,objective,power,theta,iters",
    );
    let pbar = config.pbar.unwrap_or(0.0);
    if pbar <= 0.0 {
        // nothing can ever be sent; the age sentinel is infinite
        eprintln!("warning: zero power budget, objective is unbounded");
        let never = CoSrpPolicy::constant(scheme, model.n_users(), model.n_joint_states(), 0)?;
        let policy_path = out.join(format!("policy_{}.txt", scheme.as_str()));
        std::fs::create_dir_all(out)?;
        let mut w = BufWriter::new(File::create(&policy_path)?);
        cosrp::write_policy(&mut w, &never, &model)?;
        writeln!(w, "objective=inf")?;
        writeln!(w, "power=0")?;
        w.flush()?;
        csv.row(&[
            scheme.as_str().into(),
            f(0.0),
            "inf".into(),
            f(0.0),
            "inf".into(),
            "0".into(),
        ]);
        csv.write_to(&out.join("solve_cosrp.csv"))?;
        println!("{}", csv.as_str().trim_end());
        return Ok(());
    }
    let solver = config.solver_config()?;
    let solution = solve_instance(&model, &streams, pbar, scheme, &solver)?;
    std::fs::create_dir_all(out)?;
    let policy_path = out.join(format!("policy_{}.txt", scheme.as_str()));
    let mut w = BufWriter::new(File::create(&policy_path)?);
    optimizer::write_solution(&mut w, &solution, &model)?;
    w.flush()?;
    csv.row(&[
        scheme.as_str().into(),
        f(pbar),
        f(solution.objective),
        f(solution.achieved_power),
        f(solution.theta),
        format!("{}", solution.diagnostics.newton_iters_total),
    ]);
    csv.write_to(&out.join("solve_cosrp.csv"))?;
    println!(
        "{} objective {:.6} power {:.6} theta {:.6e} -> {}",
        scheme.as_str(),
        solution.objective,
        solution.achieved_power,
        solution.theta,
        policy_path.display()
    );
    Ok(())
}

pub fn cmd_solve_cmdp(config: &ExperimentConfig, out: &Path, scheme_flag: Option<Scheme>) -> Result<()> {
    let scheme = config.scheme(scheme_flag)?;
    let model = config.channel_model()?;
    let streams = config.streams()?;
    let pbar = config.pbar()?;
    let mdp = config.mdp_config();
    let solution = cmdp::bisect_theta(pbar, &mdp, &model, &streams, RateFunction::Log1p, scheme)?;
    let report = cmdp::check_threshold(
        solution.theta,
        &solution.value,
        &model,
        &streams,
        RateFunction::Log1p,
        scheme,
        &mdp,
    )?;
    std::fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join("cmdp_policy.txt"))?);
    cmdp::write_policy_dump(&mut w, &solution.policy, &model, &mdp)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(out.join("cmdp_values.txt"))?);
    cmdp::write_value_dump(&mut w, &solution.value, &model)?;
    w.flush()?;
    let tail = solution.tail_mass.iter().cloned().fold(0.0f64, f64::max);
    let mut csv = Csv::new(
        &config.comment_line(),
        "pbar,gamma,delta_max,theta,vaoi,power,tail_mass,threshold_violations",
    );
    csv.row(&[
        f(pbar),
        f(mdp.gamma),
        format!("{}", mdp.delta_max),
        f(solution.theta),
        f(solution.weighted_vaoi),
        f(solution.average_power),
        f(tail),
        format!("{}", report.total()),
    ]);
    csv.write_to(&out.join("solve_cmdp.csv"))?;
    if tail > 1e-6 {
        eprintln!("warning: stationary mass {tail:.3e} at the age cap; increase mdp.delta_max");
    }
    println!(
        "cmdp {} vaoi {:.6} power {:.6} theta {:.6e} (budget-exact {:.6})",
        scheme.as_str(),
        solution.weighted_vaoi,
        solution.average_power,
        solution.theta,
        solution.budget_objective()
    );
    Ok(())
}

pub fn cmd_simulate(
    config: &ExperimentConfig,
    policy_path: &Path,
    out: &Path,
    seed_flag: Option<u64>,
) -> Result<()> {
    let model = config.channel_model()?;
    let streams = config.streams()?;
    let reader = BufReader::new(
        File::open(policy_path).with_context(|| format!("opening policy {}", policy_path.display()))?,
    );
    let loaded = cosrp::read_policy(reader)?;
    let adapter = CoSrpAdapter::new(&loaded.policy, &model, &streams, RateFunction::Log1p)?;
    let sim_cfg = config.sim_config(seed_flag)?;
    let metrics = sim::replicate(&model, &streams, RateFunction::Log1p, &adapter, &sim_cfg)?;
    let n = model.n_users();
    let mut header: Vec<String> = (1..=n).map(|i| format!("vaoi_user_{i}")).collect();
    header.extend([
        "vaoi_weighted".into(),
        "power".into(),
        "se_vaoi".into(),
        "se_power".into(),
        "slots".into(),
        "reps".into(),
        "seed".into(),
    ]);
    let mut csv = Csv::new(&config.comment_line(), &header.join(","));
    let mut row: Vec<String> = metrics.per_user_vaoi.iter().map(|&v| f(v)).collect();
    row.extend([
        f(metrics.weighted_vaoi),
        f(metrics.avg_power),
        f(metrics.se_weighted),
        f(metrics.se_power),
        format!("{}", metrics.slots_counted),
        format!("{}", metrics.replications),
        format!("{}", metrics.seed),
    ]);
    csv.row(&row);
    std::fs::create_dir_all(out)?;
    csv.write_to(&out.join("simulate.csv"))?;

    let trace_rows = config.trace_rows();
    if trace_rows > 0 {
        let (_, rows) = sim::simulate_trace(
            &model,
            &streams,
            RateFunction::Log1p,
            &adapter,
            &sim_cfg,
            trace_rows,
        )?;
        let delta_cols: Vec<String> = (1..=n).map(|i| format!("delta_{i}")).collect();
        let mut trace_csv = Csv::new(
            &config.comment_line(),
            &format!("t,{},action_mask,power", delta_cols.join(",")),
        );
        for r in rows {
            let mut fields = vec![format!("{}", r.t)];
            fields.extend(r.delta.iter().map(|d| format!("{d}")));
            fields.push(format!("{}", r.action_mask));
            fields.push(f(r.power));
            trace_csv.row(&fields);
        }
        trace_csv.write_to(&out.join("trace.csv"))?;
    }
    println!(
        "simulated {} slots x {} reps: weighted vaoi {:.6} (se {:.2e}), power {:.6} (se {:.2e})",
        metrics.slots_counted,
        metrics.replications,
        metrics.weighted_vaoi,
        metrics.se_weighted,
        metrics.avg_power,
        metrics.se_power
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Pbar,
    Lambda,
    #[value(name = "weight_1")]
    Weight1,
}

pub fn cmd_sweep(
    config: &ExperimentConfig,
    out: &Path,
    scheme_flag: Option<Scheme>,
    param: SweepParam,
    from: f64,
    to: f64,
    steps: usize,
) -> Result<()> {
    if steps < 2 {
        bail!("steps must be >= 2");
    }
    if !(from < to) {
        bail!("from must be < to");
    }
    let scheme = config.scheme(scheme_flag)?;
    let model = config.channel_model()?;
    let base_streams = config.streams()?;
    if param == SweepParam::Weight1 && base_streams.len() != 2 {
        bail!("weight_1 sweeps require exactly two streams");
    }
    let solver = config.solver_config()?;
    let grid: Vec<f64> = (0..steps)
        .map(|k| from + (to - from) * k as f64 / (steps - 1) as f64)
        .collect();
    let results = run_indexed(grid.len(), |k| {
        let value = grid[k];
        let mut streams = base_streams.clone();
        let mut pbar = config.pbar()?;
        match param {
            SweepParam::Pbar => pbar = value,
            SweepParam::Lambda => {
                for s in &mut streams {
                    *s = StreamConfig::new(value, s.r0, s.weight)?;
                }
            }
            SweepParam::Weight1 => {
                streams[0] = StreamConfig::new(streams[0].lambda, streams[0].r0, value)?;
                streams[1] = StreamConfig::new(streams[1].lambda, streams[1].r0, 1.0 - value)?;
            }
        }
        solve_instance(&model, &streams, pbar, scheme, &solver)
    })?;
    let name = match param {
        SweepParam::Pbar => "pbar",
        SweepParam::Lambda => "lambda",
        SweepParam::Weight1 => "weight_1",
    };
    let mut csv = Csv::new(
        &config.comment_line(),
        &format!("index,{name},objective,power,theta,budget_objective"),
    );
    let mut series = Vec::new();
    for (k, sol) in results.iter().enumerate() {
        csv.row(&[
            format!("{k}"),
            f(grid[k]),
            f(sol.objective),
            f(sol.achieved_power),
            f(sol.theta),
            f(sol.budget_objective()),
        ]);
        series.push((grid[k], sol.budget_objective()));
    }
    std::fs::create_dir_all(out)?;
    csv.write_to(&out.join(format!("sweep_{name}.csv")))?;
    SvgChart {
        title: format!("{} objective vs {name}", scheme.as_str()),
        x_label: name.into(),
        y_label: "weighted average age".into(),
        series: vec![(scheme.as_str().into(), series)],
    }
    .write_to(&out.join(format!("sweep_{name}.svg")))?;
    println!("swept {name} over {} points -> {}", grid.len(), out.display());
    Ok(())
}

pub fn cmd_bound(config: &ExperimentConfig, out: &Path, scheme_flag: Option<Scheme>) -> Result<()> {
    let scheme = config.scheme(scheme_flag)?;
    let model = config.channel_model()?;
    let streams = config.streams()?;
    let pbar = config.pbar()?;
    let solver = config.solver_config()?;
    let solution = solve_instance(&model, &streams, pbar, scheme, &solver)?;
    let lb = optimizer::lower_bound(solution.objective);
    let mut csv = Csv::new(&config.comment_line(), "scheme,pbar,v_srp,lower_bound");
    csv.row(&[scheme.as_str().into(), f(pbar), f(solution.objective), f(lb)]);
    std::fs::create_dir_all(out)?;
    csv.write_to(&out.join("bound.csv"))?;
    println!("v_srp {:.6}, lower bound {:.6}", solution.objective, lb);
    Ok(())
}

// ---------------------------------------------------------------------------
// reproduce targets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReproduceTarget {
    Table1,
    Fig1,
    #[value(name = "fig_simul_prob")]
    FigSimulProb,
    #[value(name = "fig_lambda")]
    FigLambda,
    #[value(name = "fig_region")]
    FigRegion,
}

pub fn cmd_reproduce(target: ReproduceTarget, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    match target {
        ReproduceTarget::Table1 => reproduce_table1(out),
        ReproduceTarget::Fig1 => reproduce_fig1(out),
        ReproduceTarget::FigSimulProb => reproduce_fig_simul_prob(out),
        ReproduceTarget::FigLambda => reproduce_fig_lambda(out),
        ReproduceTarget::FigRegion => reproduce_fig_region(out),
    }
}

struct Table1Row {
    h_max: f64,
    p_bad: f64,
    r0: f64,
    pbar: f64,
    expected_tdma: f64,
    expected_noma: f64,
    tol_tdma: f64,
    tol_noma: f64,
}

/// Reference comparison rows: two symmetric users, arrival probability
/// 0.9, equal weights. The TDMA entries at slack budgets saturate at the
/// analytic value `λ`, which is what rows 2, 3 and 5 are checked against
/// (the last one saturates even though the published table shows the
/// binding-budget value of the row above it; the cheapest policy with
/// both delivery probabilities at one half costs about 52 < 100).
fn table1_rows() -> Vec<Table1Row> {
    vec![
        Table1Row { h_max: 1.0, p_bad: 0.9, r0: 2.0, pbar: 45.0, expected_tdma: 1.0774, expected_noma: 1.0668, tol_tdma: 0.01, tol_noma: 0.01 },
        Table1Row { h_max: 1.0, p_bad: 0.5, r0: 2.0, pbar: 45.0, expected_tdma: 0.9, expected_noma: 0.3850, tol_tdma: 0.005, tol_noma: 0.01 },
        Table1Row { h_max: 2.0, p_bad: 0.5, r0: 2.0, pbar: 45.0, expected_tdma: 0.9, expected_noma: 0.2681, tol_tdma: 0.005, tol_noma: 0.01 },
        Table1Row { h_max: 2.0, p_bad: 0.5, r0: 3.0, pbar: 45.0, expected_tdma: 0.9751, expected_noma: 0.9751, tol_tdma: 0.01, tol_noma: 0.01 },
        Table1Row { h_max: 2.0, p_bad: 0.5, r0: 3.0, pbar: 100.0, expected_tdma: 0.9, expected_noma: 0.5265, tol_tdma: 0.005, tol_noma: 0.01 },
    ]
}

fn reproduce_table1(out: &Path) -> Result<()> {
    let rows = table1_rows();
    let solver = SolverConfig::default();
    let results = run_indexed(rows.len(), |k| {
        let row = &rows[k];
        let model = ChannelModel::shared(vec![0.1, row.h_max], vec![row.p_bad, 1.0 - row.p_bad], 2)?;
        let streams = vec![
            StreamConfig::new(0.9, row.r0, 0.5)?,
            StreamConfig::new(0.9, row.r0, 0.5)?,
        ];
        let tdma = solve_instance(&model, &streams, row.pbar, Scheme::Tdma, &solver)?;
        let noma = solve_instance(&model, &streams, row.pbar, Scheme::Noma, &solver)?;
        Ok((tdma.objective, noma.objective))
    })?;
    let mut csv = Csv::new(
        "table1 reference grid: lambda=0.9, w=0.5, H={0.1,h_max}",
        "row,h_max,p_bad,r0,pbar,tdma,noma,expected_tdma,expected_noma,ok",
    );
    let mut all_ok = true;
    for (k, ((tdma, noma), row)) in results.iter().zip(&rows).enumerate() {
        let ok = (tdma - row.expected_tdma).abs() <= row.tol_tdma
            && (noma - row.expected_noma).abs() <= row.tol_noma;
        all_ok &= ok;
        csv.row(&[
            format!("{}", k + 1),
            f(row.h_max),
            f(row.p_bad),
            f(row.r0),
            f(row.pbar),
            f(*tdma),
            f(*noma),
            f(row.expected_tdma),
            f(row.expected_noma),
            format!("{ok}"),
        ]);
        println!(
            "row {}: tdma {:.4} (expected {:.4}), noma {:.4} (expected {:.4}) -> {}",
            k + 1,
            tdma,
            row.expected_tdma,
            noma,
            row.expected_noma,
            if ok { "ok" } else { "MISS" }
        );
    }
    csv.write_to(&out.join("table1.csv"))?;
    if !all_ok {
        bail!("table1 reproduction missed at least one tolerance");
    }
    Ok(())
}

fn fig1_instance() -> Result<(ChannelModel, Vec<StreamConfig>)> {
    let model = ChannelModel::shared(vec![0.1, 1.0], vec![0.2, 0.8], 2)?;
    let streams = vec![
        StreamConfig::new(0.5, 2.0, 0.5)?,
        StreamConfig::new(0.5, 2.0, 0.5)?,
    ];
    Ok((model, streams))
}

fn reproduce_fig1(out: &Path) -> Result<()> {
    let (model, streams) = fig1_instance()?;
    let solver = SolverConfig::default();
    let mdp = MdpConfig::default();
    let grid = [6.0, 8.0, 10.0, 12.0, 15.0, 18.0, 22.0, 26.0, 30.0, 35.0, 40.0, 46.0];
    let results = run_indexed(grid.len(), |k| {
        let pbar = grid[k];
        let srp_noma = solve_instance(&model, &streams, pbar, Scheme::Noma, &solver)?;
        let srp_tdma = solve_instance(&model, &streams, pbar, Scheme::Tdma, &solver)?;
        let cmdp_noma = cmdp::bisect_theta(pbar, &mdp, &model, &streams, RateFunction::Log1p, Scheme::Noma)?;
        let cmdp_tdma = cmdp::bisect_theta(pbar, &mdp, &model, &streams, RateFunction::Log1p, Scheme::Tdma)?;
        Ok((srp_noma, srp_tdma, cmdp_noma, cmdp_tdma))
    })?;
    let mut csv = Csv::new(
        "fig1 grid: lambda=0.5, r0=2, H={0.1,1}, P(0.1)=0.2, w=0.5",
        "pbar,srp_noma,srp_noma_power,srp_tdma,srp_tdma_power,cmdp_noma,cmdp_noma_power,cmdp_tdma,cmdp_tdma_power",
    );
    let mut chart: Vec<(String, Vec<(f64, f64)>)> = vec![
        ("CO-SRP NOMA".into(), Vec::new()),
        ("CO-SRP TDMA".into(), Vec::new()),
        ("CMDP NOMA".into(), Vec::new()),
        ("CMDP TDMA".into(), Vec::new()),
    ];
    for (k, (sn, st, cn, ct)) in results.iter().enumerate() {
        let pbar = grid[k];
        csv.row(&[
            f(pbar),
            f(sn.budget_objective()),
            f(sn.achieved_power),
            f(st.budget_objective()),
            f(st.achieved_power),
            f(cn.budget_objective()),
            f(cn.average_power),
            f(ct.budget_objective()),
            f(ct.average_power),
        ]);
        chart[0].1.push((pbar, sn.budget_objective()));
        chart[1].1.push((pbar, st.budget_objective()));
        chart[2].1.push((pbar, cn.budget_objective()));
        chart[3].1.push((pbar, ct.budget_objective()));
    }
    csv.write_to(&out.join("fig1.csv"))?;
    SvgChart {
        title: "weighted average age vs power budget".into(),
        x_label: "power budget".into(),
        y_label: "weighted average age".into(),
        series: chart,
    }
    .write_to(&out.join("fig1.svg"))?;

    // qualitative orderings the reference figure shows
    let issues = check_fig1_orderings(&grid, &results);
    for msg in &issues {
        eprintln!("warning: {msg}");
    }
    if !issues.is_empty() {
        bail!("fig1 orderings violated ({} issue(s))", issues.len());
    }
    println!("fig1: {} budget points -> {}", grid.len(), out.display());
    Ok(())
}

fn check_fig1_orderings(
    grid: &[f64],
    results: &[(CosrpSolution, CosrpSolution, CmdpSolution, CmdpSolution)],
) -> Vec<String> {
    let mut issues = Vec::new();
    let mut prev: Option<(f64, f64, f64, f64)> = None;
    for (k, (sn, st, cn, ct)) in results.iter().enumerate() {
        let vals = (
            sn.budget_objective(),
            st.budget_objective(),
            cn.budget_objective(),
            ct.budget_objective(),
        );
        if vals.0 > vals.1 + 1e-9 {
            issues.push(format!("pbar {}: CO-SRP NOMA above TDMA", grid[k]));
        }
        if vals.2 > vals.0 + 1e-6 {
            issues.push(format!("pbar {}: CMDP NOMA above CO-SRP NOMA", grid[k]));
        }
        if vals.3 > vals.1 + 1e-6 {
            issues.push(format!("pbar {}: CMDP TDMA above CO-SRP TDMA", grid[k]));
        }
        if let Some(p) = prev {
            for (name, now, before) in [
                ("CO-SRP NOMA", vals.0, p.0),
                ("CO-SRP TDMA", vals.1, p.1),
                ("CMDP NOMA", vals.2, p.2),
                ("CMDP TDMA", vals.3, p.3),
            ] {
                if now > before + 1e-6 {
                    issues.push(format!("pbar {}: {name} not non-increasing", grid[k]));
                }
            }
        }
        prev = Some(vals);
    }
    issues
}

fn reproduce_fig_simul_prob(out: &Path) -> Result<()> {
    let solver = SolverConfig::default();
    let p_bads = [0.1, 0.2, 0.5];
    let grid: Vec<f64> = (0..17).map(|k| 2.0 + 3.0 * k as f64).collect();
    let jobs: Vec<(usize, usize)> = (0..p_bads.len())
        .flat_map(|b| (0..grid.len()).map(move |k| (b, k)))
        .collect();
    let results = run_indexed(jobs.len(), |j| {
        let (b, k) = jobs[j];
        let model = ChannelModel::shared(vec![0.1, 1.0], vec![p_bads[b], 1.0 - p_bads[b]], 2)?;
        let streams = vec![
            StreamConfig::new(0.8, 2.0, 0.5)?,
            StreamConfig::new(0.8, 2.0, 0.5)?,
        ];
        let sol = solve_instance(&model, &streams, grid[k], Scheme::Noma, &solver)?;
        // expected probability that both users are scheduled together
        let joint = model.enumerate_joint_states()?;
        let subsets = sol.policy.subsets();
        let pos = subsets.iter().position(|&m| m == 0b11).unwrap();
        let prob: f64 = joint
            .iter()
            .enumerate()
            .map(|(s, st)| st.prob * sol.policy.row(s)[pos])
            .sum();
        Ok(prob)
    })?;
    let mut csv = Csv::new(
        "simultaneous-scheduling probability: lambda=0.8, r0=2, H={0.1,1}, w=0.5",
        "pbar,prob_pbad_0.1,prob_pbad_0.2,prob_pbad_0.5",
    );
    let mut chart: Vec<(String, Vec<(f64, f64)>)> = p_bads
        .iter()
        .map(|pb| (format!("P(bad)={pb}"), Vec::new()))
        .collect();
    for (k, &pbar) in grid.iter().enumerate() {
        let per_b: Vec<f64> = (0..p_bads.len()).map(|b| results[b * grid.len() + k]).collect();
        csv.row(&[f(pbar), f(per_b[0]), f(per_b[1]), f(per_b[2])]);
        for (b, &v) in per_b.iter().enumerate() {
            chart[b].1.push((pbar, v));
        }
    }
    csv.write_to(&out.join("fig_simul_prob.csv"))?;
    SvgChart {
        title: "probability of scheduling both users vs power budget".into(),
        x_label: "power budget".into(),
        y_label: "E[mu(both users)]".into(),
        series: chart,
    }
    .write_to(&out.join("fig_simul_prob.svg"))?;
    println!("fig_simul_prob -> {}", out.display());
    Ok(())
}

fn reproduce_fig_lambda(out: &Path) -> Result<()> {
    let solver = SolverConfig::default();
    let lambdas: Vec<f64> = (1..=20).map(|k| k as f64 * 0.05).collect();
    let budgets = [15.0, 37.0];
    let jobs: Vec<(usize, usize, Scheme)> = (0..budgets.len())
        .flat_map(|b| {
            (0..lambdas.len()).flat_map(move |k| [(b, k, Scheme::Noma), (b, k, Scheme::Tdma)])
        })
        .collect();
    let results = run_indexed(jobs.len(), |j| {
        let (b, k, scheme) = jobs[j];
        let model = ChannelModel::shared(vec![0.1, 1.0], vec![0.5, 0.5], 2)?;
        let streams = vec![
            StreamConfig::new(lambdas[k], 2.0, 0.5)?,
            StreamConfig::new(lambdas[k], 2.0, 0.5)?,
        ];
        let sol = solve_instance(&model, &streams, budgets[b], scheme, &solver)?;
        Ok(sol.budget_objective())
    })?;
    let value = |b: usize, k: usize, s: usize| results[b * lambdas.len() * 2 + k * 2 + s];
    let mut csv = Csv::new(
        "lambda sweep: r0=2, H={0.1,1}, P(0.1)=0.5, w=0.5",
        "lambda,noma_pbar_15,tdma_pbar_15,noma_pbar_37,tdma_pbar_37",
    );
    let mut chart: Vec<(String, Vec<(f64, f64)>)> = vec![
        ("NOMA, budget 15".into(), Vec::new()),
        ("TDMA, budget 15".into(), Vec::new()),
        ("NOMA, budget 37".into(), Vec::new()),
        ("TDMA, budget 37".into(), Vec::new()),
    ];
    for (k, &lam) in lambdas.iter().enumerate() {
        let row = [value(0, k, 0), value(0, k, 1), value(1, k, 0), value(1, k, 1)];
        csv.row(&[f(lam), f(row[0]), f(row[1]), f(row[2]), f(row[3])]);
        for (c, &v) in row.iter().enumerate() {
            chart[c].1.push((lam, v));
        }
    }
    csv.write_to(&out.join("fig_lambda.csv"))?;
    SvgChart {
        title: "weighted average age vs arrival probability".into(),
        x_label: "arrival probability".into(),
        y_label: "weighted average age".into(),
        series: chart,
    }
    .write_to(&out.join("fig_lambda.svg"))?;
    println!("fig_lambda -> {}", out.display());
    Ok(())
}

fn reproduce_fig_region(out: &Path) -> Result<()> {
    let solver = SolverConfig::default();
    let weights: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    let jobs: Vec<(usize, Scheme)> = (0..weights.len())
        .flat_map(|k| [(k, Scheme::Noma), (k, Scheme::Tdma)])
        .collect();
    let results = run_indexed(jobs.len(), |j| {
        let (k, scheme) = jobs[j];
        let w1 = weights[k];
        let model = ChannelModel::shared(vec![0.1, 1.0], vec![0.5, 0.5], 2)?;
        let streams = vec![
            StreamConfig::new(0.9, 2.0, w1)?,
            StreamConfig::new(0.9, 2.0, 1.0 - w1)?,
        ];
        let sol = solve_instance(&model, &streams, 40.0, scheme, &solver)?;
        let program = FractionalProgram::build(&model, &streams, 40.0, scheme, RateFunction::Log1p)?;
        let p = program.delivery_prob(&sol.policy);
        // weighted per-user ages; a zero-weight user contributes zero
        let age = |i: usize| {
            if streams[i].weight == 0.0 {
                0.0
            } else {
                streams[i].weight * cosrp::average_vaoi(p[i], streams[i].lambda)
            }
        };
        Ok((age(0), age(1)))
    })?;
    let mut csv = Csv::new(
        "achievable-age region: pbar=40, lambda=0.9, r0=2, H={0.1,1}, P(0.1)=0.5",
        "w1,w2,noma_age_1,noma_age_2,tdma_age_1,tdma_age_2",
    );
    let mut chart: Vec<(String, Vec<(f64, f64)>)> =
        vec![("NOMA".into(), Vec::new()), ("TDMA".into(), Vec::new())];
    for (k, &w1) in weights.iter().enumerate() {
        let noma = results[2 * k];
        let tdma = results[2 * k + 1];
        csv.row(&[f(w1), f(1.0 - w1), f(noma.0), f(noma.1), f(tdma.0), f(tdma.1)]);
        chart[0].1.push(noma);
        chart[1].1.push(tdma);
    }
    csv.write_to(&out.join("fig_region.csv"))?;
    SvgChart {
        title: "achievable weighted-age region".into(),
        x_label: "weighted age of user 1".into(),
        y_label: "weighted age of user 2".into(),
        series: chart,
    }
    .write_to(&out.join("fig_region.svg"))?;
    println!("fig_region -> {}", out.display());
    Ok(())
}

pub fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| PathBuf::from("out"))
}
