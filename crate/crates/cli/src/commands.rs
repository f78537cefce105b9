//! The five analyses. Each writes its CSV files into `output_dir` and returns
//! the computed objects so that callers (and the acceptance suite) can inspect
//! them without parsing the files back.

use std::path::{Path, PathBuf};

use bifstep_core::continuation::{
    bistability_trajectory, continue_cycles, continue_steady, cycle_at, cycle_between, cycles_from_hopf, detect_hopf,
    floquet, newton_fixed_point, solve_cycle, steady_stability, transient_capture, BistabilityOutcome, CycleBranch,
    CycleStop, StabilityReport, TransientRecord, TransientRun,
};
use bifstep_core::krylov::norm;
use bifstep_core::model::{flow_curve, flow_curve_extrema, FlowCurveRow};
use bifstep_core::{
    BranchPoint, ContinuationConfig, ContinuationError, CyclePoint, GridSpec, HopfPoint, ModelError, PoiseuilleStepper,
    SteadyState, StepperError, Timestepper,
};

use crate::config::{ConfigError, RunConfig};
use crate::csv::{write_table, Cell};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Solver(#[from] ContinuationError),
    #[error(transparent)]
    Stepper(#[from] StepperError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 2 for bad input, 1 for everything that went wrong while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn prepare(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))
}

fn table(cfg: &RunConfig, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<PathBuf, CliError> {
    let path = cfg.output_dir.join(name);
    write_table(&path, header, rows).map_err(io_err(&path))?;
    Ok(path)
}

fn stepper(cfg: &RunConfig, n: usize, dt: f64) -> Result<PoiseuilleStepper, CliError> {
    let grid = GridSpec::new(n)?;
    Ok(PoiseuilleStepper::new(cfg.model(), grid, cfg.stepper_config(dt))?)
}

/// `|u - Phi_T(u)|_inf` by one fresh evolve call.
pub fn map_residual<S: Timestepper>(st: &S, u: &[f64], mu: f64, horizon: f64) -> Result<f64, StepperError> {
    let v = st.evolve(u, mu, horizon)?;
    Ok(v.iter().zip(u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

// ---------------------------------------------------------------- flow-curve

#[derive(Debug, Clone)]
pub struct FlowCurveOutput {
    pub rows: Vec<FlowCurveRow>,
    pub max: SteadyState,
    pub min: SteadyState,
}

pub fn cmd_flow_curve(cfg: &RunConfig) -> Result<FlowCurveOutput, CliError> {
    if !(cfg.vw_max > 0.0) || cfg.n_points < 2 {
        return Err(CliError::Usage("flow-curve needs vw_max > 0 and n_points >= 2".into()));
    }
    prepare(cfg)?;
    let p = cfg.model();
    let rows = flow_curve(&p, cfg.vw_max, cfg.n_points);
    let (max, min) = flow_curve_extrema(&p)?;
    let body: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| vec![r.vw.into(), r.q.into(), r.sigma_w.into()])
        .collect();
    table(cfg, "flow_curve.csv", &["vw", "q", "sigma_w"], &body)?;
    let ext = |kind: &str, s: &SteadyState| vec![kind.into(), s.vw.into(), s.q.into(), s.sigma_w.into()];
    table(
        cfg,
        "flow_curve_extrema.csv",
        &["kind", "vw", "q", "sigma_w"],
        &[ext("max", &max), ext("min", &min)],
    )?;
    Ok(FlowCurveOutput { rows, max, min })
}

// ----------------------------------------------------------------- stability

#[derive(Debug, Clone)]
pub struct StabilityOutput {
    pub point: BranchPoint,
    pub report: StabilityReport,
    pub path: PathBuf,
}

pub fn cmd_stability(cfg: &RunConfig) -> Result<StabilityOutput, CliError> {
    prepare(cfg)?;
    let st = stepper(cfg, cfg.n_nodes_or(801), cfg.dt_or(1e-5))?;
    let cc = cfg.continuation();
    let guess = st.steady_state(cfg.q)?.to_vec();
    let point = newton_fixed_point(&st, &guess, cfg.q, cc.t_h, &cc)?;
    let report = steady_stability(&st, &point, cc.t_h, cc.k_eigs, &cc)?;
    let rows: Vec<Vec<Cell>> = report
        .lambdas
        .iter()
        .zip(&report.residuals)
        .map(|(l, r)| vec![l.re.into(), l.im.into(), (*r).into()])
        .collect();
    let path = table(
        cfg,
        &format!("eigs_q{}.csv", cfg.q),
        &["re_lambda", "im_lambda", "ritz_residual"],
        &rows,
    )?;
    Ok(StabilityOutput { point, report, path })
}

// ----------------------------------------------------------------- transient

const TRAJECTORY_HEADER: [&str; 5] = ["t", "grad_p", "vw", "q_check", "t1_mid"];

fn trajectory_rows(records: &[TransientRecord], every: usize) -> Vec<Vec<Cell>> {
    let last = records.len().saturating_sub(1);
    records
        .iter()
        .enumerate()
        .filter(|(i, _)| i % every == 0 || *i == last)
        .map(|(_, r)| vec![r.t.into(), r.grad_p.into(), r.vw.into(), r.q.into(), r.t1_mid.into()])
        .collect()
}

#[derive(Debug, Clone)]
pub struct TransientOutput {
    pub run: TransientRun,
    pub path: PathBuf,
}

pub fn cmd_transient(cfg: &RunConfig) -> Result<TransientOutput, CliError> {
    prepare(cfg)?;
    let st = stepper(cfg, cfg.n_nodes_or(801), cfg.dt_or(1e-5))?;
    let u0 = st.steady_state(cfg.q_init)?;
    let run = transient_capture(&st, &u0, cfg.q_run, cfg.t_max)?;
    let path = table(
        cfg,
        "transient.csv",
        &TRAJECTORY_HEADER,
        // the initial state still carries q_init; rows start at the first step
        &trajectory_rows(&run.records[1..], cfg.record_every),
    )?;
    Ok(TransientOutput { run, path })
}

// -------------------------------------------------------------- bifurcation

/// The three objects coexisting at one flow rate.
#[derive(Debug, Clone)]
pub struct Coexistence {
    pub q: f64,
    pub steady: BranchPoint,
    pub steady_stability: StabilityReport,
    pub steady_residual: f64,
    pub stable_cycle: CyclePoint,
    pub stable_residual: f64,
    pub unstable_cycle: CyclePoint,
    pub unstable_residual: f64,
}

#[derive(Debug, Clone)]
pub struct BifurcationOutput {
    pub steady: Vec<BranchPoint>,
    pub hopf: Vec<HopfPoint>,
    /// Two small cycles switched onto from the first Hopf point.
    pub hopf_cycles: Vec<CyclePoint>,
    /// Branch grown from a transient seed, through the fold and back.
    pub branch: CycleBranch,
    /// Branch grown from the second Hopf point up to `q_cycle`.
    pub return_branch: CycleBranch,
    pub coexistence: Option<Coexistence>,
}

fn lead_re(p: &BranchPoint) -> f64 {
    p.lead_eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

fn cycle_row(c: &CyclePoint) -> Vec<Cell> {
    vec![
        c.mu.into(),
        c.period.into(),
        c.monitor_max.into(),
        c.lead_nontrivial_modulus().into(),
        c.stable.map_or(Cell::Empty, Cell::from),
    ]
}

const CYCLE_HEADER: [&str; 5] = ["q", "period", "max_neg_grad_p", "lead_floquet_mod", "stable"];

fn with_floquet<S: Timestepper>(st: &S, mut c: CyclePoint, cc: &ContinuationConfig) -> Result<CyclePoint, CliError> {
    let f = floquet(st, &c, cc.k_eigs, cc)?;
    c.stable = Some(f.stable);
    c.floquet = f.multipliers;
    Ok(c)
}

/// Adjacent points of `points` whose flow rates bracket `q`.
fn bracket<'a>(points: &'a [CyclePoint], q: f64) -> Option<(&'a CyclePoint, &'a CyclePoint)> {
    points
        .windows(2)
        .find(|w| (w[0].mu - q) * (w[1].mu - q) <= 0.0)
        .map(|w| (&w[0], &w[1]))
}

/// Cycle branch born at the second (subcritical) Hopf point, continued up to
/// `q_cycle` without multipliers.
fn return_branch(
    cyc: &PoiseuilleStepper,
    hopf: &HopfPoint,
    cfg: &RunConfig,
    cc: &ContinuationConfig,
) -> Result<CycleBranch, CliError> {
    let u = cyc.steady_state(hopf.q_c)?.to_vec();
    let (c1, c2) = cycles_from_hopf(cyc, &u, hopf.q_c, cfg.hopf_amplitude * norm(&u), cc)?;
    let small = ContinuationConfig {
        ds: cc.ds.min(1e-3),
        ds_min: cc.ds_min.min(1e-6),
        ..*cc
    };
    let stop = CycleStop {
        window: (cfg.q_lo, cfg.q_cycle),
        return_floor: None,
        with_floquet: false,
        max_multiplier: None,
    };
    Ok(continue_cycles(cyc, &c1, &c2, stop, &small))
}

fn unstable_cycle_from(
    cyc: &PoiseuilleStepper,
    branch: &CycleBranch,
    cfg: &RunConfig,
    cc: &ContinuationConfig,
) -> Result<CyclePoint, CliError> {
    let (a, b) = bracket(&branch.points, cfg.q_cycle).ok_or_else(|| {
        CliError::Failed(format!(
            "cycle branch from the second Hopf point does not reach q = {} ({})",
            cfg.q_cycle,
            branch
                .failure
                .as_ref()
                .map_or("no error".to_string(), |e| e.to_string())
        ))
    })?;
    with_floquet(cyc, cycle_between(cyc, a, b, cfg.q_cycle, cc)?, cc)
}

fn write_cycle_state(cfg: &RunConfig, c: &CyclePoint) -> Result<PathBuf, CliError> {
    let n = c.u0.len() / 2;
    let rows: Vec<Vec<Cell>> = (0..n)
        .map(|i| {
            vec![
                c.mu.into(),
                c.period.into(),
                i.into(),
                c.u0[i].into(),
                c.u0[n + i].into(),
            ]
        })
        .collect();
    table(cfg, "cycle_state.csv", &["q", "period", "index", "vx", "t1"], &rows)
}

/// Reads a cycle written by `bifurcation` (`cycle_state.csv`) and converges
/// it again on `cyc`.
pub fn read_cycle_state(path: &Path) -> Result<(f64, f64, Vec<f64>), CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize| CliError::Failed(format!("{}:{line}: malformed cycle state", path.display()));
    let mut q = None;
    let mut period = None;
    let (mut vx, mut t1) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(i + 1))?;
        if f.len() != 5 || f[2] as usize != vx.len() {
            return Err(bad(i + 1));
        }
        q.get_or_insert(f[0]);
        period.get_or_insert(f[1]);
        vx.push(f[3]);
        t1.push(f[4]);
    }
    let (q, period) = q.zip(period).ok_or_else(|| bad(1))?;
    vx.extend(t1);
    Ok((q, period, vx))
}

pub fn cmd_bifurcation(cfg: &RunConfig) -> Result<BifurcationOutput, CliError> {
    prepare(cfg)?;
    let n = cfg.n_nodes_or(201);
    let eig = stepper(cfg, n, cfg.dt_or(1e-5))?;
    let cyc = stepper(cfg, n, cfg.cycle_dt)?;
    let cc = cfg.continuation();
    let mut status: Vec<Vec<Cell>> = Vec::new();
    let result = bifurcation_stages(cfg, &eig, &cyc, &cc, &mut status);
    if let Err(e) = &result {
        status.push(vec![
            "error".into(),
            "failed".into(),
            e.to_string().replace(',', ";").as_str().into(),
        ]);
    }
    table(cfg, "status.csv", &["stage", "status", "detail"], &status)?;
    result
}

fn bifurcation_stages(
    cfg: &RunConfig,
    eig: &PoiseuilleStepper,
    cyc: &PoiseuilleStepper,
    cc: &ContinuationConfig,
    status: &mut Vec<Vec<Cell>>,
) -> Result<BifurcationOutput, CliError> {
    let mut done = |stage: &str, detail: String| status.push(vec![stage.into(), "ok".into(), detail.as_str().into()]);

    // steady branch and its stability changes
    let seed = eig.steady_state(cfg.q_lo)?.to_vec();
    let steady = continue_steady(eig, &seed, (cfg.q_lo, cfg.q_hi), cc)?;
    let rows: Vec<Vec<Cell>> = steady
        .iter()
        .map(|p| {
            let s = eig.state_from_slice(&p.u).expect("branch state has stepper dimension");
            vec![
                p.mu.into(),
                s.slip_velocity().into(),
                eig.pressure_gradient(&s).into(),
                lead_re(p).into(),
                p.stable.map_or(Cell::Empty, Cell::from),
            ]
        })
        .collect();
    table(
        cfg,
        "steady_branch.csv",
        &["q", "vw", "grad_p", "max_re_lambda", "stable"],
        &rows,
    )?;
    done("steady_branch", format!("{} points", steady.len()));

    let mut hopf = Vec::new();
    for w in steady.windows(2) {
        if w[0].stable != w[1].stable {
            hopf.push(detect_hopf(eig, (w[0].mu, w[1].mu), cc)?);
        }
    }
    let mut crit: Vec<Vec<Cell>> = hopf
        .iter()
        .map(|h| vec!["hopf".into(), h.q_c.into(), h.omega.into(), h.fprime_star.into()])
        .collect();
    table(cfg, "critical_points.csv", &["kind", "q", "omega", "fprime"], &crit)?;
    done("hopf", format!("{} points", hopf.len()));
    if hopf.len() != 2 {
        return Err(CliError::Failed(format!(
            "expected two stability changes on [{}, {}], found {}",
            cfg.q_lo,
            cfg.q_hi,
            hopf.len()
        )));
    }

    // small cycles at the first Hopf point
    let u_left = cyc.steady_state(hopf[0].q_c)?.to_vec();
    let (h1, h2) = cycles_from_hopf(cyc, &u_left, hopf[0].q_c, cfg.hopf_amplitude * norm(&u_left), cc)?;
    let hopf_cycles = vec![with_floquet(cyc, h1, cc)?, with_floquet(cyc, h2, cc)?];
    done(
        "hopf_cycles",
        format!("T = {} vs 2 pi / omega = {}", hopf_cycles[0].period, hopf[0].period()),
    );

    // large cycles from a transient seed, through the fold
    let q_seed = cfg.cycle_seed_q;
    let u0 = cyc.steady_state(q_seed - cfg.seed_step)?;
    let run = transient_capture(cyc, &u0, q_seed, cfg.cycle_seed_t_max)?;
    let (seed_state, t_est) = run.seed.ok_or(ContinuationError::NoOscillation)?;
    let c1 = solve_cycle(cyc, &seed_state.to_vec(), t_est, q_seed, cc)?;
    let c2 = cycle_at(cyc, &c1, q_seed + cfg.seed_step, cc)?;
    let stop = CycleStop {
        window: (cfg.q_lo, cfg.q_hi),
        return_floor: Some(cfg.return_floor),
        with_floquet: true,
        max_multiplier: Some(cfg.max_multiplier),
    };
    let branch = continue_cycles(cyc, &c1, &c2, stop, cc);
    table(
        cfg,
        "cycle_branch.csv",
        &CYCLE_HEADER,
        &branch.points.iter().map(cycle_row).collect::<Vec<_>>(),
    )?;
    if let Some(f) = &branch.fold {
        crit.push(vec!["fold".into(), f.q_fold.into(), Cell::Empty, Cell::Empty]);
        table(cfg, "critical_points.csv", &["kind", "q", "omega", "fprime"], &crit)?;
    }
    done(
        "cycle_branch",
        format!(
            "{} points; stopped by {}",
            branch.points.len(),
            branch
                .failure
                .as_ref()
                .map_or("stop rule".to_string(), |e| e.to_string())
        ),
    );
    let fold = branch
        .fold
        .clone()
        .ok_or_else(|| CliError::Failed("cycle branch has no fold".into()))?;

    // unstable cycles from the second Hopf point
    let ret = return_branch(cyc, &hopf[1], cfg, cc)?;
    let mut ret_rows = Vec::new();
    for c in &ret.points {
        let c = with_floquet(cyc, c.clone(), cc)?;
        if c.lead_nontrivial_modulus().is_some_and(|m| m > cfg.max_multiplier) {
            break;
        }
        ret_rows.push(c);
    }
    let mut hopf_rows: Vec<Vec<Cell>> = hopf_cycles.iter().map(cycle_row).collect();
    hopf_rows.extend(ret_rows.iter().map(cycle_row));
    table(cfg, "hopf_cycles.csv", &CYCLE_HEADER, &hopf_rows)?;
    done("return_branch", format!("{} points", ret.points.len()));

    // coexistence at q_cycle
    let q = cfg.q_cycle;
    let coexistence = if q > hopf[1].q_c && q < fold.q_fold {
        let guess = eig.steady_state(q)?.to_vec();
        let steady_pt = newton_fixed_point(eig, &guess, q, cc.t_h, cc)?;
        let steady_stab = steady_stability(eig, &steady_pt, cc.t_h, cc.k_eigs, cc)?;
        let steady_residual = map_residual(eig, &steady_pt.u, q, cc.t_h)?;
        let pre_fold: Vec<CyclePoint> = branch
            .points
            .iter()
            .take_while(|c| c.mu <= fold.q_fold && c.stable == Some(true))
            .cloned()
            .collect();
        let (a, b) =
            bracket(&pre_fold, q).ok_or_else(|| CliError::Failed(format!("no stable cycles around q = {q}")))?;
        let stable_cycle = with_floquet(cyc, cycle_between(cyc, a, b, q, cc)?, cc)?;
        let stable_residual = map_residual(cyc, &stable_cycle.u0, q, stable_cycle.period)?;
        let unstable_cycle = unstable_cycle_from(cyc, &ret, cfg, cc)?;
        let unstable_residual = map_residual(cyc, &unstable_cycle.u0, q, unstable_cycle.period)?;
        write_cycle_state(cfg, &unstable_cycle)?;
        let rows = vec![
            vec![
                "steady".into(),
                q.into(),
                Cell::Empty,
                (-eig.pressure_gradient(&eig.state_from_slice(&steady_pt.u)?)).into(),
                steady_residual.into(),
                steady_stab.stable.into(),
            ],
            vec![
                "stable_cycle".into(),
                q.into(),
                stable_cycle.period.into(),
                stable_cycle.monitor_max.into(),
                stable_residual.into(),
                stable_cycle.stable.unwrap_or(false).into(),
            ],
            vec![
                "unstable_cycle".into(),
                q.into(),
                unstable_cycle.period.into(),
                unstable_cycle.monitor_max.into(),
                unstable_residual.into(),
                unstable_cycle.stable.unwrap_or(false).into(),
            ],
        ];
        table(
            cfg,
            "coexistence.csv",
            &["kind", "q", "period", "max_neg_grad_p", "residual", "stable"],
            &rows,
        )?;
        done("coexistence", format!("q = {q}"));
        Some(Coexistence {
            q,
            steady: steady_pt,
            steady_stability: steady_stab,
            steady_residual,
            stable_cycle,
            stable_residual,
            unstable_cycle,
            unstable_residual,
        })
    } else {
        done("coexistence", format!("skipped: q = {q} outside the hysteresis window"));
        None
    };

    Ok(BifurcationOutput {
        steady,
        hopf,
        hopf_cycles,
        branch,
        return_branch: ret,
        coexistence,
    })
}

// ------------------------------------------------------------- bistability

#[derive(Debug, Clone)]
pub struct BistabilityOutput {
    pub unstable: CyclePoint,
    /// Outcome after the switch to `q_up` and `q_down`; `None` if undecided.
    pub up: (Option<BistabilityOutcome>, Vec<TransientRecord>),
    pub down: (Option<BistabilityOutcome>, Vec<TransientRecord>),
}

/// Finds the stability change of the steady branch just below `q_cycle` by
/// stepping down in 0.005 increments.
fn second_hopf(eig: &PoiseuilleStepper, cfg: &RunConfig, cc: &ContinuationConfig) -> Result<HopfPoint, CliError> {
    let stable_at = |q: f64| -> Result<bool, CliError> {
        let guess = eig.steady_state(q)?.to_vec();
        let p = newton_fixed_point(eig, &guess, q, cc.t_h, cc)?;
        Ok(steady_stability(eig, &p, cc.t_h, cc.k_eigs, cc)?.stable)
    };
    let mut hi = cfg.q_cycle;
    if !stable_at(hi)? {
        return Err(CliError::Failed(format!("steady state at q = {hi} is unstable")));
    }
    while hi - 0.005 > cfg.q_lo {
        let lo = hi - 0.005;
        if !stable_at(lo)? {
            return Ok(detect_hopf(eig, (lo, hi), cc)?);
        }
        hi = lo;
    }
    Err(CliError::Failed(format!(
        "no Hopf point in [{}, {}]",
        cfg.q_lo, cfg.q_cycle
    )))
}

pub fn cmd_bistability(cfg: &RunConfig) -> Result<BistabilityOutput, CliError> {
    prepare(cfg)?;
    let n = cfg.n_nodes_or(201);
    let cyc = stepper(cfg, n, cfg.cycle_dt)?;
    let cc = cfg.continuation();
    let unstable = match &cfg.cycle_state {
        Some(path) => {
            let (q, period, u) = read_cycle_state(path)?;
            if u.len() != cyc.dim() {
                return Err(CliError::Failed(format!(
                    "{} holds a state of dimension {}, the grid needs {}",
                    path.display(),
                    u.len(),
                    cyc.dim()
                )));
            }
            let c = solve_cycle(&cyc, &u, period, q, &cc)?;
            with_floquet(&cyc, c, &cc)?
        }
        None => {
            let eig = stepper(cfg, n, cfg.dt_or(1e-5))?;
            let hopf = second_hopf(&eig, cfg, &cc)?;
            let ret = return_branch(&cyc, &hopf, cfg, &cc)?;
            unstable_cycle_from(&cyc, &ret, cfg, &cc)?
        }
    };
    if unstable.stable != Some(false) {
        return Err(CliError::Failed(format!(
            "cycle at q = {} is not unstable",
            unstable.mu
        )));
    }
    let up = bistability_trajectory(&cyc, &unstable, cfg.q_up, cfg.probe_t_max)?;
    let down = bistability_trajectory(&cyc, &unstable, cfg.q_down, cfg.probe_t_max)?;
    table(
        cfg,
        "bistability_a.csv",
        &TRAJECTORY_HEADER,
        &trajectory_rows(&up.1, cfg.record_every),
    )?;
    table(
        cfg,
        "bistability_b.csv",
        &TRAJECTORY_HEADER,
        &trajectory_rows(&down.1, cfg.record_every),
    )?;
    let tag = |o: &Option<BistabilityOutcome>| match o {
        Some(BistabilityOutcome::SteadyState) => "SteadyState",
        Some(BistabilityOutcome::StableCycle) => "StableCycle",
        None => "Undecided",
    };
    table(
        cfg,
        "bistability_outcomes.csv",
        &["file", "q_new", "outcome"],
        &[
            vec!["bistability_a.csv".into(), cfg.q_up.into(), tag(&up.0).into()],
            vec!["bistability_b.csv".into(), cfg.q_down.into(), tag(&down.0).into()],
        ],
    )?;
    let out = BistabilityOutput { unstable, up, down };
    if out.up.0.is_none() || out.down.0.is_none() {
        return Err(ContinuationError::Undecided { t_max: cfg.probe_t_max }.into());
    }
    Ok(out)
}
