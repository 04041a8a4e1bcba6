//! Experiment configuration, q-sweeps over the two-cluster benchmark and
//! plot-ready result tables.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    check_deterrence, check_profile_feasibility, check_symmetry, default_eps_zero, monopoly_duopoly_equivalence,
    solve_gne, solve_monopoly, solve_stochastic_gne, verify_gne, DeterrenceReport, DeviationReport, EquivalenceReport,
    FleetAccount, GneSolution, MonopolySolution, SolveSummary, SymmetryReport, DEFAULT_GAIN_TOL, PROFILE_FEAS_TOL,
};
use crate::error::{Error, Result};
use crate::network::{build_two_cluster_instance, cluster_of, ProblemInstance, SlotTable, TwoClusterParams, RSP_COUNT};
use crate::programs::{assemble_potential_game, Owner, ScaledScenario, ScenarioSet, VarKind};
use crate::qp::{primal_residual, SolverSettings};

/// Relative tolerance for fleet conservation in reports.
pub const CONSERVATION_TOL: f64 = 1e-6;

/// Tolerance on deterrence prices, relative to `p_max`.
pub const DETERRENCE_TOL: f64 = 1e-6;

/// Tolerance on the symmetric-equilibrium check, relative to `p_max`.
pub const SYMMETRY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Solve,
    Sweep,
    Monopoly,
    Compare,
    Verify,
    Stochastic,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Solve,
        Mode::Sweep,
        Mode::Monopoly,
        Mode::Compare,
        Mode::Verify,
        Mode::Stochastic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Sweep => "sweep",
            Mode::Monopoly => "monopoly",
            Mode::Compare => "compare",
            Mode::Verify => "verify",
            Mode::Stochastic => "stochastic",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mode {s:?}")))
    }
}

pub fn default_q_grid() -> Vec<f64> {
    vec![0.05, 0.15, 0.25, 0.35, 0.45, 0.5]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

fn default_gain_tol() -> f64 {
    DEFAULT_GAIN_TOL
}

/// JSON experiment description. Every field has a default, so `{}` is a
/// valid config describing the baseline two-cluster experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    /// Two-cluster parameters; `cluster.q` is used by single-instance modes.
    #[serde(default)]
    pub cluster: TwoClusterParams,
    /// Serialized instance to use instead of `cluster` (not valid for sweeps).
    #[serde(default)]
    pub instance_path: Option<PathBuf>,
    #[serde(default = "default_q_grid")]
    pub q_values: Vec<f64>,
    #[serde(default)]
    pub settings: SolverSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Bound on the relative deviation gain for the equilibrium verdict.
    #[serde(default = "default_gain_tol")]
    pub gain_tol: f64,
    /// Whether the monopoly mode pools both fleets.
    #[serde(default = "default_true")]
    pub merged: bool,
    /// Demand scenarios for the stochastic mode.
    #[serde(default)]
    pub scenarios: Vec<ScaledScenario>,
    /// Seed for randomized checks; solves are deterministic and ignore it.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            cluster: TwoClusterParams::default(),
            instance_path: None,
            q_values: default_q_grid(),
            settings: SolverSettings::default(),
            output_dir: default_output_dir(),
            gain_tol: DEFAULT_GAIN_TOL,
            merged: true,
            scenarios: Vec::new(),
            seed: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        if let Some(q) = self.q_values.iter().find(|q| !(**q > 0.0 && **q <= 0.5)) {
            return Err(Error::InvalidArgument(format!(
                "q values must lie in (0, 0.5], got {q}"
            )));
        }
        if !(self.gain_tol > 0.0 && self.gain_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gain_tol must be positive, got {}",
                self.gain_tol
            )));
        }
        if self.instance_path.is_none() {
            build_two_cluster_instance(&self.cluster)?;
        }
        match self.mode {
            Mode::Sweep if self.q_values.is_empty() => {
                Err(Error::InvalidArgument("sweep needs at least one q value".into()))
            }
            Mode::Sweep if self.instance_path.is_some() => Err(Error::InvalidArgument(
                "sweep builds its instances from cluster parameters; drop instance_path".into(),
            )),
            Mode::Stochastic if self.scenarios.is_empty() => Err(Error::InvalidArgument(
                "stochastic mode needs at least one scenario".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Instance for single-instance modes.
    pub fn instance(&self) -> Result<ProblemInstance> {
        match &self.instance_path {
            Some(path) => ProblemInstance::load(path),
            None => build_two_cluster_instance(&self.cluster),
        }
    }

    pub fn instance_at(&self, q: f64) -> Result<ProblemInstance> {
        build_two_cluster_instance(&TwoClusterParams {
            q,
            ..self.cluster.clone()
        })
    }

    pub fn scenario_set(&self, instance: &ProblemInstance) -> Result<ScenarioSet> {
        let pairs: Vec<(f64, f64)> = self.scenarios.iter().map(|s| (s.factor, s.weight)).collect();
        ScenarioSet::scaled(instance, &pairs)
    }
}

/// OD pair groups of the two-cluster network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Segment {
    #[serde(rename = "intra-cluster-1")]
    IntraCluster1,
    #[serde(rename = "intra-cluster-2")]
    IntraCluster2,
    #[serde(rename = "inter-1->2")]
    Inter12,
    #[serde(rename = "inter-2->1")]
    Inter21,
}

impl Segment {
    pub const ALL: [Segment; 4] = [
        Segment::IntraCluster1,
        Segment::IntraCluster2,
        Segment::Inter12,
        Segment::Inter21,
    ];

    pub fn of(j: usize, l: usize, n: usize) -> Segment {
        match (cluster_of(j, n), cluster_of(l, n)) {
            (0, 0) => Segment::IntraCluster1,
            (1, 1) => Segment::IntraCluster2,
            (0, _) => Segment::Inter12,
            _ => Segment::Inter21,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::IntraCluster1 => "intra-cluster-1",
            Segment::IntraCluster2 => "intra-cluster-2",
            Segment::Inter12 => "inter-1->2",
            Segment::Inter21 => "inter-2->1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Mean,
    Min,
    Max,
}

impl Stat {
    pub const ALL: [Stat; 3] = [Stat::Mean, Stat::Min, Stat::Max];

    fn apply(self, values: &[f64]) -> f64 {
        match self {
            Stat::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Stat::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            Stat::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// One CSV row: a statistic of each quantity over a segment's OD pairs at
/// one slot. `t` is 1-based; profits are per-RSP totals for the q value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q: f64,
    pub t: usize,
    pub segment: Segment,
    pub stat: Stat,
    pub p1: f64,
    pub p2: f64,
    pub pm: f64,
    pub d1: f64,
    pub d2: f64,
    pub profit1: f64,
    pub profit2: f64,
}

/// Per-q summary written alongside the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub q: f64,
    pub potential: f64,
    pub profits: [f64; RSP_COUNT],
    pub monopoly_profit: f64,
    pub gne_solver: Option<SolveSummary>,
    pub monopoly_solver: SolveSummary,
    pub deviation: Option<DeviationReport>,
    pub symmetry: SymmetryReport,
    pub deterrence: DeterrenceReport,
    pub conservation: [FleetAccount; RSP_COUNT],
    pub monopoly_conservation: FleetAccount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub q: f64,
    pub instance: ProblemInstance,
    pub gne: GneSolution,
    pub monopoly: MonopolySolution,
    pub summary: PointSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cluster: TwoClusterParams,
    pub gain_tol: f64,
    pub points: Vec<PointSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub points: Vec<SweepPoint>,
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
}

fn with_q<T>(q: f64, result: Result<T>) -> Result<T> {
    result.map_err(|e| match e {
        Error::Solver { context, status } => Error::Solver {
            context: format!("q={q}: {context}"),
            status,
        },
        other => other,
    })
}

/// Re-judges the attached deviation report against `tol`.
fn apply_gain_tol(gne: &mut GneSolution, tol: f64) {
    if let Some(dev) = gne.deviation.as_mut() {
        dev.tol = tol;
        dev.is_gne = dev.relative_gain.iter().all(|&g| g <= tol);
    }
}

fn solve_point(config: &ExperimentConfig, q: f64) -> Result<SweepPoint> {
    let instance = config.instance_at(q)?;
    let settings = &config.settings;
    let (gne, monopoly) = rayon::join(
        || with_q(q, solve_gne(&instance, settings)),
        || with_q(q, solve_monopoly(&instance, true, settings)),
    );
    let (mut gne, monopoly) = (gne?, monopoly?);
    apply_gain_tol(&mut gne, config.gain_tol);
    let eps = default_eps_zero(&instance);
    let summary = PointSummary {
        q,
        potential: gne.potential,
        profits: [gne.rsp[0].profit, gne.rsp[1].profit],
        monopoly_profit: monopoly.profit,
        gne_solver: gne.solver.clone(),
        monopoly_solver: monopoly.solver.clone(),
        deviation: gne.deviation.clone(),
        symmetry: check_symmetry(&instance, &gne, eps, SYMMETRY_TOL),
        deterrence: check_deterrence(&instance, &gne, eps, DETERRENCE_TOL),
        conservation: gne.fleet_accounts(&instance, &ScenarioSet::deterministic(&instance)),
        monopoly_conservation: monopoly.fleet_account(&instance),
    };
    Ok(SweepPoint {
        q,
        instance,
        gne,
        monopoly,
        summary,
    })
}

/// Rows for one solved point, ordered by slot, segment, statistic.
pub fn sweep_rows(point: &SweepPoint, n: usize) -> Vec<SweepRow> {
    let inst = &point.instance;
    let mut rows = Vec::new();
    for t in 0..inst.horizon {
        for segment in Segment::ALL {
            let edges: Vec<usize> = (0..inst.network.edge_count())
                .filter(|&e| {
                    let (j, l) = inst.network.edge(e);
                    Segment::of(j, l, n) == segment
                })
                .collect();
            let column = |table: &SlotTable<f64>| -> Vec<f64> { edges.iter().map(|&e| table.get(e, t)).collect() };
            let p1 = column(&point.gne.rsp[0].prices);
            let p2 = column(&point.gne.rsp[1].prices);
            let pm = column(&point.monopoly.prices);
            let d1 = column(&point.gne.rsp[0].demand);
            let d2 = column(&point.gne.rsp[1].demand);
            for stat in Stat::ALL {
                rows.push(SweepRow {
                    q: point.q,
                    t: t + 1,
                    segment,
                    stat,
                    p1: stat.apply(&p1),
                    p2: stat.apply(&p2),
                    pm: stat.apply(&pm),
                    d1: stat.apply(&d1),
                    d2: stat.apply(&d2),
                    profit1: point.summary.profits[0],
                    profit2: point.summary.profits[1],
                });
            }
        }
    }
    rows
}

/// Solves every q value (concurrently) and collects rows in q order.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    config.validate()?;
    let points = config
        .q_values
        .par_iter()
        .map(|&q| solve_point(config, q))
        .collect::<Result<Vec<_>>>()?;
    let rows = points.iter().flat_map(|p| sweep_rows(p, config.cluster.n)).collect();
    let summary = SweepSummary {
        cluster: config.cluster.clone(),
        gain_tol: config.gain_tol,
        points: points.iter().map(|p| p.summary.clone()).collect(),
    };
    Ok(SweepOutput { points, rows, summary })
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `sweep.csv`, `summary.json` and, per q, the instance and the
/// equilibrium as JSON so they can be checked later with the verify mode.
pub fn write_sweep(dir: &Path, output: &SweepOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv_path = dir.join("sweep.csv");
    write_sweep_csv(&output.rows, fs::File::create(&csv_path)?)?;
    written.push(csv_path);
    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&output.summary)?)?;
    written.push(summary_path);
    for p in &output.points {
        let inst_path = dir.join(format!("instance_q{}.json", p.q));
        p.instance.save(&inst_path)?;
        let sol_path = dir.join(format!("gne_q{}.json", p.q));
        fs::write(&sol_path, p.gne.to_json(&p.instance)?)?;
        written.extend([inst_path, sol_path]);
    }
    Ok(written)
}

pub fn run_solve(config: &ExperimentConfig) -> Result<(ProblemInstance, GneSolution)> {
    config.validate()?;
    let instance = config.instance()?;
    let mut gne = solve_gne(&instance, &config.settings)?;
    apply_gain_tol(&mut gne, config.gain_tol);
    Ok((instance, gne))
}

pub fn run_monopoly(config: &ExperimentConfig) -> Result<(ProblemInstance, MonopolySolution)> {
    config.validate()?;
    let instance = config.instance()?;
    let monopoly = solve_monopoly(&instance, config.merged, &config.settings)?;
    Ok((instance, monopoly))
}

pub fn run_stochastic(config: &ExperimentConfig) -> Result<(ProblemInstance, GneSolution)> {
    config.validate()?;
    let instance = config.instance()?;
    let scenarios = config.scenario_set(&instance)?;
    let gne = solve_stochastic_gne(&instance, &scenarios, &config.settings)?;
    Ok((instance, gne))
}

pub fn run_compare(config: &ExperimentConfig) -> Result<EquivalenceReport> {
    config.validate()?;
    let instance = config.instance()?;
    monopoly_duopoly_equivalence(
        &instance,
        default_eps_zero(&instance),
        &config.settings,
        config.gain_tol,
    )
}

/// Independent check of a stored equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Largest normalized violation of the joint program's constraints.
    pub feasibility_residual: f64,
    pub worst_constraint: Option<String>,
    pub deviation: Option<DeviationReport>,
    pub deterrence: DeterrenceReport,
    pub conservation: [FleetAccount; RSP_COUNT],
    /// One message per failed check, each starting with the constraint or check name.
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Feasibility, unilateral deviations, deterrence prices and fleet
/// conservation of a deterministic solution.
pub fn run_verify(
    instance: &ProblemInstance,
    solution: &GneSolution,
    settings: &SolverSettings,
    tol: f64,
) -> Result<VerificationReport> {
    if solution.scenario_weights.len() != 1 {
        return Err(Error::InvalidArgument(
            "verification applies to deterministic solutions only".into(),
        ));
    }
    let mut failures = Vec::new();
    let game = assemble_potential_game(instance)?;
    let mut x = vec![0.0; game.index.len()];
    for (i, r) in solution.rsp.iter().enumerate() {
        game.index.store(Owner::Rsp(i), VarKind::Price, None, &r.prices, &mut x);
        game.index
            .store(Owner::Rsp(i), VarKind::Routing, None, &r.routing, &mut x);
        game.index
            .store(Owner::Rsp(i), VarKind::State, None, &r.states[0], &mut x);
    }
    let (residual, worst) = primal_residual(&game.program, &x)?;
    if residual > PROFILE_FEAS_TOL {
        let tag = worst.as_ref().map_or("constraints", |(_, t)| t.as_str());
        failures.push(format!("{tag}: violated by {residual:.3e}"));
    }
    let deviation = match check_profile_feasibility(instance, &solution.strategies()) {
        Ok(()) => {
            let dev = verify_gne(instance, solution, settings, tol)?;
            if !dev.is_gne {
                failures.push(format!(
                    "deviation: relative gains {:.3e}, {:.3e} exceed {tol:.1e}",
                    dev.relative_gain[0], dev.relative_gain[1]
                ));
            }
            Some(dev)
        }
        Err(Error::InfeasibleProfile(msg)) => {
            failures.push(msg);
            None
        }
        Err(e) => return Err(e),
    };
    let eps = default_eps_zero(instance);
    let deterrence = check_deterrence(instance, solution, eps, DETERRENCE_TOL);
    if !deterrence.holds {
        failures.push(format!(
            "deterrence: unserved trip priced {:.3e} away from p_max",
            deterrence.max_deviation
        ));
    }
    let conservation = solution.fleet_accounts(instance, &ScenarioSet::deterministic(instance));
    for (i, acc) in conservation.iter().enumerate() {
        if !acc.passes(CONSERVATION_TOL, PROFILE_FEAS_TOL * acc.capacity.max(1.0)) {
            failures.push(format!(
                "conservation: RSP {} off by {:.3e} (min state {:.3e}, min routing {:.3e})",
                i + 1,
                acc.conservation_error,
                acc.min_state,
                acc.min_routing
            ));
        }
    }
    Ok(VerificationReport {
        feasibility_residual: residual,
        worst_constraint: worst.map(|(_, t)| t),
        deviation,
        deterrence,
        conservation,
        passed: failures.is_empty(),
        failures,
    })
}
