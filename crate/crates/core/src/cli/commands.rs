use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::fit::{fit_lcg, FitInit, FitOptions, LcgState};
use crate::grid::io::{read_gwf, write_csv, write_gwf};
use crate::grid::{
    ground_state, propagate_reference, CnOptions, EigenOptions, GridHamiltonian, GridWavefunction,
    GroundState, UniformGrid,
};
use crate::rothe::{rothe_propagate, RotheObserver, RotheOptions, RotheStepReport};

/// Every `DENSITY_STRIDE`-th grid point goes into the density history.
const DENSITY_STRIDE: usize = 4;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_summary(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut w = create(path)?;
    for (k, v) in entries {
        writeln!(w, "{k} = {v}")?;
    }
    w.flush()?;
    Ok(())
}

/// GWF1 snapshots plus an `index.csv` with columns `step,t,file,norm_sq`.
struct SnapshotSink {
    dir: PathBuf,
    index: BufWriter<File>,
}

impl SnapshotSink {
    fn new(run_dir: &Path) -> Result<Self> {
        let dir = run_dir.join("snapshots");
        prepare_dir(&dir)?;
        let mut index = create(&dir.join("index.csv"))?;
        writeln!(index, "step,t,file,norm_sq")?;
        Ok(SnapshotSink { dir, index })
    }

    fn record(&mut self, step: usize, t: f64, psi: &GridWavefunction) -> Result<()> {
        let name = format!("step_{step:08}.gwf");
        write_gwf(&self.dir.join(&name), psi, t)?;
        writeln!(self.index, "{step},{t},{name},{}", psi.norm_sq())?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.index.flush()?;
        Ok(())
    }
}

struct IndexEntry {
    t: f64,
    file: PathBuf,
}

fn read_index(run_dir: &Path) -> Result<Vec<IndexEntry>> {
    let dir = run_dir.join("snapshots");
    let path = dir.join("index.csv");
    let file = File::open(&path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let bad = |msg: String| Error::Format {
        kind: "snapshot index",
        msg: format!("{}: {msg}", path.display()),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "step,t,file,norm_sq" {
                return Err(bad(format!("unexpected header {line:?}")));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(format!("line {}: expected 4 fields", i + 1)));
        }
        let t: f64 = fields[1]
            .parse()
            .map_err(|_| bad(format!("line {}: bad time {:?}", i + 1, fields[1])))?;
        out.push(IndexEntry {
            t,
            file: dir.join(fields[2]),
        });
    }
    Ok(out)
}

fn grid_ground_state(cfg: &RunConfig) -> Result<(GridHamiltonian, GroundState)> {
    let ham = GridHamiltonian::new(&cfg.model(), cfg.grid()?);
    let gs = ground_state(&ham, &EigenOptions::default())?;
    Ok((ham, gs))
}

#[derive(Debug, Clone)]
pub struct GroundStateSummary {
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Writes `groundstate.gwf`, `groundstate.csv` and `energy.txt`.
pub fn cmd_groundstate(cfg: &RunConfig) -> Result<GroundStateSummary> {
    cfg.validate()?;
    let (_, gs) = grid_ground_state(cfg)?;
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    write_gwf(&dir.join("groundstate.gwf"), &gs.psi, 0.0)?;
    write_csv(&dir.join("groundstate.csv"), &gs.psi)?;
    fs::write(dir.join("energy.txt"), format!("{}\n", gs.energy))?;
    write_summary(
        &dir.join("groundstate.toml"),
        &[
            ("energy", gs.energy.to_string()),
            ("residual", gs.residual.to_string()),
            ("iterations", gs.energy_history.len().to_string()),
        ],
    )?;
    Ok(GroundStateSummary {
        energy: gs.energy,
        residual: gs.residual,
        iterations: gs.energy_history.len(),
    })
}

fn fit_options(cfg: &RunConfig) -> FitOptions {
    FitOptions {
        restarts: cfg.fit.restarts,
        seed: cfg.fit.seed,
        ..Default::default()
    }
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub k: usize,
    pub residual_sq: f64,
    pub converged: bool,
    pub state: LcgState,
}

/// Fits an LCG(K) to the grid ground state; writes `fit_k<K>.lcg`,
/// `fit_k<K>_error.csv` (`x,abs2`: the local error `|ψ_gs - ψ_fit|²`) and a summary.
pub fn cmd_fit(cfg: &RunConfig, k: usize) -> Result<FitSummary> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::Config("K must be >= 1".into()));
    }
    let (_, gs) = grid_ground_state(cfg)?;
    let fit = fit_lcg(&gs.psi, &FitInit::ladder(k), &fit_options(cfg))?;
    let grid = gs.psi.grid;
    let synth = fit.state.synthesize(&grid);

    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    fit.state.write(&dir.join(format!("fit_k{k}.lcg")))?;
    let mut w = create(&dir.join(format!("fit_k{k}_error.csv")))?;
    writeln!(w, "x,abs2")?;
    for (j, (a, b)) in gs.psi.values.iter().zip(&synth.values).enumerate() {
        writeln!(w, "{},{}", grid.point(j), (a - b).norm_sqr())?;
    }
    w.flush()?;
    write_summary(
        &dir.join(format!("fit_k{k}.toml")),
        &[
            ("k", k.to_string()),
            ("residual_sq", fit.residual_sq.to_string()),
            ("converged", fit.converged.to_string()),
            ("iterations", fit.iterations.to_string()),
        ],
    )?;
    Ok(FitSummary {
        k,
        residual_sq: fit.residual_sq,
        converged: fit.converged,
        state: fit.state,
    })
}

fn write_density_rows(w: &mut impl Write, t: f64, psi: &GridWavefunction) -> Result<()> {
    for j in (0..psi.values.len()).step_by(DENSITY_STRIDE) {
        writeln!(w, "{t},{},{}", psi.grid.point(j), psi.values[j].norm_sqr())?;
    }
    Ok(())
}

fn write_potentials(dir: &Path, ham: &GridHamiltonian, cfg: &RunConfig) -> Result<Vec<f64>> {
    let pulse = cfg.pulse;
    let extrema = pulse.field_extrema(pulse.t0, pulse.t1);
    let mut w = create(&dir.join("field_extrema.csv"))?;
    writeln!(w, "index,t,field")?;
    for (i, t) in extrema.iter().enumerate() {
        writeln!(w, "{},{t},{}", i + 1, pulse.field(*t))?;
    }
    w.flush()?;

    let model = cfg.model();
    let mut w = create(&dir.join("potentials.csv"))?;
    write!(w, "x,static")?;
    for i in 0..extrema.len() {
        write!(w, ",extremum_{}", i + 1)?;
    }
    writeln!(w)?;
    for &x in ham.points() {
        write!(w, "{x},{}", model.potential(x))?;
        for &t in &extrema {
            write!(w, ",{}", model.effective_potential(x, t))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(extrema)
}

#[derive(Debug, Clone)]
pub struct ReferenceSummary {
    pub steps: usize,
    pub initial_norm_sq: f64,
    pub final_norm_sq: f64,
    pub max_norm_drift: f64,
    pub field_extrema: Vec<f64>,
}

/// Crank–Nicolson reference run from the grid ground state.
///
/// Writes `potentials.csv`/`field_extrema.csv`, `initial.csv`, `final.csv`,
/// `density.csv` (`t,x,abs2` at every snapshot), the GWF1 snapshots and a summary.
pub fn cmd_reference(cfg: &RunConfig) -> Result<ReferenceSummary> {
    cfg.validate()?;
    let (ham, gs) = grid_ground_state(cfg)?;
    let dir = cfg.output.dir.clone();
    prepare_dir(&dir)?;
    let extrema = write_potentials(&dir, &ham, cfg)?;
    write_csv(&dir.join("initial.csv"), &gs.psi)?;

    let mut sink = SnapshotSink::new(&dir)?;
    let mut density = create(&dir.join("density.csv"))?;
    writeln!(density, "t,x,abs2")?;
    let started = Instant::now();
    let traj = propagate_reference(
        &ham,
        &gs.psi,
        cfg.rothe.h,
        cfg.rothe.t_end,
        cfg.snapshot_every()?,
        &CnOptions::default(),
        |s| {
            sink.record(s.step, s.t, &s.psi)?;
            write_density_rows(&mut density, s.t, &s.psi)?;
            if s.step > 0 {
                eprintln!("reference t={:.3} norm_sq={:.15}", s.t, s.psi.norm_sq());
            }
            Ok(())
        },
    )?;
    sink.finish()?;
    density.flush()?;
    write_csv(&dir.join("final.csv"), &traj.final_state)?;

    let summary = ReferenceSummary {
        steps: traj.steps,
        initial_norm_sq: gs.psi.norm_sq(),
        final_norm_sq: traj.final_state.norm_sq(),
        max_norm_drift: traj.max_norm_drift,
        field_extrema: extrema,
    };
    write_summary(
        &dir.join("reference.toml"),
        &[
            ("steps", summary.steps.to_string()),
            ("final_time", traj.final_time.to_string()),
            ("initial_norm_sq", summary.initial_norm_sq.to_string()),
            ("final_norm_sq", summary.final_norm_sq.to_string()),
            ("max_norm_drift", summary.max_norm_drift.to_string()),
            ("solver_iterations", traj.solver_iterations.to_string()),
            ("wall_seconds", started.elapsed().as_secs_f64().to_string()),
        ],
    )?;
    Ok(summary)
}

struct RotheWriter {
    dir: PathBuf,
    grid: UniformGrid,
    total_steps: usize,
    snapshot_every: usize,
    checkpoint_every: usize,
    snapshots: SnapshotSink,
    trace: BufWriter<File>,
    log: BufWriter<File>,
    single_iteration_steps: usize,
    max_objective: f64,
    max_k: usize,
}

impl RotheWriter {
    fn new(cfg: &RunConfig, grid: UniformGrid, initial: &LcgState) -> Result<Self> {
        let dir = cfg.output.dir.clone();
        prepare_dir(&dir.join("checkpoints"))?;
        let mut snapshots = SnapshotSink::new(&dir)?;
        snapshots.record(0, initial.time, &initial.synthesize(&grid))?;
        initial.write(&dir.join("checkpoints").join(format!("step_{:08}.lcg", 0)))?;
        let mut trace = create(&dir.join("trace.csv"))?;
        writeln!(trace, "t,F,K")?;
        let log = create(&dir.join("run.jsonl"))?;
        Ok(RotheWriter {
            dir,
            grid,
            total_steps: cfg.steps()?,
            snapshot_every: cfg.snapshot_every()?,
            checkpoint_every: cfg.checkpoint_every()?,
            snapshots,
            trace,
            log,
            single_iteration_steps: 0,
            max_objective: 0.0,
            max_k: initial.len(),
        })
    }

    fn flush(&mut self) -> Result<()> {
        self.trace.flush()?;
        self.log.flush()?;
        self.snapshots.index.flush()?;
        Ok(())
    }
}

impl RotheObserver for RotheWriter {
    fn on_step(&mut self, step: usize, state: &LcgState, report: &RotheStepReport) -> Result<()> {
        writeln!(self.trace, "{},{},{}", report.t, report.objective, report.k_after)?;
        serde_json::to_writer(&mut self.log, report).map_err(std::io::Error::from)?;
        writeln!(self.log)?;
        if report.gn_iterations == 1 {
            self.single_iteration_steps += 1;
        }
        self.max_objective = self.max_objective.max(report.objective);
        self.max_k = self.max_k.max(report.k_after);
        let last = step == self.total_steps;
        if step % self.snapshot_every == 0 || last {
            let psi = state.synthesize(&self.grid);
            self.snapshots.record(step, state.time, &psi)?;
            eprintln!(
                "rothe t={:.3} K={} F={:.3e} norm_sq={:.12}",
                state.time,
                state.len(),
                report.objective,
                psi.norm_sq()
            );
        }
        if step % self.checkpoint_every == 0 || last {
            state.write(&self.dir.join("checkpoints").join(format!("step_{step:08}.lcg")))?;
            self.flush()?;
        }
        Ok(())
    }

    fn on_failure(&mut self, step: usize, last: &LcgState, best: &LcgState, objective: f64) {
        // Best effort: the step failure itself is the error that gets reported.
        let _ = self.flush();
        let _ = last.write(&self.dir.join("failure_last_accepted.lcg"));
        let _ = best.write(&self.dir.join("failure_best_attempt.lcg"));
        eprintln!("rothe step {step} failed with F={objective:e}; states written to {}", self.dir.display());
    }
}

#[derive(Debug, Clone)]
pub struct RotheSummary {
    pub steps: usize,
    pub initial_fit_residual_sq: f64,
    pub final_k: usize,
    pub max_objective: f64,
    pub single_iteration_fraction: f64,
    pub final_state: LcgState,
    pub wall_seconds: f64,
}

/// Rothe propagation of the LCG(K) fit to the grid ground state.
///
/// Writes `initial.lcg`, `final.lcg`, `final.csv`, `trace.csv` (`t,F,K`),
/// `run.jsonl` (one step report per line), LCG checkpoints, GWF1 snapshots of
/// the synthesized state and a summary.
pub fn cmd_rothe(cfg: &RunConfig) -> Result<RotheSummary> {
    cfg.validate()?;
    let (ham, gs) = grid_ground_state(cfg)?;
    let fit = fit_lcg(&gs.psi, &FitInit::ladder(cfg.fit.k), &fit_options(cfg))?;
    let initial = fit.state;
    let grid = *ham.grid();
    let dir = cfg.output.dir.clone();
    prepare_dir(&dir)?;
    initial.write(&dir.join("initial.lcg"))?;

    let opts = RotheOptions {
        h: cfg.rothe.h,
        t_end: cfg.rothe.t_end,
        epsilon: cfg.rothe.epsilon,
        max_additions: cfg.rothe.max_additions,
        ..Default::default()
    };
    let mut writer = RotheWriter::new(cfg, grid, &initial)?;
    let started = Instant::now();
    let run = rothe_propagate(&initial, &ham, &opts, &mut writer)?;
    let wall_seconds = started.elapsed().as_secs_f64();
    writer.flush()?;
    writer.snapshots.finish()?;

    let final_state = run.final_state;
    final_state.write(&dir.join("final.lcg"))?;
    write_csv(&dir.join("final.csv"), &final_state.synthesize(&grid))?;
    let steps = run.reports.len();
    let single_iteration_fraction = if steps > 0 {
        writer.single_iteration_steps as f64 / steps as f64
    } else {
        1.0
    };
    let summary = RotheSummary {
        steps,
        initial_fit_residual_sq: fit.residual_sq,
        final_k: final_state.len(),
        max_objective: writer.max_objective,
        single_iteration_fraction,
        final_state,
        wall_seconds,
    };
    write_summary(
        &dir.join("rothe.toml"),
        &[
            ("steps", steps.to_string()),
            ("initial_k", initial.len().to_string()),
            ("initial_fit_residual_sq", summary.initial_fit_residual_sq.to_string()),
            ("final_k", summary.final_k.to_string()),
            ("max_objective", summary.max_objective.to_string()),
            ("single_iteration_fraction", single_iteration_fraction.to_string()),
            ("wall_seconds", wall_seconds.to_string()),
        ],
    )?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct CompareSummary {
    pub times: Vec<f64>,
    /// `‖ψ_a(t) - ψ_b(t)‖` at every snapshot time.
    pub l2_errors: Vec<f64>,
}

impl CompareSummary {
    pub fn final_l2(&self) -> f64 {
        self.l2_errors.last().copied().unwrap_or(0.0)
    }
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

/// Compares the snapshots of two runs taken at the same times on the same grid.
///
/// Writes `l2_error.csv` (`t,l2`), `local_error.csv` (`t,x,abs2` with
/// `|ψ_a - ψ_b|²`), `final_comparison.csv` (`x,abs2_a,abs2_b,abs2_diff`) and a
/// summary into `out`.
pub fn cmd_compare(run_a: &Path, run_b: &Path, out: &Path) -> Result<CompareSummary> {
    let ia = read_index(run_a)?;
    let ib = read_index(run_b)?;
    if ia.len() != ib.len() {
        return Err(Error::GridMismatch(format!(
            "{} has {} snapshots but {} has {}",
            run_a.display(),
            ia.len(),
            run_b.display(),
            ib.len()
        )));
    }
    if let Some((i, (a, b))) = ia
        .iter()
        .zip(&ib)
        .enumerate()
        .find(|(_, (a, b))| !same_time(a.t, b.t))
    {
        return Err(Error::GridMismatch(format!(
            "snapshot {i} is at t={} in {} but t={} in {}",
            a.t,
            run_a.display(),
            b.t,
            run_b.display()
        )));
    }
    if ia.is_empty() {
        return Err(Error::Format {
            kind: "snapshot index",
            msg: format!("{} has no snapshots", run_a.display()),
        });
    }

    prepare_dir(out)?;
    let mut l2 = create(&out.join("l2_error.csv"))?;
    writeln!(l2, "t,l2")?;
    let mut local = create(&out.join("local_error.csv"))?;
    writeln!(local, "t,x,abs2")?;
    let mut summary = CompareSummary {
        times: Vec::new(),
        l2_errors: Vec::new(),
    };
    let mut last = None;
    for (a, b) in ia.iter().zip(&ib) {
        let (psi_a, ta) = read_gwf(&a.file)?;
        let (psi_b, tb) = read_gwf(&b.file)?;
        psi_a.grid.ensure_same(&psi_b.grid)?;
        if !same_time(ta, tb) {
            return Err(Error::GridMismatch(format!(
                "{} is labelled t={ta} but {} is labelled t={tb}",
                a.file.display(),
                b.file.display()
            )));
        }
        let err = psi_a.distance_sq(&psi_b)?.sqrt();
        writeln!(l2, "{},{err}", a.t)?;
        for (j, (va, vb)) in psi_a.values.iter().zip(&psi_b.values).enumerate() {
            writeln!(local, "{},{},{}", a.t, psi_a.grid.point(j), (va - vb).norm_sqr())?;
        }
        summary.times.push(a.t);
        summary.l2_errors.push(err);
        last = Some((psi_a, psi_b));
    }
    l2.flush()?;
    local.flush()?;

    let (psi_a, psi_b) = last.expect("at least one snapshot");
    let mut w = create(&out.join("final_comparison.csv"))?;
    writeln!(w, "x,abs2_a,abs2_b,abs2_diff")?;
    for (j, (va, vb)) in psi_a.values.iter().zip(&psi_b.values).enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            psi_a.grid.point(j),
            va.norm_sqr(),
            vb.norm_sqr(),
            (va - vb).norm_sqr()
        )?;
    }
    w.flush()?;
    let max_l2 = summary.l2_errors.iter().copied().fold(0.0, f64::max);
    write_summary(
        &out.join("compare.toml"),
        &[
            ("run_a", format!("{:?}", run_a.display().to_string())),
            ("run_b", format!("{:?}", run_b.display().to_string())),
            ("snapshots", summary.times.len().to_string()),
            ("final_l2", summary.final_l2().to_string()),
            ("max_l2", max_l2.to_string()),
        ],
    )?;
    Ok(summary)
}
