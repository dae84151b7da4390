//! Command dispatch: assemble, solve, check and write artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use wentzell_core::galerkin::WeakResidual;
use wentzell_core::linalg::{dot, norm2};
use wentzell_core::nonlinearity::{log_grid, BoundaryInequalityReport};
use wentzell_core::operator::{write_coordinate, write_eigen_csv};
use wentzell_core::*;

use crate::config::{sample_field, BoundOffset, InitialData, ModalImpulse, RunConfig};
use crate::svg::{Chart, Scale, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Eig,
    Simulate,
    Balance,
    Poincare,
    Bvp,
    Converge,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{stage}: {source}")]
    Core {
        stage: &'static str,
        #[source]
        source: wentzell_core::Error,
    },
    #[error("cannot write `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, RunError>;
}

impl<T> Stage<T> for wentzell_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, RunError> {
        self.map_err(|source| RunError::Core { stage, source })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub command: Command,
    pub input_digest: String,
    pub config: RunConfig,
    pub checks: Vec<CheckOutcome>,
    pub flags: BTreeMap<String, bool>,
    pub scalars: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balance_verdict: Option<Verdict>,
    pub notes: Vec<String>,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push_check(&mut self, name: &str, passed: bool, detail: String) {
        debug_assert!(self.check(name).is_none(), "check {name} recorded twice");
        self.checks.push(CheckOutcome {
            name: name.to_owned(),
            passed,
            detail,
        });
    }
}

/// SHA-256 of the resolved configuration echo.
pub fn input_digest(config: &RunConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("configuration serializes");
    hex::encode(Sha256::digest(bytes))
}

struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            names: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let io_err = |source| RunError::Io {
            path: path.clone(),
            source,
        };
        let file = fs::File::create(&path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)?;
        self.names.push(name.to_owned());
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        self.write(name, |w| w.write_all(text.as_bytes()))
    }

    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.text(name, &text)
    }
}

struct Pipeline {
    mesh: Mesh64,
    op: WentzellOperator64,
}

impl Pipeline {
    fn build(config: &RunConfig) -> Result<Self, RunError> {
        let mesh = build_geometry::<f64>(&config.geometry).stage("geometry")?;
        let mut op = assemble_wentzell(assemble_blocks(&mesh)).stage("wentzell_operator: assembly")?;
        op.ensure_full_eigen().stage("wentzell_operator: eigensolve")?;
        Ok(Self { mesh, op })
    }

    fn eig(&self) -> &EigenDecomposition<f64> {
        self.op.eig.as_ref().expect("computed in build")
    }

    fn balance_inputs(&self, config: &RunConfig) -> Result<BalanceInputs, RunError> {
        let poincare = estimate_poincare_constant(&self.mesh, &self.op.blocks).stage("nonlinearity: poincare")?;
        Ok(BalanceInputs {
            measure_bulk: self.mesh.measure_bulk,
            measure_boundary: self.mesh.measure_boundary,
            poincare,
            omega: config.fractional.omega,
        })
    }

    fn nodal_from_modes(&self, impulses: &[ModalImpulse]) -> Result<Vec<f64>, RunError> {
        let eig = self.eig();
        let mut out = vec![0.0; self.mesh.node_count()];
        for m in impulses {
            if m.mode > eig.len() {
                return Err(RunError::Usage(format!(
                    "initial_data: mode {} exceeds the {} available modes",
                    m.mode,
                    eig.len()
                )));
            }
            for (o, w) in out.iter_mut().zip(eig.vector(m.mode - 1)) {
                *o += m.value * w;
            }
        }
        Ok(out)
    }

    /// Nodal `(u₀, v₀)` for the configured recipe.
    fn initial_fields(&self, config: &RunConfig) -> Result<(Vec<f64>, Vec<f64>), RunError> {
        match &config.initial_data {
            InitialData::Modes { displacement, velocity } => {
                Ok((self.nodal_from_modes(displacement)?, self.nodal_from_modes(velocity)?))
            }
            InitialData::Field { displacement, velocity } => {
                Ok((sample_field(&self.mesh, displacement), sample_field(&self.mesh, velocity)))
            }
            InitialData::RandomModes { modes, scale } => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                let mut draw = || -> Vec<ModalImpulse> {
                    (1..=*modes)
                        .map(|mode| ModalImpulse {
                            mode,
                            value: scale * rng.gen_range(-1.0..1.0),
                        })
                        .collect()
                };
                let (d, v) = (draw(), draw());
                Ok((self.nodal_from_modes(&d)?, self.nodal_from_modes(&v)?))
            }
        }
    }
}

/// Runs `command` and writes its artifacts plus `summary.json` to `out`.
pub fn run(config: &RunConfig, command: Command, out: &Path) -> Result<RunSummary, RunError> {
    let mut artifacts = Artifacts::new(out)?;
    let mut summary = RunSummary {
        schema_version: config.schema_version,
        command,
        input_digest: input_digest(config),
        config: config.clone(),
        checks: Vec::new(),
        flags: BTreeMap::new(),
        scalars: BTreeMap::new(),
        balance_verdict: None,
        notes: Vec::new(),
        artifacts: Vec::new(),
    };
    let pipe = Pipeline::build(config)?;
    summary.scalars.insert("node_count".into(), pipe.mesh.node_count() as f64);
    summary.scalars.insert("lambda_1".into(), pipe.eig().values[0]);

    match command {
        Command::Eig => run_eig(&pipe, config, &mut summary, &mut artifacts)?,
        Command::Simulate => run_simulate(&pipe, config, &mut summary, &mut artifacts)?,
        Command::Balance => run_balance(&pipe, config, &mut summary, &mut artifacts)?,
        Command::Poincare => run_poincare(&pipe, config, &mut summary, &mut artifacts)?,
        Command::Bvp => run_bvp(&pipe, config, &mut summary, &mut artifacts)?,
        Command::Converge => run_converge(&pipe, config, &mut summary, &mut artifacts)?,
    }

    summary.artifacts = artifacts.names.clone();
    summary.artifacts.push("summary.json".into());
    artifacts.json("summary.json", &summary)?;
    Ok(summary)
}

fn run_eig(pipe: &Pipeline, config: &RunConfig, summary: &mut RunSummary, art: &mut Artifacts) -> Result<(), RunError> {
    let eig = pipe.eig();
    let op = &pipe.op;
    art.write("eigs.csv", |w| write_eigen_csv(w, eig))?;
    art.write("stiffness.mtx", |w| write_coordinate(w, &op.stiffness))?;
    art.write("mass.mtx", |w| write_coordinate(w, &op.mass))?;

    let lambda1 = eig.values[0];
    let w1 = eig.vector(0);
    let c = 1.0 / (pipe.mesh.measure_bulk + pipe.mesh.measure_boundary).sqrt();
    let spread = w1.iter().map(|v| (v - c).abs()).fold(0.0, f64::max);
    summary.push_check(
        "constant_mode",
        (lambda1 - 1.0).abs() <= 1e-9 && spread <= 1e-8 * c,
        format!("|Λ₁ − 1| = {:e}, max deviation of W₁ from a constant = {spread:e}", (lambda1 - 1.0).abs()),
    );

    let mut worst = 0.0f64;
    for j in 0..eig.len() {
        let v = eig.vector(j);
        let av = op.stiffness.mul_vec(&v);
        let mv = op.mass.mul_vec(&v);
        let r: Vec<f64> = av.iter().zip(&mv).map(|(a, m)| a - eig.values[j] * m).collect();
        worst = worst.max(norm2(&r) / (eig.values[j] * norm2(&mv)));
    }
    summary.push_check("eigen_residual", worst <= 1e-9, format!("max relative residual {worst:e}"));

    let iso = estimate_isomorphism_constant(op, 64, config.seed).stage("wentzell_operator: isomorphism")?;
    summary.scalars.insert("lambda_max".into(), *eig.values.last().expect("nonempty"));
    summary.scalars.insert("isomorphism_c_star".into(), iso.c_star);
    summary.scalars.insert("measure_bulk".into(), pipe.mesh.measure_bulk);
    summary.scalars.insert("measure_boundary".into(), pipe.mesh.measure_boundary);

    let chart = Chart {
        title: "Eigenvalue staircase",
        x_label: "index j",
        y_label: "Λ_j",
        x_scale: Scale::Linear,
        y_scale: Scale::Log,
        series: vec![Series {
            label: "Λ_j",
            points: eig.values.iter().enumerate().map(|(j, &l)| ((j + 1) as f64, l)).collect(),
            steps: true,
        }],
    };
    art.text("eigs.svg", &chart.render())
}

fn trajectory_csv(w: &mut dyn Write, rec: &TrajectoryRecord64) -> io::Result<()> {
    let n = rec.states.first().map_or(0, |s| s.a.len());
    let mut header = String::from(
        "t,energy,kinetic,elastic,potential_bulk,potential_boundary,dissipation_rate,dissipation_accumulated,identity_residual",
    );
    for i in 1..=n {
        let _ = write!(header, ",a_{i}");
    }
    for i in 1..=n {
        let _ = write!(header, ",adot_{i}");
    }
    writeln!(w, "{header}")?;
    for (s, r) in rec.states.iter().zip(&rec.reports) {
        write!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.t,
            r.energy,
            r.kinetic,
            r.elastic,
            r.potential_bulk,
            r.potential_boundary,
            r.dissipation_rate(),
            r.dissipation_accumulated,
            r.identity_residual
        )?;
        for v in s.a.iter().chain(&s.a_dot) {
            write!(w, ",{v:e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn weak_residual_csv(w: &mut dyn Write, res: &WeakResidual<f64>) -> io::Result<()> {
    let m = res.max_per_mode.len();
    let cols: Vec<String> = (1..=m).map(|j| format!("mode_{j}")).collect();
    writeln!(w, "t,{}", cols.join(","))?;
    for (t, row) in res.times.iter().zip(&res.series) {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{t:e},{}", vals.join(","))?;
    }
    Ok(())
}

fn record_sign_growth(spec: &NonlinearitySpec, summary: &mut RunSummary) -> Result<(), RunError> {
    let rep = check_sign_growth(spec, &log_grid(1e-3, 1e6, 271)).stage("nonlinearity: sign/growth")?;
    summary.push_check(
        "sign_growth",
        rep.passed(),
        format!(
            "sign f: {}, sign g: {}, growth f: {}, growth g: {}",
            rep.sign_f, rep.sign_g, rep.growth_f, rep.growth_g
        ),
    );
    Ok(())
}

fn run_simulate(pipe: &Pipeline, config: &RunConfig, summary: &mut RunSummary, art: &mut Artifacts) -> Result<(), RunError> {
    let spec = &config.nonlinearity;
    let n = config.galerkin.n;
    if n > pipe.mesh.node_count() {
        return Err(RunError::Usage(format!(
            "galerkin.n = {n} exceeds the {} degrees of freedom",
            pipe.mesh.node_count()
        )));
    }
    let checks = &config.checks;
    let linear = spec.is_linear();

    let mut balance = None;
    if !linear && (checks.balance || checks.a_priori_bound) {
        let inputs = pipe.balance_inputs(config)?;
        let rep = check_balance(spec, &inputs, &config.balance_grid).stage("nonlinearity: balance")?;
        summary.scalars.insert("poincare".into(), inputs.poincare);
        summary.scalars.insert("balance_liminf_estimate".into(), rep.numeric_liminf_estimate);
        summary.scalars.insert("balance_fitted_offset".into(), rep.fitted_offset);
        summary.balance_verdict = Some(rep.verdict);
        if checks.balance {
            summary.push_check(
                "balance",
                rep.verdict == Verdict::Satisfied,
                format!("verdict {:?}, liminf estimate {:e}", rep.verdict, rep.numeric_liminf_estimate),
            );
        }
        balance = Some(rep);
    } else if linear {
        summary
            .notes
            .push("f = g = 0: balance and sign/growth checks do not apply".into());
    }
    if !linear && checks.sign_growth {
        record_sign_growth(spec, summary)?;
    }

    let damping = build_damping_matrix(&pipe.op, &config.fractional).stage("wentzell_operator: damping")?;
    let system = build_modal_system(&pipe.mesh, &pipe.op, &damping, spec, n).stage("galerkin_dynamics: modal system")?;
    let (u0, v0) = pipe.initial_fields(config)?;
    let state = project_initial_data(&pipe.op, &u0, &v0, n).stage("galerkin_dynamics: projection")?;

    let bound_offset = match (checks.bound_offset, &balance) {
        (BoundOffset::Fitted, Some(rep)) => rep.fitted_offset,
        _ => 0.0,
    };
    let options = IntegrateOptions {
        sample_stride: config.time.sample_stride,
        bound_offset,
        ..IntegrateOptions::default()
    };
    let rec = integrate(&system, &state, config.time.t_end, config.time.dt, &options)
        .stage("galerkin_dynamics: integration")?;

    summary.flags.insert("energy_monotone".into(), rec.energy_monotone);
    summary.flags.insert("energy_bounded".into(), rec.energy_bounded);
    summary.flags.insert("a_priori_bound_holds".into(), rec.a_priori_bound_holds);
    let first = rec.reports[0];
    let last = *rec.reports.last().expect("nonempty");
    summary.scalars.insert("initial_energy".into(), first.energy);
    summary.scalars.insert("final_energy".into(), last.energy);
    summary.scalars.insert("dissipation_accumulated".into(), last.dissipation_accumulated);
    summary.scalars.insert("max_identity_residual".into(), rec.max_identity_residual);
    summary.scalars.insert("max_bound_excess".into(), rec.max_bound_excess);
    summary.scalars.insert("bound_offset".into(), bound_offset);
    summary.scalars.insert("steps".into(), rec.stats.steps as f64);
    summary.scalars.insert("step_rejections".into(), rec.stats.step_rejections as f64);
    summary.scalars.insert("max_newton_iterations".into(), rec.stats.max_newton_iterations as f64);

    if checks.energy {
        summary.push_check(
            "energy_monotone",
            rec.energy_monotone,
            format!("E(0) = {:e}, E(T) = {:e}", first.energy, last.energy),
        );
    }
    if checks.identity {
        summary.push_check(
            "identity_residual",
            rec.max_identity_residual <= checks.identity_tolerance,
            format!("max {:e} against {:e}", rec.max_identity_residual, checks.identity_tolerance),
        );
    }
    if checks.a_priori_bound {
        let applies = linear || balance.as_ref().is_some_and(|b| b.verdict == Verdict::Satisfied);
        if applies {
            summary.push_check(
                "a_priori_bound",
                rec.a_priori_bound_holds,
                format!("max excess over E(0) + 2C_δ t: {:e} (C_δ = {bound_offset:e})", rec.max_bound_excess),
            );
        } else {
            summary
                .notes
                .push("a-priori bound not checked: balance verdict is not Satisfied".into());
        }
    }

    art.write("trajectory.csv", |w| trajectory_csv(w, &rec))?;
    if checks.weak_residual {
        let m = checks.weak_residual_modes.min(n);
        let res = verify_weak_residual(&rec, &system, m).stage("galerkin_dynamics: weak residual")?;
        summary.scalars.insert("weak_residual_max".into(), res.max);
        summary.push_check(
            "weak_residual",
            res.max <= checks.weak_residual_tolerance,
            format!("max over {m} test modes {:e} against {:e}", res.max, checks.weak_residual_tolerance),
        );
        art.write("weak_residual.csv", |w| weak_residual_csv(w, &res))?;
    }

    let chart = Chart {
        title: "Energy",
        x_label: "t",
        y_label: "energy",
        x_scale: Scale::Linear,
        y_scale: Scale::Linear,
        series: vec![
            Series {
                label: "E(t)",
                points: rec.reports.iter().map(|r| (r.t, r.energy)).collect(),
                steps: false,
            },
            Series {
                label: "kinetic + elastic",
                points: rec.reports.iter().map(|r| (r.t, r.kinetic_elastic())).collect(),
                steps: false,
            },
        ],
    };
    art.text("energy.svg", &chart.render())
}

#[derive(Serialize)]
struct BalanceArtifact<'a> {
    inputs: &'a BalanceInputs,
    nonlinearity: &'a NonlinearitySpec,
    report: &'a BalanceReport,
}

fn run_balance(pipe: &Pipeline, config: &RunConfig, summary: &mut RunSummary, art: &mut Artifacts) -> Result<(), RunError> {
    let spec = &config.nonlinearity;
    let inputs = pipe.balance_inputs(config)?;
    let rep = check_balance(spec, &inputs, &config.balance_grid).stage("nonlinearity: balance")?;
    summary.balance_verdict = Some(rep.verdict);
    summary.scalars.insert("poincare".into(), inputs.poincare);
    summary.scalars.insert("balance_liminf_estimate".into(), rep.numeric_liminf_estimate);
    summary.scalars.insert("balance_outer_decade_min".into(), rep.outer_decade_min);
    summary.scalars.insert("balance_delta".into(), rep.delta);
    summary.scalars.insert("balance_fitted_offset".into(), rep.fitted_offset);
    if config.checks.balance {
        summary.push_check(
            "balance",
            rep.verdict == Verdict::Satisfied,
            format!("verdict {:?}, scenarios {:?}", rep.verdict, rep.scenario_results),
        );
    }
    if config.checks.sign_growth {
        record_sign_growth(spec, summary)?;
    }

    art.json(
        "balance.json",
        &BalanceArtifact {
            inputs: &inputs,
            nonlinearity: spec,
            report: &rep,
        },
    )?;
    art.write("balance_probes.csv", |w| {
        writeln!(w, "s,quotient")?;
        for p in &rep.probes {
            writeln!(w, "{:e},{:e}", p.s, p.quotient)?;
        }
        Ok(())
    })?;
    let side = |positive: bool| -> Vec<(f64, f64)> {
        rep.probes
            .iter()
            .filter(|p| (p.s > 0.0) == positive)
            .map(|p| (p.s.abs(), p.quotient))
            .collect()
    };
    let chart = Chart {
        title: "Balance quotient",
        x_label: "|s|",
        y_label: "quotient",
        x_scale: Scale::Log,
        y_scale: Scale::Linear,
        series: vec![
            Series {
                label: "s > 0",
                points: side(true),
                steps: false,
            },
            Series {
                label: "s < 0",
                points: side(false),
                steps: false,
            },
        ],
    };
    art.text("balance.svg", &chart.render())
}

#[derive(Serialize)]
struct PoincareArtifact {
    poincare: f64,
    test_function_bound: f64,
    boundary_interior: BoundaryInequalityReport,
}

fn run_poincare(pipe: &Pipeline, config: &RunConfig, summary: &mut RunSummary, art: &mut Artifacts) -> Result<(), RunError> {
    let c = estimate_poincare_constant(&pipe.mesh, &pipe.op.blocks).stage("nonlinearity: poincare")?;
    // x minus its boundary mean is admissible, so its quotient bounds C_Ω below
    let b = pipe.mesh.boundary_weight_vector();
    let x: Vec<f64> = pipe.mesh.coords.iter().map(|p| p[0]).collect();
    let mean = dot(&b, &x) / b.iter().sum::<f64>();
    let u: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let blocks = &pipe.op.blocks;
    let bound = (blocks.bulk_mass.quad_form(&u) / blocks.bulk_stiffness.quad_form(&u)).sqrt();
    summary.push_check(
        "poincare_lower_bound",
        c >= bound - 1e-9,
        format!("C_Ω = {c:e}, test-function bound {bound:e}"),
    );
    summary.scalars.insert("poincare".into(), c);
    summary.scalars.insert("poincare_test_function_bound".into(), bound);

    let s = config.nonlinearity.r2();
    let probe = probe_boundary_interior_inequality(&pipe.mesh, blocks, config.nonlinearity.epsilon, s, 200, config.seed)
        .stage("nonlinearity: boundary-interior inequality")?;
    summary.scalars.insert("boundary_interior_c_epsilon".into(), probe.c_epsilon);
    art.json(
        "poincare.json",
        &PoincareArtifact {
            poincare: c,
            test_function_bound: bound,
            boundary_interior: probe,
        },
    )
}

fn run_bvp(pipe: &Pipeline, config: &RunConfig, summary: &mut RunSummary, art: &mut Artifacts) -> Result<(), RunError> {
    let mesh = &pipe.mesh;
    let blocks = &pipe.op.blocks;
    let p1 = sample_field(mesh, &config.bvp.bulk);
    let p2 = mesh
        .trace(&sample_field(mesh, &config.bvp.boundary))
        .stage("geometry: trace")?;
    let u = solve_wentzell_bvp(mesh, blocks, &p1, &p2).stage("wentzell_operator: boundary value problem")?;

    let lifted = mesh.lift(&p2).stage("geometry: lift")?;
    let load: Vec<f64> = blocks
        .bulk_mass
        .mul_vec(&p1)
        .iter()
        .zip(blocks.boundary_mass.mul_vec(&lifted))
        .map(|(a, b)| a + b)
        .collect();
    let lhs: Vec<f64> = [&blocks.bulk_stiffness, &blocks.boundary_stiffness, &blocks.boundary_mass]
        .iter()
        .map(|m| m.mul_vec(&u))
        .fold(vec![0.0; u.len()], |acc, v| acc.iter().zip(&v).map(|(a, b)| a + b).collect());
    let res: Vec<f64> = lhs.iter().zip(&load).map(|(a, b)| a - b).collect();
    let rel = norm2(&res) / norm2(&load).max(f64::MIN_POSITIVE);
    summary.push_check("bvp_residual", rel <= 1e-10, format!("relative residual {rel:e}"));
    summary.scalars.insert("bvp_max_abs".into(), u.iter().map(|v| v.abs()).fold(0.0, f64::max));

    art.write("bvp.csv", |w| {
        writeln!(w, "node,x,y,u")?;
        for (i, (p, v)) in mesh.coords.iter().zip(&u).enumerate() {
            writeln!(w, "{i},{:e},{:e},{v:e}", p[0], p[1])?;
        }
        Ok(())
    })?;
    let chart = Chart {
        title: "Boundary value problem",
        x_label: "x",
        y_label: "u",
        x_scale: Scale::Linear,
        y_scale: Scale::Linear,
        series: vec![Series {
            label: "u at nodes",
            points: mesh.coords.iter().zip(&u).map(|(p, &v)| (p[0], v)).collect(),
            steps: true,
        }],
    };
    art.text("bvp.svg", &chart.render())
}

fn run_converge(pipe: &Pipeline, config: &RunConfig, summary: &mut RunSummary, art: &mut Artifacts) -> Result<(), RunError> {
    let dims = &config.galerkin.convergence;
    if dims.is_empty() {
        return Err(RunError::Usage("converge needs a nonempty galerkin.convergence list".into()));
    }
    if let Some(&big) = dims.last() {
        if big > pipe.mesh.node_count() {
            return Err(RunError::Usage(format!(
                "galerkin.convergence entry {big} exceeds the {} degrees of freedom",
                pipe.mesh.node_count()
            )));
        }
    }
    let damping = build_damping_matrix(&pipe.op, &config.fractional).stage("wentzell_operator: damping")?;
    let (u0, v0) = pipe.initial_fields(config)?;
    let setup = ConvergenceSetup {
        mesh: &pipe.mesh,
        op: &pipe.op,
        damping: &damping,
        spec: &config.nonlinearity,
        u0: &u0,
        v0: &v0,
        t_end: config.time.t_end,
        dt: config.time.dt,
        sample_stride: config.time.sample_stride,
    };
    let table = convergence_study(&setup, dims).stage("galerkin_dynamics: convergence")?;

    // the reference run has distance zero, so only the others are compared
    let compared = &table.distances[..table.distances.len() - 1];
    let slack = 1e-12 * (1.0 + compared.iter().copied().fold(0.0, f64::max));
    let monotone = compared.windows(2).all(|w| w[1] <= w[0] + slack);
    summary.push_check(
        "convergence_monotone",
        monotone,
        format!("distances to n = {}: {:?}", dims[dims.len() - 1], table.distances),
    );
    for (n, d) in dims.iter().zip(&table.distances) {
        summary.scalars.insert(format!("distance_n{n}"), *d);
    }

    art.write("convergence.csv", |w| {
        writeln!(w, "n,distance")?;
        for (n, d) in dims.iter().zip(&table.distances) {
            writeln!(w, "{n},{d:e}")?;
        }
        Ok(())
    })?;
    art.write("convergence_energy.csv", |w| {
        let cols: Vec<String> = dims.iter().map(|n| format!("energy_n{n}")).collect();
        writeln!(w, "t,{}", cols.join(","))?;
        for (k, t) in table.times.iter().enumerate() {
            let vals: Vec<String> = table.energy_curves.iter().map(|c| format!("{:e}", c[k])).collect();
            writeln!(w, "{t:e},{}", vals.join(","))?;
        }
        Ok(())
    })?;
    let chart = Chart {
        title: "Galerkin convergence",
        x_label: "n",
        y_label: "distance to largest n",
        x_scale: Scale::Log,
        y_scale: Scale::Log,
        series: vec![Series {
            label: "sup-in-time distance",
            points: dims.iter().zip(&table.distances).map(|(&n, &d)| (n as f64, d)).collect(),
            steps: true,
        }],
    };
    art.text("convergence.svg", &chart.render())
}

/// Caps worker threads for the parallel parts of a run, from `WENTZELL_THREADS`.
pub fn threads_from_env() -> Result<Option<usize>, RunError> {
    match std::env::var("WENTZELL_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(RunError::Usage(format!(
                "WENTZELL_THREADS must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}

/// [`run`] inside a dedicated pool when `threads` is set.
pub fn run_with_threads(
    config: &RunConfig,
    command: Command,
    out: &Path,
    threads: Option<usize>,
) -> Result<RunSummary, RunError> {
    match threads {
        None => run(config, command, out),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| RunError::Usage(format!("cannot start {n} worker threads: {e}")))?;
            pool.install(|| run(config, command, out))
        }
    }
}
