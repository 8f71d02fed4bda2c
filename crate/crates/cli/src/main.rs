use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hrx_core::ansatz::{self, BoundaryDisk, LatticeCheck};
use hrx_core::connection::{
    detect_defects, minimal_connection_dual, minimal_connection_matching, Domain,
};
use hrx_core::decompose::{cube_charges, shift_search};
use hrx_core::energy::{monotonicity_check, perturbed_energy, EnergyReport, Mode, DEFAULT_DENSITY_THRESHOLD};
use hrx_core::grid::{read_field, write_field};
use hrx_core::minimize::{continuation_report, minimize, MinimizeConfig};
use hrx_core::topology::{coulomb_gauge, HopfCharge};
use hrx_core::{BoundaryTag, DirectionField, Error, GridSpec};

#[derive(Parser, Debug)]
#[command(name = "hrx", version, about = "Sphere-valued fields: energies, Hopf charge, relaxation")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "HRX_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Energy report of a field.
    Energy(EnergyArgs),
    /// Hopf charge of a field.
    Degree(DegreeArgs),
    /// Descent with epsilon continuation.
    Minimize(MinimizeArgs),
    /// Minimal-connection estimates against a reference field.
    Connection(ConnectionArgs),
    /// Cubic decomposition of the Hopf charge.
    Decompose(DecomposeArgs),
    /// Write an analytic test field.
    Ansatz(AnsatzArgs),
    /// Closed-form constants of the test map.
    VerifyConstants(VerifyArgs),
    /// Ball-energy monotonicity identity.
    Monotonicity(MonotonicityArgs),
}

#[derive(Args, Debug)]
struct EnergyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value = "faddeev")]
    mode: String,
}

#[derive(Args, Debug)]
struct DegreeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Gauge solver tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args, Debug)]
struct MinimizeArgs {
    #[arg(long)]
    input: PathBuf,
    /// `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Final field (SFLD1).
    #[arg(long)]
    output: PathBuf,
    /// Per-iteration trace CSV.
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args, Debug)]
struct ConnectionArgs {
    #[arg(long)]
    input: PathBuf,
    /// Reference field with the same boundary trace.
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Density threshold for defect detection.
    #[arg(long, default_value_t = DEFAULT_DENSITY_THRESHOLD)]
    eps0: f64,
    /// Optional defect list CSV.
    #[arg(long)]
    defects: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    r0: f64,
    #[arg(long, default_value_t = 5)]
    samples: usize,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    Ward,
    WardBumps,
    Hedgehog,
    Dipole,
    HardtLin,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Ward => "ward",
            Kind::WardBumps => "ward-bumps",
            Kind::Hedgehog => "hedgehog",
            Kind::Dipole => "dipole",
            Kind::HardtLin => "hardt-lin",
        }
    }
}

#[derive(Args, Debug)]
struct AnsatzArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Nodes per axis.
    #[arg(long)]
    n: usize,
    /// The box is `[-half_width, half_width]^3`.
    #[arg(long)]
    half_width: f64,
    #[arg(long)]
    output: PathBuf,
    /// Flattening radius (ward) or blending radius (ward-bumps).
    #[arg(long)]
    inner_radius: Option<f64>,
    /// `x,y,z` (hedgehog).
    #[arg(long, default_value = "0,0,0")]
    center: String,
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    sign: i32,
    /// `x,y,z` of the +1 point (dipole).
    #[arg(long, default_value = "0,0,0.25")]
    plus: String,
    /// `x,y,z` of the -1 point (dipole).
    #[arg(long, default_value = "0,0,-0.25")]
    minus: String,
    /// `x,y,z;x,y,z;...` (ward-bumps).
    #[arg(long)]
    centers: Option<String>,
    /// `x,y,radius,degree;...` on the bottom face (hardt-lin).
    #[arg(long)]
    disks: Option<String>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1e-8)]
    tol_radial: f64,
    /// Skip the lattice Hopf-charge row.
    #[arg(long)]
    no_lattice: bool,
    #[arg(long, default_value_t = LatticeCheck::default().n)]
    lattice_n: usize,
    #[arg(long, default_value_t = LatticeCheck::default().half_width)]
    lattice_half_width: f64,
    #[arg(long, default_value_t = LatticeCheck::default().inner_radius)]
    lattice_inner_radius: f64,
    #[arg(long, default_value_t = LatticeCheck::default().tolerance)]
    lattice_tol: f64,
}

#[derive(Args, Debug)]
struct MonotonicityArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// `x,y,z`
    #[arg(long, default_value = "0,0,0")]
    center: String,
    /// Increasing radii `r1,r2,...`; consecutive pairs are compared.
    #[arg(long)]
    radii: String,
}

type Outcome = Result<String, Error>;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| invalid(format!("{what}: cannot parse {t:?}"))))
        .collect()
}

fn parse_point(s: &str, what: &str) -> Result<[f64; 3], Error> {
    let v = parse_list(s, what)?;
    v.try_into().map_err(|_| invalid(format!("{what}: expected three comma-separated numbers")))
}

fn echo(out: &mut String, pairs: &[(&str, String)]) {
    for (k, v) in pairs {
        let _ = writeln!(out, "# {k} = {v}");
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn energy(a: &EnergyArgs) -> Outcome {
    let mode: Mode = a.mode.parse()?;
    let u = read_field(&a.input)?;
    let r = perturbed_energy(&u, a.epsilon, mode)?;
    let mut out = String::new();
    echo(
        &mut out,
        &[
            ("command", "energy".into()),
            ("input", path_str(&a.input)),
            ("mode", mode.to_string()),
            ("epsilon", a.epsilon.to_string()),
        ],
    );
    let _ = writeln!(out, "{}\n{}", EnergyReport::csv_header(), r.csv_row());
    Ok(out)
}

fn degree(a: &DegreeArgs) -> Outcome {
    let u = read_field(&a.input)?;
    let gauge = coulomb_gauge(&u, a.tol)?;
    let q = HopfCharge::from_gauge(&gauge);
    let mut out = String::new();
    echo(&mut out, &[("command", "degree".into()), ("input", path_str(&a.input)), ("tol", a.tol.to_string())]);
    let _ = writeln!(out, "{}\n{}", HopfCharge::csv_header(), q.csv_row());
    Ok(out)
}

fn run_minimize(a: &MinimizeArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.config)?;
    let cfg: MinimizeConfig = text.parse()?;
    let u = read_field(&a.input)?;
    let (v, trace) = minimize(&u, &cfg)?;
    write_field(&v, &a.output)?;
    let mut csv = String::new();
    echo(&mut csv, &[("command", "minimize".into()), ("input", path_str(&a.input))]);
    for l in cfg.to_lines() {
        let _ = writeln!(csv, "# {l}");
    }
    csv.push_str(&trace.csv());
    std::fs::write(&a.trace, csv)?;

    let report = continuation_report(&trace);
    let mut out = String::new();
    echo(
        &mut out,
        &[
            ("command", "minimize".into()),
            ("input", path_str(&a.input)),
            ("config", path_str(&a.config)),
            ("output", path_str(&a.output)),
            ("trace", path_str(&a.trace)),
        ],
    );
    for l in cfg.to_lines() {
        let _ = writeln!(out, "# {l}");
    }
    let flag = |b: Option<bool>| b.map_or("n/a".to_string(), |b| b.to_string());
    let _ = writeln!(out, "# perturbation_decreasing = {}", flag(report.perturbation_decreasing));
    let _ = writeln!(out, "# faddeev_non_increasing = {}", flag(report.faddeev_non_increasing));
    let _ = writeln!(out, "# charge_drift = {}", trace.charge_drift);
    let _ = writeln!(out, "# below_lower_bound = {}", trace.below_lower_bound);
    out.push_str(&report.csv());
    Ok(out)
}

fn connection(a: &ConnectionArgs) -> Outcome {
    let u = read_field(&a.input)?;
    let u0 = read_field(&a.reference)?;
    let dual = minimal_connection_dual(&u, &u0, a.steps, a.tol)?;
    let defects = detect_defects(&u, a.eps0)?;
    let mut all = defects.clone();
    for d in detect_defects(&u0, a.eps0)?.points {
        all.points.push(hrx_core::connection::Defect { position: d.position, degree: -d.degree });
    }
    let matching = minimal_connection_matching(&all, Domain::Box(*u.grid()))?;
    if let Some(p) = &a.defects {
        std::fs::write(p, defects.csv())?;
    }
    let mut out = String::new();
    echo(
        &mut out,
        &[
            ("command", "connection".into()),
            ("input", path_str(&a.input)),
            ("reference", path_str(&a.reference)),
            ("steps", a.steps.to_string()),
            ("tol", a.tol.to_string()),
            ("eps0", a.eps0.to_string()),
            ("defects", a.defects.as_deref().map_or("none".into(), path_str)),
        ],
    );
    let _ = writeln!(out, "dual,matching,gap,defects,converged");
    let _ = writeln!(
        out,
        "{},{},{},{},{}",
        dual.value,
        matching.value,
        matching.value - dual.value,
        defects.len(),
        dual.converged
    );
    Ok(out)
}

fn decompose(a: &DecomposeArgs) -> Outcome {
    let u = read_field(&a.input)?;
    let gauge = coulomb_gauge(&u, a.tol)?;
    let s = shift_search(&u, &gauge, a.epsilon, a.r0, a.samples)?;
    let d = cube_charges(&u, &gauge, a.epsilon, a.r0, s.shift)?;
    let mut out = String::new();
    echo(
        &mut out,
        &[
            ("command", "decompose".into()),
            ("input", path_str(&a.input)),
            ("r0", a.r0.to_string()),
            ("samples", a.samples.to_string()),
            ("epsilon", a.epsilon.to_string()),
            ("tol", a.tol.to_string()),
        ],
    );
    out.push_str(&d.csv());
    Ok(out)
}

fn parse_disks(s: &str) -> Result<Vec<BoundaryDisk>, Error> {
    s.split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let v = parse_list(t, "disks")?;
            if v.len() != 4 {
                return Err(invalid("disks: expected x,y,radius,degree per disk"));
            }
            Ok(BoundaryDisk { center: [v[0], v[1]], radius: v[2], degree: v[3] as i32 })
        })
        .collect()
}

fn ansatz_field(a: &AnsatzArgs) -> Result<DirectionField, Error> {
    let g = GridSpec::cube(a.n, a.half_width)?;
    match a.kind {
        Kind::Ward => {
            let u = ansatz::ward_field(a.n, a.half_width)?;
            match a.inner_radius {
                Some(r) => u.flatten_far_field(r),
                None => Ok(u),
            }
        }
        Kind::WardBumps => {
            let centers: Vec<[f64; 3]> = a
                .centers
                .as_deref()
                .ok_or_else(|| invalid("ward-bumps needs --centers"))?
                .split(';')
                .map(|t| parse_point(t, "centers"))
                .collect::<Result<_, _>>()?;
            let inner = a.inner_radius.ok_or_else(|| invalid("ward-bumps needs --inner-radius"))?;
            ansatz::ward_bumps(g, &centers, inner)
        }
        Kind::Hedgehog => ansatz::hedgehog(g, parse_point(&a.center, "center")?, a.sign, BoundaryTag::DirichletTrace),
        Kind::Dipole => ansatz::dipole_pair(g, parse_point(&a.plus, "plus")?, parse_point(&a.minus, "minus")?),
        Kind::HardtLin => {
            let disks = parse_disks(a.disks.as_deref().ok_or_else(|| invalid("hardt-lin needs --disks"))?)?;
            ansatz::hardt_lin_boundary(g, &disks)
        }
    }
}

fn run_ansatz(a: &AnsatzArgs) -> Outcome {
    let u = ansatz_field(a)?;
    write_field(&u, &a.output)?;
    let mut out = String::new();
    echo(
        &mut out,
        &[
            ("command", "ansatz".into()),
            ("kind", a.kind.name().into()),
            ("n", a.n.to_string()),
            ("half_width", a.half_width.to_string()),
            ("inner_radius", a.inner_radius.map_or("none".into(), |r| r.to_string())),
            ("output", path_str(&a.output)),
        ],
    );
    let _ = writeln!(out, "nodes,spacing,boundary\n{},{},{}", u.grid().len(), u.grid().spacing(), u.boundary());
    Ok(out)
}

fn verify(a: &VerifyArgs) -> Result<(String, bool), Error> {
    let lattice = (!a.no_lattice).then_some(LatticeCheck {
        n: a.lattice_n,
        half_width: a.lattice_half_width,
        inner_radius: a.lattice_inner_radius,
        tolerance: a.lattice_tol,
    });
    let t = ansatz::verify_constants(a.tol_radial, lattice)?;
    let mut out = String::new();
    let mut pairs = vec![("command", "verify-constants".to_string()), ("tol_radial", a.tol_radial.to_string())];
    if let Some(l) = lattice {
        pairs.push(("lattice_n", l.n.to_string()));
        pairs.push(("lattice_half_width", l.half_width.to_string()));
        pairs.push(("lattice_inner_radius", l.inner_radius.to_string()));
        pairs.push(("lattice_tol", l.tolerance.to_string()));
    } else {
        pairs.push(("lattice", "off".into()));
    }
    echo(&mut out, &pairs);
    let _ = writeln!(out, "name,expected,computed,rel_error,pass");
    for r in &t.rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.name, r.expected, r.computed, r.rel_error(), r.pass());
    }
    for d in &t.discrepancies {
        let _ = writeln!(out, "# discrepancy: {d}");
    }
    Ok((out, t.all_pass()))
}

fn monotonicity(a: &MonotonicityArgs) -> Outcome {
    let u = read_field(&a.input)?;
    let center = parse_point(&a.center, "center")?;
    let radii = parse_list(&a.radii, "radii")?;
    let rows = monotonicity_check(&u, a.epsilon, center, &radii)?;
    let h = u.grid().spacing();
    let mut out = String::new();
    echo(
        &mut out,
        &[
            ("command", "monotonicity".into()),
            ("input", path_str(&a.input)),
            ("epsilon", a.epsilon.to_string()),
            ("center", a.center.clone()),
            ("radii", a.radii.clone()),
        ],
    );
    let _ = writeln!(out, "rho,radius,lhs,radial_term,correction,rhs,residual,relative_residual");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.rho,
            r.radius,
            r.lhs,
            r.radial_term,
            r.correction,
            r.rhs,
            r.residual,
            r.relative_residual(h)
        );
    }
    Ok(out)
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_numeric() { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot configure thread pool: {e}");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Energy(a) => energy(a),
        Command::Degree(a) => degree(a),
        Command::Minimize(a) => run_minimize(a),
        Command::Connection(a) => connection(a),
        Command::Decompose(a) => decompose(a),
        Command::Ansatz(a) => run_ansatz(a),
        Command::Monotonicity(a) => monotonicity(a),
        Command::VerifyConstants(a) => match verify(a) {
            Ok((out, pass)) => {
                print!("{out}");
                if !pass {
                    eprintln!("error: some constants are outside tolerance");
                    return ExitCode::from(2);
                }
                return ExitCode::SUCCESS;
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => exit_for(&e),
    }
}
