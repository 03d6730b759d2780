use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use planeflow::error::{Error, ErrorClass};
use planeflow::handles::{self, KnotExpr, Rhd};
use planeflow::output;
use planeflow::pipeline::{self, Report};
use planeflow::scene::{Scene, SceneFile};
use planeflow::catalog;

/// Plane-field flows: singular links, characteristic foliations, contact
/// checks and round-handle combinatorics.
#[derive(Parser)]
#[command(name = "planeflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate trajectories from the scene's start points.
    Simulate(SceneArgs),
    /// Trace and classify the singular link of the scene field.
    Links(SceneArgs),
    /// Characteristic foliation of the scene surface.
    Charfol(SceneArgs),
    /// Frobenius density and tangency residual over a grid.
    ContactCheck(SceneArgs),
    /// Print the canonical scene file.
    Export(SceneArgs),
    /// Validate a round-handle decomposition.
    Rhd(RhdArgs),
    /// Canonicalize or enumerate zero-entropy knots.
    Knots(KnotArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Args)]
struct SceneArgs {
    /// Scene file, or `catalog:NAME`.
    scene: String,
    /// Parameter override `key=value`; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Integrator tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Continuation step.
    #[arg(long)]
    step: Option<f64>,
    /// Seeding or sampling grid per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Coordinate pair for SVG projections, e.g. `0,2`.
    #[arg(long, value_name = "I,J")]
    axes: Option<String>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct OutArgs {
    /// Write every artifact into this directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct RhdArgs {
    /// RHD JSON file, or `preset:NAME`.
    file: String,
    /// Check essentiality instead of validity.
    #[arg(long)]
    essential: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct KnotArgs {
    /// KnotExpr JSON file to canonicalize.
    #[arg(long, value_name = "FILE", conflicts_with = "enumerate")]
    canonicalize: Option<PathBuf>,
    /// List canonical zero-entropy knots within the bounds.
    #[arg(long, requires_all = ["nodes", "coeff"])]
    enumerate: bool,
    /// Maximum number of cable and sum nodes.
    #[arg(long)]
    nodes: Option<usize>,
    /// Bound on cable coefficients.
    #[arg(long)]
    coeff: Option<i64>,
    #[command(flatten)]
    out: OutArgs,
}

enum Failure {
    Error(Error),
    /// Validation failure with its own payload.
    Report { kind: &'static str, message: String, detail: Value },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Error(Error::Invalid(msg.into()))
}

fn parse_params(items: &[String]) -> Result<BTreeMap<String, f64>, Failure> {
    let mut out = BTreeMap::new();
    for it in items {
        let (k, v) = it
            .split_once('=')
            .ok_or_else(|| invalid(format!("--param `{it}`: expected KEY=VALUE")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| invalid(format!("--param `{it}`: `{v}` is not a number")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_scene(args: &SceneArgs) -> Result<Scene, Failure> {
    let params = parse_params(&args.params)?;
    let mut scene = match args.scene.strip_prefix("catalog:") {
        Some(name) => Scene::from_catalog(&catalog::build(name, &params)?),
        None => {
            let text = read(Path::new(&args.scene))?;
            let mut file: SceneFile = serde_json::from_str(&text)
                .map_err(|e| invalid(format!("{}: {e}", args.scene)))?;
            file.params.extend(params);
            Scene::from_file(file)?
        }
    };
    let t = &mut scene.tolerances;
    t.tol = args.tol.or(t.tol);
    t.step = args.step.or(t.step);
    t.grid = args.grid.or(t.grid);
    // re-validate overrides through the scene parser
    let scene = Scene::from_file(scene.to_file())?;
    Ok(scene)
}

fn axes(args: &SceneArgs, scene: &Scene) -> Result<[usize; 2], Failure> {
    let Some(text) = &args.axes else {
        return Ok(pipeline::default_axes(&scene.chart));
    };
    let parts: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| invalid(format!("--axes `{text}`: expected I,J")))?;
    let d = scene.chart.dim();
    match parts[..] {
        [i, j] if i < d && j < d && i != j => Ok([i, j]),
        _ => Err(invalid(format!("--axes `{text}`: need two distinct indices below {d}"))),
    }
}

fn emit(stem: &str, report: &Report, out: &OutArgs) -> Result<(), Failure> {
    let json = output::value_to_string(&report.json);
    if let Some(dir) = &out.out {
        fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
        let write = |ext: &str, body: &str| {
            let p = dir.join(format!("{stem}.{ext}"));
            fs::write(&p, body).map_err(|e| invalid(format!("{}: {e}", p.display())))
        };
        write("json", &json)?;
        if let Some(c) = &report.csv {
            write("csv", c)?;
        }
        if let Some(s) = &report.svg {
            write("svg", s)?;
        }
    }
    let body = match out.format {
        Format::Json => Some(&json),
        Format::Csv => report.csv.as_ref(),
        Format::Svg => report.svg.as_ref(),
    };
    match body {
        Some(b) => {
            print!("{b}");
            Ok(())
        }
        None => Err(invalid(format!("`{stem}` has no output in the requested format"))),
    }
}

fn load_rhd(spec: &str) -> Result<Rhd, Failure> {
    if let Some(name) = spec.strip_prefix("preset:") {
        return Ok(handles::preset(name, &BTreeMap::new())?);
    }
    let text = read(Path::new(spec))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{spec}: {e}")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(a) => {
            let s = load_scene(&a)?;
            emit("simulate", &pipeline::simulate(&s, axes(&a, &s)?)?, &a.out)
        }
        Command::Links(a) => {
            let s = load_scene(&a)?;
            let (_, report) = pipeline::links(&s, axes(&a, &s)?)?;
            emit("links", &report, &a.out)
        }
        Command::Charfol(a) => {
            let s = load_scene(&a)?;
            emit("charfol", &pipeline::charfol(&s)?, &a.out)
        }
        Command::ContactCheck(a) => {
            let s = load_scene(&a)?;
            emit("contact-check", &pipeline::contact_check(&s)?, &a.out)
        }
        Command::Export(a) => {
            let s = load_scene(&a)?;
            let report = Report {
                json: serde_json::to_value(s.to_file()).expect("scene serializes"),
                csv: None,
                svg: None,
            };
            emit("scene", &report, &a.out)
        }
        Command::Rhd(a) => {
            let rhd = load_rhd(&a.file)?;
            if a.essential {
                let (report, essential) = pipeline::rhd_essential(&rhd)?;
                emit("rhd", &report, &a.out)?;
                if !essential {
                    return Err(Failure::Report {
                        kind: "NotEssential",
                        message: "an index-1 attaching annulus is inessential".into(),
                        detail: report.json["essential"]["offending"].clone(),
                    });
                }
                Ok(())
            } else {
                let report = handles::validate(&rhd);
                if !report.valid {
                    let detail = serde_json::to_value(&report).expect("report serializes");
                    emit(
                        "rhd",
                        &Report {
                            json: json!({"command": "rhd", "name": rhd.name, "report": detail}),
                            csv: None,
                            svg: None,
                        },
                        &a.out,
                    )?;
                    return Err(Failure::Report {
                        kind: "InvalidRHD",
                        message: format!("{} violation(s)", report.violations.len()),
                        detail: detail["violations"].clone(),
                    });
                }
                emit("rhd", &pipeline::rhd_validate(&rhd)?, &a.out)
            }
        }
        Command::Knots(a) => {
            if let Some(path) = &a.canonicalize {
                let text = read(path)?;
                let k: KnotExpr = serde_json::from_str(&text)
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                emit("knots", &pipeline::knots_canonicalize(&k), &a.out)
            } else if a.enumerate {
                let (n, c) = (a.nodes.unwrap_or(0), a.coeff.unwrap_or(0));
                if c < 1 {
                    return Err(Error::BadParams("--coeff must be at least 1".into()).into());
                }
                emit("knots", &pipeline::knots_enumerate(n, c), &a.out)
            } else {
                Err(invalid("knots needs --canonicalize FILE or --enumerate"))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, class, message, detail) = match run(cli) {
        Ok(()) => return ExitCode::SUCCESS,
        Err(Failure::Error(e)) => (e.kind(), e.class(), e.to_string(), error_detail(&e)),
        Err(Failure::Report { kind, message, detail }) => (kind, ErrorClass::Validation, message, detail),
    };
    let (class_name, code) = match class {
        ErrorClass::Validation => ("validation", 2),
        ErrorClass::Numerical => ("numerical", 3),
    };
    let mut err = json!({"error": kind, "class": class_name, "message": message});
    if !detail.is_null() {
        err["detail"] = detail;
    }
    eprint!("{}", output::value_to_string(&err));
    ExitCode::from(code)
}

fn error_detail(e: &Error) -> Value {
    match e {
        Error::InvalidRhd { violations } => json!(violations),
        Error::VanishingField { nodes } => json!(nodes),
        _ => Value::Null,
    }
}
