use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use foha_core::coarray::{self, SensorArray};
use foha_core::designs::{build_foha_cna, build_foha_na, optimize_foha, FohaDesign, GeneratorKind, SearchMode};
use foha_core::experiment::{run_sweep, ExperimentConfig};
use foha_core::metrics::{coupling_leakage, coupling_matrix, redundancy_from_extent, reference_coupling_model};
use foha_core::reconstruct::{check_reconstruction, foha_reconstruction};

#[derive(Parser)]
#[command(name = "foha", version, about = "Fourth-order hierarchical sparse arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a FOHA and print its design JSON.
    Design {
        #[arg(long)]
        kind: GeneratorKind,
        #[arg(long)]
        n: usize,
        /// Enumerate every parameter combination instead of the split search.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Co-array, redundancy, coupling and reconstruction summary.
    Analyze {
        #[command(flatten)]
        geometry: Geometry,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Signal-reconstruction feasibility and sampling factors.
    CheckReconstruction {
        #[command(flatten)]
        geometry: Geometry,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo RMSE sweep.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        threads: Option<usize>,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run manifest destination; defaults next to `--out`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Geometry {
    #[arg(long, requires = "n", conflicts_with = "positions")]
    kind: Option<GeneratorKind>,
    #[arg(long, requires = "kind")]
    n: Option<usize>,
    /// JSON file: a bare array of positions or an object with `positions`
    /// (design output is accepted as is).
    #[arg(long, required_unless_present = "kind")]
    positions: Option<PathBuf>,
}

/// Positions file contents; design fields are optional.
#[derive(Deserialize)]
#[serde(untagged)]
enum PositionsFile {
    Bare(Vec<i64>),
    Doc(PositionsDoc),
}

#[derive(Deserialize)]
struct PositionsDoc {
    positions: Vec<i64>,
    #[serde(default)]
    kind: Option<GeneratorKind>,
    #[serde(default, rename = "N1")]
    n1: Option<usize>,
    #[serde(default, rename = "N2")]
    n2: Option<usize>,
    #[serde(default, rename = "N3")]
    n3: Option<usize>,
    #[serde(default, rename = "M1")]
    m1: Option<usize>,
    #[serde(default, rename = "M2")]
    m2: Option<usize>,
    #[serde(default, rename = "E")]
    extent: Option<u64>,
}

/// Geometry under analysis plus whatever design structure is known.
struct Subject {
    array: SensorArray,
    design: Option<FohaDesign>,
    generator: Option<SensorArray>,
    nominal_extent: Option<u64>,
}

impl Subject {
    fn from_design(d: FohaDesign) -> Self {
        Self {
            array: d.positions.clone(),
            generator: Some(d.a1.clone()),
            nominal_extent: Some(d.extent()),
            design: Some(d),
        }
    }
}

fn rebuild(doc: &PositionsDoc) -> Result<Option<FohaDesign>> {
    let (Some(kind), Some(m1), Some(m2), Some(n2), Some(n3)) = (doc.kind, doc.m1, doc.m2, doc.n2, doc.n3) else {
        return Ok(None);
    };
    let d = match kind {
        GeneratorKind::Na => build_foha_na(m1, m2, n2, n3)?,
        GeneratorKind::Cna => build_foha_cna(m1, m2, n2, n3)?,
        GeneratorKind::Custom => return Ok(None),
    };
    if d.positions.positions() != doc.positions.as_slice() {
        bail!("positions do not match the {kind} design with M1 = {m1}, M2 = {m2}, N2 = {n2}, N3 = {n3}");
    }
    Ok(Some(d))
}

fn load_subject(g: &Geometry) -> Result<Subject> {
    if let (Some(kind), Some(n)) = (g.kind, g.n) {
        return Ok(Subject::from_design(optimize_foha(n, kind, SearchMode::Algorithm)?));
    }
    let path = g.positions.as_ref().expect("clap requires --positions without --kind");
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed: PositionsFile = serde_json::from_str(&text).with_context(|| {
        format!("{}: expected a JSON array of positions or an object with `positions`", path.display())
    })?;
    let doc = match parsed {
        PositionsFile::Bare(positions) => PositionsDoc {
            positions,
            kind: None,
            n1: None,
            n2: None,
            n3: None,
            m1: None,
            m2: None,
            extent: None,
        },
        PositionsFile::Doc(d) => d,
    };
    let array = SensorArray::new(doc.positions.iter().copied())
        .with_context(|| format!("{}: invalid positions", path.display()))?;
    if let Some(d) = rebuild(&doc)? {
        return Ok(Subject::from_design(d));
    }
    let generator = match doc.n1 {
        Some(n1) if n1 >= 1 && n1 <= array.len() => Some(SensorArray::new(array.positions()[..n1].iter().copied())?),
        _ => None,
    };
    Ok(Subject { array, design: None, generator, nominal_extent: doc.extent })
}

fn emit(value: &impl Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn analyze(s: &Subject) -> Result<Value> {
    let f = coarray::fodca(&s.array)?;
    let u = coarray::central_consecutive(&f)?;
    let bound = s.nominal_extent.unwrap_or(u);
    let n = s.array.len() as u64;
    let (r4, l4) = if u == 0 {
        (None, None)
    } else {
        let r = redundancy_from_extent(n, u)?;
        (Some(r.r4), Some(r.l4))
    };
    let model = reference_coupling_model(100)?;
    let leakage = coupling_leakage(&coupling_matrix(&s.array, &model))?;
    let leakage_generator = match &s.generator {
        Some(g) => Some(coupling_leakage(&coupling_matrix(g, &model))?),
        None => None,
    };
    let feasible = check_reconstruction(&s.array).map(|r| r.feasible).unwrap_or(false);
    Ok(json!({
        "N": n,
        "dofs": 2 * u + 1,
        "U": u,
        "E": s.nominal_extent,
        "aperture": s.array.aperture(),
        "holes_up_to_U": coarray::holes(&f, bound),
        "R4": r4,
        "L4": l4,
        "leakage": leakage,
        "leakage_generator": leakage_generator,
        "reconstruction_feasible": feasible,
    }))
}

fn reconstruction(s: &Subject) -> Result<Value> {
    match &s.design {
        Some(d) => Ok(serde_json::to_value(foha_reconstruction(d)?)?),
        None => Ok(serde_json::to_value(check_reconstruction(&s.array)?)?),
    }
}

fn default_manifest(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn simulate(
    config: &Path,
    seed: Option<u64>,
    trials: Option<usize>,
    threads: Option<usize>,
    out: Option<&Path>,
    manifest: Option<&Path>,
) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text).with_context(|| format!("invalid config {}", config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    cfg.validate().context("invalid overrides")?;
    if threads == Some(0) {
        bail!("--threads must be at least 1");
    }

    let start = Instant::now();
    let result = run_sweep(&cfg, threads)?;
    let wall = start.elapsed().as_secs_f64();

    let csv = result.to_csv();
    match out {
        Some(p) => fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }

    let manifest_path = manifest.map(Path::to_path_buf).or_else(|| out.map(default_manifest));
    if let Some(p) = manifest_path {
        let doc = json!({
            "config": cfg,
            "versions": {
                "foha": env!("CARGO_PKG_VERSION"),
            },
            "threads": threads,
            "positions": result.positions,
            "extent": result.extent,
            "rows": result.rows,
            "wall_time_s": wall,
        });
        emit(&doc, Some(&p))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Design { kind, n, exhaustive, out } => {
            let mode = if exhaustive { SearchMode::Exhaustive } else { SearchMode::Algorithm };
            let d = optimize_foha(n, kind, mode)?;
            emit(&d.document(), out.as_deref())
        }
        Command::Analyze { geometry, out } => emit(&analyze(&load_subject(&geometry)?)?, out.as_deref()),
        Command::CheckReconstruction { geometry, out } => {
            emit(&reconstruction(&load_subject(&geometry)?)?, out.as_deref())
        }
        Command::Simulate { config, seed, trials, threads, out, manifest } => simulate(
            &config,
            seed,
            trials,
            threads,
            out.as_deref(),
            manifest.as_deref(),
        ),
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
