use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use iptree::equiv::{canonical_form, ip_representative, prokhorov_distance};
use iptree::hierarchy::{derive_hierarchy, reconstruct_tree, Hierarchy};
use iptree::iptree::{build_model, Model};
use iptree::measure::{decompose, FadMeasure1D, TreeMeasure};
use iptree::render::render_svg;
use iptree::{Error, IpTree};

pub const DEFAULT_SEED: u64 = 0x5eed_1e55_2024_0001;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "iptree", version, about = "Build, sample, compare and draw interval-partition trees")]
struct Cli {
    /// Mass and spacing tolerance (overrides IPTREE_TOL).
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Write the result here instead of stdout.
    #[arg(long, short = 'o', global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Grow a tree by repeated bead crushing.
    Simulate(SimArgs),
    /// Draw a tree as SVG.
    Render { tree: PathBuf },
    /// Sample points from a tree and print their hierarchy.
    Sample {
        tree: PathBuf,
        #[arg(short = 'n', default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Draw 2n+1 points and label them by -n..=n.
        #[arg(long)]
        symmetric: bool,
        /// Also write the sampled points as JSON.
        #[arg(long)]
        samples_out: Option<PathBuf>,
    },
    /// Rebuild a tree from a hierarchy on [2n+1] or on -n..=n.
    Reconstruct {
        hierarchy: PathBuf,
        /// Number of spinal steps (defaults to n).
        #[arg(short = 'K', long = "K")]
        k: Option<usize>,
        /// Print the union of sample paths instead of its IP representative.
        #[arg(long)]
        raw: bool,
    },
    /// Check the interval-partition conditions.
    Check { tree: PathBuf },
    /// Compare two trees up to mass-structural isomorphism.
    Msiso { a: PathBuf, b: PathBuf },
    /// Split a tree weight into atoms, density and pending atoms.
    Decompose { tree: PathBuf },
    /// Prokhorov distance between two tree weights.
    Prokhorov {
        a: PathBuf,
        b: PathBuf,
        /// Spacing used to discretize density.
        #[arg(long)]
        grid: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelKind {
    Brownian,
    AlphaTheta,
    FatCantor,
    Custom,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Source of the crushed strings.
    #[arg(long, value_enum, default_value_t = ModelKind::Brownian)]
    model: ModelKind,
    /// Stable index of the string masses.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Concentration of the string masses.
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Fat Cantor depth.
    #[arg(long, default_value_t = 4)]
    depth: u32,
    /// Number of crushes.
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Sticks per random string.
    #[arg(long, default_value_t = iptree::iptree::DEFAULT_TRUNCATION)]
    truncation: usize,
    /// RNG seed; batch runs derive one seed per build from it.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Run this many independent builds and print them as an array.
    #[arg(long)]
    batch: Option<usize>,
    /// JSON array of string measures for the custom model.
    #[arg(long)]
    strings: Option<PathBuf>,
}

struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn new(code: i32, msg: impl Into<String>) -> Self {
        Failure { code, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => EXIT_IO,
            Error::InvalidTree(_) | Error::InvalidHierarchy(_) => EXIT_INVALID,
            _ => EXIT_BAD_INPUT,
        };
        Failure::new(code, e.to_string())
    }
}

type Outcome = std::result::Result<i32, Failure>;

/// Parse arguments, run the verb and return the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_BAD_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

fn dispatch(cli: Cli) -> Outcome {
    if let Some(t) = cli.tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::new(EXIT_BAD_INPUT, format!("--tol must be positive, got {t}")));
        }
        iptree::tol::set_eps_tol(t);
    }
    let out = cli.out.as_deref();
    match cli.cmd {
        Cmd::Simulate(a) => simulate(&a, out),
        Cmd::Render { tree } => {
            let t = load_tree(&tree)?;
            emit_raw(out, &render_svg(&t)?)?;
            Ok(EXIT_OK)
        }
        Cmd::Sample { tree, n, seed, symmetric, samples_out } => {
            let t = load_tree(&tree)?;
            let count = if symmetric { 2 * n + 1 } else { n };
            let (mut h, pts) = derive_hierarchy(&t, count, seed)?;
            if symmetric {
                h = h.relabel_to_z()?;
            }
            if let Some(p) = samples_out {
                write_file(&p, &format!("{}\n", to_json(&pts)))?;
            }
            emit_raw(out, &format!("{}\n", h.to_json()))?;
            Ok(EXIT_OK)
        }
        Cmd::Reconstruct { hierarchy, k, raw } => {
            let h = load_hierarchy(&hierarchy)?;
            let h = if h.labels().iter().any(|&l| l <= 0) {
                h
            } else {
                h.relabel_to_z().map_err(|e| Failure::new(EXIT_BAD_INPUT, e.to_string()))?
            };
            let k = match k {
                Some(k) => k,
                None => h.symmetric_n()?,
            };
            let r = reconstruct_tree(&h, k)?;
            let t = if raw { r.tree } else { ip_representative(&r.tree)? };
            emit(out, &t)?;
            Ok(EXIT_OK)
        }
        Cmd::Check { tree } => {
            let t = load_tree(&tree)?;
            let c = t.is_ip_tree();
            emit(out, &c)?;
            Ok(if c.valid { EXIT_OK } else { EXIT_INVALID })
        }
        Cmd::Msiso { a, b } => {
            let (ta, tb) = (load_tree(&a)?, load_tree(&b)?);
            let (fa, fb) = (canonical_form(&ta)?, canonical_form(&tb)?);
            let eq = fa == fb;
            emit(out, &json!({ "equivalent": eq, "a": fa, "b": fb }))?;
            Ok(if eq { EXIT_OK } else { EXIT_INVALID })
        }
        Cmd::Decompose { tree } => {
            let d = decompose(&load_tree(&tree)?);
            let (atomic, density, pending) = d.masses();
            emit(
                out,
                &json!({
                    "masses": { "atomic": atomic, "skeleton_density": density, "leaf_pending": pending },
                    "decomposition": d,
                }),
            )?;
            Ok(EXIT_OK)
        }
        Cmd::Prokhorov { a, b, grid } => {
            let (ma, mb) = (load_measure(&a)?, load_measure(&b)?);
            let d = prokhorov_distance(&ma, &mb, grid)?;
            emit(out, &json!({ "distance": d }))?;
            Ok(EXIT_OK)
        }
    }
}

fn simulate(a: &SimArgs, out: Option<&Path>) -> Outcome {
    let model = match a.model {
        ModelKind::Brownian => Model::Brownian { truncation: a.truncation },
        ModelKind::AlphaTheta => Model::AlphaTheta { alpha: a.alpha, theta: a.theta, truncation: a.truncation },
        ModelKind::FatCantor => Model::FatCantor { depth: a.depth },
        ModelKind::Custom => {
            let path =
                a.strings.as_ref().ok_or_else(|| Failure::new(EXIT_BAD_INPUT, "--model custom needs --strings"))?;
            let strings: Vec<FadMeasure1D> = parse(&read_input(path)?)?;
            if strings.is_empty() {
                return Err(Failure::new(EXIT_BAD_INPUT, "--strings is empty"));
            }
            Model::Custom { strings }
        }
    };
    let seeds: Vec<u64> = match a.batch {
        None => vec![a.seed],
        Some(k) => batch_seeds(a.seed, k),
    };
    let mut trees = Vec::with_capacity(seeds.len());
    let mut code = EXIT_OK;
    for (i, &s) in seeds.iter().enumerate() {
        let t = build_model(&model, a.steps, s)?;
        let c = t.is_ip_tree();
        if !c.valid {
            code = EXIT_INVALID;
            eprintln!("build {i} (seed {s}) is not an IP tree:");
            for v in &c.violations {
                eprintln!("  {:?}: {} (residual {:e})", v.kind, v.detail, v.residual);
            }
        }
        trees.push(t);
    }
    match a.batch {
        None => emit(out, &trees[0])?,
        Some(_) => emit(out, &trees)?,
    }
    Ok(code)
}

/// Per-task seeds: successive outputs of splitmix64 started at `seed`.
pub fn batch_seeds(seed: u64, k: usize) -> Vec<u64> {
    let mut state = seed;
    (0..k)
        .map(|_| {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^ (z >> 31)
        })
        .collect()
}

fn io_err(path: &Path, source: std::io::Error) -> Failure {
    Error::Io { path: path.to_path_buf(), source }.into()
}

/// Read a file, or stdin for `-`.
fn read_input(path: &Path) -> std::result::Result<String, Failure> {
    let mut s = String::new();
    if path == Path::new("-") {
        std::io::stdin().read_to_string(&mut s).map_err(|e| io_err(path, e))?;
    } else {
        s = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    }
    Ok(s)
}

fn parse<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, Failure> {
    serde_json::from_str(s).map_err(|e| Failure::new(EXIT_BAD_INPUT, format!("malformed input: {e}")))
}

fn load_tree(path: &Path) -> std::result::Result<IpTree, Failure> {
    parse(&read_input(path)?)
}

fn load_hierarchy(path: &Path) -> std::result::Result<Hierarchy, Failure> {
    parse(&read_input(path)?)
}

/// A tree file contributes its weight; a bare measure is taken as is.
fn load_measure(path: &Path) -> std::result::Result<TreeMeasure, Failure> {
    let v: serde_json::Value = parse(&read_input(path)?)?;
    if v.get("arcs").is_some() {
        let t: IpTree =
            serde_json::from_value(v).map_err(|e| Failure::new(EXIT_BAD_INPUT, format!("malformed tree: {e}")))?;
        Ok(t.weight().clone())
    } else {
        serde_json::from_value(v).map_err(|e| Failure::new(EXIT_BAD_INPUT, format!("malformed measure: {e}")))
    }
}

fn to_json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).expect("output serializes")
}

fn write_file(path: &Path, s: &str) -> std::result::Result<(), Failure> {
    std::fs::write(path, s).map_err(|e| io_err(path, e))
}

fn emit_raw(out: Option<&Path>, s: &str) -> std::result::Result<(), Failure> {
    match out {
        Some(p) => write_file(p, s),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(s.as_bytes()).and_then(|_| so.flush()).map_err(|e| io_err(Path::new("<stdout>"), e))
        }
    }
}

fn emit<T: Serialize + ?Sized>(out: Option<&Path>, v: &T) -> std::result::Result<(), Failure> {
    emit_raw(out, &format!("{}\n", to_json(v)))
}
