//! `wplus` command line. Exit codes: 0 success, 1 usage error, 2 data or
//! runtime error. Results go to stdout (JSON with `--json`), diagnostics to
//! stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wplus::direction::{estimate_direction, pairwise_stats, Method, SimilarityStats};
use wplus::edit::{apply_edit, apply_sequential, EditInstruction, DEFAULT_ALPHA};
use wplus::oracle::{generate_pairs, make_world, recovery_score, NoiseScale, PairSpec};
use wplus::pair::LatentBatch;
use wplus::store::{
    dataset_hash, import_npy, load_dataset, load_library, replace_payload, save_dataset, save_latents, save_library,
    unix_now, write_atomic, Container, DirectionLibrary, Provenance,
};
use wplus::style::{
    apply_style, baseline_convex, baseline_strength, fit_manifold, sample_style, sample_style_random, style_diversity,
};
use wplus::{blend_pair, flip_horizontal, LatentCode64, LayerMask, PartMask, RasterImage};

use crate::api::{SampleMode, StyleSampleRequest};
use crate::bridge::DEFAULT_TIMEOUT;
use crate::routes::{method_name, sample_settings};
use crate::server::{effective_bridge_url, OracleSpec, ServeConfig, Server};

#[derive(Debug, Parser)]
#[command(
    name = "wplus",
    version,
    about = "Few-pair semantic editing of layered generator latents"
)]
pub struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate an edit direction from an LFD1 pair dataset.
    Estimate(EstimateArgs),
    /// Add a library direction to every latent in an LFD1 file.
    Edit(EditArgs),
    /// Apply several library directions in order.
    Sequential(SequentialArgs),
    /// Fit a style manifold from library directions.
    StyleFit(StyleFitArgs),
    /// Sample styles from a fitted manifold.
    StyleSample(StyleSampleArgs),
    /// Pairwise cosine histogram of directions.
    Stats(StatsArgs),
    /// Blend two images through a part mask, or mirror one.
    Blend(BlendArgs),
    /// Planted-world experiments and data.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Convert an NPY array of latents into an LFD1 file.
    ImportNpy(ImportNpyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Svd,
    Mean,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Svd => Method::Svd,
            MethodArg::Mean => Method::Mean,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MaskArgs {
    /// Comma separated layer indices.
    #[arg(long, value_delimiter = ',', conflicts_with = "preset")]
    pub mask: Option<Vec<usize>>,
    /// Named layer preset (hair, hat, eyeglasses, smile, pose, facial_hair, lighting, eye_close).
    #[arg(long)]
    pub preset: Option<String>,
}

impl MaskArgs {
    fn resolve(&self, layers: usize) -> Result<Option<LayerMask>, CliError> {
        Ok(match (&self.mask, &self.preset) {
            (Some(ix), _) => Some(LayerMask::new(layers, ix.iter().copied())?),
            (None, Some(p)) => Some(wplus::preset_layer_mask(p, layers)?),
            (None, None) => None,
        })
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// LFD1 pair dataset.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Library entry name; defaults to the dataset's attribute.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_enum, default_value = "svd")]
    pub method: MethodArg,
    #[command(flatten)]
    pub mask: MaskArgs,
    /// Store the direction in this library (created if missing).
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    /// LFD1 latents (or pairs; every latent is edited).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub library: PathBuf,
    #[arg(long)]
    pub direction: String,
    #[arg(long, default_value_t = DEFAULT_ALPHA, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Override the direction's layer mask.
    #[arg(long, value_delimiter = ',')]
    pub mask: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct SequentialArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub library: PathBuf,
    /// `NAME[:ALPHA][@L1,L2,..]`, applied in the order given.
    #[arg(long = "step", required = true, allow_hyphen_values = true)]
    pub steps: Vec<String>,
}

#[derive(Debug, Args)]
pub struct StyleFitArgs {
    #[arg(long)]
    pub library: PathBuf,
    #[arg(long)]
    pub name: String,
    /// Library directions used as the styles.
    #[arg(long = "from", value_delimiter = ',', required = true)]
    pub from: Vec<String>,
    #[arg(long)]
    pub attribute: Option<String>,
    #[command(flatten)]
    pub mask: MaskArgs,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineArg {
    Strength,
    Convex,
}

#[derive(Debug, Args)]
pub struct StyleSampleArgs {
    #[arg(long)]
    pub library: PathBuf,
    #[arg(long)]
    pub manifold: String,
    /// Fixed lambdas instead of random ones.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// `LOW,HIGH`
    #[arg(long, value_delimiter = ',', num_args = 1, allow_negative_numbers = true)]
    pub alpha_range: Option<Vec<f64>>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineArg>,
    /// Convex weights for `--baseline convex`.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Latent file to edit with every sample (first latent unless `--index`).
    #[arg(long, requires = "output")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, requires = "input")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Compare all library directions for an attribute...
    #[arg(long, requires = "attr", conflicts_with = "pairs")]
    pub library: Option<PathBuf>,
    #[arg(long)]
    pub attr: Option<String>,
    /// ...or directions estimated from disjoint subsets of a pair dataset.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub subsets: usize,
    #[arg(long, value_enum, default_value = "svd")]
    pub method: MethodArg,
}

#[derive(Debug, Args)]
pub struct BlendArgs {
    /// Image contributing the masked region.
    #[arg(long)]
    pub source: PathBuf,
    /// Image contributing everything else.
    #[arg(long, requires = "mask")]
    pub negative: Option<PathBuf>,
    /// Gray PNG; white takes the source.
    #[arg(long, requires = "negative")]
    pub mask: Option<PathBuf>,
    /// Mirror the result horizontally (alone: mirror the source).
    #[arg(long)]
    pub flip: bool,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseArg {
    PerLayer,
    PerCoordinate,
}

impl From<NoiseArg> for NoiseScale {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::PerLayer => NoiseScale::PerLayer,
            NoiseArg::PerCoordinate => NoiseScale::PerCoordinate,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct WorldArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Planted attributes.
    #[arg(long, default_value_t = 3)]
    pub attributes: usize,
    /// Identity subspace rank.
    #[arg(long, default_value_t = 8)]
    pub identity: usize,
    /// Decoder output features.
    #[arg(long, default_value_t = 64)]
    pub features: usize,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Mean recovery cosine of the estimator over seeded trials.
    Recover {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long, default_value_t = 10)]
        pairs: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, value_enum, default_value = "per-layer")]
        noise_scale: NoiseArg,
        #[arg(long, default_value_t = 20)]
        trials: u64,
        #[arg(long, value_enum, default_value = "svd")]
        method: MethodArg,
    },
    /// Write a planted pair dataset.
    Pairs {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long, default_value_t = 0)]
        attr: usize,
        #[arg(long, default_value_t = 10)]
        pairs: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, value_enum, default_value = "per-layer")]
        noise_scale: NoiseArg,
        /// Seed for the pair draws; defaults to the world seed.
        #[arg(long)]
        pair_seed: Option<u64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write random latents of the world's shape.
    Latents {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Decoder sidecar; LATENT_BRIDGE_URL overrides it.
    #[arg(long)]
    pub bridge_url: Option<String>,
    /// Bridge request timeout in seconds.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs_f64())]
    pub bridge_timeout: f64,
    /// Serve a planted world through the in-process bridge instead.
    #[arg(long)]
    pub oracle_seed: Option<u64>,
    #[arg(long, default_value_t = 18)]
    pub oracle_layers: usize,
    #[arg(long, default_value_t = 512)]
    pub oracle_dim: usize,
}

#[derive(Debug, Args)]
pub struct ImportNpyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Label stored in the LFD1 header; defaults to the file stem.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl From<wplus::Error> for CliError {
    fn from(e: wplus::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

struct Out {
    json: bool,
}

impl Out {
    fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) {
        if self.json {
            println!("{}", serde_json::to_string(value).expect("output serializes"));
        } else {
            println!("{}", human());
        }
    }
}

pub fn execute(cli: Cli) -> CliResult {
    let out = Out { json: cli.json };
    match cli.command {
        Command::Estimate(a) => estimate(&out, a),
        Command::Edit(a) => edit(&out, a),
        Command::Sequential(a) => sequential(&out, a),
        Command::StyleFit(a) => style_fit(&out, a),
        Command::StyleSample(a) => style_sample(&out, a),
        Command::Stats(a) => stats(&out, a),
        Command::Blend(a) => blend(&out, a),
        Command::Oracle(c) => oracle(&out, c),
        Command::Serve(a) => serve(a),
        Command::ImportNpy(a) => import(&out, a),
    }
}

fn open_library(path: &Path) -> CliResult<DirectionLibrary<f64>> {
    if path.exists() {
        Ok(load_library(path)?)
    } else {
        Ok(DirectionLibrary::new())
    }
}

fn existing_library(path: &Path) -> CliResult<DirectionLibrary<f64>> {
    Ok(load_library(path)?)
}

fn fmt_list(xs: &[f64], n: usize) -> String {
    let shown: Vec<String> = xs.iter().take(n).map(|x| format!("{x:.6}")).collect();
    let more = if xs.len() > n { ", ..." } else { "" };
    format!("[{}{more}]", shown.join(", "))
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    name: &'a str,
    direction: &'a wplus::EditDirection64,
    provenance: &'a Provenance,
    library: Option<&'a Path>,
}

fn estimate(out: &Out, a: EstimateArgs) -> CliResult {
    let ds = load_dataset::<f64>(&a.pairs)?;
    let mask = a
        .mask
        .resolve(ds.layers())?
        .unwrap_or_else(|| LayerMask::all(ds.layers()));
    let method = Method::from(a.method);
    let dir = estimate_direction(&ds, method, mask)?;
    let name = a.name.clone().unwrap_or_else(|| ds.attribute().to_owned());
    let provenance = Provenance {
        source_hash: Some(dataset_hash(&ds)),
        method: method_name(method).into(),
        created: unix_now(),
    };
    if let Some(path) = &a.library {
        let mut lib = open_library(path)?;
        lib.insert_direction(&name, dir.clone(), provenance.clone(), a.overwrite)?;
        save_library(path, &lib)?;
    }
    out.emit(
        &EstimateOutput {
            name: &name,
            direction: &dir,
            provenance: &provenance,
            library: a.library.as_deref(),
        },
        || {
            let sv: Vec<f64> = dir.singular_values.clone();
            let mut s = format!(
                "{name}: {} pairs, {}x{} latent, layers {:?}\nobjective {:.6}  singular values {}",
                dir.n_pairs,
                dir.layers(),
                dir.dim(),
                dir.layer_mask.included(),
                dir.objective,
                fmt_list(&sv, 5)
            );
            for w in &dir.warnings {
                s.push_str(&format!("\nwarning: {}", serde_json::to_string(w).unwrap_or_default()));
            }
            if let Some(p) = &a.library {
                s.push_str(&format!("\nsaved to {}", p.display()));
            }
            s
        },
    );
    Ok(())
}

/// Every latent in an LFD1 file, pairs flattened positive-first, plus the raw bytes.
fn read_latents(path: &Path) -> CliResult<(Vec<u8>, Vec<LatentCode64>)> {
    let bytes = std::fs::read(path)?;
    let latents = match wplus::store::decode_container::<f64>(&bytes)? {
        Container::Latents(b) => b.into_latents(),
        Container::Pairs(ds) => ds.pairs().iter().flat_map(|(p, n)| [p.clone(), n.clone()]).collect(),
    };
    Ok((bytes, latents))
}

fn lookup<'a>(lib: &'a DirectionLibrary<f64>, name: &str) -> CliResult<&'a wplus::EditDirection64> {
    lib.direction(name)
        .map(|d| &d.direction)
        .ok_or_else(|| CliError::Failed(format!("no direction named '{name}' in the library")))
}

#[derive(Serialize)]
struct EditOutput<'a> {
    output: &'a Path,
    count: usize,
    steps: Vec<(String, f64)>,
}

fn edit(out: &Out, a: EditArgs) -> CliResult {
    let lib = existing_library(&a.library)?;
    let dir = lookup(&lib, &a.direction)?.clone();
    let layers = dir.layers();
    let mut instr = EditInstruction::new(dir, a.alpha);
    if let Some(ix) = &a.mask {
        instr = instr.with_mask(LayerMask::new(layers, ix.iter().copied())?);
    }
    let (bytes, latents) = read_latents(&a.input)?;
    let edited = latents
        .iter()
        .map(|w| apply_edit(w, &instr))
        .collect::<Result<Vec<_>, _>>()?;
    write_atomic(&a.output, &replace_payload(&bytes, &edited)?)?;
    out.emit(
        &EditOutput {
            output: &a.output,
            count: edited.len(),
            steps: vec![(a.direction.clone(), a.alpha)],
        },
        || {
            format!(
                "edited {} latents along '{}' (alpha {}) -> {}",
                edited.len(),
                a.direction,
                a.alpha,
                a.output.display()
            )
        },
    );
    Ok(())
}

/// `NAME[:ALPHA][@L1,L2,..]`
fn parse_step(spec: &str) -> CliResult<(String, f64, Option<Vec<usize>>)> {
    let bad = || CliError::Usage(format!("bad step '{spec}', expected NAME[:ALPHA][@L1,L2,..]"));
    let (head, mask) = match spec.split_once('@') {
        Some((h, m)) => {
            let ix = m
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<CliResult<Vec<_>>>()?;
            (h, Some(ix))
        }
        None => (spec, None),
    };
    let (name, alpha) = match head.rsplit_once(':') {
        Some((n, x)) => (n, x.trim().parse::<f64>().map_err(|_| bad())?),
        None => (head, DEFAULT_ALPHA),
    };
    if name.is_empty() {
        return Err(bad());
    }
    Ok((name.to_owned(), alpha, mask))
}

fn sequential(out: &Out, a: SequentialArgs) -> CliResult {
    let lib = existing_library(&a.library)?;
    let mut instrs = Vec::new();
    let mut steps = Vec::new();
    for spec in &a.steps {
        let (name, alpha, mask) = parse_step(spec)?;
        let dir = lookup(&lib, &name)?.clone();
        let layers = dir.layers();
        let mut instr = EditInstruction::new(dir, alpha);
        if let Some(ix) = mask {
            instr = instr.with_mask(LayerMask::new(layers, ix)?);
        }
        instrs.push(instr);
        steps.push((name, alpha));
    }
    let (bytes, latents) = read_latents(&a.input)?;
    let edited = latents
        .iter()
        .map(|w| apply_sequential(w, &instrs).map(|r| r.latent))
        .collect::<Result<Vec<_>, _>>()?;
    write_atomic(&a.output, &replace_payload(&bytes, &edited)?)?;
    out.emit(
        &EditOutput {
            output: &a.output,
            count: edited.len(),
            steps: steps.clone(),
        },
        || {
            let names: Vec<String> = steps.iter().map(|(n, x)| format!("{n}:{x}")).collect();
            format!(
                "applied {} to {} latents -> {}",
                names.join(" then "),
                edited.len(),
                a.output.display()
            )
        },
    );
    Ok(())
}

#[derive(Serialize)]
struct StyleFitOutput<'a> {
    name: &'a str,
    attribute: &'a str,
    styles: usize,
    /// `<v_k, v*>` per style.
    alignment: Vec<f64>,
    layer_mask: &'a [usize],
}

fn style_fit(out: &Out, a: StyleFitArgs) -> CliResult {
    let mut lib = existing_library(&a.library)?;
    let dirs = a
        .from
        .iter()
        .map(|n| lookup(&lib, n).cloned())
        .collect::<CliResult<Vec<_>>>()?;
    let first = &dirs[0];
    let mask = a
        .mask
        .resolve(first.layers())?
        .unwrap_or_else(|| first.layer_mask.clone());
    let attribute = a.attribute.clone().unwrap_or_else(|| first.attribute.clone());
    let styles: Vec<_> = dirs.iter().map(|d| d.direction.clone()).collect();
    let m = fit_manifold(&attribute, &styles, mask)?;
    let alignment = m
        .styles
        .iter()
        .map(|v| v.dot(&m.v_star))
        .collect::<Result<Vec<_>, _>>()?;
    let provenance = Provenance {
        source_hash: None,
        method: "svd".into(),
        created: unix_now(),
    };
    lib.insert_manifold(&a.name, m.clone(), provenance, a.overwrite)?;
    save_library(&a.library, &lib)?;
    out.emit(
        &StyleFitOutput {
            name: &a.name,
            attribute: &attribute,
            styles: m.len(),
            alignment: alignment.clone(),
            layer_mask: m.layer_mask.included(),
        },
        || {
            format!(
                "{}: {} styles of '{attribute}', alignment with v* {}",
                a.name,
                m.len(),
                fmt_list(&alignment, 8)
            )
        },
    );
    Ok(())
}

#[derive(Serialize)]
struct StyleSampleOutput<'a> {
    samples: &'a [wplus::StyleSample64],
    diversity: f64,
    output: Option<&'a Path>,
}

fn style_sample(out: &Out, a: StyleSampleArgs) -> CliResult {
    let lib = existing_library(&a.library)?;
    let m = &lib
        .manifold(&a.manifold)
        .ok_or_else(|| CliError::Failed(format!("no manifold named '{}' in the library", a.manifold)))?
        .manifold;
    let alpha_range = match a.alpha_range.as_deref() {
        None => None,
        Some([l, r]) => Some((*l, *r)),
        Some(_) => return Err(CliError::Usage("--alpha-range takes LOW,HIGH".into())),
    };
    let req = StyleSampleRequest {
        manifold: a.manifold.clone(),
        mode: match a.baseline {
            None => SampleMode::Manifold,
            Some(BaselineArg::Strength) => SampleMode::Strength,
            Some(BaselineArg::Convex) => SampleMode::Convex,
        },
        lambdas: a.lambdas.clone(),
        weights: a.weights.clone(),
        epsilon: a.epsilon,
        alpha: a.alpha,
        alpha_range,
        count: a.count,
        seed: a.seed,
        latent: None,
        decode: false,
    };
    let s = sample_settings(&m.attribute, &req);
    let samples = match req.mode {
        SampleMode::Manifold => match &req.lambdas {
            Some(l) => vec![sample_style(m, l, s.epsilon, s.alpha)?],
            None => sample_style_random(m, s.epsilon, s.alpha_range, s.count, s.seed)?,
        },
        SampleMode::Strength => baseline_strength(m, s.alpha_range, s.count, s.seed)?,
        SampleMode::Convex => {
            let w = req
                .weights
                .as_ref()
                .ok_or_else(|| CliError::Usage("--baseline convex needs --weights".into()))?;
            vec![baseline_convex(m, w, s.alpha)?]
        }
    };
    let diversity = style_diversity(&samples)?;
    if let (Some(input), Some(output)) = (&a.input, &a.output) {
        let (_, latents) = read_latents(input)?;
        let w = latents
            .get(a.index)
            .ok_or_else(|| CliError::Failed(format!("{} holds {} latents", input.display(), latents.len())))?;
        let edited = samples
            .iter()
            .map(|sample| apply_style(w, m, sample))
            .collect::<Result<Vec<_>, _>>()?;
        let prov = (0..edited.len())
            .map(|i| format!("style {} sample {i} of {}[{}]", a.manifold, input.display(), a.index))
            .collect();
        save_latents(output, &LatentBatch::with_provenance(&m.attribute, edited, prov)?)?;
    }
    out.emit(
        &StyleSampleOutput {
            samples: &samples,
            diversity,
            output: a.output.as_deref(),
        },
        || {
            let mut s = String::new();
            for (i, sample) in samples.iter().enumerate() {
                let c = sample.b.dot(&m.v_star).unwrap_or(f64::NAN);
                s.push_str(&format!(
                    "sample {i}: alpha {:.4}  cos(b, v*) {c:.6}  lambdas {}\n",
                    sample.alpha,
                    fmt_list(&sample.lambdas, 6)
                ));
            }
            s.push_str(&format!("diversity (mean 1 - cos) {diversity:.6}"));
            if let Some(o) = &a.output {
                s.push_str(&format!("\nedited latents -> {}", o.display()));
            }
            s
        },
    );
    Ok(())
}

fn stats(out: &Out, a: StatsArgs) -> CliResult {
    let stats: SimilarityStats = match (&a.library, &a.pairs) {
        (Some(lib), None) => {
            let attr = a.attr.as_deref().expect("clap requires --attr");
            let lib = existing_library(lib)?;
            let dirs: Vec<_> = lib.directions_for(attr).into_iter().cloned().collect();
            pairwise_stats(&dirs)?
        }
        (None, Some(path)) => {
            let ds = load_dataset::<f64>(path)?;
            if a.subsets < 2 || ds.len() < a.subsets {
                return Err(CliError::Usage(format!(
                    "need at least 2 subsets and one pair per subset ({} pairs, {} subsets)",
                    ds.len(),
                    a.subsets
                )));
            }
            let size = ds.len() / a.subsets;
            let dirs = (0..a.subsets)
                .map(|s| {
                    let idx: Vec<usize> = (s * size..(s + 1) * size).collect();
                    estimate_direction(&ds.select(&idx)?, a.method.into(), LayerMask::all(ds.layers()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            pairwise_stats(&dirs)?
        }
        _ => return Err(CliError::Usage("give --library with --attr, or --pairs".into())),
    };
    out.emit(&stats, || {
        let e = stats.bin_edges;
        let mut s = String::from("cosine bin      frequency\n");
        for i in 0..4 {
            let close = if i == 3 { ']' } else { ')' };
            s.push_str(&format!(
                "[{:.1}, {:.1}{close}    {:.3}\n",
                e[i],
                e[i + 1],
                stats.normalized_frequency[i]
            ));
        }
        s.push_str(&format!("mean {:.3} over {} pairs", stats.mean, stats.pairs));
        s
    });
    Ok(())
}

#[derive(Serialize)]
struct BlendOutput<'a> {
    output: &'a Path,
    width: usize,
    height: usize,
    flipped: bool,
}

fn blend(out: &Out, a: BlendArgs) -> CliResult {
    let source = RasterImage::load_png(&a.source)?;
    let mut img = match (&a.negative, &a.mask) {
        (Some(neg), Some(mask)) => blend_pair(&source, &RasterImage::load_png(neg)?, &PartMask::load_png(mask)?)?,
        _ if a.flip => source,
        _ => return Err(CliError::Usage("give --negative and --mask, or --flip".into())),
    };
    if a.flip {
        img = flip_horizontal(&img);
    }
    img.save_png(&a.output)?;
    out.emit(
        &BlendOutput {
            output: &a.output,
            width: img.width(),
            height: img.height(),
            flipped: a.flip,
        },
        || format!("{}x{} -> {}", img.width(), img.height(), a.output.display()),
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RecoveryReport {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub trials: u64,
    pub pairs: usize,
    pub noise: f64,
    pub scores: Vec<f64>,
    pub seconds: f64,
}

/// Trial `t` plants attribute `t % K` in world `seed + t` and draws pairs
/// with seed `seed * 1_000_003 + t`.
pub fn recovery_trials(
    world: &WorldArgs,
    pairs: usize,
    noise: f64,
    noise_scale: NoiseScale,
    trials: u64,
    method: Method,
) -> Result<RecoveryReport, wplus::Error> {
    let start = Instant::now();
    let mut scores = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let w = make_world::<f64>(
            world.seed.wrapping_add(t),
            world.layers,
            world.dim,
            world.attributes,
            world.identity,
            world.features,
        )?;
        let j = (t % world.attributes.max(1) as u64) as usize;
        let mut spec = PairSpec::new(j, pairs, noise, world.seed.wrapping_mul(1_000_003).wrapping_add(t));
        spec.noise = noise_scale;
        let ds = generate_pairs(&w, &spec)?;
        let dir = estimate_direction(&ds, method, LayerMask::all(world.layers))?;
        scores.push(recovery_score(&w, j, &dir)?);
    }
    let n = scores.len().max(1) as f64;
    Ok(RecoveryReport {
        mean: scores.iter().sum::<f64>() / n,
        min: scores.iter().copied().fold(f64::INFINITY, f64::min),
        max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        trials,
        pairs,
        noise,
        scores,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn world_of(w: &WorldArgs) -> CliResult<wplus::PlantedWorld64> {
    Ok(make_world(
        w.seed,
        w.layers,
        w.dim,
        w.attributes,
        w.identity,
        w.features,
    )?)
}

fn oracle(out: &Out, c: OracleCommand) -> CliResult {
    match c {
        OracleCommand::Recover {
            world,
            pairs,
            noise,
            noise_scale,
            trials,
            method,
        } => {
            if trials == 0 {
                return Err(CliError::Usage("--trials must be positive".into()));
            }
            let r = recovery_trials(&world, pairs, noise, noise_scale.into(), trials, method.into())?;
            out.emit(&r, || {
                format!(
                    "recovery {:.6} (min {:.6}, max {:.6}) over {} trials, {} pairs, noise {}",
                    r.mean, r.min, r.max, r.trials, r.pairs, r.noise
                )
            });
        }
        OracleCommand::Pairs {
            world,
            attr,
            pairs,
            noise,
            noise_scale,
            pair_seed,
            output,
        } => {
            let w = world_of(&world)?;
            let mut spec = PairSpec::new(attr, pairs, noise, pair_seed.unwrap_or(world.seed));
            spec.noise = noise_scale.into();
            let ds = generate_pairs(&w, &spec)?;
            save_dataset(&output, &ds)?;
            #[derive(Serialize)]
            struct PairsOutput<'a> {
                output: &'a Path,
                attribute: &'a str,
                pairs: usize,
                layers: usize,
                dim: usize,
                hash: String,
            }
            out.emit(
                &PairsOutput {
                    output: &output,
                    attribute: ds.attribute(),
                    pairs: ds.len(),
                    layers: ds.layers(),
                    dim: ds.dim(),
                    hash: dataset_hash(&ds),
                },
                || format!("{} pairs of {} -> {}", ds.len(), ds.attribute(), output.display()),
            );
        }
        OracleCommand::Latents { world, count, output } => {
            let w = world_of(&world)?;
            let ds = generate_pairs(&w, &PairSpec::new(0, count, 0.0, world.seed.wrapping_add(1)))?;
            let latents: Vec<_> = ds.pairs().iter().map(|(_, n)| n.clone()).collect();
            save_latents(&output, &LatentBatch::new("oracle", latents)?)?;
            out.emit(&serde_json::json!({ "output": output, "count": count }), || {
                format!("{count} latents -> {}", output.display())
            });
        }
    }
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    if !(a.bridge_timeout > 0.0) || !a.bridge_timeout.is_finite() {
        return Err(CliError::Usage("--bridge-timeout must be positive".into()));
    }
    let config = ServeConfig {
        host: a.host,
        port: a.port,
        library: a.library,
        bridge_url: effective_bridge_url(a.bridge_url),
        bridge_timeout: Duration::from_secs_f64(a.bridge_timeout),
        oracle: a.oracle_seed.map(|seed| OracleSpec {
            seed,
            layers: a.oracle_layers,
            dim: a.oracle_dim,
        }),
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let server = Server::bind(config)
            .await
            .map_err(|e| CliError::Failed(e.to_string()))?;
        eprintln!("wplus listening on http://{}", server.local_addr());
        server.run().await.map_err(CliError::from)
    })
}

fn import(out: &Out, a: ImportNpyArgs) -> CliResult {
    let latents = import_npy::<f64>(&a.input)?.into_vec();
    let label = a.label.clone().unwrap_or_else(|| {
        a.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "npy".into())
    });
    let name = a.input.display().to_string();
    let prov = (0..latents.len()).map(|i| format!("npy {name}[{i}]")).collect();
    let batch = LatentBatch::with_provenance(&label, latents, prov)?;
    save_latents(&a.output, &batch)?;
    #[derive(Serialize)]
    struct ImportOutput<'a> {
        output: &'a Path,
        count: usize,
        layers: usize,
        dim: usize,
    }
    out.emit(
        &ImportOutput {
            output: &a.output,
            count: batch.len(),
            layers: batch.layers(),
            dim: batch.dim(),
        },
        || {
            format!(
                "{} latents of {}x{} -> {}",
                batch.len(),
                batch.layers(),
                batch.dim(),
                a.output.display()
            )
        },
    );
    Ok(())
}
