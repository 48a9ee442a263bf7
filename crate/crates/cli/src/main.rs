use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use captain_core::annotation::{load_bundle, AnnotationBundle, Category, Corpus};
use captain_core::arpose::{elbow_scan, image_pose, kmeans, ClusterReport, KMeansConfig};
use captain_core::cade::{extract_cade_features, train_mcmsvm, SvmModel, SvmParams};
use captain_core::index::{
    CompositionModel, Decomposer, CLASS_MAP_FILE, CLUSTERS_FILE, SVM_FILE, THRESHOLDS_FILE,
};
use captain_core::matching::evaluate_shots;
use captain_core::retrieval::{query, UspWeights};
use captain_core::{par, synthetic};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "captain", version, about = "Photo composition retrieval and shot matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, extend or inspect a composition model.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Rank model images against a query shot.
    Query(QueryArgs),
    /// Pick the favorite among candidate shots for a style set (JSON output).
    Match(MatchArgs),
    /// Train or evaluate the portrait-category classifier.
    #[command(subcommand)]
    Cade(CadeCommand),
    /// Pose clustering.
    #[command(subcommand)]
    Arpose(ArposeCommand),
    /// Print the decomposition of one bundle.
    Decompose(DecomposeArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum IndexCommand {
    Build(BuildArgs),
    Append(AppendArgs),
    Info {
        #[arg(long)]
        model: PathBuf,
    },
}

/// Optional decomposer configuration, copied into the model directory.
#[derive(Args)]
struct ConfigFiles {
    #[arg(long)]
    svm: Option<PathBuf>,
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long)]
    class_map: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    /// Corpus directory.
    corpus: PathBuf,
    /// Model directory to write.
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigFiles,
}

#[derive(Args)]
struct AppendArgs {
    #[arg(long)]
    model: PathBuf,
    /// Bundle directories to add.
    #[arg(required = true)]
    bundles: Vec<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    model: PathBuf,
    /// Query bundle directory.
    #[arg(long, conflicts_with = "image_id", required_unless_present = "image_id")]
    bundle: Option<PathBuf>,
    /// Use an indexed image as the query.
    #[arg(long)]
    image_id: Option<String>,
    /// Block weights, e.g. `vgg=2,iod=1`. Unlisted blocks get 0.
    #[arg(long)]
    weights: Option<UspWeights>,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    model: PathBuf,
    /// JSON file with `preferred` and `ignored` image id lists.
    #[arg(long)]
    style: PathBuf,
    /// Directory of candidate shot bundles.
    #[arg(long)]
    shots: PathBuf,
    #[arg(long)]
    weights: Option<UspWeights>,
    /// Corpus holding the style images, for the pose comparison.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Pose-distance exponent.
    #[arg(long, default_value_t = 1.0)]
    q: f64,
}

#[derive(Deserialize)]
struct StyleFile {
    preferred: Vec<String>,
    #[serde(default)]
    ignored: Vec<String>,
}

#[derive(Subcommand)]
enum CadeCommand {
    Train {
        /// Corpus whose bundles carry category labels.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
}

#[derive(Subcommand)]
enum ArposeCommand {
    Cluster {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 15)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the clusters for use by the decomposer.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Members listed per cluster in the report.
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Also scan k = 1..=N and print the distortion curve.
        #[arg(long)]
        elbow: Option<usize>,
    },
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Model directory whose configuration to use.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Include the full feature record.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "CAPTAIN_MODEL")]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Keep sessions in this JSON file across restarts.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 48)]
    height: usize,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match Cli::parse().command {
        Command::Index(IndexCommand::Build(a)) => index_build(a),
        Command::Index(IndexCommand::Append(a)) => index_append(a),
        Command::Index(IndexCommand::Info { model }) => {
            let header = CompositionModel::read_header(&model)?;
            println!("{}", serde_json::to_string_pretty(&header)?);
            Ok(())
        }
        Command::Query(a) => run_query(a),
        Command::Match(a) => run_match(a),
        Command::Cade(c) => run_cade(c),
        Command::Arpose(ArposeCommand::Cluster {
            corpus,
            k,
            restarts,
            seed,
            out,
            top,
            elbow,
        }) => arpose_cluster(&corpus, k, restarts, seed, out.as_deref(), top, elbow),
        Command::Decompose(a) => run_decompose(a),
        Command::Serve(a) => run_serve(a),
        Command::Synth(a) => run_synth(a),
    }
}

fn load_bundles(dir: &Path) -> Result<Vec<AnnotationBundle>> {
    let corpus = Corpus::open_or_scan(dir).with_context(|| format!("opening {}", dir.display()))?;
    corpus
        .bundles
        .iter()
        .map(|b| load_bundle(b).with_context(|| format!("reading {}", b.display())))
        .collect()
}

fn index_build(a: BuildArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let copies = [
        (&a.config.svm, SVM_FILE),
        (&a.config.clusters, CLUSTERS_FILE),
        (&a.config.thresholds, THRESHOLDS_FILE),
        (&a.config.class_map, CLASS_MAP_FILE),
    ];
    for (src, name) in copies {
        if let Some(src) = src {
            fs::copy(src, a.out.join(name)).with_context(|| format!("copying {}", src.display()))?;
        }
    }
    let decomposer = Decomposer::from_model_dir(&a.out)?;
    let corpus = Corpus::open_or_scan(&a.corpus)?;
    let (model, report) = CompositionModel::build(&corpus, &decomposer)?;
    for f in &report.failures {
        eprintln!("skipped {}: {}", f.source, f.error);
    }
    model.save(&a.out)?;
    println!("indexed {} of {} bundles into {}", report.indexed, corpus.len(), a.out.display());
    Ok(())
}

fn index_append(a: AppendArgs) -> Result<()> {
    let decomposer = Decomposer::from_model_dir(&a.model)?;
    let mut model = CompositionModel::load(&a.model)?;
    for dir in &a.bundles {
        let bundle = load_bundle(dir).with_context(|| format!("reading {}", dir.display()))?;
        model.append(&bundle, &decomposer)?;
    }
    model.save(&a.model)?;
    println!("model now holds {} images", model.len());
    Ok(())
}

fn run_query(a: QueryArgs) -> Result<()> {
    let model = CompositionModel::load(&a.model)?;
    let record = match (&a.bundle, &a.image_id) {
        (Some(dir), _) => Decomposer::from_model_dir(&a.model)?.decompose(&load_bundle(dir)?)?,
        (None, Some(id)) => model.record_by_id(id)?,
        (None, None) => bail!("pass --bundle or --image-id"),
    };
    let w = a.weights.unwrap_or_else(UspWeights::uniform);
    let ranked = query(&model, &record, &w, a.top)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&ranked)?);
        return Ok(());
    }
    println!("weights {w}");
    println!("{:>4}  {:<24} {:>9}  vgg      iod      cade     arpose   stat     gender", "rank", "image", "score");
    for (i, r) in ranked.iter().enumerate() {
        let b = &r.breakdown;
        println!(
            "{:>4}  {:<24} {:>9.6}  {:.5}  {:.5}  {:.5}  {:.5}  {:.5}  {:.5}",
            i + 1,
            r.image_id,
            r.score,
            b.vgg,
            b.iod,
            b.cade,
            b.arpose,
            b.stat,
            b.gender
        );
    }
    Ok(())
}

fn run_match(a: MatchArgs) -> Result<()> {
    ensure!(a.q >= 1.0, "--q must be at least 1");
    let model = CompositionModel::load(&a.model)?;
    let decomposer = Decomposer::from_model_dir(&a.model)?;
    let style: StyleFile = serde_json::from_slice(&fs::read(&a.style)?).context("parsing style file")?;
    let bundles = load_bundles(&a.shots)?;
    ensure!(!bundles.is_empty(), "no shot bundles in {}", a.shots.display());
    let shots = par::map(&bundles, |b| decomposer.decompose(b).map(|r| (r, b.dominant_person().cloned())))
        .into_iter()
        .collect::<captain_core::Result<Vec<_>>>()?;
    let entries = match &a.corpus {
        Some(root) => Corpus::open_or_scan(root)?.entries()?,
        None => BTreeMap::new(),
    };
    let w = a.weights.unwrap_or_else(UspWeights::uniform);
    let report = evaluate_shots(
        &model,
        &style.preferred,
        &style.ignored,
        &shots,
        |id| {
            let entry = entries.get(id)?;
            load_bundle(&entry.dir).ok()?.dominant_person().cloned()
        },
        &w,
        a.q,
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn labeled_features(dir: &Path, decomposer: &Decomposer) -> Result<(Vec<(Vec<f64>, Category)>, usize)> {
    let bundles = load_bundles(dir)?;
    let total = bundles.len();
    let samples = bundles
        .iter()
        .filter_map(|b| {
            b.category.map(|c| {
                let f = extract_cade_features(b, &decomposer.class_map, &decomposer.thresholds);
                (f.as_slice().to_vec(), c)
            })
        })
        .collect();
    Ok((samples, total))
}

fn run_cade(cmd: CadeCommand) -> Result<()> {
    let decomposer = Decomposer::default();
    match cmd {
        CadeCommand::Train {
            corpus,
            out,
            c,
            gamma,
            tol,
        } => {
            let (samples, total) = labeled_features(&corpus, &decomposer)?;
            ensure!(!samples.is_empty(), "none of the {total} bundles carries a category label");
            let params = SvmParams {
                c,
                gamma,
                tol,
                ..SvmParams::default()
            };
            let model = train_mcmsvm(&samples, &params)?;
            let correct = samples.iter().filter(|(x, c)| model.predict(x).ok() == Some(*c)).count();
            model.save(&out)?;
            println!(
                "trained {} pairwise classifiers on {} samples; training accuracy {:.2}%",
                model.binaries.len(),
                samples.len(),
                100.0 * correct as f64 / samples.len() as f64
            );
        }
        CadeCommand::Eval { model, corpus } => {
            let model = SvmModel::load(&model)?;
            let (samples, _) = labeled_features(&corpus, &decomposer)?;
            ensure!(!samples.is_empty(), "no labeled bundles");
            let mut confusion = [[0usize; Category::COUNT]; Category::COUNT];
            for (x, truth) in &samples {
                confusion[truth.index()][model.predict(x)?.index()] += 1;
            }
            let correct: usize = (0..Category::COUNT).map(|i| confusion[i][i]).sum();
            println!("accuracy {:.2}% ({correct}/{})", 100.0 * correct as f64 / samples.len() as f64, samples.len());
            println!("rows: truth, columns: prediction");
            for (i, row) in confusion.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|n| format!("{n:>4}")).collect();
                println!("{:<14}{}", Category::ALL[i].name(), cells.join(""));
            }
        }
    }
    Ok(())
}

fn arpose_cluster(
    corpus: &Path,
    k: usize,
    restarts: usize,
    seed: u64,
    out: Option<&Path>,
    top: usize,
    elbow: Option<usize>,
) -> Result<()> {
    let bundles = load_bundles(corpus)?;
    let (ids, features): (Vec<String>, Vec<Vec<f64>>) = bundles
        .iter()
        .filter_map(|b| image_pose(b).map(|p| (b.image_id.clone(), p)))
        .unzip();
    ensure!(!features.is_empty(), "no bundle has a usable pose");
    eprintln!("{} of {} bundles have a usable pose", features.len(), bundles.len());
    if let Some(k_max) = elbow {
        let scan = elbow_scan(&features, k_max.min(features.len()), restarts, seed)?;
        for (k, d) in &scan.points {
            eprintln!("k={k:<3} distortion {d:.6}");
        }
        if let Some(k) = scan.largest_drop_at() {
            eprintln!("largest drop at k={k}");
        }
    }
    let clusters = kmeans(&features, &KMeansConfig::new(k, restarts, seed))?;
    if let Some(out) = out {
        fs::write(out, serde_json::to_vec(&clusters)?)?;
    }
    let report = ClusterReport::new(&clusters, &ids, &features, top);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run_decompose(a: DecomposeArgs) -> Result<()> {
    let decomposer = match &a.model {
        Some(dir) => Decomposer::from_model_dir(dir)?,
        None => Decomposer::default(),
    };
    let d = decomposer.decompose_detailed(&load_bundle(&a.bundle)?)?;
    let mut value = serde_json::to_value(&d)?;
    if !a.full {
        value.as_object_mut().expect("decomposition is an object").remove("record");
    }
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn run_serve(a: ServeArgs) -> Result<()> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().context("parsing --host/--port")?;
    let config = captain_service::ServiceConfig {
        model: a.model,
        corpus: a.corpus,
        snapshot: a.snapshot,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(captain_service::serve(&config, addr))?;
    Ok(())
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let spec = synthetic::BundleSpec {
        width: a.width,
        height: a.height,
        ..synthetic::BundleSpec::default()
    };
    let bundles = synthetic::random_corpus(a.seed, a.count, &spec);
    Corpus::write(&a.out, &bundles)?;
    println!("wrote {} bundles to {}", bundles.len(), a.out.display());
    Ok(())
}
