use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use swarm_discovery::config::Config;
use swarm_discovery::controller::heuristic::{heuristic_score, BoundaryConvention, FilterSummary};
use swarm_discovery::controller::{Controller, DiscretizedSpace, SensorKind};
use swarm_discovery::discovery::evolution::archive_path;
use swarm_discovery::discovery::{archive_taxonomy, run_novelty_search, Archive, SearchContext, TaxonomyReport};
use swarm_discovery::eval::accuracy::{l2_accuracy, random_init_accuracy};
use swarm_discovery::eval::manifest::MANIFEST_FILE;
use swarm_discovery::eval::synthetic::shapes_dataset;
use swarm_discovery::eval::{build_dataset, count_distinct, Classifier, DatasetSpec, Manifest};
use swarm_discovery::hil::server::{serve, AppState, ServerOptions};
use swarm_discovery::hil::{finetune, HilError, LabelStore};
use swarm_discovery::nn::train::{pretrain, TrainReport};
use swarm_discovery::nn::{checkpoint, Network, NetworkSpec};
use swarm_discovery::pipeline::{derive_seed, MappingChoice, RolloutSettings};
use swarm_discovery::render::{pgm, TrajectoryImage};
use swarm_discovery::Error;

#[derive(Debug, Parser)]
#[command(name = "swarm-discovery", version, about = "Emergent-behavior discovery for computation-free swarms")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Behavior mapping: `hand` or `net:<checkpoint>`.
    #[arg(long, global = true, default_value = "hand")]
    mapping: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Use `<=` instead of `<` at the metric thresholds.
    #[arg(long)]
    non_strict: bool,
    /// Disable the heuristic filter.
    #[arg(long)]
    no_filter: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roll out one controller; writes trajectory.csv, image.pgm and features.json.
    Simulate {
        /// Comma-separated: 4 velocities, or 8 velocities and the sensor angle in radians.
        #[arg(long, allow_hyphen_values = true)]
        controller: String,
    },
    /// Score the discretized controller space with the heuristic filter.
    Filter {
        #[arg(long, default_value = "single")]
        sensors: String,
        /// Only the first N controllers (required for the two-sensor space).
        #[arg(long)]
        limit: Option<u64>,
        #[arg(long)]
        non_strict: bool,
    },
    /// Embed controllers listed one per row in a CSV file.
    Embed {
        #[arg(long)]
        input: PathBuf,
    },
    /// Sample, simulate and render a dataset.
    Dataset {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value = "single")]
        sensors: String,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Pretrain the embedding network with augmentation triplets.
    Pretrain {
        #[arg(long)]
        dataset: PathBuf,
        /// Start from this checkpoint instead of a fresh network.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Serve the labeling API.
    Serve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Fine-tune a checkpoint on the labels in a label journal.
    Finetune {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Novelty search; writes archive.jsonl and images/.
    Evolve {
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        sensors: Option<String>,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Cluster an archive with k-medoids.
    Taxonomy {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, default_value_t = 12)]
        k: usize,
    },
    /// Triplet accuracy of the mapping on a labeled dataset.
    EvalAccuracy {
        /// Labeled dataset directory; omit for a synthetic shapes set.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        synthetic: usize,
        /// Also report the mean over this many random initializations.
        #[arg(long, default_value_t = 0)]
        random_seeds: usize,
    },
    /// Count distinct behaviors among taxonomy medoids.
    EvalDistinct {
        #[arg(long)]
        taxonomy: PathBuf,
        /// JSON object of image id to behavior name; signature rules otherwise.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Hil(#[from] HilError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) | CliError::Hil(HilError::Core(e)) => e.exit_code() as u8,
            CliError::Hil(_) => 1,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn sensors(s: &str) -> Result<SensorKind, Error> {
    match s {
        "single" => Ok(SensorKind::Single),
        "two" => Ok(SensorKind::Two),
        _ => Err(Error::contract(format!("sensors must be `single` or `two`, got {s:?}"))),
    }
}

fn parse_controller(text: &str) -> Result<Controller, Error> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::contract(format!("bad controller value {v:?}"))))
        .collect::<Result<_, _>>()?;
    Controller::from_values(&values)
}

fn controller_text(c: &Controller) -> String {
    c.values().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::format("json output", e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format("csv", format!("{other:?}")),
    }
}

fn convention(non_strict: bool, configured: BoundaryConvention) -> BoundaryConvention {
    if non_strict {
        BoundaryConvention::NonStrict
    } else {
        configured
    }
}

fn load_net(path: &Path) -> Result<Network<f32>, Error> {
    Ok(checkpoint::load(path)?.0)
}

fn write_train_log(path: &Path, report: &TrainReport) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["epoch", "loss", "learning_rate"]).map_err(csv_err(path))?;
    for e in &report.log {
        w.serialize((e.epoch, e.loss, e.learning_rate)).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn labeled_manifest_images(dataset: &Path) -> Result<(Vec<TrajectoryImage>, Vec<String>), Error> {
    let manifest = Manifest::read(&dataset.join(MANIFEST_FILE))?;
    let images = manifest.load_images(dataset)?;
    let mut out = (Vec::new(), Vec::new());
    for (img, r) in images.into_iter().zip(&manifest.records) {
        if let Some(l) = &r.label {
            out.0.push(img);
            out.1.push(l.clone());
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> CliResult {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let mapping: MappingChoice = cli.mapping.parse()?;
    let settings: RolloutSettings = config.rollout;
    let out = cli.out.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    match cli.command {
        Command::Simulate { controller } => {
            let c = parse_controller(&controller)?;
            let (traj, image) = settings.evaluate(&c, config.seed)?;
            let path = out.join("trajectory.csv");
            traj.write_csv(create(&path)?).map_err(csv_err(&path))?;
            pgm::write(&out.join("image.pgm"), &image)?;
            let features = swarm_discovery::behavior::hand_features_over(&traj, traj.frames.len() - settings.window, settings.window)?;
            write_json(&out.join("features.json"), &features)?;
            let report = heuristic_score(&c, &config.filter.thresholds, config.filter.convention);
            println!("controller {} score {} passes {}", controller_text(&c), report.score, report.passes);
            println!("{}", serde_json::to_string(&features).map_err(|e| Error::format("features", e))?);
        }
        Command::Filter { sensors: kind, limit, non_strict } => {
            let kind = sensors(&kind)?;
            let total = DiscretizedSpace::cardinality(kind);
            let end = match (kind, limit) {
                (_, Some(n)) => n.min(total),
                (SensorKind::Single, None) => total,
                (SensorKind::Two, None) => {
                    return Err(Error::contract("the two-sensor space is too large to enumerate; pass --limit").into())
                }
            };
            let conv = convention(non_strict, config.filter.convention);
            let path = out.join("filter.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["controller", "m1", "m2", "m3", "m4", "m5", "score", "passes"]).map_err(csv_err(&path))?;
            let mut summary = FilterSummary::default();
            for c in DiscretizedSpace::range(kind, 0, end) {
                let r = heuristic_score(&c, &config.filter.thresholds, conv);
                summary.record(r.passes);
                let m = r.metrics.0;
                w.serialize((controller_text(&c), m[0], m[1], m[2], m[3], m[4], r.score, r.passes))
                    .map_err(csv_err(&path))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            println!(
                "total {} passed {} filtered {} ({:.2}%)",
                summary.total,
                summary.passed,
                summary.filtered,
                100.0 * summary.filtered_fraction()
            );
        }
        Command::Embed { input } => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .from_path(&input)
                .map_err(csv_err(&input))?;
            let mut controllers = Vec::new();
            for rec in reader.records() {
                let rec = rec.map_err(csv_err(&input))?;
                controllers.push(parse_controller(&rec.iter().collect::<Vec<_>>().join(","))?);
            }
            let m = mapping.build(settings.window)?;
            let rows: Vec<Vec<f64>> = controllers
                .par_iter()
                .enumerate()
                .map(|(i, c)| {
                    let (traj, img) = settings.evaluate(c, derive_seed(config.seed, 2, i as u64))?;
                    Ok(m.embed(&traj, &img)?.values)
                })
                .collect::<Result<_, Error>>()?;
            let path = out.join("embed.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            let dim = rows.first().map_or(0, Vec::len);
            let mut header = vec!["controller".to_string()];
            header.extend((1..=dim).map(|i| format!("e{i}")));
            w.write_record(&header).map_err(csv_err(&path))?;
            for (c, row) in controllers.iter().zip(&rows) {
                let mut rec = vec![controller_text(c)];
                rec.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&rec).map_err(csv_err(&path))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            log::info!("embedded {} controllers with {}", rows.len(), m.id());
        }
        Command::Dataset { count, sensors: kind, filter } => {
            let spec = DatasetSpec {
                count,
                sensors: sensors(&kind)?,
                seed: config.seed,
                filter: config.filter.enabled && !filter.no_filter,
                thresholds: config.filter.thresholds,
                convention: convention(filter.non_strict, config.filter.convention),
                settings,
            };
            let manifest = build_dataset(&spec, out)?;
            println!("wrote {} records to {}", manifest.records.len(), out.join(MANIFEST_FILE).display());
        }
        Command::Pretrain { dataset, init } => {
            let manifest = Manifest::read(&dataset.join(MANIFEST_FILE))?;
            let images = manifest.load_images(&dataset)?;
            let mut net = match init {
                Some(p) => load_net(&p)?,
                None => Network::init(NetworkSpec::default_embedding(), &mut ChaCha8Rng::seed_from_u64(config.seed))?,
            };
            let report = pretrain(&mut net, &images, &config.train, config.seed)?;
            write_train_log(&out.join("pretrain_log.csv"), &report)?;
            let path = out.join("embedding.swemb");
            checkpoint::save(&path, &net, serde_json::json!({ "train": config.train, "seed": config.seed }))?;
            println!("{} epochs ({:?}); checkpoint {}", report.log.len(), report.stop, path.display());
        }
        Command::Serve { dataset, checkpoint: ckpt, labels, bind } => {
            let net = load_net(&ckpt)?;
            let labels = labels.unwrap_or(config.hil.labels.clone());
            let options = ServerOptions {
                token: config.hil.token.clone(),
                train: config.train.clone(),
                checkpoint_out: Some(out.join("finetuned.swemb")),
                seed: config.seed,
            };
            let state = AppState::from_dataset(&dataset, &labels, net, options)?;
            let bind = bind.unwrap_or(config.hil.bind.clone());
            let addr = bind
                .parse()
                .map_err(|_| Error::contract(format!("bad bind address {bind:?}")))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            rt.block_on(serve(addr, state))?;
        }
        Command::Finetune { dataset, checkpoint: ckpt, labels } => {
            let net = load_net(&ckpt)?;
            let manifest = Manifest::read(&dataset.join(MANIFEST_FILE))?;
            let images = manifest.load_images(&dataset)?;
            let store = LabelStore::open(&labels)?;
            let (mut imgs, mut classes) = (Vec::new(), Vec::new());
            for (img, r) in images.iter().zip(&manifest.records) {
                if let Some(l) = store.label_of(&r.id) {
                    imgs.push(img.clone());
                    classes.push(l.class_id);
                }
            }
            let (tuned, report) = finetune(&net, &imgs, &classes, &config.train, config.seed)?;
            let path = out.join("finetuned.swemb");
            checkpoint::save(&path, &tuned, serde_json::json!({ "finetune": report }))?;
            write_json(&out.join("finetune_report.json"), &report)?;
            println!(
                "{} labeled images, {} triplets; held-out accuracy {:?} -> {:?}",
                imgs.len(),
                report.triplets,
                report.held_out_before,
                report.held_out_after
            );
        }
        Command::Evolve { generations, population, sensors: kind, filter } => {
            let mut cfg = config.evolution.clone();
            cfg.seed = config.seed;
            if let Some(g) = generations {
                cfg.generations = g;
            }
            if let Some(p) = population {
                cfg.population = p;
            }
            if let Some(k) = kind {
                cfg.sensors = sensors(&k)?;
            }
            cfg.filter = cfg.filter && config.filter.enabled && !filter.no_filter;
            let m = mapping.build(settings.window)?;
            let ctx = SearchContext {
                settings,
                mapping: m.as_ref(),
                thresholds: config.filter.thresholds,
                convention: convention(filter.non_strict, config.filter.convention),
                out_dir: Some(out.to_path_buf()),
            };
            let archive = run_novelty_search(&cfg, &ctx)?;
            println!("archive of {} entries at {}", archive.len(), archive_path(out).display());
        }
        Command::Taxonomy { archive, k } => {
            let a = Archive::read_jsonl(&archive)?;
            let t = archive_taxonomy(&a, k)?;
            let report = TaxonomyReport::new(&a, &t);
            let images = archive.parent().map(|d| d.join("images"));
            report.write(out, images.as_deref())?;
            println!("k={} cost={:.4}; wrote {}", report.k, report.cost, out.join("taxonomy.json").display());
        }
        Command::EvalAccuracy { dataset, synthetic, random_seeds } => {
            let (images, labels): (Vec<TrajectoryImage>, Vec<String>) = match &dataset {
                Some(d) => labeled_manifest_images(d)?,
                None => {
                    let (imgs, kinds) = shapes_dataset(synthetic, settings.image_size, &mut ChaCha8Rng::seed_from_u64(config.seed));
                    (imgs, kinds.iter().map(|k| k.name().to_string()).collect())
                }
            };
            let report = match &mapping {
                MappingChoice::Net(p) => {
                    let net = load_net(p)?;
                    swarm_discovery::eval::network_accuracy(&cli.mapping, &net, &images, &labels)?
                }
                MappingChoice::Hand => {
                    let Some(d) = &dataset else {
                        return Err(Error::contract("the hand mapping needs a simulated --dataset").into());
                    };
                    let manifest = Manifest::read(&d.join(MANIFEST_FILE))?;
                    let m = mapping.build(settings.window)?;
                    let emb: Vec<Vec<f64>> = manifest
                        .records
                        .par_iter()
                        .filter(|r| r.label.is_some())
                        .map(|r| {
                            let (traj, img) = settings.evaluate(&r.controller, r.seed)?;
                            Ok(m.embed(&traj, &img)?.values)
                        })
                        .collect::<Result<_, Error>>()?;
                    l2_accuracy(m.id(), &emb, &labels)?
                }
            };
            println!("{}: {:.2}% ({} of {} triplets)", report.mapping_id, report.percentage, report.correct, report.admissible);
            let mut summary = serde_json::json!({ "accuracy": report });
            if random_seeds > 0 {
                let (mean, per_seed) = random_init_accuracy(&NetworkSpec::default_embedding(), &images, &labels, 0..random_seeds as u64)?;
                println!("random initialization: {mean:.2}% mean over {random_seeds} seeds");
                summary["random_init"] = serde_json::json!({ "mean": mean, "per_seed": per_seed });
            }
            write_json(&out.join("accuracy.json"), &summary)?;
        }
        Command::EvalDistinct { taxonomy, labels } => {
            let t = TaxonomyReport::read(&taxonomy)?;
            let classifier = match labels {
                Some(p) => {
                    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
                    let map: HashMap<String, String> =
                        serde_json::from_slice(&bytes).map_err(|e| Error::format("label file", e))?;
                    Classifier::Labels(map)
                }
                None => Classifier::Signatures(config.signature_rules()?),
            };
            let medoids: Vec<_> = t.medoids.into_iter().map(|m| m.entry).collect();
            let report = count_distinct(&medoids, &classifier, &settings)?;
            write_json(&out.join("distinct.json"), &report)?;
            println!("{}", report.table_row(&taxonomy.display().to_string()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
