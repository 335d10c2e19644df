use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spoterkit::dataset::{
    load_index, materialize, DatasetIndex, FixtureSpec, GlossVocabulary, LandmarkCache, Split, SyntheticFixture,
    DEFAULT_SUBSET,
};
use spoterkit::model::{
    benchmark_inference, count_parameters, evaluate_split, train, Checkpoint, EvalMetrics, ModelSection, Network,
    RunConfig,
};
use spoterkit::preprocess::{augment, normalize_sequence, AugmentationConfig};
use spoterkit::service::{self, AppState, ServiceConfig, CKPT_ENV, DEFAULT_PORT, PORT_ENV};
use spoterkit::skeletal::{
    cache_key, convert_sequence, extract_landmarks, read_sequence, write_sequence, CommandEstimator, EstimatorAdapter,
    LandmarkMap, RawDump, ESTIMATOR_ENV,
};
use spoterkit::sweep::{run_sweep, DatasetTrialRunner, SearchSpace, DEFAULT_TRIALS};

#[derive(Parser)]
#[command(name = "spoterkit", version, about = "Pose-based isolated sign recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pose estimator on a video and write a landmark file.
    Extract {
        video: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        map: Option<PathBuf>,
        /// Estimator command line; defaults to $SPOTERKIT_ESTIMATOR.
        #[arg(long)]
        estimator: Option<String>,
    },
    /// Convert a raw estimator dump (JSON) into a landmark file.
    Convert {
        rawdump: PathBuf,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        source_id: Option<String>,
    },
    #[command(subcommand)]
    Preprocess(PreprocessCmd),
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Train a classifier on a materialized dataset.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// TOML run config ([model] and [train] tables).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on one split.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Inference latency and parameter count.
    Bench {
        /// Checkpoint to time; without it a randomly initialized model from
        /// --config/--classes is used.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        classes: usize,
        #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        repetitions: usize,
    },
    /// Random search over augmentation settings.
    Sweep {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        sweep_seed: u64,
        #[command(flatten)]
        data: DataArgs,
        /// Base run config; its augmentation section is replaced per trial.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve predictions over HTTP.
    Serve {
        #[arg(long, env = CKPT_ENV)]
        ckpt: PathBuf,
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Allowed CORS origin; repeatable. Defaults to local dev origins.
        #[arg(long = "allow-origin")]
        allow_origin: Vec<String>,
        #[arg(long, default_value_t = 50)]
        max_body_mb: usize,
        #[arg(long, default_value_t = service::DEFAULT_MAX_VIDEO_SECS)]
        max_video_secs: f64,
        #[arg(long)]
        map: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PreprocessCmd {
    /// Normalize a landmark file.
    Normalize {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the normalization report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Apply one seeded augmentation draw to a landmark file.
    Augment {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Key-value augmentation config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Extract and cache landmarks for every index entry.
    Materialize {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        videos: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SUBSET)]
        subset: usize,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        estimator: Option<String>,
    },
    /// Gloss and split counts of an index.
    Stats {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SUBSET)]
        subset: usize,
    },
    /// Write the synthetic 5-gloss fixture (index + populated cache).
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = FixtureSpec::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = FixtureSpec::default().train_per_gloss)]
        train_per_gloss: usize,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    index: PathBuf,
    /// Cache root; landmark files live under <cache>/<map digest>/.
    #[arg(long)]
    cache: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SUBSET)]
    subset: usize,
    #[arg(long)]
    map: Option<PathBuf>,
    /// Estimator version the cache was built with, when it differs from the map's.
    #[arg(long)]
    estimator_version: Option<String>,
}

impl DataArgs {
    fn open(&self) -> Result<(DatasetIndex, GlossVocabulary, LandmarkCache)> {
        let (index, vocab) =
            load_index(&self.index, Some(self.subset)).with_context(|| format!("loading {}", self.index.display()))?;
        let map = load_map(self.map.as_deref())?;
        let version = self.estimator_version.as_deref().unwrap_or(map.estimator_version());
        let cache = LandmarkCache::new(&self.cache, cache_key(&map, version));
        Ok((index, vocab, cache))
    }
}

fn load_map(path: Option<&Path>) -> Result<LandmarkMap> {
    match path {
        Some(p) => LandmarkMap::load(p).with_context(|| format!("loading landmark map {}", p.display())),
        None => Ok(LandmarkMap::mediapipe_holistic()),
    }
}

fn make_estimator(command: Option<&str>, map: LandmarkMap) -> Result<CommandEstimator> {
    Ok(match command {
        Some(line) => CommandEstimator::from_command_line(line, map)?,
        None => CommandEstimator::from_env(map)?,
    })
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(RunConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => Ok(RunConfig::default()),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn metrics_json(m: &EvalMetrics, vocab: &GlossVocabulary) -> serde_json::Value {
    let per_class: serde_json::Map<String, serde_json::Value> = m
        .per_class_accuracy
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|a| (vocab.gloss(i).to_string(), json!(a))))
        .collect();
    json!({
        "top1_macro": m.top1_macro,
        "top1_micro": m.top1_micro,
        "top5_micro": m.top5_micro,
        "samples": m.samples,
        "per_class_accuracy": per_class,
    })
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Extract {
            video,
            out,
            map,
            estimator,
        } => {
            let map = load_map(map.as_deref())?;
            let mut est = make_estimator(estimator.as_deref(), map)?;
            let seq = extract_landmarks(&video, &mut est)?;
            write_sequence(&seq, &out)?;
            log::info!("{} frames at {} fps -> {}", seq.len(), seq.fps, out.display());
        }
        Command::Convert {
            rawdump,
            map,
            out,
            label,
            source_id,
        } => {
            let map = load_map(map.as_deref())?;
            let dump = RawDump::load(&rawdump)?;
            let mut seq = convert_sequence(&dump.frames, dump.fps, &map)?;
            seq.label = label;
            seq.source_id = source_id.unwrap_or_else(|| {
                rawdump
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            write_sequence(&seq, &out)?;
            log::info!("{} frames -> {}", seq.len(), out.display());
        }
        Command::Preprocess(PreprocessCmd::Normalize { input, out, report }) => {
            let seq = read_sequence(&input)?;
            let (normalized, rep) = normalize_sequence(&seq);
            write_sequence(&normalized, &out)?;
            if rep.degenerate.any() {
                log::warn!("degenerate parts passed through: {:?}", rep.degenerate);
            }
            if let Some(path) = report {
                fs::write(&path, serde_json::to_string_pretty(&rep)?)?;
            }
        }
        Command::Preprocess(PreprocessCmd::Augment {
            input,
            out,
            config,
            seed,
        }) => {
            let cfg = match config {
                Some(p) => AugmentationConfig::from_kv_str(&fs::read_to_string(&p)?)?,
                None => AugmentationConfig::default(),
            };
            let seq = read_sequence(&input)?;
            write_sequence(&augment(&seq, &cfg, seed)?, &out)?;
        }
        Command::Dataset(DatasetCmd::Materialize {
            index,
            videos,
            cache,
            subset,
            map,
            estimator,
        }) => {
            let (index, _) = load_index(&index, Some(subset))?;
            let map = load_map(map.as_deref())?;
            let mut est = match make_estimator(estimator.as_deref(), map.clone()) {
                Ok(e) => Some(e),
                Err(e) => {
                    log::warn!("{e}; only already-cached entries will be found");
                    None
                }
            };
            let cache = match &est {
                Some(e) => LandmarkCache::for_estimator(&cache, e),
                None => LandmarkCache::new(&cache, map.digest()),
            };
            let report = materialize(
                &index,
                &cache,
                &videos,
                est.as_mut().map(|e| e as &mut dyn EstimatorAdapter),
            );
            print_json(&report)?;
        }
        Command::Dataset(DatasetCmd::Stats { index, subset }) => {
            let (index, vocab) = load_index(&index, Some(subset))?;
            print_json(&index.stats(&vocab))?;
        }
        Command::Dataset(DatasetCmd::Fixture {
            out,
            seed,
            train_per_gloss,
        }) => {
            let fx = SyntheticFixture::generate(&FixtureSpec {
                seed,
                train_per_gloss,
                ..FixtureSpec::default()
            });
            let layout = fx.write(&out)?;
            print_json(&json!({
                "index": layout.index,
                "cache": layout.cache_root,
                "glosses": fx.vocabulary.glosses(),
                "entries": fx.entries.len(),
            }))?;
        }
        Command::Train { data, config, out } => {
            let (index, vocab, cache) = data.open()?;
            let run = load_run_config(config.as_deref())?;
            let model_cfg = run.model.to_config(vocab.len());
            let outcome = train(&index, &vocab, &cache, &model_cfg, &run.train, &mut |r| {
                log::info!(
                    "epoch {:>4}  loss {:.5}  train {:.4}  val macro {}  ({:.0} ms)",
                    r.epoch,
                    r.train_loss,
                    r.train_top1,
                    r.val_top1_macro.map_or("-".into(), |v| format!("{v:.4}")),
                    r.elapsed_ms
                )
            })?;
            let id = outcome.checkpoint.save(&out)?;
            log::info!(
                "saved {} (model {id}, epoch {})",
                out.display(),
                outcome.checkpoint.selected_epoch.unwrap_or(run.train.epochs)
            );
        }
        Command::Evaluate { ckpt, split, data } => {
            let split: Split = split.parse()?;
            let checkpoint = Checkpoint::load(&ckpt)?;
            let (index, _, cache) = data.open()?;
            let metrics = evaluate_split(&checkpoint, &index, &cache, split)?;
            print_json(&metrics_json(&metrics, &checkpoint.vocabulary))?;
        }
        Command::Bench {
            ckpt,
            config,
            classes,
            lengths,
            repetitions,
        } => {
            let network = match ckpt {
                Some(p) => Checkpoint::load(&p)?.network,
                None => {
                    let section: ModelSection = load_run_config(config.as_deref())?.model;
                    Network::init(&section.to_config(classes), 0)?
                }
            };
            let report = benchmark_inference(&network, &lengths, repetitions)?;
            if report.parameter_count != count_parameters(network.config()) {
                bail!("parameter count mismatch");
            }
            print_json(&report)?;
        }
        Command::Sweep {
            space,
            trials,
            sweep_seed,
            data,
            config,
            out,
        } => {
            let space = SearchSpace::load(&space)?;
            let (index, vocab, cache) = data.open()?;
            let run = load_run_config(config.as_deref())?;
            let mut runner = DatasetTrialRunner {
                index: &index,
                vocab: &vocab,
                cache: &cache,
                model: run.model.to_config(vocab.len()),
                train: run.train,
            };
            let outcome = run_sweep(&space, trials, sweep_seed, &out, &mut runner)?;
            print_json(&outcome.best)?;
        }
        Command::Serve {
            ckpt,
            port,
            host,
            allow_origin,
            max_body_mb,
            max_video_secs,
            map,
        } => {
            let checkpoint = Checkpoint::load(&ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
            let map = load_map(map.as_deref())?;
            let estimator: Option<Box<dyn EstimatorAdapter>> = match CommandEstimator::from_env(map) {
                Ok(e) => Some(Box::new(e)),
                Err(e) => {
                    log::warn!("{e}. Video requests will get 503; landmark documents still work. Set {ESTIMATOR_ENV} to enable video.");
                    None
                }
            };
            let mut config = ServiceConfig {
                max_body_bytes: max_body_mb * 1024 * 1024,
                max_video_secs,
                ..ServiceConfig::default()
            };
            if !allow_origin.is_empty() {
                config.allowed_origins = allow_origin;
            }
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad --host/--port")?;
            let state = AppState::new(checkpoint, estimator, config);
            log::info!("model {}", state.model_id());
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(service::serve(state, addr))?;
        }
    }
    Ok(())
}
