use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stancelab::cluster::{self, ClusterParams};
use stancelab::corpus::{self, PreprocessConfig, TopicSpec};
use stancelab::embed::{self, HashEmbedderParams, HashFallback, TweetVectors};
use stancelab::eval;
use stancelab::io::{write_atomic, write_json};
use stancelab::labelprop::{self, PropagationParams};
use stancelab::lexicon;
use stancelab::pipeline::{self, PipelineConfig, RunOptions};
use stancelab::plot;
use stancelab::polarize::{self, RwcMode, RwcParams};
use stancelab::project::{self, Metric, ProjectionParams};
use stancelab::synth::{self, SynthParams, TopicAlignment};
use stancelab::{Error, Result};

#[derive(Parser)]
#[command(name = "stancelab", version, about = "Unsupervised stance detection for tweet corpora")]
struct Cli {
    /// Master seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory (meaning depends on the subcommand).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single worker thread and sequential stages, for byte-identical output.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a JSONL corpus, report load statistics, optionally write a canonical copy.
    Ingest(IngestArgs),
    /// Generate a synthetic two-group corpus with gold labels.
    Synth(SynthArgs),
    /// Propagate seed stances over the retweet graph.
    Labelprop(LabelpropArgs),
    /// Compute per-user mean vectors for a topic.
    Embed(EmbedArgs),
    /// Project user vectors to 2-D.
    Project(ProjectArgs),
    /// Density-cluster a 2-D layout.
    Cluster(ClusterArgs),
    /// Label clusters by majority gold class and score them.
    Eval(EvalArgs),
    /// Random Walk Controversy between two user groups.
    Rwc(RwcArgs),
    /// Adjusted mutual information between cluster assignments.
    Ami(AmiArgs),
    /// Prominent terms of each cluster against the others.
    Lexicon(LexiconArgs),
    /// Run the full per-topic pipeline from a TOML config.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Write load statistics as JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    topic: TopicArgs,
}

#[derive(Args)]
struct TopicArgs {
    /// Topic name; keeps only tweets matching the topic keywords.
    #[arg(long)]
    topic: Option<String>,
    /// Comma-separated keywords (default: the topic name).
    #[arg(long, value_delimiter = ',')]
    keywords: Vec<String>,
}

impl TopicArgs {
    fn spec(&self) -> Result<Option<TopicSpec>> {
        let Some(name) = &self.topic else {
            if !self.keywords.is_empty() {
                return Err(Error::Config("--keywords needs --topic".into()));
            }
            return Ok(None);
        };
        let kws: Vec<String> = if self.keywords.is_empty() {
            vec![name.to_lowercase()]
        } else {
            self.keywords.iter().map(|k| k.to_lowercase()).collect()
        };
        TopicSpec::new(name.clone(), kws).map(Some)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignmentArg {
    Shared,
    Independent,
}

#[derive(Args)]
struct SynthArgs {
    /// Users per group.
    #[arg(long, default_value_t = 500)]
    users: usize,
    /// Mean posts per user.
    #[arg(long, default_value_t = 20.0)]
    tweets: f64,
    #[arg(long, default_value_t = 1000)]
    vocab_shared: usize,
    #[arg(long, default_value_t = 500)]
    vocab_exclusive: usize,
    /// Comma-separated topic names.
    #[arg(long, value_delimiter = ',', default_value = "topic")]
    topics: Vec<String>,
    #[arg(long, default_value_t = 0.6)]
    retweet_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    cross_rate: f64,
    #[arg(long, value_enum, default_value = "shared")]
    alignment: AlignmentArg,
    /// Plant this many sub-communities per group.
    #[arg(long, default_value_t = 1)]
    subgroups: usize,
}

#[derive(Args)]
struct LabelpropArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    seeds: PathBuf,
    #[arg(long, default_value_t = 10)]
    min_retweets: usize,
    #[arg(long, default_value_t = 20)]
    max_iterations: u32,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    topic: TopicArgs,
    /// Precomputed tweet vectors (binary or JSONL).
    #[arg(long, conflicts_with = "hash_dim")]
    embeddings: Option<PathBuf>,
    /// Dimension of the hashed character n-gram embedder.
    #[arg(long)]
    hash_dim: Option<usize>,
    /// Dimension expected in --embeddings.
    #[arg(long, default_value_t = embed::DEFAULT_DIM)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    ngram_min: usize,
    #[arg(long, default_value_t = 5)]
    ngram_max: usize,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long, default_value_t = 15)]
    n_neighbors: usize,
    #[arg(long, default_value_t = 0.1)]
    min_dist: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
    /// Lock-free parallel optimization (not reproducible; ignored with --deterministic).
    #[arg(long)]
    hogwild: bool,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    layout: PathBuf,
    #[arg(long, default_value_t = 25)]
    min_cluster_size: usize,
    #[arg(long)]
    min_samples: Option<usize>,
    /// Condensed tree JSON.
    #[arg(long)]
    tree: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long)]
    gold: PathBuf,
}

#[derive(Args)]
struct RwcArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// CSV with user_id and a group, cluster or label column; exactly two groups.
    #[arg(long)]
    groups: PathBuf,
    #[arg(long, default_value_t = 10)]
    n_prominent: usize,
    #[arg(long, default_value = "exact")]
    mode: RwcMode,
    /// Walks per group in monte_carlo mode.
    #[arg(long, default_value_t = 10_000)]
    walks: usize,
}

#[derive(Args)]
struct AmiArgs {
    /// Two or more `user_id,cluster` files.
    #[arg(long, num_args = 1.., required = true)]
    clusters: Vec<PathBuf>,
    /// Names for the heatmap axes (default: file stems).
    #[arg(long, value_delimiter = ',')]
    names: Vec<String>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct LexiconArgs {
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 50)]
    top: usize,
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn need_out(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::Config("--out is required for this subcommand".into()))
}

/// Writes JSON to `--out` when given, otherwise to standard output.
fn emit_json<T: serde::Serialize>(cli: &Cli, value: &T) -> Result<()> {
    match &cli.out {
        Some(p) => write_json(p, value),
        None => {
            let s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
            println!("{s}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Ingest(a) => {
            let (mut c, stats) = corpus::load_corpus(&a.input)?;
            if let Some(t) = a.topic.spec()? {
                c = corpus::filter_topic(&c, &t)?;
            }
            println!(
                "lines {}  loaded {}  malformed {}  invalid {}  kept {}  users {}",
                stats.lines,
                stats.loaded,
                stats.malformed,
                stats.invalid,
                c.len(),
                c.users().len()
            );
            if let Some(r) = &a.report {
                write_json(r, &stats)?;
            }
            if let Some(o) = &cli.out {
                c.save(o)?;
            }
            Ok(())
        }
        Command::Synth(a) => {
            let params = SynthParams {
                n_users_per_group: a.users,
                n_tweets_per_user: a.tweets,
                vocab_shared: a.vocab_shared,
                vocab_exclusive_per_group: a.vocab_exclusive,
                topic_names: a.topics.clone(),
                retweet_rate: a.retweet_rate,
                cross_rate: a.cross_rate,
                seed,
                topic_alignment: match a.alignment {
                    AlignmentArg::Shared => TopicAlignment::Shared,
                    AlignmentArg::Independent => TopicAlignment::Independent,
                },
                ..SynthParams::default()
            };
            let mut s = synth::generate(&params)?;
            if a.subgroups > 1 {
                s = synth::plant_subgroups(&s, a.subgroups)?;
            }
            let dir = need_out(cli)?;
            s.save(dir)?;
            println!(
                "{} tweets, {} users, {} seeds written to {}",
                s.corpus.len(),
                s.corpus.users().len(),
                s.seed_subset.len(),
                dir.display()
            );
            Ok(())
        }
        Command::Labelprop(a) => {
            let (c, _) = corpus::load_corpus(&a.corpus)?;
            let seeds = labelprop::load_seeds(&a.seeds)?;
            let params = PropagationParams {
                min_retweets: a.min_retweets,
                max_iterations: a.max_iterations,
            };
            let r = labelprop::propagate(&c, &seeds, &params)?;
            for (i, round) in r.trace().iter().enumerate() {
                println!("round {:>2}: +{} pro, +{} anti", i + 1, round.new_pro, round.new_anti);
            }
            write_atomic(need_out(cli)?, &labelprop::labels_csv(&r.labels)?)
        }
        Command::Embed(a) => {
            let (mut c, _) = corpus::load_corpus(&a.corpus)?;
            if let Some(t) = a.topic.spec()? {
                c = corpus::filter_topic(&c, &t)?;
            }
            let users = match &a.embeddings {
                Some(p) => embed::user_vectors(&c, &embed::load_embeddings(p, a.dim)?, None)?,
                None => {
                    let params = HashEmbedderParams {
                        dim: a.hash_dim.unwrap_or(embed::DEFAULT_DIM),
                        ngram_range: (a.ngram_min, a.ngram_max),
                        salt: seed,
                    };
                    params.validate()?;
                    let fb = HashFallback {
                        preprocess: PreprocessConfig::default(),
                        params,
                    };
                    embed::user_vectors(&c, &TweetVectors::new(), Some(&fb))?
                }
            };
            write_atomic(need_out(cli)?, embed::user_vectors_jsonl(&users).as_bytes())
        }
        Command::Project(a) => {
            let users = embed::load_user_vectors(&a.vectors)?;
            let params = ProjectionParams {
                n_neighbors: a.n_neighbors,
                min_dist: a.min_dist,
                n_epochs: a.epochs,
                seed,
                metric: a.metric,
                hogwild: a.hogwild && !cli.deterministic,
            };
            let vecs: Vec<&[f64]> = users.iter().map(|u| u.vec.as_slice()).collect();
            let layout = project::project(&vecs, &params)?;
            let ids: Vec<String> = users.into_iter().map(|u| u.user_id).collect();
            write_atomic(need_out(cli)?, &project::layout_csv(&ids, &layout.points)?)?;
            if let Some(svg) = &a.svg {
                plot::emit_scatter_svg(&layout.points, &ids, &BTreeMap::new(), svg)?;
            }
            Ok(())
        }
        Command::Cluster(a) => {
            let (ids, points) = project::load_layout(&a.layout)?;
            let params = ClusterParams {
                min_cluster_size: a.min_cluster_size,
                min_samples: a.min_samples,
            };
            let r = cluster::cluster(&points, &params)?;
            println!("{} clusters {:?}, {} noise", r.n_clusters(), r.cluster_sizes(), r.noise_count());
            write_atomic(need_out(cli)?, &cluster::clusters_csv(&ids, &r.labels)?)?;
            if let Some(t) = &a.tree {
                write_json(t, &r.condensed_tree)?;
            }
            Ok(())
        }
        Command::Eval(a) => {
            let members = cluster::load_clusters(&a.clusters)?;
            let gold = eval::load_gold(&a.gold)?;
            let labels = eval::majority_label(&members, &gold);
            let predicted = eval::predictions(&members, &labels);
            let users: std::collections::BTreeSet<&String> = members.iter().map(|m| &m.0).collect();
            let scored: eval::GoldLabels = gold
                .iter()
                .filter(|(u, _)| users.contains(u))
                .map(|(u, c)| (u.clone(), c.clone()))
                .collect();
            let metrics = eval::prf(&predicted, &scored)?;
            eprintln!("macro F1 {:.4}", metrics.macro_f1);
            emit_json(
                cli,
                &serde_json::json!({ "cluster_labels": labels, "metrics": metrics }),
            )
        }
        Command::Rwc(a) => {
            let (c, _) = corpus::load_corpus(&a.corpus)?;
            let (membership, names) = polarize::load_groups(&a.groups)?;
            let graph = polarize::build_user_graph(&c, &membership)?;
            let params = RwcParams {
                n_prominent: a.n_prominent,
                mode: a.mode,
                n_walks: a.walks,
                seed,
            };
            let r = polarize::rwc(&graph, &params)?;
            eprintln!("groups A={} B={}: rwc {:.4}", names[0], names[1], r.rwc);
            emit_json(cli, &r)
        }
        Command::Ami(a) => {
            if a.clusters.len() < 2 {
                return Err(Error::Config("ami needs at least two --clusters files".into()));
            }
            let names: Vec<String> = if a.names.is_empty() {
                a.clusters
                    .iter()
                    .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
                    .collect()
            } else if a.names.len() == a.clusters.len() {
                a.names.clone()
            } else {
                return Err(Error::Config("--names must match the number of --clusters files".into()));
            };
            let maps: Vec<BTreeMap<String, i64>> = a
                .clusters
                .iter()
                .map(|p| cluster::load_clusters(p).map(|v| v.into_iter().collect()))
                .collect::<Result<_>>()?;
            let k = maps.len();
            let mut m = vec![vec![None; k]; k];
            for i in 0..k {
                for j in 0..k {
                    m[i][j] = match eval::ami_common(&maps[i], &maps[j]) {
                        Ok((v, _)) => Some(v),
                        Err(e) => {
                            log::warn!("AMI {} vs {}: {e}", names[i], names[j]);
                            None
                        }
                    };
                }
            }
            let dense: Vec<Vec<f64>> = m
                .iter()
                .map(|r| r.iter().map(|v| v.unwrap_or(f64::NAN)).collect())
                .collect();
            let csv = eval::matrix_csv(&names, &dense)?;
            match &cli.out {
                Some(p) => write_atomic(p, &csv)?,
                None => print!("{}", String::from_utf8_lossy(&csv)),
            }
            if let Some(svg) = &a.svg {
                plot::emit_heatmap_svg(&names, &m, svg)?;
            }
            Ok(())
        }
        Command::Lexicon(a) => {
            let members = cluster::load_clusters(&a.clusters)?;
            let (c, _) = corpus::load_corpus(&a.corpus)?;
            let stop = match &a.stopwords {
                Some(p) => lexicon::load_stopwords(p)?,
                None => lexicon::default_stopwords(),
            };
            let pre = PreprocessConfig::default();
            let of: BTreeMap<&str, i64> = members.iter().map(|(u, k)| (u.as_str(), *k)).collect();
            let mut docs: BTreeMap<i64, Vec<Vec<String>>> = BTreeMap::new();
            for t in c.tweets() {
                if let Some(&k) = of.get(t.user_id.as_str()) {
                    if k != cluster::NOISE {
                        docs.entry(k).or_default().push(corpus::preprocess(&t.text, &pre));
                    }
                }
            }
            if docs.len() < 2 {
                return Err(Error::Data("lexicon needs at least two non-noise clusters with tweets".into()));
            }
            let dir = need_out(cli)?;
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            for (&k, own) in &docs {
                let rest: Vec<Vec<String>> = docs
                    .iter()
                    .filter(|(j, _)| **j != k)
                    .flat_map(|(_, d)| d.iter().cloned())
                    .collect();
                let entries = lexicon::top_terms(own, &rest, a.top, &stop, &pre.number_token)?;
                write_atomic(&dir.join(format!("lexicon-{k}.csv")), &lexicon::entries_csv(&entries)?)?;
                write_json(&dir.join(format!("wordcloud-{k}.json")), &lexicon::word_cloud(&entries))?;
                let head: Vec<&str> = entries.iter().take(8).map(|e| e.term.as_str()).collect();
                println!("cluster {k}: {}", head.join(" "));
            }
            Ok(())
        }
        Command::Pipeline(a) => {
            let mut cfg = PipelineConfig::load(&a.config)?;
            if let Some(o) = &cli.out {
                cfg.out_dir = o.clone();
            }
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = pipeline::run_pipeline(
                &cfg,
                RunOptions {
                    deterministic: cli.deterministic,
                },
            )?;
            print!("{}", pipeline::summary_table(&out));
            Ok(())
        }
    }
}
