//! Per-topic pipeline runner: filter, embed, project, cluster, evaluate,
//! score polarization and vocabulary, then compare topics by AMI.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, ClusterParams, NOISE};
use crate::corpus::{self, Corpus, PreprocessConfig, TopicSpec};
use crate::embed::{self, HashEmbedderParams, HashFallback, TweetVectors};
use crate::error::{Error, Result};
use crate::eval::{self, ClusterLabel, GoldLabels, MetricReport};
use crate::labelprop::{self, Labels, PropagationParams, Stance};
use crate::lexicon;
use crate::plot;
use crate::polarize::{self, Group, RwcParams, RwcResult};
use crate::project::{self, ProjectionParams};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexiconConfig {
    pub top: usize,
    pub stopwords: Option<PathBuf>,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        LexiconConfig {
            top: 50,
            stopwords: None,
        }
    }
}

/// Pipeline configuration, read from TOML. Relative paths resolve against
/// the config file's directory. `projection.seed` and `rwc.seed` are ignored:
/// both are derived from the master `seed` per topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    #[serde(default)]
    pub topics: Vec<TopicSpec>,
    pub seeds: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    /// Precomputed tweet vectors; the hash embedder is used when absent.
    pub embeddings: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub embed: HashEmbedderParams,
    #[serde(default)]
    pub projection: ProjectionParams,
    #[serde(default)]
    pub cluster: ClusterParams,
    #[serde(default)]
    pub rwc: RwcParams,
    #[serde(default)]
    pub labelprop: PropagationParams,
    #[serde(default)]
    pub lexicon: LexiconConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.corpus);
        resolve(&mut cfg.out_dir);
        for p in [&mut cfg.seeds, &mut cfg.gold, &mut cfg.embeddings, &mut cfg.lexicon.stopwords]
            .into_iter()
            .flatten()
        {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Static checks; runs before any work.
    pub fn validate(&self) -> Result<()> {
        if self.topics.is_empty() {
            return Err(Error::Config("at least one topic is required".into()));
        }
        let mut names = BTreeSet::new();
        for t in &self.topics {
            t.validate().map_err(|e| Error::Config(e.to_string()))?;
            if !names.insert(topic_dir_name(&t.name)) {
                return Err(Error::Config(format!("duplicate topic name `{}`", t.name)));
            }
        }
        self.embed.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.cluster.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.lexicon.top == 0 {
            return Err(Error::Config("lexicon.top must be >= 1".into()));
        }
        if self.rwc.n_prominent == 0 {
            return Err(Error::Config("rwc.n_prominent must be >= 1".into()));
        }
        Ok(())
    }

    fn check_paths(&self) -> Result<()> {
        let mut paths = vec![&self.corpus];
        paths.extend([&self.seeds, &self.gold, &self.embeddings, &self.lexicon.stopwords].into_iter().flatten());
        for p in paths {
            if !p.exists() {
                return Err(Error::Config(format!("path {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// One worker thread and sequential topics.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicReport {
    pub topic: String,
    pub n_tweets: usize,
    pub n_users: usize,
    pub n_clusters: Option<usize>,
    pub noise_fraction: Option<f64>,
    pub cluster_sizes: Vec<usize>,
    /// Majority gold class per cluster (when gold is configured).
    pub cluster_labels: BTreeMap<i64, ClusterLabel>,
    pub metrics: Option<MetricReport>,
    /// Jaccard overlap per stance between cluster labels and propagated labels.
    pub overlap: BTreeMap<String, f64>,
    /// Clusters compared by RWC (the two largest).
    pub rwc_clusters: Option<[i64; 2]>,
    pub rwc: Option<RwcResult>,
    /// Leading prominent terms per cluster against all other clusters.
    pub top_terms: BTreeMap<i64, Vec<String>>,
    /// Stage name → `done`, `skipped: why` or `failed: why`.
    pub stages: BTreeMap<String, String>,
    /// Artifact name → path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
}

impl TopicReport {
    fn new(topic: &str) -> Self {
        TopicReport {
            topic: topic.to_string(),
            n_tweets: 0,
            n_users: 0,
            n_clusters: None,
            noise_fraction: None,
            cluster_sizes: Vec::new(),
            cluster_labels: BTreeMap::new(),
            metrics: None,
            overlap: BTreeMap::new(),
            rwc_clusters: None,
            rwc: None,
            top_terms: BTreeMap::new(),
            stages: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    fn done(&mut self, stage: &str) {
        self.stages.insert(stage.into(), "done".into());
    }

    fn skipped(&mut self, stage: &str, why: &str) {
        log::info!("topic {}: {stage} skipped ({why})", self.topic);
        self.stages.insert(stage.into(), format!("skipped: {why}"));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmiMatrix {
    pub topics: Vec<String>,
    /// `None` where fewer than two common clustered users exist.
    pub matrix: Vec<Vec<Option<f64>>>,
    pub common_users: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOutput {
    pub seed: u64,
    pub topics: Vec<TopicReport>,
    pub ami: AmiMatrix,
}

/// Shared inputs for every topic.
struct Inputs {
    corpus: Corpus,
    gold: Option<GoldLabels>,
    propagated: Option<Labels>,
    tweet_vecs: TweetVectors,
    fallback: Option<HashFallback>,
    stopwords: BTreeSet<String>,
    preprocess: PreprocessConfig,
}

/// Directory-safe form of a topic name.
pub fn topic_dir_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn run_pipeline(cfg: &PipelineConfig, opts: RunOptions) -> Result<PipelineOutput> {
    cfg.validate()?;
    cfg.check_paths()?;
    if opts.deterministic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| run_inner(cfg, true))
    } else {
        run_inner(cfg, false)
    }
}

fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let (corpus, stats) = corpus::load_corpus(&cfg.corpus).map_err(|e| e.in_stage("ingest"))?;
    log::info!(
        "corpus: {} tweets, {} users ({} lines skipped)",
        corpus.len(),
        corpus.users().len(),
        stats.skipped()
    );
    let gold = cfg
        .gold
        .as_deref()
        .map(eval::load_gold)
        .transpose()
        .map_err(|e| e.in_stage("gold"))?;
    let propagated = match &cfg.seeds {
        Some(p) => {
            let seeds = labelprop::load_seeds(p).map_err(|e| e.in_stage("labelprop"))?;
            let r = labelprop::propagate(&corpus, &seeds, &cfg.labelprop).map_err(|e| e.in_stage("labelprop"))?;
            Some(r.labels)
        }
        None => None,
    };
    let preprocess = PreprocessConfig::default();
    let (tweet_vecs, fallback) = match &cfg.embeddings {
        Some(p) => (
            embed::load_embeddings(p, cfg.embed.dim).map_err(|e| e.in_stage("embed"))?,
            None,
        ),
        None => (
            TweetVectors::new(),
            Some(HashFallback {
                preprocess: preprocess.clone(),
                params: cfg.embed,
            }),
        ),
    };
    let stopwords = match &cfg.lexicon.stopwords {
        Some(p) => lexicon::load_stopwords(p).map_err(|e| e.in_stage("lexicon"))?,
        None => lexicon::default_stopwords(),
    };
    Ok(Inputs {
        corpus,
        gold,
        propagated,
        tweet_vecs,
        fallback,
        stopwords,
        preprocess,
    })
}

fn run_inner(cfg: &PipelineConfig, sequential: bool) -> Result<PipelineOutput> {
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let inputs = load_inputs(cfg)?;
    if let Some(labels) = &inputs.propagated {
        crate::io::write_atomic(&out.join("labels.csv"), &labelprop::labels_csv(labels)?)?;
    }

    let run = |t: &TopicSpec| run_topic(cfg, &inputs, t);
    let results: Vec<(TopicReport, Option<BTreeMap<String, i64>>, Option<Error>)> = if sequential {
        cfg.topics.iter().map(run).collect()
    } else {
        cfg.topics.par_iter().map(run).collect()
    };

    let names: Vec<String> = cfg.topics.iter().map(|t| t.name.clone()).collect();
    let k = names.len();
    let mut matrix = vec![vec![None; k]; k];
    let mut common = vec![vec![0; k]; k];
    for i in 0..k {
        for j in i..k {
            if let (Some(a), Some(b)) = (&results[i].1, &results[j].1) {
                if let Ok((v, n)) = eval::ami_common(a, b) {
                    matrix[i][j] = Some(v);
                    matrix[j][i] = Some(v);
                    common[i][j] = n;
                    common[j][i] = n;
                }
            }
        }
    }
    let ami = AmiMatrix {
        topics: names.clone(),
        matrix,
        common_users: common,
    };
    let mut first_error = None;
    let mut reports = Vec::with_capacity(k);
    for (report, _, err) in results {
        if first_error.is_none() {
            first_error = err;
        }
        reports.push(report);
    }
    let output = PipelineOutput {
        seed: cfg.seed,
        topics: reports,
        ami,
    };
    crate::io::write_json(&out.join("report.json"), &output)?;
    let csv_matrix: Vec<Vec<f64>> = output
        .ami
        .matrix
        .iter()
        .map(|r| r.iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        .collect();
    crate::io::write_atomic(&out.join("ami.csv"), &eval::matrix_csv(&names, &csv_matrix)?)?;
    plot::emit_heatmap_svg(&names, &output.ami.matrix, &out.join("ami.svg"))?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(output),
    }
}

type TopicResult = (TopicReport, Option<BTreeMap<String, i64>>, Option<Error>);

fn run_topic(cfg: &PipelineConfig, inputs: &Inputs, topic: &TopicSpec) -> TopicResult {
    let mut report = TopicReport::new(&topic.name);
    let mut clusters = None;
    let err = topic_stages(cfg, inputs, topic, &mut report, &mut clusters).err();
    if let Some(Error::Stage { stage, source }) = &err {
        report.stages.insert(stage.clone(), format!("failed: {source}"));
    }
    let err = err.map(|e| match e {
        Error::Stage { stage, source } => Error::Stage {
            stage: format!("{}/{stage}", topic.name),
            source,
        },
        other => other,
    });
    let dir = cfg.out_dir.join("topics").join(topic_dir_name(&topic.name));
    if let Err(e) = std::fs::create_dir_all(&dir)
        .map_err(|e| Error::io(&dir, e))
        .and_then(|_| crate::io::write_json(&dir.join("report.json"), &report))
    {
        log::error!("cannot write report for topic {}: {e}", topic.name);
    }
    (report, clusters, err)
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn topic_stages(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    topic: &TopicSpec,
    report: &mut TopicReport,
    clusters_out: &mut Option<BTreeMap<String, i64>>,
) -> Result<()> {
    let rel = PathBuf::from("topics").join(topic_dir_name(&topic.name));
    let dir = cfg.out_dir.join(&rel);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let artifact = |report: &mut TopicReport, name: &str, file: &str| -> PathBuf {
        report
            .artifacts
            .insert(name.into(), rel.join(file).to_string_lossy().replace('\\', "/"));
        dir.join(file)
    };

    let sub = stage("filter", corpus::filter_topic(&inputs.corpus, topic))?;
    report.n_tweets = sub.len();
    report.n_users = sub.users().len();
    report.done("filter");

    let users = stage("embed", embed::user_vectors(&sub, &inputs.tweet_vecs, inputs.fallback.as_ref()))?;
    let user_ids: Vec<String> = users.iter().map(|u| u.user_id.clone()).collect();
    report.done("embed");

    let n = users.len();
    if n < 3 {
        return Err(Error::Data(format!("topic has {n} users; at least 3 are needed")).in_stage("project"));
    }
    let mut pparams = cfg.projection;
    pparams.seed = seed::derive(cfg.seed, &format!("project/{}", topic.name));
    if pparams.n_neighbors >= n {
        log::warn!("topic {}: n_neighbors {} clamped to {}", topic.name, pparams.n_neighbors, n - 1);
        pparams.n_neighbors = n - 1;
    }
    let vectors: Vec<&[f64]> = users.iter().map(|u| u.vec.as_slice()).collect();
    let layout = stage("project", project::project(&vectors, &pparams))?;
    let path = artifact(report, "layout", "layout.csv");
    crate::io::write_atomic(&path, &project::layout_csv(&user_ids, &layout.points)?)?;
    report.done("project");

    let assignment = stage("cluster", cluster::cluster(&layout.points, &cfg.cluster))?;
    let path = artifact(report, "clusters", "clusters.csv");
    crate::io::write_atomic(&path, &cluster::clusters_csv(&user_ids, &assignment.labels)?)?;
    let path = artifact(report, "condensed_tree", "tree.json");
    crate::io::write_json(&path, &assignment.condensed_tree)?;
    report.n_clusters = Some(assignment.n_clusters());
    report.noise_fraction = Some(assignment.noise_count() as f64 / n as f64);
    report.cluster_sizes = assignment.cluster_sizes();
    let members: Vec<(String, i64)> = user_ids.iter().cloned().zip(assignment.labels.iter().copied()).collect();
    *clusters_out = Some(members.iter().cloned().collect());
    report.done("cluster");

    // evaluation against gold
    let mut classes: BTreeMap<String, String> = BTreeMap::new();
    match &inputs.gold {
        Some(gold) => {
            let labels = eval::majority_label(&members, gold);
            let predicted = eval::predictions(&members, &labels);
            let topic_gold: GoldLabels = user_ids
                .iter()
                .filter_map(|u| gold.get(u).map(|c| (u.clone(), c.clone())))
                .collect();
            if topic_gold.is_empty() {
                report.skipped("eval", "no gold-labeled users in topic");
            } else {
                report.metrics = Some(stage("eval", eval::prf(&predicted, &topic_gold))?);
                report.done("eval");
            }
            classes = predicted;
            report.cluster_labels = labels;
        }
        None => {
            for (u, c) in &members {
                if *c != NOISE {
                    classes.insert(u.clone(), format!("cluster-{c}"));
                }
            }
            report.skipped("eval", "no gold labels configured");
        }
    }
    let path = artifact(report, "scatter", "scatter.svg");
    plot::emit_scatter_svg(&layout.points, &user_ids, &classes, &path)?;

    // overlap with propagated labels
    match &inputs.propagated {
        Some(labels) => {
            let prop: GoldLabels = user_ids
                .iter()
                .filter_map(|u| match labels.get(u).map(|l| l.value) {
                    Some(s @ (Stance::Pro | Stance::Anti)) => Some((u.clone(), s.as_str().to_string())),
                    _ => None,
                })
                .collect();
            let by_prop = eval::majority_label(&members, &prop);
            let predicted = eval::predictions(&members, &by_prop);
            for s in [Stance::Pro, Stance::Anti] {
                let name = s.as_str();
                let a: BTreeSet<&String> = predicted.iter().filter(|(_, c)| *c == name).map(|(u, _)| u).collect();
                let b: BTreeSet<&String> = prop.iter().filter(|(_, c)| *c == name).map(|(u, _)| u).collect();
                report.overlap.insert(name.to_string(), eval::jaccard_overlap(&a, &b));
            }
            report.done("overlap");
        }
        None => report.skipped("overlap", "no seeds configured"),
    }

    // polarization between the two largest clusters
    let sizes = assignment.cluster_sizes();
    let mut by_size: Vec<usize> = (0..sizes.len()).collect();
    by_size.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    if by_size.len() < 2 {
        report.skipped("rwc", "fewer than two clusters");
    } else {
        let (ca, cb) = (by_size[0] as i64, by_size[1] as i64);
        let membership: BTreeMap<String, Group> = members
            .iter()
            .filter_map(|(u, c)| match *c {
                c if c == ca => Some((u.clone(), Group::A)),
                c if c == cb => Some((u.clone(), Group::B)),
                _ => None,
            })
            .collect();
        match polarize::build_user_graph(&sub, &membership) {
            Err(Error::Data(why)) => report.skipped("rwc", &why),
            Err(e) => return Err(e.in_stage("rwc")),
            Ok(graph) => {
                let smallest = [Group::A, Group::B]
                    .iter()
                    .map(|&g| graph.members(g).count())
                    .min()
                    .unwrap_or(0);
                let mut rparams = cfg.rwc;
                rparams.seed = seed::derive(cfg.seed, &format!("rwc/{}", topic.name));
                rparams.n_prominent = rparams.n_prominent.min(smallest.saturating_sub(1));
                if rparams.n_prominent == 0 {
                    report.skipped("rwc", "a cluster has fewer than two users with retweets");
                } else {
                    report.rwc = Some(stage("rwc", polarize::rwc(&graph, &rparams))?);
                    report.rwc_clusters = Some([ca, cb]);
                    report.done("rwc");
                }
            }
        }
    }

    // prominent terms, each cluster against the rest
    if assignment.n_clusters() < 2 {
        report.skipped("lexicon", "fewer than two clusters");
    } else {
        let cluster_of: BTreeMap<&str, i64> = members.iter().map(|(u, c)| (u.as_str(), *c)).collect();
        let mut docs: Vec<Vec<Vec<String>>> = vec![Vec::new(); assignment.n_clusters()];
        for t in sub.tweets() {
            let c = cluster_of[t.user_id.as_str()];
            if c != NOISE {
                docs[c as usize].push(corpus::preprocess(&t.text, &inputs.preprocess));
            }
        }
        for c in 0..docs.len() {
            let rest: Vec<Vec<String>> = docs
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != c)
                .flat_map(|(_, d)| d.iter().cloned())
                .collect();
            let entries = stage(
                "lexicon",
                lexicon::top_terms(
                    &docs[c],
                    &rest,
                    cfg.lexicon.top,
                    &inputs.stopwords,
                    &inputs.preprocess.number_token,
                ),
            )?;
            let path = artifact(report, &format!("lexicon_{c}"), &format!("lexicon-{c}.csv"));
            crate::io::write_atomic(&path, &lexicon::entries_csv(&entries)?)?;
            let path = artifact(report, &format!("wordcloud_{c}"), &format!("wordcloud-{c}.json"));
            crate::io::write_json(&path, &lexicon::word_cloud(&entries))?;
            report
                .top_terms
                .insert(c as i64, entries.iter().take(10).map(|e| e.term.clone()).collect());
        }
        report.done("lexicon");
    }
    Ok(())
}

/// Human-readable table of the main per-topic numbers.
pub fn summary_table(output: &PipelineOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>7} {:>8} {:>7} {:>8} {:>9} {:>7}",
        "topic", "users", "clusters", "noise", "macroF1", "minPrec", "rwc"
    );
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
    for r in &output.topics {
        let min_p = r
            .metrics
            .as_ref()
            .and_then(|m| m.per_class.values().map(|c| c.precision).reduce(f64::min));
        let _ = writeln!(
            s,
            "{:<16} {:>7} {:>8} {:>7} {:>8} {:>9} {:>7}",
            r.topic,
            r.n_users,
            r.n_clusters.map_or("-".into(), |c| c.to_string()),
            opt(r.noise_fraction),
            opt(r.metrics.as_ref().map(|m| m.macro_f1)),
            opt(min_p),
            opt(r.rwc.map(|x| x.rwc)),
        );
    }
    if output.ami.topics.len() > 1 {
        let _ = writeln!(s, "\nAMI");
        for (name, row) in output.ami.topics.iter().zip(&output.ami.matrix) {
            let cells: Vec<String> = row.iter().map(|v| opt(*v)).collect();
            let _ = writeln!(s, "{:<16} {}", name, cells.join(" "));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_topics_is_config_error() {
        let cfg = PipelineConfig::from_toml("corpus = \"c.jsonl\"\n", Path::new("/nowhere")).unwrap();
        assert!(matches!(run_pipeline(&cfg, RunOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let text = r##"
corpus = "data/c.jsonl"
seed = 3
[[topics]]
name = "t"
keywords = ["#t"]
[cluster]
min_cluster_size = 10
"##;
        let cfg = PipelineConfig::from_toml(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.corpus, PathBuf::from("/base/data/c.jsonl"));
        assert_eq!(cfg.out_dir, PathBuf::from("/base/out"));
        assert_eq!(cfg.cluster.min_cluster_size, 10);
        assert_eq!(cfg.projection.n_neighbors, 15);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            PipelineConfig::from_toml("corpus = \"x\"\nbogus = 1\n", Path::new(".")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn missing_corpus_is_config_error() {
        let text = "corpus = \"missing.jsonl\"\n[[topics]]\nname = \"t\"\nkeywords = [\"t\"]\n";
        let cfg = PipelineConfig::from_toml(text, Path::new("/definitely/not/here")).unwrap();
        assert!(matches!(run_pipeline(&cfg, RunOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn dir_names_are_safe() {
        assert_eq!(topic_dir_name("a b/c"), "a_b_c");
    }
}
