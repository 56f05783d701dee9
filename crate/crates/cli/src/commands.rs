use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tracing::{info, warn};
use viewflow::data::{self, Article, RecordError};
use viewflow::encoder::{AttributeSchema, AttributeSpec, PrecomputedEmbeddings};
use viewflow::linalg::cosine;
use viewflow::metrics::evaluate;
use viewflow::model::checkpoint::version_tag;
use viewflow::pipeline::{
    build_profiles, embed_profile, profile_embed_key, profile_text, summarize_articles,
};
use viewflow::serving::{self, AppState};
use viewflow::training::{save_log, train, Split};
use viewflow::{
    Dataset, Error, HashedEmbedder, Model, Prepared, ProfileBook, RankRequest, RankResponse, RepStore,
    Serving, TextEmbedder,
};

use crate::config::{DataFormat, RunConfig};
use crate::{manifest, Command, DataArgs, GlobalArgs};

/// Failure that is not a library error; `code` is the process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

fn fail(code: u8, message: impl Into<String>) -> anyhow::Error {
    Failure {
        code,
        message: message.into(),
    }
    .into()
}

/// 1: configuration or usage; 2: bad input data; 3: runtime failure.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(f) = e.downcast_ref::<Failure>() {
        return f.code;
    }
    match e.downcast_ref::<Error>() {
        Some(
            Error::Config(_) | Error::Dimension { .. } | Error::MissingPlaceholder(_) | Error::Io { .. },
        ) => 1,
        Some(
            Error::Record { .. }
            | Error::DuplicateArticle(_)
            | Error::UnknownArticle(_)
            | Error::UnknownUser(_)
            | Error::MissingEmbedding(_)
            | Error::Invalid(_)
            | Error::Format(_)
            | Error::Json(_),
        ) => 2,
        _ => 3,
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn dataset_path(&self, data: &DataArgs) -> PathBuf {
        data.dataset.clone().unwrap_or_else(|| self.path("dataset.jsonl"))
    }

    fn load_dataset(&self, data: &DataArgs) -> anyhow::Result<Dataset> {
        let path = self.dataset_path(data);
        Ok(data::load_jsonl(&path)?)
    }

    fn load_profiles(&self, data: &DataArgs) -> anyhow::Result<ProfileBook> {
        let explicit = data.profiles.clone().or_else(|| self.cfg.data.profiles.clone());
        match explicit {
            Some(p) => Ok(ProfileBook::load(&p)?),
            None => {
                let p = self.path("profiles.jsonl");
                if p.exists() {
                    Ok(ProfileBook::load(&p)?)
                } else {
                    Ok(ProfileBook::default())
                }
            }
        }
    }

    /// Precomputed table when configured, else the hashed embedder.
    fn embedder(&self, data: &DataArgs, dim: usize) -> anyhow::Result<Box<dyn TextEmbedder>> {
        match data.embeddings.as_ref().or(self.cfg.data.embeddings.as_ref()) {
            Some(p) => {
                let table = PrecomputedEmbeddings::load(p)?;
                if table.dim() != dim {
                    return Err(Error::Dimension {
                        context: "precomputed embeddings",
                        expected: dim,
                        actual: table.dim(),
                    }
                    .into());
                }
                Ok(Box::new(table))
            }
            None => Ok(Box::new(HashedEmbedder::new(dim)?)),
        }
    }

    fn checkpoint(&self, p: &Option<PathBuf>) -> PathBuf {
        p.clone().unwrap_or_else(|| self.path("model.ckpt"))
    }

    fn store(&self, p: &Option<PathBuf>) -> PathBuf {
        p.clone().unwrap_or_else(|| self.path("store.bin"))
    }

    fn record(&self, command: &str, args: serde_json::Value, outputs: &[&str]) -> anyhow::Result<()> {
        let cfg = serde_json::to_value(&self.cfg)?;
        manifest::record(&self.out, command, cfg, args, outputs)?;
        Ok(())
    }
}

fn print_json(v: &serde_json::Value) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn report_record_errors(errors: &[RecordError]) {
    for e in errors.iter().take(10) {
        warn!("skipped record at line {}: {}", e.line, e.message);
    }
    if errors.len() > 10 {
        warn!("... and {} more skipped records", errors.len() - 10);
    }
}

/// Attribute columns from the config, or every attribute key in the corpus.
fn schema_for(cfg: &RunConfig, dataset: &Dataset) -> AttributeSchema {
    let specs = if cfg.data.attributes.is_empty() {
        let keys: BTreeSet<&String> = dataset
            .corpus
            .articles()
            .iter()
            .flat_map(|a| a.attributes.keys())
            .collect();
        keys.into_iter()
            .map(|k| AttributeSpec::categorical(k.clone()))
            .collect()
    } else {
        cfg.data.attributes.clone()
    };
    AttributeSchema::fit(specs, dataset.corpus.articles())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn run(global: &GlobalArgs, command: Command) -> anyhow::Result<()> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&global.out).map_err(|e| Error::io(&global.out, e))?;
    let ctx = Ctx {
        cfg,
        out: global.out.clone(),
    };
    match command {
        Command::Synth {
            rule,
            users,
            articles,
            impressions,
        } => synth(ctx, rule, users, articles, impressions),
        Command::Ingest {
            format,
            input,
            news,
            behaviors,
        } => ingest(ctx, format, input, news, behaviors),
        Command::Summarize {
            data,
            client,
            replay,
            budget,
        } => summarize(ctx, data, client, replay, budget),
        Command::Encode { data } => encode(ctx, data),
        Command::Train {
            data,
            steps,
            no_instant,
            no_constant,
        } => train_cmd(ctx, data, steps, no_instant, no_constant),
        Command::Eval {
            data,
            checkpoint,
            global_auc,
            val_only,
        } => eval(ctx, data, checkpoint, global_auc, val_only),
        Command::Precompute { data, checkpoint } => precompute(ctx, data, checkpoint),
        Command::Serve {
            checkpoint,
            store,
            addr,
        } => serve(ctx, checkpoint, store, addr),
        Command::Rank {
            user,
            candidates,
            top_k,
            server,
            checkpoint,
            store,
        } => rank(ctx, user, candidates, top_k, server, checkpoint, store),
        Command::Diagnose {
            data,
            checkpoint,
            user,
        } => diagnose(ctx, data, checkpoint, user),
    }
}

fn synth(
    mut ctx: Ctx,
    rule: Option<crate::RuleArg>,
    users: Option<usize>,
    articles: Option<usize>,
    impressions: Option<usize>,
) -> anyhow::Result<()> {
    let s = &mut ctx.cfg.synth;
    if let Some(r) = rule {
        s.rule = r.into();
    }
    s.users = users.unwrap_or(s.users);
    s.articles = articles.unwrap_or(s.articles);
    s.impressions = impressions.unwrap_or(s.impressions);
    let spec = ctx.cfg.synth.spec(ctx.cfg.seed);
    let synthetic = data::generate_synthetic(&spec)?;
    data::save_jsonl(&ctx.path("dataset.jsonl"), &synthetic.dataset)?;
    write_json(&ctx.path("truth.json"), &serde_json::to_value(&synthetic.truth)?)?;
    let stats = synthetic.dataset.stats();
    write_json(&ctx.path("stats.json"), &serde_json::to_value(&stats)?)?;
    ctx.record("synth", json!({}), &["dataset.jsonl", "truth.json", "stats.json"])?;
    print_json(&serde_json::to_value(&stats)?)
}

fn ingest(
    ctx: Ctx,
    format: Option<DataFormat>,
    input: Option<PathBuf>,
    news: Option<PathBuf>,
    behaviors: Option<PathBuf>,
) -> anyhow::Result<()> {
    let format = format.unwrap_or(ctx.cfg.data.format);
    let (dataset, errors, args) = match format {
        DataFormat::Jsonl => {
            let Some(path) = input.or_else(|| ctx.cfg.data.path.clone()) else {
                bail!(fail(1, "ingest --format jsonl needs --input or data.path"));
            };
            let (d, e) = data::load_jsonl_tolerant(&path)?;
            (d, e, json!({"format": "jsonl", "input": path_str(&path)}))
        }
        DataFormat::Mind => {
            let (Some(n), Some(b)) = (
                news.or_else(|| ctx.cfg.data.news.clone()),
                behaviors.or_else(|| ctx.cfg.data.behaviors.clone()),
            ) else {
                bail!(fail(1, "ingest --format mind needs --news and --behaviors"));
            };
            let (d, e) = data::load_mind(&n, &b)?;
            (
                d,
                e,
                json!({"format": "mind", "news": path_str(&n), "behaviors": path_str(&b)}),
            )
        }
    };
    report_record_errors(&errors);
    data::save_jsonl(&ctx.path("dataset.jsonl"), &dataset)?;
    let mut stats = serde_json::to_value(dataset.stats())?;
    stats["skipped_records"] = json!(errors.len());
    write_json(&ctx.path("stats.json"), &stats)?;
    ctx.record("ingest", args, &["dataset.jsonl", "stats.json"])?;
    print_json(&stats)
}

fn summarize(
    mut ctx: Ctx,
    data: DataArgs,
    client: Option<crate::config::ClientKind>,
    replay: Option<PathBuf>,
    budget: Option<usize>,
) -> anyhow::Result<()> {
    let sc = &mut ctx.cfg.summarizer;
    sc.client = client.unwrap_or(sc.client);
    sc.replay_path = replay.or(sc.replay_path.take());
    sc.summary_budget = budget.unwrap_or(sc.summary_budget);
    ctx.cfg.validate()?;
    let mut dataset = ctx.load_dataset(&data)?;
    let summarizer = ctx.cfg.summarizer.build(&ctx.path("summary_cache.jsonl"))?;
    let sc = &ctx.cfg.summarizer;

    let article_failures = summarize_articles(&summarizer, &mut dataset, sc.article_template);
    let (profiles, profile_failures) = build_profiles(&summarizer, &dataset, sc.profile_template);
    for (id, e) in article_failures.iter().chain(&profile_failures) {
        warn!("summarization failed for {id}: {e}");
    }
    data::save_jsonl(&ctx.path("dataset.jsonl"), &dataset)?;
    profiles.save(&ctx.path("profiles.jsonl"))?;

    let lengths: Vec<usize> = dataset
        .corpus
        .articles()
        .iter()
        .filter_map(|a| a.summary.as_deref())
        .map(|s| s.split_whitespace().count())
        .collect();
    let mean_words = if lengths.is_empty() {
        0.0
    } else {
        lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
    };
    let stats = json!({
        "client": summarizer.client_name(),
        "articles_summarized": lengths.len(),
        "article_failures": article_failures.len(),
        "mean_summary_words": mean_words,
        "profiles": profiles.len(),
        "profile_failures": profile_failures.len(),
        "client_invocations": summarizer.invocations(),
    });
    ctx.record(
        "summarize",
        json!({"dataset": path_str(&ctx.dataset_path(&data))}),
        &["dataset.jsonl", "profiles.jsonl"],
    )?;
    print_json(&stats)?;
    let failed = article_failures.len() + profile_failures.len();
    if failed > 0 {
        bail!(fail(3, format!("{failed} summarization requests failed")));
    }
    Ok(())
}

fn encode(ctx: Ctx, data: DataArgs) -> anyhow::Result<()> {
    let dataset = ctx.load_dataset(&data)?;
    let profiles = ctx.load_profiles(&data)?;
    let embedder = HashedEmbedder::new(ctx.cfg.model.dims.embed)?;
    let flags = ctx.cfg.model.flags;
    let mut table = PrecomputedEmbeddings::new(embedder.dim());
    for a in dataset.corpus.articles() {
        table.insert(format!("{}#title", a.id), embedder.embed_text(&a.title))?;
        table.insert(format!("{}#body", a.id), embedder.embed_text(&a.body))?;
        if let Some(s) = &a.summary {
            table.insert(format!("{}#summary", a.id), embedder.embed_text(s))?;
        }
    }
    let mut n_profiles = 0;
    for imp in &dataset.impressions {
        let history: Vec<&Article> = imp.history.iter().filter_map(|h| dataset.corpus.get(h)).collect();
        // Missing profiles are reported later by train/precompute.
        if let Ok(Some(text)) = profile_text(&flags, &profiles, &imp.user, &imp.history, &history) {
            let key = profile_embed_key(&flags, &imp.user, &imp.history);
            table.insert(key, embedder.embed_text(&text))?;
            n_profiles += 1;
        }
    }
    table.save(&ctx.path("embeddings.bin"))?;
    ctx.record(
        "encode",
        json!({"dataset": path_str(&ctx.dataset_path(&data))}),
        &["embeddings.bin"],
    )?;
    print_json(&json!({"embeddings": table.len(), "dim": table.dim(), "profile_lookups": n_profiles}))
}

fn train_cmd(
    mut ctx: Ctx,
    data: DataArgs,
    steps: Option<usize>,
    no_instant: bool,
    no_constant: bool,
) -> anyhow::Result<()> {
    if let Some(s) = steps {
        ctx.cfg.train.max_steps = s;
    }
    ctx.cfg.model.flags.instant_flow &= !no_instant;
    ctx.cfg.model.flags.constant_flow &= !no_constant;
    ctx.cfg.validate()?;
    let dataset = ctx.load_dataset(&data)?;
    let profiles = ctx.load_profiles(&data)?;
    let embedder = ctx.embedder(&data, ctx.cfg.model.dims.embed)?;
    let schema = schema_for(&ctx.cfg, &dataset);
    let prepared = Prepared::build(
        &dataset,
        &schema,
        embedder.as_ref(),
        &ctx.cfg.model.flags,
        &profiles,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let model = Model::new(ctx.cfg.model, schema, &mut rng)?;
    let split = Split::by_time(&prepared, ctx.cfg.train.val_fraction);
    info!(
        "training on {} impressions, validating on {}",
        split.train.len(),
        split.val.len()
    );
    let start = Instant::now();
    let outcome = train(model, &prepared, &split, &ctx.cfg.train)?;
    let version = outcome.model.save(&ctx.path("model.ckpt"))?;
    save_log(&outcome.log, &ctx.path("train_log.csv"))?;
    let summary = json!({
        "model_version": version,
        "parameter_count": outcome.model.weights.parameter_count(),
        "flags": outcome.model.config.flags,
        "steps_run": outcome.steps_run,
        "best_step": outcome.best_step,
        "stopped_early": outcome.stopped_early,
        "best_val": outcome.best_val,
        "train_impressions": split.train.len(),
        "val_impressions": split.val.len(),
    });
    write_json(&ctx.path("train.json"), &summary)?;
    ctx.record(
        "train",
        json!({"dataset": path_str(&ctx.dataset_path(&data))}),
        &["model.ckpt", "train.json"],
    )?;
    info!("training took {:.1}s", start.elapsed().as_secs_f64());
    print_json(&summary)
}

fn eval(
    ctx: Ctx,
    data: DataArgs,
    checkpoint: Option<PathBuf>,
    global_auc: bool,
    val_only: bool,
) -> anyhow::Result<()> {
    let ckpt = ctx.checkpoint(&checkpoint);
    let (model, version) = Model::load(&ckpt)?;
    let dataset = ctx.load_dataset(&data)?;
    let profiles = ctx.load_profiles(&data)?;
    let embedder = ctx.embedder(&data, model.config.dims.embed)?;
    let prepared = Prepared::build(
        &dataset,
        &model.schema,
        embedder.as_ref(),
        &model.config.flags,
        &profiles,
    )?;
    let which: Vec<usize> = if val_only {
        Split::by_time(&prepared, ctx.cfg.train.val_fraction).val
    } else {
        (0..prepared.impressions.len()).collect()
    };
    let report = evaluate(&prepared.ranked(&model, &which)?, global_auc);
    let result = json!({
        "model_version": version,
        "parameter_count": model.weights.parameter_count(),
        "flags": model.config.flags,
        "split": if val_only { "val" } else { "all" },
        "report": report,
    });
    write_json(&ctx.path("eval.json"), &result)?;
    ctx.record(
        "eval",
        json!({"dataset": path_str(&ctx.dataset_path(&data)), "checkpoint": path_str(&ckpt)}),
        &["eval.json"],
    )?;
    print_json(&result)
}

fn precompute(ctx: Ctx, data: DataArgs, checkpoint: Option<PathBuf>) -> anyhow::Result<()> {
    let ckpt = ctx.checkpoint(&checkpoint);
    let (model, version) = Model::load(&ckpt)?;
    let dataset = ctx.load_dataset(&data)?;
    let profiles = ctx.load_profiles(&data)?;
    let embedder = ctx.embedder(&data, model.config.dims.embed)?;
    let store = serving::precompute(&model, &version, &dataset, embedder.as_ref(), &profiles)?;
    for issue in store.issues.iter().take(10) {
        warn!("{issue}");
    }
    store.save(&ctx.path("store.bin"))?;
    ctx.record(
        "precompute",
        json!({"dataset": path_str(&ctx.dataset_path(&data)), "checkpoint": path_str(&ckpt)}),
        &["store.bin"],
    )?;
    print_json(&json!({
        "model_version": version,
        "articles": store.articles.len(),
        "users": store.users.len(),
        "partial": store.is_partial(),
        "issues": store.issues.len(),
    }))
}

fn load_serving(ctx: &Ctx, checkpoint: &Option<PathBuf>, store: &Option<PathBuf>) -> anyhow::Result<Serving> {
    let (model, version) = Model::load(&ctx.checkpoint(checkpoint))?;
    let store = RepStore::load(&ctx.store(store))?;
    Ok(Serving::new(model, version, store)?)
}

fn serve(
    ctx: Ctx,
    checkpoint: Option<PathBuf>,
    store: Option<PathBuf>,
    addr: Option<String>,
) -> anyhow::Result<()> {
    let serving = load_serving(&ctx, &checkpoint, &store)?;
    let addr = addr.unwrap_or_else(|| ctx.cfg.serve.addr.clone());
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| fail(3, format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr()?;
        println!("listening on http://{local}");
        std::io::stdout().flush()?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serving::serve(listener, AppState::new(serving), shutdown)
            .await
            .map_err(|e| fail(3, format!("server error: {e}")))
    })
}

fn rank(
    ctx: Ctx,
    user: String,
    candidates: Vec<String>,
    top_k: Option<usize>,
    server: Option<String>,
    checkpoint: Option<PathBuf>,
    store: Option<PathBuf>,
) -> anyhow::Result<()> {
    let request = RankRequest {
        user_id: user,
        candidates,
        top_k,
    };
    let response: RankResponse = match server {
        Some(base) => {
            let url = format!("{}/rank", base.trim_end_matches('/'));
            let resp = reqwest::blocking::Client::new()
                .post(&url)
                .json(&request)
                .send()
                .map_err(|e| fail(3, format!("request to {url} failed: {e}")))?;
            let status = resp.status();
            let body: serde_json::Value = resp
                .json()
                .map_err(|e| fail(3, format!("bad response from {url}: {e}")))?;
            if !status.is_success() {
                let code = if status.is_client_error() && status.as_u16() != 409 {
                    2
                } else {
                    3
                };
                bail!(fail(code, format!("server returned {status}: {}", body["error"])));
            }
            serde_json::from_value(body)?
        }
        None => load_serving(&ctx, &checkpoint, &store)?.rank(&request)?,
    };
    print_json(&serde_json::to_value(&response)?)
}

fn diagnose(ctx: Ctx, data: DataArgs, checkpoint: Option<PathBuf>, user: String) -> anyhow::Result<()> {
    let ckpt = ctx.checkpoint(&checkpoint);
    let bytes = std::fs::read(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
    let model = Model::from_bytes(&bytes)?;
    let dataset = ctx.load_dataset(&data)?;
    let profiles = ctx.load_profiles(&data)?;
    let embedder = ctx.embedder(&data, model.config.dims.embed)?;
    let flags = model.config.flags;

    let imp = dataset
        .impressions
        .iter()
        .filter(|i| i.user == user)
        .max_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)))
        .ok_or_else(|| Error::UnknownUser(user.clone()))?;
    let article = |id: &String| {
        dataset
            .corpus
            .get(id)
            .ok_or_else(|| Error::UnknownArticle(id.clone()))
    };
    let history: Vec<&Article> = imp.history.iter().map(article).collect::<Result<_, _>>()?;
    let encode = |a: &Article| model.encode_article(a, embedder.as_ref()).map(|r| r.h);
    let history_reps: Vec<Vec<f64>> = history.iter().map(|a| encode(a)).collect::<Result<_, _>>()?;
    let history_refs: Vec<&[f64]> = history_reps.iter().map(Vec::as_slice).collect();
    let projected = if flags.constant_flow {
        match profile_text(&flags, &profiles, &user, &imp.history, &history)? {
            Some(text) => {
                let e = embed_profile(embedder.as_ref(), &flags, &user, &imp.history, &text)?;
                model.profile_projection(&e)?
            }
            None => None,
        }
    } else {
        None
    };

    let mut csv = String::from("candidate_id,step,history_article_id,alpha,cos_instant,cos_constant\n");
    for (cid, _) in &imp.candidates {
        let rep = encode(article(cid)?)?;
        let f = model.forward(&history_refs, projected.as_deref(), &rep);
        for (step, (hid, h)) in imp.history.iter().zip(&history_reps).enumerate() {
            let alpha = f.alpha.get(step).map(|a| a.to_string()).unwrap_or_default();
            let ci = f
                .instant
                .as_deref()
                .map(|v| cosine(v, h).to_string())
                .unwrap_or_default();
            let cc = f
                .constant
                .as_deref()
                .map(|v| cosine(v, h).to_string())
                .unwrap_or_default();
            writeln!(csv, "{cid},{step},{hid},{alpha},{ci},{cc}").expect("string write");
        }
    }
    let name = "diagnose.csv";
    std::fs::write(ctx.path(name), &csv).map_err(|e| Error::io(ctx.path(name), e))?;
    ctx.record(
        "diagnose",
        json!({"user": user, "impression": imp.id, "checkpoint": path_str(&ckpt), "model_version": version_tag(&bytes)}),
        &[name],
    )?;
    print!("{csv}");
    Ok(())
}
