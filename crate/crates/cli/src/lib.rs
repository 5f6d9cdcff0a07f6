// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pipelines behind the `promptlens` subcommands. Each `cmd_*` writes its
//! reports under `RunConfig::out` and returns the per-item failures it
//! skipped over; fatal problems are errors.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use promptlens::dataset::{encode_prompt, is_correct, load_dataset, toy_dataset, McqRecord};
use promptlens::metrics::{anova_contributions, bound_pss_fit, pss, CorrectnessMatrix, LogitTable};
use promptlens::perturb::{
    diff_edit, orthographic, paraphrase, template_variants, typo, HttpParaphraseClient,
    ParaphraseCache, ParaphraseClient, PerturbKind, PerturbationSpec, PromptVariantSet,
    StubParaphraseClient, TemplateFamily, TemplateFixture, Variant, DEFAULT_MAX_RETRIES,
    PARAPHRASE_URL_ENV,
};
use promptlens::plot::{bar_chart, line_chart, Series};
use promptlens::refmodel::{
    build_model, forward_trace, splitmix64, suffix_gradient, GradientVector, Model, ModelConfig,
    TokenSequence, Tokenizer,
};
use promptlens::steering::{default_depths, steering_sweep};
use promptlens::target::{Target, TargetSelector};
use promptlens::taylor::{
    layer_profile, layer_profile_from_traces, Direction, PromptPair, TracePair,
};
use promptlens::traceio::{
    export_report, read_layer_profile, read_pss, read_trace, write_trace, Report, TraceBundle,
    PSS_SUMMARY_ID,
};

/// Where per-prompt model outputs come from.
#[derive(Debug, Clone)]
pub enum Source {
    Model(PathBuf),
    Traces(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: Option<Source>,
    /// JSON-lines items; the built-in toy items when absent.
    pub dataset: Option<PathBuf>,
    pub templates: TemplateFamily,
    pub perturb: Option<PerturbKind>,
    pub k: usize,
    pub target: TargetSelector,
    pub seed: u64,
    pub out: PathBuf,
    /// Paraphrase cache file; defaults to `out/paraphrase_cache.jsonl`.
    pub cache: Option<PathBuf>,
    /// Use the offline synonym client instead of the HTTP service.
    pub stub_paraphrase: bool,
}

impl RunConfig {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            source: None,
            dataset: None,
            templates: TemplateFamily::Meaning12,
            perturb: None,
            k: 1,
            target: TargetSelector::Correct,
            seed: 0,
            out: out.into(),
            cache: None,
            stub_paraphrase: false,
        }
    }
}

/// Files written and items skipped by one command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub failures: Vec<String>,
}

fn dataset(config: &RunConfig) -> Result<(String, Vec<McqRecord>)> {
    match &config.dataset {
        Some(path) => {
            let id = path
                .file_stem()
                .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
            Ok((id, load_dataset(path)?))
        }
        None => Ok(("toy".into(), toy_dataset())),
    }
}

fn load_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: ModelConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let tokenizer = Tokenizer::builtin();
    if cfg.vocab_size < tokenizer.vocab_size() {
        bail!(
            "model vocab_size {} is smaller than the built-in tokenizer ({})",
            cfg.vocab_size,
            tokenizer.vocab_size()
        );
    }
    Ok(build_model(cfg)?)
}

fn per_item_seed(seed: u64, question: usize, k: usize) -> u64 {
    splitmix64(seed ^ splitmix64(((question as u64) << 16) | k as u64))
}

/// One rendered prompt of the grid; `label` identifies its column.
#[derive(Debug, Clone)]
struct Cell {
    label: String,
    text: String,
}

impl Cell {
    fn prompt_id(&self, question: usize) -> String {
        format!("{}:{question}", self.label)
    }
}

/// Prompt columns shared by every question: the listed family, or the seed
/// followed by the family's variants, or the seed and one perturbation.
fn column_fixtures(config: &RunConfig) -> Result<Vec<TemplateFixture>> {
    let family = config
        .perturb
        .and_then(PerturbKind::template_family)
        .unwrap_or(config.templates);
    let mut fixtures = match family {
        TemplateFamily::Meaning12 | TemplateFamily::Seed => Vec::new(),
        _ => template_variants(TemplateFamily::Seed)?,
    };
    if config
        .perturb
        .is_some_and(|k| k.template_family().is_none())
    {
        return Ok(template_variants(TemplateFamily::Seed)?);
    }
    fixtures.extend(template_variants(family)?);
    Ok(fixtures)
}

struct Grid {
    /// `rows[q]` is `None` when the item could not be rendered.
    rows: Vec<Option<Vec<Cell>>>,
    failures: Vec<String>,
}

fn perturbed(
    config: &RunConfig,
    kind: PerturbKind,
    seed_text: &str,
    question: usize,
    paraphraser: &Paraphraser,
) -> std::result::Result<Variant, String> {
    let s = per_item_seed(config.seed, question, config.k);
    match kind {
        PerturbKind::Typo => Ok(typo(seed_text, config.k, s)),
        PerturbKind::Orth => Ok(orthographic(seed_text, config.k, s)),
        PerturbKind::Para => {
            let (client, cache) = paraphraser.get();
            paraphrase(seed_text, config.k, client, cache, DEFAULT_MAX_RETRIES)
                .map_err(|e| e.to_string())
        }
        _ => unreachable!("template kinds are columns"),
    }
}

fn build_grid(config: &RunConfig, items: &[McqRecord], paraphraser: &Paraphraser) -> Result<Grid> {
    let fixtures = column_fixtures(config)?;
    let mut failures = Vec::new();
    let mut rows = Vec::with_capacity(items.len());
    for (q, item) in items.iter().enumerate() {
        let mut cells = Vec::new();
        let mut failed = None;
        for f in &fixtures {
            match item.render(f) {
                Ok(text) => cells.push(Cell {
                    label: f.template_id.clone(),
                    text,
                }),
                Err(e) => {
                    failed = Some(format!("question {q}: {e}"));
                    break;
                }
            }
        }
        if failed.is_none() {
            if let Some(kind) = config.perturb.filter(|k| k.template_family().is_none()) {
                match perturbed(config, kind, &cells[0].text, q, paraphraser) {
                    Ok(v) => cells.push(Cell {
                        label: format!("{}-k{}", kind.as_str(), config.k),
                        text: v.text,
                    }),
                    Err(e) => failed = Some(format!("question {q}: {e}")),
                }
            }
        }
        match failed {
            Some(f) => {
                failures.push(f);
                rows.push(None);
            }
            None => rows.push(Some(cells)),
        }
    }
    Ok(Grid { rows, failures })
}

/// Paraphrase client and cache; only opened for paraphrase runs.
struct Paraphraser(Option<(Box<dyn ParaphraseClient>, ParaphraseCache)>);

impl Paraphraser {
    fn new(config: &RunConfig, needed: bool) -> Result<Self> {
        if !needed {
            return Ok(Self(None));
        }
        let client: Box<dyn ParaphraseClient> = if config.stub_paraphrase {
            Box::new(StubParaphraseClient::builtin())
        } else {
            let c = HttpParaphraseClient::from_env(std::time::Duration::from_secs(60)).ok_or_else(
                || {
                    anyhow!(
                        "{PARAPHRASE_URL_ENV} is not set (use --stub-paraphrase for offline runs)"
                    )
                },
            )?;
            Box::new(c)
        };
        let cache_path = config
            .cache
            .clone()
            .unwrap_or_else(|| config.out.join("paraphrase_cache.jsonl"));
        if let Some(dir) = cache_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        Ok(Self(Some((client, ParaphraseCache::open(cache_path)?))))
    }

    fn get(&self) -> (&dyn ParaphraseClient, &ParaphraseCache) {
        let (client, cache) = self.0.as_ref().expect("opened for paraphrase runs");
        (client.as_ref(), cache)
    }
}

fn prepare(config: &RunConfig) -> Result<(String, Vec<McqRecord>, Grid)> {
    let (id, items) = dataset(config)?;
    let paraphraser = Paraphraser::new(config, config.perturb == Some(PerturbKind::Para))?;
    let grid = build_grid(config, &items, &paraphraser)?;
    Ok((id, items, grid))
}

fn ensure_out(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))
}

fn export(outcome: &mut Outcome, report: Report<'_>, path: PathBuf) -> Result<()> {
    export_report(report, &path).with_context(|| format!("writing {}", path.display()))?;
    outcome.written.push(path);
    Ok(())
}

fn write_svg(outcome: &mut Outcome, svg: String, path: PathBuf) -> Result<()> {
    fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
    outcome.written.push(path);
    Ok(())
}

/// Traces of a directory, keyed by prompt id.
fn load_traces(dir: &Path, failures: &mut Vec<String>) -> Result<HashMap<String, TraceBundle>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "pstr"))
        .collect();
    entries.sort();
    let mut out = HashMap::new();
    for path in entries {
        match read_trace(&path) {
            Ok(b) => {
                out.insert(b.header.prompt_id.clone(), b);
            }
            Err(e) => failures.push(format!("{}: {e}", path.display())),
        }
    }
    Ok(out)
}

fn model_target(
    config: &RunConfig,
    tokenizer: &Tokenizer,
    item: &McqRecord,
    q: usize,
) -> Result<Target> {
    Ok(config.target.resolve(
        tokenizer,
        item.options.len(),
        item.answer_index,
        config.seed,
        q,
    )?)
}

fn trace_target(
    config: &RunConfig,
    bundle: &TraceBundle,
    item: &McqRecord,
    q: usize,
) -> Result<Target> {
    let ids = &bundle.header.option_token_ids;
    if ids.len() < item.options.len() {
        bail!(
            "trace {} lacks option_token_ids for {} options",
            bundle.header.prompt_id,
            item.options.len()
        );
    }
    Ok(config.target.resolve_ids(
        &ids[..item.options.len()],
        &[],
        item.answer_index,
        config.seed,
        q,
    )?)
}

fn option_tokens(tokenizer: &Tokenizer, n: usize) -> Vec<u32> {
    (0..n)
        .map(|i| tokenizer.option_letter(i).expect("letters A-E"))
        .collect()
}

fn encode_cells(
    model: &Model,
    tokenizer: &Tokenizer,
    cells: &[Cell],
) -> Result<Vec<TokenSequence>> {
    cells
        .iter()
        .map(|c| Ok(encode_prompt(tokenizer, model, &c.text)?))
        .collect()
}

/// Pairs the first column with every other column of each question.
fn model_pairs(
    config: &RunConfig,
    model: &Model,
    items: &[McqRecord],
    grid: &Grid,
    failures: &mut Vec<String>,
) -> Vec<PromptPair> {
    let tokenizer = Tokenizer::builtin();
    let mut pairs = Vec::new();
    for (q, row) in grid.rows.iter().enumerate() {
        let Some(cells) = row else { continue };
        let built = encode_cells(model, &tokenizer, cells).and_then(|seqs| {
            let target = model_target(config, &tokenizer, &items[q], q)?;
            Ok(seqs[1..]
                .iter()
                .map(|s| PromptPair {
                    first: seqs[0].clone(),
                    second: s.clone(),
                    target,
                })
                .collect::<Vec<_>>())
        });
        match built {
            Ok(p) => pairs.extend(p),
            Err(e) => failures.push(format!("question {q}: {e}")),
        }
    }
    pairs
}

/// Layer profile of anchor-vs-variant pairs (`layer_profile.csv` + `.svg`).
pub fn cmd_analyze(config: &RunConfig) -> Result<Outcome> {
    let (dataset_id, items, grid) = prepare(config)?;
    let mut outcome = Outcome {
        failures: grid.failures.clone(),
        ..Default::default()
    };
    let report = match &config.source {
        Some(Source::Model(path)) => {
            let model = load_model(path)?;
            let pairs = model_pairs(config, &model, &items, &grid, &mut outcome.failures);
            layer_profile(&model, &pairs, &dataset_id, Direction::FromFirst)?
        }
        Some(Source::Traces(dir)) => {
            let traces = load_traces(dir, &mut outcome.failures)?;
            let mut selected = Vec::new();
            for (q, row) in grid.rows.iter().enumerate() {
                let Some(cells) = row else { continue };
                let lookup = |c: &Cell| {
                    traces
                        .get(&c.prompt_id(q))
                        .ok_or_else(|| anyhow!("missing trace {}", c.prompt_id(q)))
                };
                let item = (|| -> Result<Vec<(&TraceBundle, &TraceBundle, Target)>> {
                    let first = lookup(&cells[0])?;
                    let target = trace_target(config, first, &items[q], q)?;
                    if first.header.gradient_target != Some(target.token) {
                        bail!(
                            "trace {} has no gradients for token {}",
                            first.header.prompt_id,
                            target.token
                        );
                    }
                    cells[1..]
                        .iter()
                        .map(|c| Ok((first, lookup(c)?, target)))
                        .collect()
                })();
                match item {
                    Ok(p) => selected.extend(p),
                    Err(e) => outcome.failures.push(format!("question {q}: {e}")),
                }
            }
            let pairs: Vec<TracePair<'_>> = selected
                .iter()
                .map(|(a, b, target)| TracePair {
                    first: &a.trace,
                    first_gradients: &a.gradients,
                    second: &b.trace,
                    target: *target,
                })
                .collect();
            layer_profile_from_traces(&pairs, &dataset_id)?
        }
        None => bail!("analyze needs --model-config or --traces"),
    };
    ensure_out(config)?;
    export(
        &mut outcome,
        Report::LayerProfile(&report),
        config.out.join("layer_profile.csv"),
    )?;
    let labels: Vec<String> = report.layers.iter().map(|l| l.layer.to_string()).collect();
    let bound: Vec<f64> = report.layers.iter().map(|l| l.upper_bound.mean).collect();
    let dlp: Vec<f64> = report
        .layers
        .iter()
        .map(|l| l.abs_delta_logprob.mean)
        .collect();
    let dh: Vec<f64> = report.layers.iter().map(|l| l.delta_h_norm.mean).collect();
    let svg = line_chart(
        &format!(
            "{} / {} ({} pairs)",
            report.model_id, report.dataset_id, report.n_pairs
        ),
        &labels,
        &[
            Series {
                name: "mean upper bound",
                values: &bound,
            },
            Series {
                name: "mean |dlogpi|",
                values: &dlp,
            },
            Series {
                name: "mean |dh|",
                values: &dh,
            },
        ],
    );
    write_svg(&mut outcome, svg, config.out.join("layer_profile.svg"))?;
    Ok(outcome)
}

/// Emits one `PromptVariantSet` per item as JSON lines (`variants.jsonl`).
/// Typo, orthographic and paraphrase kinds produce severities `1..=k`;
/// template kinds produce their three fixtures.
pub fn cmd_perturb(config: &RunConfig) -> Result<Outcome> {
    let kind = config
        .perturb
        .ok_or_else(|| anyhow!("perturb needs --perturb KIND"))?;
    let (_, items) = dataset(config)?;
    ensure_out(config)?;
    let paraphraser = Paraphraser::new(config, kind == PerturbKind::Para)?;
    let seed_fixture = template_variants(TemplateFamily::Seed)?.remove(0);
    let mut outcome = Outcome::default();
    let mut lines = String::new();
    for (q, item) in items.iter().enumerate() {
        let seed_prompt = match item.render(&seed_fixture) {
            Ok(t) => t,
            Err(e) => {
                outcome.failures.push(format!("question {q}: {e}"));
                continue;
            }
        };
        let variants: std::result::Result<Vec<Variant>, String> = match kind.template_family() {
            Some(family) => template_variants(family)?
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let text = item.render(f).map_err(|e| e.to_string())?;
                    Ok(Variant {
                        spec: PerturbationSpec {
                            kind,
                            k: 0,
                            seed: config.seed,
                            variant_index: i,
                        },
                        edit_log: diff_edit(&seed_prompt, &text),
                        text,
                        warning: None,
                    })
                })
                .collect(),
            None => (1..=config.k)
                .map(|k| {
                    let per_k = RunConfig {
                        k,
                        ..config.clone()
                    };
                    perturbed(&per_k, kind, &seed_prompt, q, &paraphraser)
                })
                .collect(),
        };
        match variants {
            Ok(variants) => {
                for v in &variants {
                    if let Some(w) = &v.warning {
                        log::warn!("question {q}: {w}");
                    }
                }
                let set = PromptVariantSet {
                    seed_prompt,
                    variants,
                };
                set.verify().map_err(|e| anyhow!("question {q}: {e}"))?;
                lines.push_str(&serde_json::to_string(&set)?);
                lines.push('\n');
            }
            Err(e) => outcome.failures.push(format!("question {q}: {e}")),
        }
    }
    let path = config.out.join("variants.jsonl");
    fs::write(&path, lines)?;
    outcome.written.push(path);
    Ok(outcome)
}

/// Last-position logits per question and column, in grid order.
type LogitGrid = Vec<Option<Vec<(String, Vec<f64>, Vec<u32>, Target)>>>;

/// Logits with option ids and the resolved target for every grid cell.
fn cell_logits(
    config: &RunConfig,
    items: &[McqRecord],
    grid: &Grid,
    failures: &mut Vec<String>,
) -> Result<LogitGrid> {
    let mut out = Vec::with_capacity(grid.rows.len());
    match &config.source {
        Some(Source::Model(path)) => {
            let model = load_model(path)?;
            let tokenizer = Tokenizer::builtin();
            for (q, row) in grid.rows.iter().enumerate() {
                let Some(cells) = row else {
                    out.push(None);
                    continue;
                };
                let item = &items[q];
                let result = (|| -> Result<_> {
                    let target = model_target(config, &tokenizer, item, q)?;
                    let options = option_tokens(&tokenizer, item.options.len());
                    encode_cells(&model, &tokenizer, cells)?
                        .iter()
                        .zip(cells)
                        .map(|(seq, c)| {
                            let t = forward_trace(&model, seq, &c.prompt_id(q))?;
                            Ok((c.label.clone(), t.logits, options.clone(), target))
                        })
                        .collect::<Result<Vec<_>>>()
                })();
                match result {
                    Ok(r) => out.push(Some(r)),
                    Err(e) => {
                        failures.push(format!("question {q}: {e}"));
                        out.push(None);
                    }
                }
            }
        }
        Some(Source::Traces(dir)) => {
            let traces = load_traces(dir, failures)?;
            for (q, row) in grid.rows.iter().enumerate() {
                let Some(cells) = row else {
                    out.push(None);
                    continue;
                };
                let item = &items[q];
                let result = cells
                    .iter()
                    .map(|c| {
                        let b = traces
                            .get(&c.prompt_id(q))
                            .ok_or_else(|| anyhow!("missing trace {}", c.prompt_id(q)))?;
                        let target = trace_target(config, b, item, q)?;
                        let options = b.header.option_token_ids[..item.options.len()].to_vec();
                        Ok((c.label.clone(), b.trace.logits.clone(), options, target))
                    })
                    .collect::<Result<Vec<_>>>();
                match result {
                    Ok(r) => out.push(Some(r)),
                    Err(e) => {
                        failures.push(format!("question {q}: {e}"));
                        out.push(None);
                    }
                }
            }
        }
        None => bail!("needs --model-config or --traces"),
    }
    Ok(out)
}

/// Per-question sensitivity scores over the grid columns (`pss.csv`).
pub fn cmd_pss(config: &RunConfig) -> Result<Outcome> {
    let (_, items, grid) = prepare(config)?;
    let mut outcome = Outcome {
        failures: grid.failures.clone(),
        ..Default::default()
    };
    let logits = cell_logits(config, &items, &grid, &mut outcome.failures)?;
    let mut question_ids = Vec::new();
    let mut prompt_ids = Vec::new();
    let mut rows = Vec::new();
    for (q, row) in logits.iter().enumerate() {
        let Some(cells) = row else { continue };
        question_ids.push(format!("q{q}"));
        prompt_ids = cells.iter().map(|c| c.0.clone()).collect();
        rows.push(
            cells
                .iter()
                .map(|(_, l, options, _)| is_correct(l, options, items[q].answer_index) as u8)
                .collect(),
        );
    }
    let matrix = CorrectnessMatrix::new(question_ids, prompt_ids, rows)?;
    let report = pss(&matrix);
    ensure_out(config)?;
    export(
        &mut outcome,
        Report::Pss(&report),
        config.out.join("pss.csv"),
    )?;
    Ok(outcome)
}

/// Template/question variance shares of the target logit (`anova.csv`).
pub fn cmd_anova(config: &RunConfig) -> Result<Outcome> {
    let (_, items, grid) = prepare(config)?;
    let mut outcome = Outcome {
        failures: grid.failures.clone(),
        ..Default::default()
    };
    let logits = cell_logits(config, &items, &grid, &mut outcome.failures)?;
    let mut cells = Vec::new();
    for (q, row) in logits.iter().enumerate() {
        let Some(row) = row else { continue };
        for (label, l, _, target) in row {
            cells.push((label.clone(), format!("q{q}"), l[target.token as usize]));
        }
    }
    let table = LogitTable::from_cells(&cells)?;
    let report = anova_contributions(&table);
    ensure_out(config)?;
    export(
        &mut outcome,
        Report::Anova(&report),
        config.out.join("anova.csv"),
    )?;
    Ok(outcome)
}

/// Steering sweep at `⌈L/4⌉, ⌈L/2⌉, ⌈3L/4⌉`, repeated depths dropped
/// (`steering.csv` + `.svg`).
pub fn cmd_steer(config: &RunConfig) -> Result<Outcome> {
    let Some(Source::Model(path)) = &config.source else {
        bail!("steer needs --model-config: steering reruns the forward pass");
    };
    let model = load_model(path)?;
    let (_, items, grid) = prepare(config)?;
    let mut outcome = Outcome {
        failures: grid.failures.clone(),
        ..Default::default()
    };
    let pairs = model_pairs(config, &model, &items, &grid, &mut outcome.failures);
    let mut depths = default_depths(model.num_layers());
    depths.dedup();
    let sweep = steering_sweep(&model, &pairs, &depths)?;
    ensure_out(config)?;
    export(
        &mut outcome,
        Report::Steering(&sweep),
        config.out.join("steering.csv"),
    )?;
    let labels: Vec<String> = sweep.iter().map(|s| format!("layer {}", s.layer)).collect();
    let base: Vec<f64> = sweep.iter().map(|s| s.mean_baseline).collect();
    let steered: Vec<f64> = sweep.iter().map(|s| s.mean_steered).collect();
    let svg = bar_chart(
        &format!("steering, {} pairs", pairs.len()),
        &labels,
        &[
            Series {
                name: "baseline",
                values: &base,
            },
            Series {
                name: "steered",
                values: &steered,
            },
        ],
    );
    write_svg(&mut outcome, svg, config.out.join("steering.svg"))?;
    Ok(outcome)
}

/// Fits PSS against the layer-averaged upper bound over earlier runs, each
/// a directory holding `layer_profile.csv` and `pss.csv` (`corr.csv`).
pub fn cmd_corr(runs: &[PathBuf], out: &Path) -> Result<Outcome> {
    let mut points = Vec::with_capacity(runs.len());
    for dir in runs {
        let profile = read_layer_profile(
            fs::File::open(dir.join("layer_profile.csv"))
                .with_context(|| format!("opening {}", dir.join("layer_profile.csv").display()))?,
        )?;
        if profile.is_empty() {
            bail!("{}: empty layer profile", dir.display());
        }
        let bound = profile.iter().map(|r| r.mean_bound).sum::<f64>() / profile.len() as f64;
        let scores = read_pss(
            fs::File::open(dir.join("pss.csv"))
                .with_context(|| format!("opening {}", dir.join("pss.csv").display()))?,
        )?;
        let summary = scores
            .iter()
            .find(|r| r.question_id == PSS_SUMMARY_ID)
            .expect("reader checks the summary row");
        points.push((bound, summary.s_i));
    }
    let fit = bound_pss_fit(&points)?;
    fs::create_dir_all(out)?;
    let mut outcome = Outcome::default();
    export(&mut outcome, Report::Corr(&fit), out.join("corr.csv"))?;
    Ok(outcome)
}

/// Writes one trace per grid prompt, with suffix gradients at every layer
/// for the resolved target, to `out/<label>_<question>.pstr`.
pub fn cmd_dump_traces(config: &RunConfig) -> Result<Outcome> {
    let Some(Source::Model(path)) = &config.source else {
        bail!("dump-traces needs --model-config");
    };
    let model = load_model(path)?;
    let tokenizer = Tokenizer::builtin();
    let (_, items, grid) = prepare(config)?;
    let mut outcome = Outcome {
        failures: grid.failures.clone(),
        ..Default::default()
    };
    ensure_out(config)?;
    for (q, row) in grid.rows.iter().enumerate() {
        let Some(cells) = row else { continue };
        let item = &items[q];
        let result = (|| -> Result<Vec<PathBuf>> {
            let target = model_target(config, &tokenizer, item, q)?;
            let mut written = Vec::new();
            for (seq, cell) in encode_cells(&model, &tokenizer, cells)?.iter().zip(cells) {
                let trace = forward_trace(&model, seq, &cell.prompt_id(q))?;
                let grads: Vec<GradientVector> = (0..=model.num_layers())
                    .map(|l| suffix_gradient(&model, seq, l, target.token))
                    .collect::<std::result::Result<_, _>>()?;
                let mut bundle = TraceBundle::new(
                    trace,
                    grads,
                    model.config.precision,
                    tokenizer.id(),
                    cell.text.clone(),
                );
                bundle.header.option_token_ids = (0..5)
                    .map(|i| tokenizer.option_letter(i).expect("A-E"))
                    .collect();
                let path = config.out.join(format!("{}_{q}.pstr", cell.label));
                write_trace(&bundle, &path)?;
                written.push(path);
            }
            Ok(written)
        })();
        match result {
            Ok(w) => outcome.written.extend(w),
            Err(e) => outcome.failures.push(format!("question {q}: {e}")),
        }
    }
    Ok(outcome)
}
