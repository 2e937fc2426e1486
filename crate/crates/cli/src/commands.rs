use std::fs;
use std::num::NonZeroUsize;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde_json::json;

use mdqa::corpus::{
    adapters, load_articles, load_passages, load_qa_instances, window_corpus, write_jsonl, AnswerType, PassageStore,
    QaInstance,
};
use mdqa::decompose::{decompose as decompose_question, default_examples, parse_examples, DecompositionExample};
use mdqa::eval::evaluate_run_with;
use mdqa::index::Bm25Params;
use mdqa::pipeline::{answer_question, run_batch, AnswerRecord, RunConfig, Services};
use mdqa::prompting::{bootstrap_example_pool, load_example_pool, training_items, BootstrapError, PromptExample};
use mdqa::Index;

use crate::config::{self, ProviderSettings};
use crate::services::{self, Providers};
use crate::{
    AnswerArgs, BootstrapArgs, CorpusFormatArg, DatasetArg, DecomposeArgs, EvaluateArgs, ImportArgs, IndexArgs, RunArgs,
    SearchArgs,
};

const SNAPSHOT_FILE: &str = "index.json";
const PASSAGES_FILE: &str = "passages.jsonl";

fn load_store(index_dir: &Path) -> Result<PassageStore> {
    let path = index_dir.join(PASSAGES_FILE);
    let passages = load_passages(&path).with_context(|| format!("loading passages {}", path.display()))?;
    Ok(PassageStore::new(passages)?)
}

fn load_index(index_dir: &Path, store: &PassageStore) -> Result<Index> {
    let path = index_dir.join(SNAPSHOT_FILE);
    let index = Index::load(&path).with_context(|| format!("loading index {}", path.display()))?;
    if let Some(id) = index.passage_ids().iter().find(|id| !store.contains(id)) {
        bail!("index {} refers to passage `{id}` missing from {PASSAGES_FILE}", path.display());
    }
    Ok(index)
}

fn load_gold_store(path: Option<&Path>) -> Result<Option<PassageStore>> {
    path.map(|p| {
        let passages = load_passages(p).with_context(|| format!("loading gold passages {}", p.display()))?;
        Ok(PassageStore::new(passages)?)
    })
    .transpose()
}

fn load_examples(path: Option<&Path>) -> Result<Vec<PromptExample>> {
    match path {
        Some(p) => load_example_pool(p).with_context(|| format!("loading example pool {}", p.display())),
        None => Ok(Vec::new()),
    }
}

fn load_decomposition_examples(path: Option<&Path>) -> Result<Vec<DecompositionExample>> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_examples(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(default_examples()),
    }
}

pub fn index(a: IndexArgs) -> Result<ExitCode> {
    let params = Bm25Params::new(a.k1, a.b)?;
    let passages = match a.format {
        CorpusFormatArg::Articles => {
            let window = NonZeroUsize::new(a.window_size).context("--window-size must be positive")?;
            let articles = load_articles(&a.corpus).with_context(|| format!("loading corpus {}", a.corpus.display()))?;
            window_corpus(&articles, window)
        }
        CorpusFormatArg::Passages => {
            load_passages(&a.corpus).with_context(|| format!("loading corpus {}", a.corpus.display()))?
        }
    };
    let store = PassageStore::new(passages)?;
    let index = Index::build(store.passages(), params)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    index.save(&a.out.join(SNAPSHOT_FILE))?;
    write_jsonl(&a.out.join(PASSAGES_FILE), store.passages())?;
    println!("passages: {}", index.num_docs());
    println!("vocabulary: {}", index.vocabulary_size());
    println!("avgdl: {:.3}", index.avgdl());
    Ok(ExitCode::SUCCESS)
}

pub fn search(a: SearchArgs) -> Result<ExitCode> {
    if a.k == 0 {
        bail!("--k must be positive");
    }
    let store = load_store(&a.index)?;
    let index = load_index(&a.index, &store)?;
    for hit in index.search(&a.query, a.k) {
        let title = store.get(&hit.passage_id).map_or("", |p| p.title.as_str());
        println!("{}\t{:.6}\t{}\t{}", hit.rank, hit.score, hit.passage_id, title);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn decompose(a: DecomposeArgs) -> Result<ExitCode> {
    let file = config::provider_settings(a.config.as_deref())?;
    let examples = load_decomposition_examples(a.decomposition_examples.as_deref())?;
    let providers = services::build(&a.providers, &file, RunConfig::default().budget.model_limit)?;
    let d = decompose_question(&a.question, providers.completion()?, &examples, true)?;
    for (i, sub) in d.subquestions.iter().enumerate() {
        println!("{}: {sub}", i + 1);
    }
    Ok(ExitCode::SUCCESS)
}

struct Loaded {
    store: PassageStore,
    gold_store: Option<PassageStore>,
    index: Option<Index>,
    examples: Vec<PromptExample>,
    decomposition_examples: Vec<DecompositionExample>,
    providers: Providers,
}

impl Loaded {
    fn services(&self) -> Result<Services<'_>> {
        let mut s = Services::new(&self.store, self.providers.completion()?);
        s.gold_store = self.gold_store.as_ref();
        s.index = self.index.as_ref();
        s.scorer = self.providers.scorer();
        s.embedder = self.providers.embedder.as_ref();
        s.examples = &self.examples;
        s.decomposition_examples = &self.decomposition_examples;
        Ok(s)
    }
}

#[allow(clippy::too_many_arguments)]
fn load_everything(
    config: &RunConfig,
    file: &ProviderSettings,
    provider_args: &crate::ProviderArgs,
    index_dir: &Path,
    gold_passages: Option<&Path>,
    examples: Option<&Path>,
    decomposition_examples: Option<&Path>,
) -> Result<Loaded> {
    let store = load_store(index_dir)?;
    let index = if config.context_source.uses_index() { Some(load_index(index_dir, &store)?) } else { None };
    Ok(Loaded {
        gold_store: load_gold_store(gold_passages)?,
        index,
        examples: load_examples(examples)?,
        decomposition_examples: load_decomposition_examples(decomposition_examples)?,
        providers: services::build(provider_args, file, config.budget.model_limit)?,
        store,
    })
}

pub fn answer(a: AnswerArgs) -> Result<ExitCode> {
    let (config, file) = config::resolve(&a.overrides)?;
    let loaded = load_everything(
        &config,
        &file,
        &a.providers,
        &a.index,
        None,
        a.examples.as_deref(),
        a.decomposition_examples.as_deref(),
    )?;
    let services = loaded.services()?;
    services.check(&config)?;
    let instance = QaInstance {
        question_id: "question".into(),
        question: a.question.clone(),
        gold_answers: Vec::new(),
        answer_type: AnswerType::Span,
        gold_evidence_ids: if a.evidence.is_empty() { Vec::new() } else { vec![a.evidence.clone()] },
        linked_article_ids: a.linked.clone(),
        grounding_article_id: a.grounding_article.clone(),
        subquestions: Vec::new(),
    };
    let record = answer_question(&instance, &config, &services);
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(if record.status.is_ok() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

pub fn run(a: RunArgs) -> Result<ExitCode> {
    let (config, file) = config::resolve(&a.overrides)?;
    let instances =
        load_qa_instances(&a.questions).with_context(|| format!("loading questions {}", a.questions.display()))?;
    let loaded = load_everything(
        &config,
        &file,
        &a.providers,
        &a.index,
        a.gold_passages.as_deref(),
        a.examples.as_deref(),
        a.decomposition_examples.as_deref(),
    )?;
    let services = loaded.services()?;
    services.check(&config)?;
    log::info!("answering {} questions ({})", instances.len(), config.context_source);
    let output = run_batch(&instances, &config, &services)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    fs::write(a.out.join("records.jsonl"), output.records_jsonl())?;
    let timings: Vec<serde_json::Value> = output
        .records
        .iter()
        .map(|r| {
            json!({
                "question_id": r.question_id,
                "decompose_ms": r.timings.decompose.as_secs_f64() * 1e3,
                "retrieve_ms": r.timings.retrieve.as_secs_f64() * 1e3,
                "prompt_ms": r.timings.prompt.as_secs_f64() * 1e3,
                "complete_ms": r.timings.complete.as_secs_f64() * 1e3,
            })
        })
        .collect();
    write_jsonl(&a.out.join("timings.jsonl"), &timings)?;
    fs::write(a.out.join("manifest.json"), serde_json::to_string_pretty(&output.manifest)? + "\n")?;

    let m = &output.manifest;
    eprintln!("{} records: {} ok, {} parse failed, {} failed", m.instances, m.ok, m.parse_failed, m.failed);
    Ok(if m.failures() > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

pub fn bootstrap(a: BootstrapArgs) -> Result<ExitCode> {
    let file = config::provider_settings(a.config.as_deref())?;
    let instances =
        load_qa_instances(&a.questions).with_context(|| format!("loading questions {}", a.questions.display()))?;
    let mut store = load_store(&a.index)?;
    if let Some(gold) = load_gold_store(a.gold_passages.as_deref())? {
        let mut all = store.passages().to_vec();
        all.extend(gold.passages().iter().cloned());
        store = PassageStore::new(all)?;
    }
    let (items, unresolved) = training_items(&instances, &store);
    if !unresolved.is_empty() {
        log::warn!("{} training questions have no resolvable gold evidence", unresolved.len());
    }
    let providers = services::build(&a.providers, &file, RunConfig::default().budget.model_limit)?;
    let embedder = if a.embed {
        Some(providers.embedder.as_ref().context("--embed needs an embedding service")?)
    } else {
        None
    };
    match bootstrap_example_pool(&items, providers.completion()?, embedder, a.fraction, a.seed, Some(&a.out)) {
        Ok(outcome) => {
            eprintln!(
                "sampled {}, built {}, skipped {}; wrote {}",
                outcome.sampled,
                outcome.pool.len(),
                outcome.skipped.len(),
                a.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(BootstrapError::Aborted { partial, source }) => {
            eprintln!("aborted: {source}; wrote {} examples to {}", partial.pool.len(), a.out.display());
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn read_records(path: &Path) -> Result<Vec<AnswerRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading records {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}: line {}", path.display(), i + 1)))
        .collect()
}

pub fn evaluate(a: EvaluateArgs) -> Result<ExitCode> {
    let records = read_records(&a.records)?;
    let gold = load_qa_instances(&a.gold).with_context(|| format!("loading gold {}", a.gold.display()))?;
    let report = evaluate_run_with(&records, &gold, a.profile, a.recall_k)?;
    print!("{}", report.render_table());
    if let Some(out) = &a.out {
        fs::write(out, report.to_jsonl()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

pub fn import(a: ImportArgs) -> Result<ExitCode> {
    let input = read_json(&a.input)?;
    let adapted = match a.dataset {
        DatasetArg::Qasper => adapters::qasper(&input)?,
        DatasetArg::Strategyqa => {
            let paragraphs = read_json(a.paragraphs.as_deref().context("--paragraphs is required")?)?;
            adapters::strategyqa(&input, &paragraphs)?
        }
        DatasetArg::Iirc => {
            let articles = read_json(a.context_articles.as_deref().context("--context-articles is required")?)?;
            adapters::iirc(&input, &articles)?
        }
    };
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    if !adapted.articles.is_empty() {
        write_jsonl(&a.out_dir.join("articles.jsonl"), &adapted.articles)?;
    }
    if !adapted.passages.is_empty() {
        write_jsonl(&a.out_dir.join("passages.jsonl"), &adapted.passages)?;
    }
    if !adapted.gold_passages.is_empty() {
        write_jsonl(&a.out_dir.join("gold_passages.jsonl"), &adapted.gold_passages)?;
    }
    write_jsonl(&a.out_dir.join("questions.jsonl"), &adapted.instances)?;
    println!(
        "articles: {}\npassages: {}\ngold passages: {}\nquestions: {}",
        adapted.articles.len(),
        adapted.passages.len(),
        adapted.gold_passages.len(),
        adapted.instances.len()
    );
    Ok(ExitCode::SUCCESS)
}
