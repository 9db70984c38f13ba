use std::path::Path;

use serde::Serialize;
use vnjp_core::analyze::{
    build_frequency_table, flag_sentences, select_threshold, token_count_histogram, FrequencyTable, ThresholdReport,
};
use vnjp_core::assemble::{merge, provenance_counts, split, write_training, MergeOptions, Split};
use vnjp_core::corpus::{read_corpus, write_corpus, CorpusFormat, ParallelCorpus, SentencePair, Side};
use vnjp_core::generate::{
    demonstrations_for, refine_flagged, translate_missing, FailureRecord, GenerateError, GenerationBackend,
    HttpBackend, MockBackend, PromptTemplate, ThreadSleeper, API_KEY_ENV,
};
use vnjp_core::metrics::corpus_bleu;
use vnjp_core::retrieve::{build_index, Bm25Index, RetrievedExample};

use crate::config::{BackendKind, PipelineConfig};
use crate::{CliError, Command, Run};

pub fn dispatch(command: &Command, cfg: &PipelineConfig, run: &mut Run) -> Result<(), CliError> {
    match command {
        Command::Analyze => {
            let corpus = load_input(cfg, run)?;
            analyze(cfg, run, &corpus).map(drop)
        }
        Command::Flag => {
            let corpus = load_input(cfg, run)?;
            let (table, report) = threshold(cfg, &corpus)?;
            run.write_json("threshold_report.json", &report)?;
            flag(run, &corpus, &table, report.threshold).map(drop)
        }
        Command::Retrieve => {
            let corpus = load_input(cfg, run)?;
            let (index, exclude_same_id) = pool_index(cfg, run, &corpus)?;
            retrieve(cfg, run, &corpus, &index, exclude_same_id)
        }
        Command::Generate => {
            let corpus = load_input(cfg, run)?;
            let (index, exclude_same_id) = pool_index(cfg, run, &corpus)?;
            generate(cfg, run, &corpus, &index, exclude_same_id).map(drop)
        }
        Command::Merge { synthetic } => {
            let corpus = load_input(cfg, run)?;
            let default = run.out_dir().join("synthetic.jsonl");
            let path = synthetic.as_deref().unwrap_or(&default);
            let synthetic = load_corpus_file(run, path)?;
            merge_stage(cfg, run, &corpus, synthetic.pairs()).map(drop)
        }
        Command::Split => {
            let corpus = load_input(cfg, run)?;
            split_stage(cfg, run, &corpus).map(drop)
        }
        Command::Export { output } => {
            let input = input_path(cfg)?.to_path_buf();
            let corpus = load_input(cfg, run)?;
            let name = match output {
                Some(name) => name.clone(),
                None => format!(
                    "{}_chat.jsonl",
                    input.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default()
                ),
            };
            export(cfg, run, &corpus, &name)
        }
        Command::Bleu { hyp, reference, tsv } => bleu(cfg, run, hyp.as_deref(), reference.as_deref(), tsv.as_deref()),
        Command::Stats => {
            let corpus = load_input(cfg, run)?;
            stats(cfg, run, &corpus)
        }
        Command::Pipeline => pipeline(cfg, run),
    }
}

fn input_path(cfg: &PipelineConfig) -> Result<&Path, CliError> {
    cfg.paths
        .input
        .as_deref()
        .ok_or_else(|| CliError::Config("no input corpus; pass --input or set paths.input".into()))
}

fn load_corpus_file(run: &mut Run, path: &Path) -> Result<ParallelCorpus, CliError> {
    let bytes = run.read_input(path)?;
    read_corpus(&bytes, CorpusFormat::from_path(path)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_input(cfg: &PipelineConfig, run: &mut Run) -> Result<ParallelCorpus, CliError> {
    load_corpus_file(run, input_path(cfg)?)
}

fn corpus_jsonl(corpus: &ParallelCorpus) -> Vec<u8> {
    let mut buf = Vec::new();
    write_corpus(corpus, &mut buf, CorpusFormat::Jsonl).expect("writing to memory");
    buf
}

fn write_corpus_out(run: &mut Run, name: &str, corpus: &ParallelCorpus) -> Result<(), CliError> {
    run.write(name, &corpus_jsonl(corpus))
}

fn template(run: &mut Run, path: Option<&Path>, fallback: fn() -> PromptTemplate) -> Result<PromptTemplate, CliError> {
    match path {
        None => Ok(fallback()),
        Some(path) => {
            let bytes = run.read_input(path)?;
            let text = String::from_utf8(bytes)
                .map_err(|_| CliError::Config(format!("{}: template is not UTF-8", path.display())))?;
            Ok(PromptTemplate::parse(&text)?)
        }
    }
}

fn backend(cfg: &PipelineConfig) -> Result<Box<dyn GenerationBackend>, CliError> {
    match cfg.backend.kind {
        BackendKind::Mock => Ok(Box::new(MockBackend)),
        BackendKind::Http => {
            let key = std::env::var(API_KEY_ENV)
                .ok()
                .filter(|k| !k.trim().is_empty())
                .ok_or_else(|| CliError::Config(format!("{API_KEY_ENV} is not set (or pass --mock-backend)")))?;
            Ok(Box::new(HttpBackend::new(cfg.backend.http(Some(key)))))
        }
    }
}

fn threshold(cfg: &PipelineConfig, corpus: &ParallelCorpus) -> Result<(FrequencyTable, ThresholdReport), CliError> {
    let a = &cfg.analyze;
    let table = build_frequency_table(corpus, a.side, a.ja_segmentation)?;
    let mut report = select_threshold(&table, corpus, a.target_fraction)?;
    if let Some(t) = a.threshold {
        let flagged = flag_sentences(corpus, &table, t)?.flagged().count();
        report.threshold = t;
        report.flagged_count = flagged;
        report.flagged_fraction = flagged as f64 / corpus.len() as f64;
    }
    log::info!(
        "threshold {} flags {} of {} sentences ({:.2}%)",
        report.threshold,
        report.flagged_count,
        report.sentence_count,
        report.flagged_fraction * 100.0
    );
    Ok((table, report))
}

fn histograms(cfg: &PipelineConfig, run: &mut Run, corpus: &ParallelCorpus) -> Result<(), CliError> {
    for side in [Side::Vi, Side::Ja] {
        if side == Side::Ja && corpus.iter().any(|p| p.target_ja.is_none()) {
            log::warn!("skipping the ja histogram: some pairs have no Japanese side");
            continue;
        }
        let h = token_count_histogram(corpus, side, cfg.analyze.bucket_width, cfg.analyze.ja_segmentation)?;
        run.write(&format!("histogram_{side}.csv"), h.to_csv().as_bytes())?;
    }
    Ok(())
}

fn analyze(
    cfg: &PipelineConfig,
    run: &mut Run,
    corpus: &ParallelCorpus,
) -> Result<(FrequencyTable, ThresholdReport), CliError> {
    let (table, report) = threshold(cfg, corpus)?;
    let mut freqs = String::from("token\tcount\n");
    for (token, count) in table.ranked() {
        freqs.push_str(&format!("{token}\t{count}\n"));
    }
    run.write("frequencies.tsv", freqs.as_bytes())?;
    run.write_json("threshold_report.json", &report)?;
    histograms(cfg, run, corpus)?;
    Ok((table, report))
}

fn flag(
    run: &mut Run,
    corpus: &ParallelCorpus,
    table: &FrequencyTable,
    threshold: u64,
) -> Result<ParallelCorpus, CliError> {
    let flagged = flag_sentences(corpus, table, threshold)?;
    write_corpus_out(run, "flagged.jsonl", &flagged)?;
    Ok(flagged)
}

/// Index over the clean pool if one is configured, else over the corpus's
/// non-flagged pairs. The flag says whether same-id documents must be
/// excluded (only when the pool shares the corpus's id space).
fn pool_index(cfg: &PipelineConfig, run: &mut Run, corpus: &ParallelCorpus) -> Result<(Bm25Index, bool), CliError> {
    let (pool, exclude_same_id) = match &cfg.paths.clean_pool {
        Some(path) => (load_corpus_file(run, path)?, false),
        None => {
            let pairs: Vec<SentencePair> = corpus
                .iter()
                .filter(|p| !p.flagged && p.target_ja.is_some())
                .cloned()
                .collect();
            (ParallelCorpus::new(pairs)?, true)
        }
    };
    Ok((build_index(&pool, cfg.bm25.k1, cfg.bm25.b)?, exclude_same_id))
}

#[derive(Serialize)]
struct RetrievalRecord<'a> {
    id: u64,
    query_vi: &'a str,
    demonstrations: Vec<RetrievedExample>,
}

fn retrieve(
    cfg: &PipelineConfig,
    run: &mut Run,
    corpus: &ParallelCorpus,
    index: &Bm25Index,
    exclude_same_id: bool,
) -> Result<(), CliError> {
    run.write("bm25_index.json", index.snapshot_json().as_bytes())?;
    let settings = cfg.generation_settings(exclude_same_id);
    let records: Vec<RetrievalRecord> = corpus
        .flagged()
        .map(|pair| RetrievalRecord {
            id: pair.id,
            query_vi: &pair.source_vi,
            demonstrations: demonstrations_for(pair, index, &settings),
        })
        .collect();
    run.write_jsonl("retrievals.jsonl", &records)
}

fn failures_name(cfg: &PipelineConfig) -> String {
    cfg.paths.failures.to_string_lossy().into_owned()
}

fn generate(
    cfg: &PipelineConfig,
    run: &mut Run,
    corpus: &ParallelCorpus,
    index: &Bm25Index,
    exclude_same_id: bool,
) -> Result<Vec<SentencePair>, CliError> {
    let template = template(run, cfg.paths.template.as_deref(), PromptTemplate::default_cot)?;
    let backend = backend(cfg)?;
    let settings = cfg.generation_settings(exclude_same_id);
    match refine_flagged(corpus, index, backend.as_ref(), &template, &settings, &ThreadSleeper) {
        Ok(outcome) => {
            log::info!(
                "refined {} of {} flagged pairs with {} backend calls",
                outcome.refined_ids.len(),
                corpus.flagged().count(),
                outcome.backend_calls
            );
            write_corpus_out(run, "synthetic.jsonl", &ParallelCorpus::new(outcome.synthetic.clone())?)?;
            run.write_jsonl(&failures_name(cfg), &outcome.failures)?;
            Ok(outcome.synthetic)
        }
        Err(GenerateError::AllFailed { failures }) => {
            run.write("synthetic.jsonl", b"")?;
            run.write_jsonl(&failures_name(cfg), &failures)?;
            Err(CliError::Backend(format!(
                "all {} flagged pairs failed; see {}",
                failures.len(),
                failures_name(cfg)
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn merge_stage(
    cfg: &PipelineConfig,
    run: &mut Run,
    corpus: &ParallelCorpus,
    synthetic: &[SentencePair],
) -> Result<ParallelCorpus, CliError> {
    let options = MergeOptions {
        keep_flagged_baseline: cfg.export.keep_flagged_baseline,
    };
    let outcome = merge(corpus, synthetic, options)?;
    write_corpus_out(run, "merged.jsonl", &outcome.corpus)?;
    run.write_jsonl("merge_warnings.jsonl", &outcome.warnings)?;
    Ok(outcome.corpus)
}

fn split_stage(cfg: &PipelineConfig, run: &mut Run, corpus: &ParallelCorpus) -> Result<Split, CliError> {
    let parts = split(corpus, &cfg.split_spec())?;
    for (name, part) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
        write_corpus_out(run, &format!("{name}.jsonl"), part)?;
    }
    Ok(parts)
}

fn export(cfg: &PipelineConfig, run: &mut Run, corpus: &ParallelCorpus, name: &str) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_training(corpus, &mut buf, &cfg.export.instruction)?;
    run.write(name, &buf)
}

fn read_lines(run: &mut Run, path: &Path) -> Result<Vec<String>, CliError> {
    let bytes = run.read_input(path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Data(format!("{}: not valid UTF-8", path.display())))?;
    Ok(text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_owned())
        .collect())
}

fn bleu(
    cfg: &PipelineConfig,
    run: &mut Run,
    hyp: Option<&Path>,
    reference: Option<&Path>,
    tsv: Option<&Path>,
) -> Result<(), CliError> {
    let (hyps, refs) = match (hyp, reference, tsv) {
        (Some(h), Some(r), None) => (read_lines(run, h)?, read_lines(run, r)?),
        (None, None, Some(t)) => {
            let mut hyps = Vec::new();
            let mut refs = Vec::new();
            for (i, line) in read_lines(run, t)?.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                let [_, h, r] = fields.as_slice() else {
                    return Err(CliError::Data(format!(
                        "{}:{}: expected id<TAB>hyp<TAB>ref",
                        t.display(),
                        i + 1
                    )));
                };
                hyps.push(h.to_string());
                refs.push(r.to_string());
            }
            (hyps, refs)
        }
        _ => return Err(CliError::Usage("bleu needs --hyp and --ref, or --tsv".into())),
    };
    let report = corpus_bleu(&hyps, &refs, cfg.bleu_tokenization(), cfg.bleu.smoothing)?;
    println!("{}", report.summary());
    run.write_json("bleu.json", &report)
}

#[derive(Serialize)]
struct Stats {
    pairs: usize,
    flagged: usize,
    missing_targets: usize,
    max_id: Option<u64>,
    provenance: std::collections::BTreeMap<&'static str, usize>,
}

fn stats(cfg: &PipelineConfig, run: &mut Run, corpus: &ParallelCorpus) -> Result<(), CliError> {
    let stats = Stats {
        pairs: corpus.len(),
        flagged: corpus.flagged().count(),
        missing_targets: corpus.iter().filter(|p| p.target_ja.is_none()).count(),
        max_id: corpus.max_id(),
        provenance: provenance_counts(corpus)
            .into_iter()
            .map(|(p, n)| (p.as_str(), n))
            .collect(),
    };
    println!(
        "pairs={} flagged={} missing_targets={}",
        stats.pairs, stats.flagged, stats.missing_targets
    );
    for (p, n) in &stats.provenance {
        println!("  {p}: {n}");
    }
    run.write_json("stats.json", &stats)?;
    histograms(cfg, run, corpus)
}

fn pipeline(cfg: &PipelineConfig, run: &mut Run) -> Result<(), CliError> {
    let mut corpus = load_input(cfg, run)?;

    let missing = corpus.iter().filter(|p| p.target_ja.is_none()).count();
    if missing > 0 && cfg.backend.translate_missing {
        log::info!("translating {missing} pairs without a Japanese side");
        let template = template(run, cfg.paths.baseline_template.as_deref(), PromptTemplate::baseline)?;
        let backend = backend(cfg)?;
        let (filled, failures) = translate_missing(
            &corpus,
            backend.as_ref(),
            &template,
            &cfg.generation_settings(true),
            &ThreadSleeper,
        )?;
        write_corpus_out(run, "baseline.jsonl", &filled)?;
        run.write_jsonl::<FailureRecord>("baseline_failures.jsonl", &failures)?;
        if filled.is_empty() {
            return Err(CliError::Backend("every baseline translation failed".into()));
        }
        corpus = filled;
    }

    let (table, report) = analyze(cfg, run, &corpus)?;
    let flagged = flag(run, &corpus, &table, report.threshold)?;
    let (index, exclude_same_id) = pool_index(cfg, run, &flagged)?;
    retrieve(cfg, run, &flagged, &index, exclude_same_id)?;
    let synthetic = generate(cfg, run, &flagged, &index, exclude_same_id)?;
    let merged = merge_stage(cfg, run, &flagged, &synthetic)?;
    let parts = split_stage(cfg, run, &merged)?;
    for (name, part) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
        export(cfg, run, part, &format!("{name}_chat.jsonl"))?;
    }
    log::info!("wrote {}", run.output_names().collect::<Vec<_>>().join(", "));
    Ok(())
}
