use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};
use minprompt::config::{PipelineConfig, CONFIG_KEYS};
use minprompt::eval::evaluate_files;
use minprompt::pipeline::{
    build_graph, compute_stats, generate, load_graph, load_selection, load_timings, merge_timings, prepare_corpus,
    run_pipeline, save_graph, save_selection, save_stats, select, with_workers, write_config_echo, Corpus,
    OutputLayout, Stage, StageError, StageResult, Timings,
};
use minprompt::qgen::write_samples;
use minprompt::Error;

fn pipeline_command(name: &'static str, about: &'static str) -> Command {
    let mut cmd = Command::new(name).about(about).arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("PATH")
            .value_parser(clap::value_parser!(PathBuf))
            .help("TOML config file; flags override its keys"),
    );
    for (key, help) in CONFIG_KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(key.replace('_', "-"))
                .value_name("VALUE")
                .help(*help),
        );
    }
    cmd
}

fn cli() -> Command {
    Command::new("minprompt")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Select a minimal covering set of sentences and turn them into prompt-style QA samples")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(pipeline_command("run", "Run the whole pipeline"))
        .subcommand(pipeline_command("ingest", "Read, segment and tag the corpus; retrieve support sentences"))
        .subcommand(pipeline_command("graph", "Build the sentence graph from the ingested corpus"))
        .subcommand(pipeline_command("select", "Pick a dominating set of the sentence graph"))
        .subcommand(pipeline_command("generate", "Generate training samples from the selection"))
        .subcommand(pipeline_command("stats", "Summarise the artifacts in the output directory"))
        .subcommand(
            Command::new("eval")
                .about("Token F1 of predictions against gold answers")
                .arg(
                    Arg::new("pred")
                        .long("pred")
                        .required(true)
                        .value_name("FILE")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("JSONL of {\"prediction\": str}"),
                )
                .arg(
                    Arg::new("gold")
                        .long("gold")
                        .required(true)
                        .value_name("FILE")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("JSONL of {\"answers\": [str]}, paired by line"),
                ),
        )
}

fn load_config(m: &ArgMatches) -> StageResult<PipelineConfig> {
    let in_stage = |source| StageError {
        stage: Stage::Config,
        source,
    };
    let cwd = std::env::current_dir().map_err(|e| in_stage(Error::Config(format!("no working directory: {e}"))))?;
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => PipelineConfig::load(path).map_err(in_stage)?,
        None => {
            let mut cfg = PipelineConfig::default();
            cfg.resolve_paths(&cwd);
            cfg
        }
    };
    for (key, _) in CONFIG_KEYS {
        if let Some(raw) = m.get_one::<String>(key) {
            cfg.set(key, raw, &cwd).map_err(in_stage)?;
        }
    }
    Ok(cfg)
}

fn stage<T>(stage: Stage, r: minprompt::Result<T>) -> StageResult<T> {
    r.map_err(|source| StageError { stage, source })
}

fn workers<T: Send>(cfg: &PipelineConfig, f: impl FnOnce() -> StageResult<T> + Send) -> StageResult<T> {
    stage(Stage::Config, with_workers(cfg, f))?
}

fn timed<T>(timings: &mut Timings, s: Stage, f: impl FnOnce() -> StageResult<T>) -> StageResult<T> {
    let start = std::time::Instant::now();
    let out = f();
    timings.insert(s.to_string(), start.elapsed().as_millis() as u64);
    out
}

fn record_timings(layout: &OutputLayout, timings: &Timings) -> StageResult<()> {
    stage(Stage::Write, merge_timings(&layout.timings(), timings)).map(|_| ())
}

fn load_corpus(layout: &OutputLayout, s: Stage) -> StageResult<Corpus> {
    stage(s, Corpus::load(layout))
}

fn cmd_run(cfg: &PipelineConfig) -> StageResult<()> {
    let report = run_pipeline(cfg)?;
    print!("{}", report.stats.table());
    eprintln!("wrote {}", report.layout.samples().display());
    Ok(())
}

fn cmd_ingest(cfg: &PipelineConfig) -> StageResult<()> {
    stage(Stage::Config, cfg.validate())?;
    let layout = OutputLayout::new(&cfg.out);
    let mut timings = Timings::new();
    let corpus = workers(cfg, || prepare_corpus(cfg, &mut timings))?;
    stage(Stage::Write, corpus.save(&layout))?;
    stage(Stage::Write, write_config_echo(&layout.config(), cfg))?;
    record_timings(&layout, &timings)?;
    println!(
        "{} documents, {} sentences, {} mentions",
        corpus.documents.len(),
        corpus.sentences.len(),
        corpus.mentions.iter().map(Vec::len).sum::<usize>()
    );
    Ok(())
}

fn cmd_graph(cfg: &PipelineConfig) -> StageResult<()> {
    let layout = OutputLayout::new(&cfg.out);
    let corpus = load_corpus(&layout, Stage::Graph)?;
    let mut timings = Timings::new();
    let graph = timed(&mut timings, Stage::Graph, || {
        workers(cfg, || stage(Stage::Graph, build_graph(cfg, &corpus)))
    })?;
    stage(Stage::Write, save_graph(&layout.graph(), &graph))?;
    record_timings(&layout, &timings)?;
    let s = graph.stats();
    println!(
        "{} nodes, {} edges, {} entities, max degree {}",
        s.nodes, s.edges, s.entities, s.max_degree
    );
    Ok(())
}

fn node_count(layout: &OutputLayout, s: Stage) -> StageResult<usize> {
    let path = layout.sentences();
    let text = stage(s, std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e)))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).count())
}

fn cmd_select(cfg: &PipelineConfig) -> StageResult<()> {
    let layout = OutputLayout::new(&cfg.out);
    let n = node_count(&layout, Stage::Select)?;
    let graph = stage(Stage::Select, load_graph(&layout.graph(), n))?;
    let mut timings = Timings::new();
    let result = timed(&mut timings, Stage::Select, || workers(cfg, || Ok(select(cfg, &graph))))?;
    let export = result.export();
    stage(Stage::Write, save_selection(&layout.selection(), &export))?;
    record_timings(&layout, &timings)?;
    println!("selected {} of {} sentences (bound {:.4})", export.size, n, export.bound);
    Ok(())
}

fn cmd_generate(cfg: &PipelineConfig) -> StageResult<()> {
    stage(Stage::Config, cfg.validate_generation())?;
    let layout = OutputLayout::new(&cfg.out);
    let corpus = load_corpus(&layout, Stage::Generate)?;
    let selection = stage(Stage::Generate, load_selection(&layout.selection()))?;
    let mut timings = Timings::new();
    let dataset = timed(&mut timings, Stage::Generate, || {
        workers(cfg, || stage(Stage::Generate, generate(cfg, &corpus, &selection.selected)))
    })?;
    let path = layout.samples();
    let written = std::fs::File::create(&path).and_then(|file| {
        let mut w = std::io::BufWriter::new(file);
        write_samples(&mut w, &dataset.samples)?;
        std::io::Write::flush(&mut w)
    });
    stage(Stage::Write, written.map_err(|e| Error::io(&path, e)))?;
    record_timings(&layout, &timings)?;
    if dataset.samples.is_empty() {
        log::warn!("no training samples were generated");
    }
    println!("{} samples", dataset.samples.len());
    Ok(())
}

fn cmd_stats(cfg: &PipelineConfig) -> StageResult<()> {
    let layout = OutputLayout::new(&cfg.out);
    let n = node_count(&layout, Stage::Stats)?;
    let graph = stage(Stage::Stats, load_graph(&layout.graph(), n))?;
    let selection = stage(Stage::Stats, load_selection(&layout.selection()))?;
    let samples_path = layout.samples();
    let samples = stage(
        Stage::Stats,
        std::fs::read_to_string(&samples_path).map_err(|e| Error::io(&samples_path, e)),
    )?
    .lines()
    .filter(|l| !l.trim().is_empty())
    .count();
    let timings = stage(Stage::Stats, load_timings(&layout.timings()))?;
    let stats = compute_stats(&graph, &selection, samples, &timings, cfg.timings);
    stage(Stage::Write, save_stats(&layout.stats(), &stats))?;
    if stats.training_samples == 0 {
        log::warn!("no training samples were generated");
    }
    print!("{}", stats.table());
    Ok(())
}

fn cmd_eval(pred: &Path, gold: &Path) -> StageResult<()> {
    let report = stage(Stage::Eval, evaluate_files(pred, gold))?;
    println!("{{\"count\":{},\"f1\":{}}}", report.count, report.f1);
    Ok(())
}

fn dispatch(matches: &ArgMatches) -> StageResult<()> {
    let (name, m) = matches.subcommand().expect("subcommand required");
    if name == "eval" {
        let pred = m.get_one::<PathBuf>("pred").expect("required");
        let gold = m.get_one::<PathBuf>("gold").expect("required");
        return cmd_eval(pred, gold);
    }
    let cfg = load_config(m)?;
    match name {
        "run" => cmd_run(&cfg),
        "ingest" => cmd_ingest(&cfg),
        "graph" => cmd_graph(&cfg),
        "select" => cmd_select(&cfg),
        "generate" => cmd_generate(&cfg),
        "stats" => cmd_stats(&cfg),
        _ => unreachable!("unknown subcommand {name}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = cli().get_matches();
    match dispatch(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
