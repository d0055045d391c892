use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use patternscout_core::config::{ProviderKind, RunConfig};
use patternscout_core::detector::{detect, DetectionReport};
use patternscout_core::evaluation::{compute_all_fdi, compute_fdi, evaluate, filter_dataset, AnnotationSet, RepoMeta};
use patternscout_core::profile::{generate_profile, save_profile, PatternProfile};
use patternscout_core::provider::{read_trace_file, LlmClient, TraceRecord, TraceSink};
use patternscout_core::vector_store::{self, SeededStore};

#[derive(Parser, Debug)]
#[command(name = "patternscout", version, about = "Detect architectural patterns in source repositories")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Provider backend, overriding the configuration.
    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderArg>,
    /// Detection threshold on the 0-10 scale.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(0..=10))]
    threshold: Option<u8>,
    /// Files investigated per pattern.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    top_n: Option<u64>,
    /// Output file (or directory for batch commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Trace log file (or directory for batch commands).
    #[arg(long, global = true)]
    traces: Option<PathBuf>,
    /// Provider seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ProviderArg {
    Mock,
    Http,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pattern profile management.
    Profiles {
        #[command(subcommand)]
        command: ProfilesCommand,
    },
    /// Embed every profile example into the vector store.
    Seed,
    /// Detect patterns in one repository.
    Detect { repo: PathBuf },
    /// Detect patterns in every repository listed in a file, one path per line.
    DetectBatch {
        repo_list: PathBuf,
        /// Repositories processed concurrently.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
    },
    /// Score detection reports against annotations.
    Evaluate {
        /// Report file or directory of report files.
        reports: PathBuf,
        /// CSV with header repo_id,pattern,present.
        annotations: PathBuf,
    },
    /// File Dominance Index tables from trace logs.
    Fdi {
        /// Trace file or directory of trace files.
        traces: PathBuf,
        /// Limit output to one pattern.
        #[arg(long)]
        pattern: Option<String>,
    },
    /// Candidate repository selection.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
}

#[derive(Subcommand, Debug)]
enum ProfilesCommand {
    /// Draft a profile from a name and description.
    Generate {
        #[arg(long)]
        name: String,
        #[arg(long)]
        description: String,
        #[arg(long, default_value = "")]
        catalog_url: String,
    },
}

#[derive(Subcommand, Debug)]
enum DatasetCommand {
    /// Keep repositories meeting every selection criterion.
    Filter {
        /// JSON array of repository metadata.
        metadata: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = g.provider {
        cfg.provider.kind = match p {
            ProviderArg::Mock => ProviderKind::Mock,
            ProviderArg::Http => ProviderKind::Http,
        };
    }
    if let Some(t) = g.threshold {
        cfg.threshold = t;
    }
    if let Some(n) = g.top_n {
        cfg.top_n = n as usize;
    }
    if let Some(s) = g.seed {
        cfg.provider.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.output.reports = Some(o.clone());
    }
    if let Some(t) = &g.traces {
        cfg.output.traces = Some(t.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn client_with_trace(cfg: &RunConfig, trace: Option<&Path>) -> Result<LlmClient> {
    let client = cfg.build_client()?;
    Ok(match trace {
        Some(p) => client.with_trace(TraceSink::file(p).with_context(|| format!("opening trace log {}", p.display()))?),
        None => client,
    })
}

fn write_out(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, body).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Profiles {
            command: ProfilesCommand::Generate {
                name,
                description,
                catalog_url,
            },
        } => {
            let cfg = load_config(g)?;
            let client = client_with_trace(&cfg, cfg.output.traces.as_deref())?;
            let profile = generate_profile(&name, &description, &catalog_url, &client)?;
            let dir = g.out.clone().or(cfg.profiles_dir.clone()).unwrap_or_else(|| PathBuf::from("profiles"));
            let path = save_profile(&profile, &dir)?;
            println!("{}", path.display());
        }
        Command::Seed => {
            let cfg = load_config(g)?;
            let client = client_with_trace(&cfg, cfg.output.traces.as_deref())?;
            let store = vector_store::seed(&cfg.profiles()?, &client)?;
            let path = g.out.clone().unwrap_or_else(|| cfg.store_path.clone());
            store.save(&path)?;
            println!(
                "seeded {} example vectors ({} degraded patterns) into {}",
                store.records.len(),
                store.degraded.len(),
                path.display()
            );
        }
        Command::Detect { repo } => {
            let cfg = load_config(g)?;
            let profiles = cfg.profiles()?;
            let client = client_with_trace(&cfg, cfg.output.traces.as_deref())?;
            let store = load_store(&cfg, &profiles, &client)?;
            let report = detect(&repo, &profiles, &cfg.detect_options(), &client, &store)?;
            write_out(cfg.output.reports.as_deref(), &report.to_json())?;
        }
        Command::DetectBatch { repo_list, jobs } => {
            let cfg = load_config(g)?;
            detect_batch(&cfg, &repo_list, jobs as usize)?;
        }
        Command::Evaluate { reports, annotations } => {
            let reports = read_reports(&reports)?;
            let truth = AnnotationSet::load(&annotations)?;
            let fdi = match &g.traces {
                Some(t) => compute_all_fdi(&read_traces(t)?),
                None => Default::default(),
            };
            let result = evaluate(&reports, &truth, &fdi)?;
            print!("{}", result.render_table());
            if let Some(out) = &g.out {
                write_out(Some(out), &(serde_json::to_string_pretty(&result)? + "\n"))?;
            }
        }
        Command::Fdi { traces, pattern } => {
            let logs = read_traces(&traces)?;
            let tables = match pattern {
                Some(p) => vec![compute_fdi(&logs, &p)?],
                None => compute_all_fdi(&logs).into_values().collect(),
            };
            if tables.is_empty() {
                bail!("no investigation records in {}", traces.display());
            }
            for t in &tables {
                println!("{} (N={}, T={})", t.pattern_name, t.n, t.t);
                for r in &t.rows {
                    println!("  {:<40} {:>6} {:>8.2}", r.filename, r.count, r.fdi);
                }
            }
            if let Some(out) = &g.out {
                write_out(Some(out), &(serde_json::to_string_pretty(&tables)? + "\n"))?;
            }
        }
        Command::Dataset {
            command: DatasetCommand::Filter { metadata },
        } => {
            let text = fs::read_to_string(&metadata).with_context(|| format!("reading {}", metadata.display()))?;
            let repos: Vec<RepoMeta> =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", metadata.display()))?;
            let kept = filter_dataset(&repos)?;
            eprintln!("kept {} of {} repositories", kept.len(), repos.len());
            write_out(g.out.as_deref(), &(serde_json::to_string_pretty(&kept)? + "\n"))?;
        }
    }
    Ok(())
}

/// The seeded store, or an in-memory one when none has been saved yet.
fn load_store(cfg: &RunConfig, profiles: &[PatternProfile], client: &LlmClient) -> Result<SeededStore> {
    if cfg.store_path.exists() {
        let store = SeededStore::load(&cfg.store_path)?;
        if store.dimension != client.dimension() {
            bail!(
                "store {} has dimension {}, provider uses {}; run `patternscout seed` again",
                cfg.store_path.display(),
                store.dimension,
                client.dimension()
            );
        }
        if store.embed_model != client.embed_model_id() {
            tracing::warn!(
                "store was seeded with {}, provider embeds with {}",
                store.embed_model,
                client.embed_model_id()
            );
        }
        return Ok(store);
    }
    tracing::warn!("no store at {}, seeding in memory", cfg.store_path.display());
    Ok(vector_store::seed(profiles, client)?)
}

fn detect_batch(cfg: &RunConfig, repo_list: &Path, jobs: usize) -> Result<()> {
    let list = fs::read_to_string(repo_list).with_context(|| format!("reading {}", repo_list.display()))?;
    let base = repo_list.parent().unwrap_or(Path::new("."));
    let repos: Vec<PathBuf> = list
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect();
    let out_dir = cfg.output.reports.clone().context("detect-batch needs --out <directory>")?;
    fs::create_dir_all(&out_dir)?;
    let mut names: Vec<String> = repos.iter().map(|r| repo_name(r)).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        bail!("two repositories share the name {}", w[0]);
    }

    let profiles = cfg.profiles()?;
    let store = load_store(cfg, &profiles, &cfg.build_client()?)?;
    let options = cfg.detect_options();
    let next = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(repos.len()).max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(repo) = repos.get(i) else { break };
                let name = repo_name(repo);
                let result = (|| -> Result<()> {
                    let trace = cfg.output.traces.as_ref().map(|d| d.join(format!("{name}.jsonl")));
                    let client = client_with_trace(cfg, trace.as_deref())?;
                    let report = detect(repo, &profiles, &options, &client, &store)?;
                    write_out(Some(&out_dir.join(format!("{name}.json"))), &report.to_json())
                })();
                match result {
                    Ok(()) => eprintln!("{name}: done"),
                    Err(e) => failures.lock().unwrap().push(format!("{name}: {e:#}")),
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    if !failures.is_empty() {
        bail!("{} of {} repositories failed:\n{}", failures.len(), repos.len(), failures.join("\n"));
    }
    Ok(())
}

fn repo_name(path: &Path) -> String {
    fs::canonicalize(path)
        .ok()
        .as_deref()
        .unwrap_or(path)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn files_with_ext(path: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == ext))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

fn read_reports(path: &Path) -> Result<Vec<DetectionReport>> {
    files_with_ext(path, "json")?
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing report {}", f.display()))
        })
        .collect()
}

fn read_traces(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut all = Vec::new();
    for f in files_with_ext(path, "jsonl")? {
        all.extend(read_trace_file(&f).with_context(|| format!("reading trace {}", f.display()))?);
    }
    Ok(all)
}
