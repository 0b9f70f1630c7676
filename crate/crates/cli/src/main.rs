mod api;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use repairbot::archive::{compute_statistics, export_report, read_archive, ReportFormat, TableKind};
use repairbot::ci::{CiBackend, CiFeed};
use repairbot::fixtures::{extra_feed, standard_feed};
use repairbot::model::{TimeWindow, Timestamp};
use repairbot::pipeline::{Bot, Mode, RunConfig, SystemClock};
use repairbot::repair::{Limits, RepairEngine, ToolRegistry};
use repairbot::reproducer::{Adapters, MinibuildAdapter, Reproducer, ReproducerConfig, Retention};
use repairbot::scanner::{is_interesting, load_catalog, select_projects, SelectionCriteria};

#[derive(Parser)]
#[command(name = "repairbot", version, about = "Watches CI builds, reproduces test failures and proposes patches")]
struct Cli {
    /// State directory: archive, notifications and workspaces.
    #[arg(long, global = true, env = "REPAIRBOT_WORKDIR", default_value = "repairbot-work")]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the interesting builds of a time window.
    Scan {
        #[command(flatten)]
        feed: FeedArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Write the builds here (one JSON document per line) instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce builds locally and print each attempt.
    Reproduce {
        #[command(flatten)]
        feed: FeedArgs,
        #[arg(long = "build", required = true)]
        builds: Vec<String>,
        /// Keep every workspace, not only those of reproduced failures.
        #[arg(long)]
        keep_workspace: bool,
        #[arg(long, value_name = "SECS")]
        timeout_compile: Option<u64>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Reproduce one build and run the repair tools on it.
    Repair {
        #[command(flatten)]
        feed: FeedArgs,
        #[arg(long)]
        build: String,
        #[command(flatten)]
        tools: ToolArgs,
    },
    /// One pass over a window: scan, reproduce, repair, archive, notify.
    Run {
        #[command(flatten)]
        feed: FeedArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        tools: ToolArgs,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Run periodically or on CI hooks, and serve the triage API.
    Serve {
        #[command(flatten)]
        feed: FeedArgs,
        #[command(flatten)]
        tools: ToolArgs,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long, value_enum, default_value_t = ServeMode::Periodic)]
        mode: ServeMode,
        #[arg(long, default_value_t = 4 * 3600)]
        interval_secs: u64,
        /// Start of the first window (RFC 3339); defaults to now.
        #[arg(long)]
        start: Option<String>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Require this token in `Authorization: Bearer` on every request.
        #[arg(long, env = "REPAIRBOT_TOKEN")]
        token: Option<String>,
    },
    /// Print the report tables for an archive.
    Stats {
        #[arg(long)]
        archive: Option<PathBuf>,
        /// `all`, or `START/END` in RFC 3339.
        #[arg(long, default_value = "all")]
        window: String,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Table name or number; all four by default.
        #[arg(long)]
        table: Option<String>,
    },
    /// Write the fixture CI feed used by the tests and examples.
    InitFixture {
        #[arg(long)]
        dir: PathBuf,
        /// Also write the feed with the less common failure causes.
        #[arg(long)]
        extra: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ServeMode {
    Periodic,
    Hook,
}

#[derive(Args)]
struct FeedArgs {
    /// Fixture directory or base URL of the CI service.
    #[arg(long, env = "REPAIRBOT_FEED")]
    feed: String,
    #[arg(long, env = "REPAIRBOT_CI_TOKEN")]
    ci_token: Option<String>,
    /// Project catalog (one project per line); the feed's projects otherwise.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    min_stars: u64,
}

impl FeedArgs {
    fn backend(&self) -> Result<Arc<dyn CiBackend>> {
        Ok(CiFeed::from_locator(&self.feed, self.ci_token.clone()).open()?)
    }

    fn criteria(&self) -> SelectionCriteria {
        SelectionCriteria { min_stars: self.min_stars, ..SelectionCriteria::default() }
    }
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long, default_value_t = 4.0)]
    window_hours: f64,
    /// End of the window (RFC 3339); defaults to now.
    #[arg(long)]
    end: Option<String>,
}

impl WindowArgs {
    fn window(&self) -> Result<TimeWindow> {
        if self.window_hours.is_nan() || self.window_hours <= 0.0 {
            bail!("--window-hours must be positive");
        }
        let end = parse_time(self.end.as_deref())?;
        Ok(TimeWindow::new(end - Duration::from_secs_f64(self.window_hours * 3600.0), end))
    }
}

#[derive(Args)]
struct ToolArgs {
    /// Comma-separated tool names to run; all registered tools by default.
    #[arg(long, value_delimiter = ',')]
    tools: Option<Vec<String>>,
    /// TOML file with `[[tools]]` entries, replacing the built-in registry.
    #[arg(long)]
    tools_file: Option<PathBuf>,
    #[arg(long)]
    max_patches: Option<usize>,
    /// Environment variable visible to locally run builds, as NAME=INT.
    #[arg(long = "env", value_name = "NAME=INT")]
    env: Vec<String>,
}

impl ToolArgs {
    fn registry(&self) -> Result<ToolRegistry> {
        let mut registry = match &self.tools_file {
            Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| p.display().to_string())?)?,
            None => ToolRegistry::default(),
        };
        if let Some(names) = &self.tools {
            for n in names {
                if !registry.tools.iter().any(|t| &t.name == n) {
                    bail!("unknown tool `{n}`");
                }
            }
            registry.tools.retain(|t| names.contains(&t.name));
        }
        Ok(registry)
    }

    fn limits(&self) -> Limits {
        let mut limits = Limits::default();
        if let Some(n) = self.max_patches {
            limits.max_patches = n;
        }
        limits
    }

    fn local_env(&self) -> Result<BTreeMap<String, i64>> {
        self.env
            .iter()
            .map(|kv| {
                let (k, v) = kv.split_once('=').with_context(|| format!("expected NAME=INT, got `{kv}`"))?;
                Ok((k.to_string(), v.parse().with_context(|| format!("`{v}` is not an integer"))?))
            })
            .collect()
    }
}

fn parse_time(text: Option<&str>) -> Result<Timestamp> {
    match text {
        Some(t) => Timestamp::parse(t).with_context(|| format!("bad timestamp `{t}`")),
        None => Ok(Timestamp::now()),
    }
}

fn parse_window(text: &str) -> Result<TimeWindow> {
    if text == "all" {
        return Ok(TimeWindow::all());
    }
    let (a, b) = text.split_once('/').context("window must be `all` or START/END")?;
    let w = TimeWindow::new(parse_time(Some(a))?, parse_time(Some(b))?);
    if w.end < w.start {
        bail!("window ends before it starts");
    }
    Ok(w)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run_config(workdir: &Path, feed: &FeedArgs, tools: &ToolArgs, workers: usize) -> Result<RunConfig> {
    let mut c = RunConfig::new(feed.feed.clone(), workdir);
    c.auth_token = feed.ci_token.clone();
    c.catalog = feed.catalog.clone();
    c.criteria = feed.criteria();
    c.workers = workers;
    c.tools = tools.registry()?;
    c.limits = tools.limits();
    c.local_env = tools.local_env()?;
    Ok(c)
}

fn adapters(env: BTreeMap<String, i64>) -> Adapters {
    let mut a = Adapters::standard();
    a.register(repairbot::model::BuildTool::FixtureMinibuild, Arc::new(MinibuildAdapter { env, ..Default::default() }));
    a
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let workdir = cli.workdir;
    match cli.command {
        Command::Scan { feed, window, out } => {
            let window = window.window()?;
            let backend = feed.backend()?;
            let catalog = match &feed.catalog {
                Some(p) => load_catalog(p)?,
                None => backend.projects()?,
            };
            let selected: Vec<String> = select_projects(&catalog, &feed.criteria()).into_iter().map(|p| p.slug).collect();
            let now = window.end - Duration::from_secs(1);
            let mut lines = String::new();
            let mut total = 0;
            for b in backend.list_recent_builds(window)? {
                if !selected.contains(&b.project.slug) {
                    continue;
                }
                total += 1;
                let log = backend.fetch_log(&b.build_id).unwrap_or_default();
                if let Some(i) = is_interesting(&b, &log, now, window.duration()) {
                    lines.push_str(&serde_json::to_string(&i)?);
                    lines.push('\n');
                }
            }
            eprintln!("{} of {total} builds in {window} are interesting", lines.lines().count());
            match out {
                Some(p) => fs::write(p, lines)?,
                None => print!("{lines}"),
            }
        }
        Command::Reproduce { feed, builds, keep_workspace, timeout_compile, workers } => {
            let backend = feed.backend()?;
            let mut config = ReproducerConfig::new(workdir.join("work"));
            config.workers = workers.max(1);
            if keep_workspace {
                config.retention = Retention::Always;
            }
            if let Some(s) = timeout_compile {
                config.timeouts.compile = Duration::from_secs(s);
            }
            let records = builds.iter().map(|id| backend.get_build(id)).collect::<Result<Vec<_>, _>>()?;
            let r = Reproducer::new(backend, adapters(BTreeMap::new()), config);
            for a in r.reproduce_all(&records) {
                let kept = a.workspace.as_ref().map(|w| w.root.clone());
                if !keep_workspace {
                    if let Some(ws) = &a.workspace {
                        ws.remove()?;
                    }
                }
                print_json(&serde_json::json!({
                    "result": a.result,
                    "trace": a.trace,
                    "workspace": if keep_workspace { kept } else { None },
                }))?;
            }
        }
        Command::Repair { feed, build, tools } => {
            let backend = feed.backend()?;
            let record = backend.get_build(&build)?;
            let env = tools.local_env()?;
            let r = Reproducer::new(backend, adapters(env.clone()), ReproducerConfig::new(workdir.join("work")));
            let a = r.reproduce(&record);
            let Some(ws) = &a.workspace else {
                bail!("build {build} was not reproduced: {}", a.result.outcome);
            };
            let engine = RepairEngine { registry: tools.registry()?, limits: tools.limits(), local_env: env };
            let report = engine.repair(&a.result, ws, Timestamp::now());
            ws.remove()?;
            print_json(&report?)?;
        }
        Command::Run { feed, window, tools, workers } => {
            let config = run_config(&workdir, &feed, &tools, workers)?;
            let report = Bot::new(config)?.run_once(window.window()?)?;
            print_json(&report)?;
        }
        Command::Serve { feed, tools, workers, mode, interval_secs, start, listen, token } => {
            let mut config = run_config(&workdir, &feed, &tools, workers)?;
            config.interval_secs = interval_secs;
            config.mode = if mode == ServeMode::Periodic { Mode::Periodic } else { Mode::Hook };
            let start = parse_time(start.as_deref())?;
            serve(config, start, &listen, token)?;
        }
        Command::Stats { archive, window, format, table } => {
            let path = archive.unwrap_or_else(|| workdir.join("archive.jsonl"));
            let records = read_archive(&path).with_context(|| path.display().to_string())?;
            let stats = compute_statistics(&records, parse_window(&window)?, "report");
            let format: ReportFormat = format.parse().map_err(anyhow::Error::msg)?;
            let kinds = match table {
                Some(t) => vec![t.parse::<TableKind>().map_err(anyhow::Error::msg)?],
                None => TableKind::ALL.to_vec(),
            };
            let parts: Vec<String> = kinds.into_iter().map(|k| export_report(&stats, k, format)).collect();
            let sep = if format == ReportFormat::Csv { "\n" } else { "\n\n" };
            print!("{}", parts.join(sep));
            if format == ReportFormat::Doc {
                println!();
            }
        }
        Command::InitFixture { dir, extra } => {
            fs::create_dir_all(&dir)?;
            let dir = fs::canonicalize(&dir)?;
            let f = if extra { extra_feed(&dir)? } else { standard_feed(&dir)? };
            print_json(&serde_json::json!({ "feed": f.root, "catalog": f.catalog, "window": f.full_window() }))?;
        }
    }
    Ok(())
}

fn serve(config: RunConfig, start: Timestamp, listen: &str, token: Option<String>) -> Result<()> {
    let periodic = config.mode == Mode::Periodic;
    let bot = Arc::new(Bot::new(config)?);
    let stop = Arc::new(AtomicBool::new(false));
    let scheduler = periodic.then(|| {
        let (bot, stop) = (bot.clone(), stop.clone());
        std::thread::spawn(move || bot.run_periodic(&SystemClock, start, &stop))
    });

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        println!("listening on {}", listener.local_addr()?);
        std::io::stdout().flush()?;
        let app = api::router(api::AppState { bot, token });
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;

    stop.store(true, Ordering::SeqCst);
    if let Some(handle) = scheduler {
        eprintln!("finishing the current window");
        for r in handle.join().expect("scheduler thread") {
            if let Err(e) = r {
                eprintln!("run failed: {e}");
            }
        }
    }
    Ok(())
}
