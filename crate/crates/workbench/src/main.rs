use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use splatedit_core::optimizer::{self, Control, Progress, RunConfig};
use splatedit_workbench::fixture::{self, BimodalOptions};
use splatedit_workbench::scenario::{load_scenario, read_json};
use splatedit_workbench::{artifacts, service};

#[derive(Parser)]
#[command(name = "workbench", version, about = "Interactive multi-view Gaussian splatting editing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API (and the UI bundle, if given) for one scenario.
    Serve {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Directory with the built web UI, mounted at /ui/.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Run one edit in the foreground.
    Run {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Artifacts go to `<out>/<run name>/`.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Write a synthetic scenario.
    GenFixture {
        #[arg(long, value_enum, default_value_t = FixtureKind::Bimodal)]
        kind: FixtureKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "fixtures/bimodal")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    Bimodal,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve { root, addr, ui } => serve(root, addr, ui),
        Command::Run { root, config, out, name } => run(root, config, out, name),
        Command::GenFixture { kind: FixtureKind::Bimodal, seed, out } => {
            let fx = fixture::bimodal(&BimodalOptions::new(seed))?;
            fx.write(&out)?;
            println!("wrote bimodal fixture (seed {seed}) to {}", out.display());
            Ok(())
        }
    }
}

fn serve(root: PathBuf, addr: String, ui: Option<PathBuf>) -> anyhow::Result<()> {
    let scenario = Arc::new(load_scenario(&root).with_context(|| format!("loading {}", root.display()))?);
    tracing::info!(views = scenario.views.len(), gaussians = scenario.scene.len(), "scenario loaded");
    let state = Arc::new(service::AppState::new(scenario, root.join("runs")));
    let app = service::router(state, ui);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })
}

fn run(root: PathBuf, config: PathBuf, out: PathBuf, name: Option<String>) -> anyhow::Result<()> {
    let scenario = load_scenario(&root).with_context(|| format!("loading {}", root.display()))?;
    let cfg: RunConfig = read_json(&config)?;
    if let Some(key) = &cfg.key_view {
        if scenario.view(key).is_none() {
            bail!("key view {key} is not in the scenario");
        }
    }
    let name = name.unwrap_or_else(|| format!("{:?}-seed{}", cfg.ablation, cfg.seed).to_lowercase());
    let dir = out.join(name);
    std::fs::create_dir_all(&dir)?;

    let started = Instant::now();
    let total = cfg.iterations;
    let mut observer = |p: &Progress<'_>| {
        if let Some(every) = cfg.dump_every {
            if every > 0 && p.log.t.is_multiple_of(every) {
                if let Err(e) = artifacts::dump_progress(&dir, p) {
                    tracing::warn!("dump failed: {e:#}");
                }
            }
        }
        if p.log.t == 1 || p.log.t.is_multiple_of(25) || p.log.t == total {
            tracing::info!(t = p.log.t, l_edit = p.log.l_edit, l_kl = p.log.l_kl, "iteration");
        }
        Control::Continue
    };
    let mut outcome = optimizer::run_edit(scenario.scene.clone(), &scenario.edit_inputs(), &cfg, &mut observer)?;
    outcome.report.wall_time_s = started.elapsed().as_secs_f64();
    artifacts::write_run(&dir, &cfg, &outcome, &scenario)?;

    let r = &outcome.report;
    let first = r.iterations.first().map(|i| i.l_edit).unwrap_or(f64::NAN);
    let last = r.iterations.last().map(|i| i.l_edit).unwrap_or(f64::NAN);
    println!("L_edit {first:.6} -> {last:.6} over {} iterations in {:.1}s", r.iterations.len(), r.wall_time_s);
    if let Some(m) = &r.final_metrics {
        println!("proxy_ctids_key {:.4}", m.proxy_ctids_key);
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}
