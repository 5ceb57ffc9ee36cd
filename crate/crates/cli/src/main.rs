use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fedstat::data::synth_mno;
use fedstat::eval::render_markdown;
use fedstat::experiment::{merge_reports, read_metrics, run_config_file, write_outputs, Scale};
use fedstat::{par, Error, Result};

#[derive(Parser)]
#[command(name = "fedstat", version, about = "Federated learning simulator for official-statistics use cases")]
struct Cli {
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for the run outputs (default: runs/<config name>).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Overrides the scale of the config.
    #[arg(long, global = true, value_enum)]
    scale: Option<ScaleArg>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Full,
    Desk,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Scale {
        match s {
            ScaleArg::Full => Scale::Full,
            ScaleArg::Desk => Scale::Desk,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Runs one experiment config and writes its metrics, history,
    /// resolved config and manifest.
    Run { config: PathBuf },
    /// Writes a synthetic daily MNO table.
    Synth {
        #[arg(long)]
        users: usize,
        #[arg(long = "out")]
        out: PathBuf,
    },
    /// Merges finished runs of one use case into a comparison table.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn run(cli: &Cli, config: &Path) -> Result<()> {
    let out = run_config_file(config, cli.scale.map(Scale::from), cli.seed)?;
    let dir = cli
        .out_dir
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(&out.metrics.name));
    write_outputs(&out, &dir)?;
    emit(&render_markdown(&out.metrics.reports));
    emit(&format!("wrote {} in {:.1} s\n", dir.display(), out.manifest.total_seconds));
    Ok(())
}

fn synth(users: usize, seed: u64, out: &Path) -> Result<()> {
    let table = synth_mno(users, seed)?;
    table.write_csv(out)?;
    let distinct: std::collections::BTreeSet<&str> = table.text_column("user_id")?.into_iter().collect();
    emit(&format!("wrote {}: {} rows, {} users\n", out.display(), table.len(), distinct.len()));
    Ok(())
}

fn report(dirs: &[PathBuf], out_dir: Option<&Path>) -> Result<()> {
    let runs = dirs.iter().map(|d| read_metrics(d)).collect::<Result<Vec<_>>>()?;
    let table = render_markdown(&merge_reports(&runs)?);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let path = dir.join("report.md");
        std::fs::write(&path, &table).map_err(|e| Error::Io { path, source: e })?;
    }
    emit(&table);
    Ok(())
}

// A closed pipe (e.g. `| head`) should not turn a finished run into a panic.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = par::with_threads(cli.threads, || match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Synth { users, out } => synth(*users, cli.seed.unwrap_or(0), out),
        Command::Report { dirs } => report(dirs, cli.out_dir.as_deref()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
