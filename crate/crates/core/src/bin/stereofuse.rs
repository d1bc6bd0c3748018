use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stereofuse::io::{write_float_map, write_report};
use stereofuse::pipeline::{evaluate, gen_fixture, run_pipeline, Config, FixtureKind, FixtureParams};
use stereofuse::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "stereofuse", version, about = "Mono-guided stereo disparity estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a config file.
    Run {
        config: PathBuf,
        /// Output disparity (PFM).
        #[arg(short, long)]
        output: PathBuf,
        /// Report (JSON); printed to stdout when omitted.
        #[arg(short, long)]
        report: Option<PathBuf>,
        /// `key=value` overrides applied after the file.
        #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Score a predicted disparity (or depth) map against ground truth.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        occ: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        taus: Vec<f64>,
        /// Treat the maps as depth.
        #[arg(long)]
        depth: bool,
        #[arg(short, long)]
        report: Option<PathBuf>,
    },
    /// Write a synthetic fixture bundle.
    Fixture {
        /// random_dot or mirror
        kind: String,
        out_dir: PathBuf,
        /// `key=value` scene parameters (h, w, seed, background, foreground, rect, d_mirror, d_virtual, mono_noise).
        #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Io => 3,
        ErrorClass::Compute => 4,
    }
}

fn emit(report: &stereofuse::io::RunReport, path: Option<&PathBuf>) -> Result<(), Error> {
    match path {
        Some(p) => write_report(report, p),
        None => {
            println!("{}", report.to_json_string()?);
            Ok(())
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run {
            config,
            output,
            report,
            overrides,
        } => {
            let mut cfg = Config::from_file(&config)?;
            cfg.apply_overrides(&overrides)?;
            let (disparity, rep) = run_pipeline(&cfg)?;
            write_float_map(&disparity, &output)?;
            emit(&rep, report.as_ref())
        }
        Command::Eval {
            pred,
            gt,
            occ,
            taus,
            depth,
            report,
        } => {
            let rep = evaluate(&pred, &gt, occ.as_deref(), &taus, depth)?;
            emit(&rep, report.as_ref())
        }
        Command::Fixture { kind, out_dir, params } => {
            let kind: FixtureKind = kind.parse()?;
            let mut p = FixtureParams::default();
            p.apply(&params)?;
            gen_fixture(kind, &p, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
