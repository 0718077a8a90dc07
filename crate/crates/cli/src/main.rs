mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use ssfa::Error;

use args::{Cli, Command};

const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Runs one invocation and returns its exit code.
fn run(argv: Vec<OsString>) -> u8 {
    let cmd = Cli::command();
    let argv = match config::merge(argv, &cmd) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let parsed = cmd
        .clone()
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m).map(|cli| (m, cli)));
    let (matches, cli) = match parsed {
        Ok(p) => p,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let echo = match matches.subcommand() {
        Some((name, sub)) => config::echo(cmd.find_subcommand(name).expect("parsed subcommand"), sub),
        None => String::new(),
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return EXIT_USAGE;
    }
    // only the first call in a process can size the global pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();

    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a, &echo),
        Command::Fixtures(a) => commands::fixtures(a, &echo),
        Command::Mine(a) => commands::mine(a, &echo),
        Command::Train(a) => commands::train_cmd(a, &echo),
        Command::EvalSeqcomp(a) => commands::eval_seqcomp(a, &echo),
        Command::EvalCls(a) => commands::eval_cls(a, &echo),
        Command::EvalKnn(a) => commands::eval_knn(a, &echo),
        Command::Gradcheck(a) => match commands::gradcheck(a, &echo) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("gradient check failed");
                return EXIT_RUNTIME;
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os().collect()))
}
