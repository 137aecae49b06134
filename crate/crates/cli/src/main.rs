mod args;
mod commands;
mod config;
mod error;

use args::{Cli, Command, DumpConfig};
use clap::Parser;
use error::{CliError, EXIT_OK, EXIT_USAGE};

fn dispatch(cli: &Cli) -> Result<String, CliError> {
    macro_rules! run {
        ($a:expr, $f:path) => {{
            if $a.common.dump_config {
                print!("{}", $a.dump());
                return Ok(String::new());
            }
            $f($a)
        }};
    }
    match &cli.command {
        Command::GenData(a) => run!(a, commands::gen_data),
        Command::TrainTeacher(a) => run!(a, commands::train_teacher_cmd),
        Command::Train(a) => run!(a, commands::train),
        Command::LinearEval(a) => run!(a, commands::linear_eval_cmd),
        Command::Gradcheck(a) => run!(a, commands::gradcheck_cmd),
        Command::Diagnose(a) => run!(a, commands::diagnose),
    }
}

fn main() {
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.code);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match dispatch(&cli) {
        Ok(line) => {
            if !line.is_empty() {
                println!("{line}");
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.code);
        }
    }
}
