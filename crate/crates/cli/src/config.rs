//! Flat `key=value` config files. Each entry is spliced into the argument
//! list as `--key value`, unless the same flag was given explicitly.

use crate::args::Cli;
use crate::error::{CliError, CliResult};
use clap::CommandFactory;
use std::ffi::OsString;
use std::path::Path;

const RESERVED: [&str; 4] = ["config", "dump-config", "help", "version"];

pub fn parse_config(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::usage(format!("config line {}: expected key=value, got {line:?}", n + 1)));
        };
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-') {
            return Err(CliError::usage(format!("config line {}: bad key {key:?}", n + 1)));
        }
        if entries.iter().any(|(k, _)| k == key) {
            return Err(CliError::usage(format!("config line {}: duplicate key {key:?}", n + 1)));
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Some(rest.into());
        }
    }
    None
}

fn given(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let prefix = format!("--{key}=");
    args.iter()
        .filter_map(|a| a.to_str())
        .any(|a| a == flag || a.starts_with(&prefix))
}

/// Expands `--config PATH` for the subcommand named in `argv`.
pub fn expand(argv: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(sub_at) = argv.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|i| i + 1) else {
        return Ok(argv);
    };
    let rest = &argv[sub_at + 1..];
    let Some(path) = config_path(rest) else {
        return Ok(argv);
    };
    let sub = argv[sub_at].to_string_lossy().into_owned();
    let cmd = Cli::command();
    let Some(sc) = cmd.find_subcommand(&sub) else {
        return Ok(argv);
    };
    let known: Vec<String> = sc
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .filter(|l| !RESERVED.contains(&l.as_str()))
        .collect();

    let path = Path::new(&path);
    if !path.is_file() {
        return Err(CliError::usage(format!("config file {} does not exist", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in parse_config(&text)? {
        if !known.iter().any(|k| *k == key) {
            return Err(CliError::usage(format!("unknown config key {key:?} for {sub}")));
        }
        if given(rest, &key) {
            continue;
        }
        injected.push(format!("--{key}").into());
        injected.push(value.into());
    }
    let mut out = argv[..=sub_at].to_vec();
    out.extend(injected);
    out.extend_from_slice(rest);
    Ok(out)
}
