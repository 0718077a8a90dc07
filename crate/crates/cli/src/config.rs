//! `key = value` config files merged underneath command-line flags, and
//! the echo of the effective settings.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::{ArgMatches, Command};
use ssfa::{Error, Result};

/// Parses a config file into `(key, value)` pairs. Keys may use `_` or `-`.
pub fn parse(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("{}:{}: expected `key = value`", origin.display(), i + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("{}:{}: empty key", origin.display(), i + 1)));
        }
        let key = if key == "T" { key.to_string() } else { key.replace('_', "-") };
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Some(v.into());
        }
    }
    None
}

/// Rewrites `args` so that config-file settings appear directly after the
/// subcommand name, ahead of any flags given on the command line.
pub fn merge(args: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let pairs = parse(&text, path)?;
    let names: Vec<&str> = cmd.get_subcommands().map(|s| s.get_name()).collect();
    let Some(pos) = args.iter().position(|a| a.to_str().is_some_and(|s| names.contains(&s))) else {
        return Ok(args);
    };
    let mut injected = Vec::new();
    for (key, value) in pairs {
        match value.as_str() {
            "true" => injected.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                injected.push(format!("--{key}").into());
                injected.push(value.into());
            }
        }
    }
    let mut merged = args[..=pos].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(merged)
}

/// Every resolved flag of the subcommand as `key = value` lines, in
/// declaration order. The output directory and config path are left out so
/// the echo can be reused as a config file.
pub fn echo(cmd: &Command, matches: &ArgMatches) -> String {
    let mut out = String::new();
    for arg in cmd.get_arguments() {
        let id = arg.get_id().as_str();
        if matches!(id, "out" | "config" | "help" | "version") {
            continue;
        }
        let Some(long) = arg.get_long() else { continue };
        if let Some(values) = matches.get_raw(id) {
            let joined: Vec<String> = values.map(|v| v.to_string_lossy().into_owned()).collect();
            writeln!(out, "{long} = {}", joined.join(",")).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_normalizes_keys() {
        let pairs = parse("# run\nlambda_2 = 0.3\n\nT = 2\n  cv = true \n", Path::new("c")).unwrap();
        assert_eq!(
            pairs,
            vec![
                ("lambda-2".to_string(), "0.3".to_string()),
                ("T".to_string(), "2".to_string()),
                ("cv".to_string(), "true".to_string()),
            ]
        );
        assert!(parse("oops\n", Path::new("c")).is_err());
        assert!(parse(" = 3\n", Path::new("c")).is_err());
    }
}
