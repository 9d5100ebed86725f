//! `key = value` config files merged under the command line.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::CommandFactory;

use crate::args::Cli;

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", i + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn subcommand_name(args: &[OsString]) -> Option<String> {
    let cmd = Cli::command();
    args.iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .find(|a| cmd.find_subcommand(a).is_some())
}

fn present(args: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let eq = format!("--{long}=");
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&eq)
    })
}

/// Append config entries that the command line does not already set.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .with_context(|| format!("reading config file {}", path.to_string_lossy()))?;
    let entries = parse(&text)?;
    let root = Cli::command();
    let sub = subcommand_name(&args).and_then(|n| root.find_subcommand(&n).cloned());
    let mut out = args.clone();
    for (key, value) in entries {
        if key == "config" || present(&args, &key) {
            continue;
        }
        let arg = sub
            .iter()
            .flat_map(|s| s.get_arguments())
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()));
        let Some(arg) = arg else {
            bail!("config key `{key}` is not a flag of this command");
        };
        out.push(format!("--{key}").into());
        if arg.get_action().takes_values() {
            out.push(value.into());
        } else if !matches!(value.as_str(), "true" | "1" | "yes") {
            continue;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(|s| s.into()).collect()
    }

    #[test]
    fn parses_comments_and_underscores() {
        let e = parse("# top\na_min = 0.5\n\npoints=3 # trailing\n").unwrap();
        assert_eq!(
            e,
            vec![
                ("a-min".into(), "0.5".into()),
                ("points".into(), "3".into())
            ]
        );
        assert!(parse("nonsense").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let dir = std::env::temp_dir().join(format!("bmcoll-cfg-{}", std::process::id()));
        std::fs::write(&dir, "points = 7\na-max = 3\n").unwrap();
        let args = os(&[
            "bmcoll",
            "--config",
            dir.to_str().unwrap(),
            "rates",
            "--points",
            "4",
        ]);
        let merged = merge(args).unwrap();
        let s: Vec<String> = merged
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect();
        assert_eq!(s[s.len() - 2..], ["--a-max".to_string(), "3".to_string()]);
        assert_eq!(s.iter().filter(|a| *a == "--points").count(), 1);
        std::fs::remove_file(dir).unwrap();
    }
}
