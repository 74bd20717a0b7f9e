//! `--config <file>` support: `key = value` lines become long flags spliced in
//! after the subcommand, except for keys also given on the command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::CommandFactory;
use dfnet_core::Error;

use crate::Cli;

/// Removes `--config <file>` / `--config=<file>` from `argv`.
fn take_config_path(argv: &mut Vec<OsString>) -> Result<Option<PathBuf>, Error> {
    let mut found = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy().into_owned();
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            if i + 1 >= argv.len() {
                return Err(Error::Config("--config needs a file argument".into()));
            }
            found = Some(PathBuf::from(argv.remove(i + 1)));
            argv.remove(i);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            found = Some(PathBuf::from(p));
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(found)
}

/// Parses `key = value` lines; `#` starts a comment. A bare `key` (or
/// `key = true`) sets a switch.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, Option<String>)>, Error> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), Some(v.trim().trim_matches('"').to_string())),
            None => (line, None),
        };
        let key = key.trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Config(format!("{}:{}: bad key in '{raw}'", path.display(), n + 1)));
        }
        out.push((key, value));
    }
    Ok(out)
}

/// Returns `argv` with config-file settings merged in.
pub fn apply_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>, Error> {
    let Some(path) = take_config_path(&mut argv)? else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let entries = parse_config(&text, &path)?;

    let cmd = Cli::command();
    let sub_pos = argv
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| cmd.find_subcommand(a.to_string_lossy().as_ref()).is_some())
        .map(|(i, _)| i);
    let Some(sub_pos) = sub_pos else {
        return Ok(argv);
    };
    let sub = cmd
        .find_subcommand(argv[sub_pos].to_string_lossy().as_ref())
        .expect("found above");
    let all_keys: Vec<String> = cmd
        .get_subcommands()
        .flat_map(|s| s.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect::<Vec<_>>())
        .collect();

    let given = |key: &str| {
        argv[sub_pos + 1..].iter().any(|a| {
            let a = a.to_string_lossy();
            a == format!("--{key}") || a.starts_with(&format!("--{key}="))
        })
    };
    let mut spliced = Vec::new();
    for (key, value) in entries {
        if given(&key) {
            continue;
        }
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            if all_keys.contains(&key) {
                continue;
            }
            return Err(Error::Config(format!("{}: unknown setting '{key}'", path.display())));
        };
        let is_switch = !arg.get_action().takes_values();
        match (is_switch, value) {
            (true, None) => spliced.push(OsString::from(format!("--{key}"))),
            (true, Some(v)) => match v.as_str() {
                "true" | "1" | "yes" | "on" => spliced.push(OsString::from(format!("--{key}"))),
                "false" | "0" | "no" | "off" => {}
                _ => return Err(Error::Config(format!("{}: '{key}' is a switch, got '{v}'", path.display()))),
            },
            (false, Some(v)) => spliced.push(OsString::from(format!("--{key}={v}"))),
            (false, None) => return Err(Error::Config(format!("{}: '{key}' needs a value", path.display()))),
        }
    }
    let tail = argv.split_off(sub_pos + 1);
    argv.extend(spliced);
    argv.extend(tail);
    Ok(argv)
}
