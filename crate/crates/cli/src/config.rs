//! `--config FILE` support: a flat `key=value` file whose entries are
//! spliced into the command line in front of the user's own flags, so that
//! explicit flags override the file.

use std::fs;

use crate::CliError;

/// Subcommand names, with the nested ones of `ivgff`.
const SUBCOMMANDS: [&str; 9] = [
    "green",
    "ground-state",
    "langevin",
    "heat-kernel",
    "ivgff",
    "membrane",
    "scaling",
    "efron-stein",
    "selftest",
];
const NESTED: [&str; 2] = ["peierls", "sets"];

/// Global options that take a value.
const VALUED_GLOBALS: [&str; 4] = ["--config", "--seed", "--jobs", "--out"];

fn config_path(argv: &[String]) -> Option<(usize, usize, String)> {
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            return argv.get(i + 1).map(|p| (i, 2, p.clone()));
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some((i, 1, p.to_string()));
        }
    }
    None
}

/// Turns the file contents into flags. `key=true` becomes a bare switch and
/// `key=false` is dropped.
pub fn parse_config(text: &str) -> Result<Vec<String>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::Config {
            field: "config".into(),
            reason: format!("line {} is not key=value: `{line}`", n + 1),
        })?;
        let key = k.trim().trim_start_matches("--");
        let value = v.trim();
        if key.is_empty() {
            return Err(CliError::Config {
                field: "config".into(),
                reason: format!("line {} has an empty key", n + 1),
            });
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => {
                out.push(format!("--{key}"));
                out.push(value.to_string());
            }
        }
    }
    Ok(out)
}

/// Position just after the subcommand path (`ivgff peierls`, `scaling`, ...).
fn subcommand_end(argv: &[String]) -> usize {
    let mut i = 1;
    let mut end = argv.len();
    let mut found_top = false;
    while i < argv.len() {
        let a = argv[i].as_str();
        if VALUED_GLOBALS.contains(&a) {
            i += 2;
            continue;
        }
        if !found_top && SUBCOMMANDS.contains(&a) {
            found_top = true;
            end = i + 1;
            if a != "ivgff" {
                break;
            }
        } else if found_top {
            if NESTED.contains(&a) {
                end = i + 1;
            }
            break;
        }
        i += 1;
    }
    end
}

/// Removes `--config FILE` from `argv` and splices in the file's flags.
pub fn expand(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some((pos, width, path)) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::Config {
        field: "config".into(),
        reason: format!("cannot read {path}: {e}"),
    })?;
    let extra = parse_config(&text)?;
    let mut argv = argv;
    argv.drain(pos..pos + width);
    let at = subcommand_end(&argv);
    argv.splice(at..at, extra);
    Ok(argv)
}
