//! `--config path`: a flat `key = value` file whose keys are flag names.
//!
//! `command = coeffs` selects the subcommand when none is given on the
//! command line. Every other key `k` becomes `--k value`; flags given on the
//! command line win over the file. Blank lines and `#` comments are ignored.

use std::path::PathBuf;

use crate::error::CliError;

pub const SUBCOMMANDS: &[&str] = &["partitions", "coeffs", "sample", "term", "convergence", "sde-demo"];

/// Returns `argv` with the configuration file (if any) spliced in.
pub fn expand(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut iter = argv.into_iter();
    let prog = iter.next().unwrap_or_else(|| "iterint".into());
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            let p = iter.next().ok_or_else(|| CliError::Invalid {
                flag: "--config",
                reason: "missing path".into(),
            })?;
            path = Some(PathBuf::from(p));
        } else if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = path else {
        let mut out = vec![prog];
        out.extend(rest);
        return Ok(out);
    };

    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let mut command = None;
    let mut flags = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::Config {
            path: path.clone(),
            reason: format!("line {}: expected `key = value`", n + 1),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.starts_with('-') {
            return Err(CliError::Config {
                path: path.clone(),
                reason: format!("line {}: bad key `{key}`", n + 1),
            });
        }
        if key == "command" {
            command = Some(value.to_string());
        } else {
            flags.push((format!("--{key}"), value.to_string()));
        }
    }

    let mut out = vec![prog];
    let has_command = rest.iter().any(|a| SUBCOMMANDS.contains(&a.as_str()));
    if let (Some(c), false) = (command, has_command) {
        out.push(c);
    }
    let given = |flag: &str| rest.iter().any(|a| a == flag || a.starts_with(&format!("{flag}=")));
    let extra: Vec<String> = flags
        .into_iter()
        .filter(|(flag, _)| !given(flag))
        .flat_map(|(flag, value)| [flag, value])
        .collect();
    out.extend(rest);
    out.extend(extra);
    Ok(out)
}
