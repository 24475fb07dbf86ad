//! `--config` files: flat `key = value` lines spliced in as long flags ahead
//! of the command line, so explicit flags win.

use std::ffi::OsString;
use std::path::Path;

use clap::Command;

use crate::CliError;

const SUBCOMMANDS: [&str; 4] = ["views", "render", "segment", "eval"];

/// Path given to `--config`, if any.
fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Parses `key = value` lines; `#` starts a comment. Keys may use `_` or `-`.
pub fn parse_entries(text: &str, path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "{}:{}: expected key = value",
                path.display(),
                i + 1
            )));
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Config(format!(
                "{}:{}: empty key",
                path.display(),
                i + 1
            )));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn flag_given(args: &[OsString], key: &str) -> bool {
    let long = format!("--{key}");
    let eq = format!("--{key}=");
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == long || s.starts_with(&eq)
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::Config(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

/// Returns `args` with the config file's entries inserted after the
/// subcommand name. Keys already present on the command line are dropped,
/// keys belonging only to other subcommands are ignored.
pub fn expand(args: Vec<OsString>, cli: &Command) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path).to_path_buf();
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let entries = parse_entries(&text, &path)?;

    let Some(pos) = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(args);
    };
    let name = args[pos].to_string_lossy().into_owned();
    let sub = cli
        .get_subcommands()
        .find(|s| s.get_name() == name)
        .expect("subcommand list matches the parser");

    let mut inserted: Vec<OsString> = Vec::new();
    for (key, value) in entries {
        if key == "config" || flag_given(&args, &key) {
            continue;
        }
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            let known = cli.get_subcommands().any(|s| {
                s.get_arguments()
                    .any(|a| a.get_long() == Some(key.as_str()))
            });
            if known {
                continue;
            }
            return Err(CliError::Config(format!(
                "{}: unknown key {key:?}",
                path.display()
            )));
        };
        if arg.get_action().takes_values() {
            inserted.push(format!("--{key}").into());
            inserted.push(value.into());
        } else if parse_bool(&key, &value)? {
            inserted.push(format!("--{key}").into());
        }
    }
    let mut out = args;
    out.splice(pos + 1..pos + 1, inserted);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::Cli;
    use clap::CommandFactory;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn entries_skip_comments_and_normalize_keys() {
        let e = parse_entries("# run\niou_cutoff = 0.8\n\nk=4 # four\n", Path::new("c")).unwrap();
        assert_eq!(
            e,
            vec![
                ("iou-cutoff".into(), "0.8".into()),
                ("k".into(), "4".into())
            ]
        );
        assert!(parse_entries("novalue\n", Path::new("c")).is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "k = 4\nthetas = 90\njson = true\nlabels = x.txt\n").unwrap();
        let args = os(&[
            "meshseg",
            "--config",
            p.to_str().unwrap(),
            "views",
            "--k",
            "2",
        ]);
        let out = expand(args, &Cli::command()).unwrap();
        let s: Vec<String> = out
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect();
        assert_eq!(&s[3..], ["views", "--thetas", "90", "--json", "--k", "2"]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "bogus = 1\n").unwrap();
        let args = os(&["meshseg", "views", "--config", p.to_str().unwrap()]);
        assert!(matches!(
            expand(args, &Cli::command()),
            Err(CliError::Config(_))
        ));
    }
}
