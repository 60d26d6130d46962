//! `--config FILE` support.
//!
//! The file is TOML. Top-level keys apply to every subcommand and a table
//! named after the subcommand (`[eval]`, `[scene.decode]`, ...) applies to
//! that one only. Keys are flag names with `_` or `-`. They are spliced into
//! the argument list ahead of the user's flags, so flags given on the command
//! line win.

use std::path::Path;

use toml::{Table, Value};

fn render(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Integer(i) => Some(i.to_string()),
        Value::Float(f) => Some(f.to_string()),
        Value::Boolean(_) => None,
        Value::Array(a) => Some(a.iter().filter_map(render).collect::<Vec<_>>().join(",")),
        other => Some(other.to_string()),
    }
}

fn push_table(table: &Table, out: &mut Vec<String>) {
    for (key, value) in table {
        if value.is_table() {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Boolean(true) => out.push(flag),
            Value::Boolean(false) => {}
            v => {
                out.push(flag);
                out.extend(render(v));
            }
        }
    }
}

/// Rewrites `args` with the config file's flags inserted after the
/// subcommand path.
pub fn expand(args: Vec<String>) -> Result<Vec<String>, String> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let (path, consumed) = match args[pos].strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => match args.get(pos + 1) {
            Some(p) => (p.clone(), 2),
            None => return Err("--config needs a file path".into()),
        },
    };
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| format!("{path}: {e}"))?;
    let table: Table = text.parse().map_err(|e| format!("{path}: {e}"))?;

    let mut rest: Vec<String> = args[..pos].to_vec();
    rest.extend_from_slice(&args[pos + consumed..]);

    let Some(cmd) = rest.iter().position(|a| is_subcommand(a)) else {
        return Err("--config needs a subcommand".into());
    };
    let mut injected = Vec::new();
    push_table(&table, &mut injected);
    let mut cmd_end = cmd + 1;
    if let Some(scoped) = table.get(rest[cmd].as_str()).and_then(Value::as_table) {
        push_table(scoped, &mut injected);
        if let Some(sub) = rest.get(cmd_end).filter(|s| is_scene_subcommand(s)) {
            if let Some(t) = scoped.get(sub.as_str()).and_then(Value::as_table) {
                push_table(t, &mut injected);
            }
        }
    }
    if rest[cmd] == "scene" && rest.get(cmd_end).is_some_and(|s| is_scene_subcommand(s)) {
        cmd_end += 1;
    }
    let mut out = rest[..cmd_end].to_vec();
    out.extend(injected);
    out.extend_from_slice(&rest[cmd_end..]);
    Ok(out)
}

fn is_subcommand(s: &str) -> bool {
    matches!(s, "gen-codes" | "optimize" | "eval" | "scene" | "quantize")
}

fn is_scene_subcommand(s: &str) -> bool {
    matches!(s, "synth" | "decode")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn injects_global_and_scoped_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 4\n[eval]\ntrials = 10\nnoiseless = true\nphi_grid = [100, 200]\n").unwrap();
        let out = expand(args(&format!("spc eval --config {} --k 8", path.display()))).unwrap();
        assert_eq!(
            out,
            args("spc eval --seed 4 --noiseless --phi-grid 100,200 --trials 10 --k 8")
        );
    }

    #[test]
    fn scene_subcommand_tables() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[scene.decode]\nseed = 9\n").unwrap();
        let out = expand(args(&format!("spc --threads 2 scene decode --config={}", path.display()))).unwrap();
        assert_eq!(out, args("spc --threads 2 scene decode --seed 9"));
    }

    #[test]
    fn no_config_is_untouched() {
        assert_eq!(expand(args("spc eval --k 8")).unwrap(), args("spc eval --k 8"));
    }
}
