//! Scenario files shipped with the binary.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const EXAMPLE1: &str = include_str!("../../../scenarios/example1.toml");
pub const EXAMPLE2: &str = include_str!("../../../scenarios/example2.toml");
pub const TWO_ATOM: &str = include_str!("../../../scenarios/twoatom.toml");
pub const EXPECTATIONS: &str = include_str!("../../../scenarios/expectations.toml");

pub const NAMES: [&str; 3] = ["example1", "example2", "twoatom"];

pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "example1" => Some(EXAMPLE1),
        "example2" => Some(EXAMPLE2),
        "twoatom" => Some(TWO_ATOM),
        _ => None,
    }
}

/// Reads a scenario from a path, falling back to a bundled scenario whose
/// name matches the file stem (`example1`, `example1.toml`, `example1.cfg`).
pub fn load(spec: &str) -> Result<(String, String)> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok((spec.to_string(), text));
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec);
    match bundled(stem) {
        Some(text) if path.parent().is_none_or(|p| p.as_os_str().is_empty()) => {
            Ok((stem.to_string(), text.to_string()))
        }
        _ => bail!(
            "scenario '{spec}' is neither a readable file nor a bundled scenario ({})",
            NAMES.join(", ")
        ),
    }
}
