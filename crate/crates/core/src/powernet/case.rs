use std::path::Path;

use super::{CaseError, Network};

/// Cases shipped with the crate, by name.
pub const BUNDLED_CASES: [(&str, &str); 3] = [
    ("case2", include_str!("../../data/case2.json")),
    ("case3", include_str!("../../data/case3.json")),
    ("case4", include_str!("../../data/case4.json")),
];

pub fn bundled_case(name: &str) -> Option<Network> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED_CASES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_case(text).expect("bundled cases are valid"))
}

pub fn parse_case(text: &str) -> Result<Network, CaseError> {
    let raw: Network = serde_json::from_str(text).map_err(json_error)?;
    Network::new(raw.buses, raw.branches)
}

pub fn load_case(path: impl AsRef<Path>) -> Result<Network, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| CaseError::Io { path: path.display().to_string(), source })?;
    parse_case(&text)
}

/// Canonical JSON form; `parse_case(save_case(n)) == n`.
pub fn save_case(net: &Network) -> String {
    let mut s = serde_json::to_string_pretty(net).expect("network serializes");
    s.push('\n');
    s
}

pub(super) fn json_error(e: serde_json::Error) -> CaseError {
    CaseError::Parse { line: e.line(), column: e.column(), msg: e.to_string() }
}
