//! Semantic code search over variable-based flow graphs (VFGs) built from
//! LLVM IR.
//!
//! Pipeline: [`ir`] parses textual IR, [`vfg`] builds a flow graph per
//! function, [`optimize`] shrinks it, [`nn`] embeds graphs and natural
//! language queries into one vector space, [`train`] fits the encoders,
//! and [`search`] indexes, ranks, evaluates and serves.

pub mod ir;
pub mod nn;
pub mod optimize;
pub mod prepare;
pub mod search;
pub mod service;
pub mod text;
pub mod train;
pub mod vfg;

use std::io::Write;
use std::path::Path;

/// Writes to a temporary sibling file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
