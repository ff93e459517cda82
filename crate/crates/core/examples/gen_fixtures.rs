//! Regenerates the checked-in synthetic fixtures.
//!
//! `cargo run -p polyframe-core --example gen_fixtures [-- <dir>]`

#[path = "../tests/support/fixtures.rs"]
mod fixtures;

use std::path::PathBuf;

fn main() {
    let dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"));
    if let Err(e) = fixtures::generate(&dir) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
    eprintln!("wrote {} files to {}", fixtures::FILES.len(), dir.display());
}
