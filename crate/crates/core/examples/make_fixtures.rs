//! Regenerate the shipped model and image fixtures.
//!
//! Run from the workspace root: `cargo run -p edgenode --example make_fixtures`.

use std::fs;
use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    for (path, bytes) in edgenode::fixtures::shipped_files()? {
        let path = root.join(path);
        fs::create_dir_all(path.parent().expect("fixture paths have a directory"))?;
        fs::write(path, bytes)?;
    }
    Ok(())
}
