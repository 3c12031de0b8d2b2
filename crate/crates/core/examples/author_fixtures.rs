//! Rebuilds `fixtures/store` from the hand-written transcripts.
//!
//! ```text
//! cargo run --example author_fixtures
//! ```

use std::path::Path;

use rpg::planner::authoring::{author_store, load_transcripts};
use rpg::planner::FixtureBackend;

fn main() -> Result<(), String> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let transcripts = load_transcripts(&root.join("transcripts"))?;
    let store = FixtureBackend::replay(root.join("store"));
    for (name, digest) in author_store(&transcripts, &store)? {
        println!("{digest}  {name}");
    }
    Ok(())
}
