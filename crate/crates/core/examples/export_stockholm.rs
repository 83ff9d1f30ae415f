//! Write the bundled Stockholm scenarios to a directory (default `crates/core/scenarios`).
//!
//! ```text
//! cargo run --example export_stockholm -- [dir]
//! ```

use std::path::PathBuf;

fn main() -> siws::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("crates/core/scenarios"), PathBuf::from);
    std::fs::create_dir_all(&dir)?;
    for s in siws::stockholm::scenarios()? {
        let path = dir.join(format!("{}.toml", s.name));
        siws::scenario::save_scenario(&s, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
