//! Writes the bundled synthetic panel, one CSV per asset, into the given
//! directory (default `data/synthetic`).

use std::fs::File;
use std::path::PathBuf;

use costfolio::synthetic::bundled_panel;

fn main() -> costfolio::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/synthetic".into()));
    std::fs::create_dir_all(&dir).map_err(|source| costfolio::Error::Io { path: dir.clone(), source })?;
    let panel = bundled_panel()?;
    for (i, id) in panel.asset_ids().iter().enumerate() {
        let path = dir.join(format!("{id}.csv"));
        let file = File::create(&path).map_err(|source| costfolio::Error::Io { path: path.clone(), source })?;
        panel.write_asset_csv(i, file)?;
        println!("wrote {}", path.display());
    }
    println!("fingerprint {}", panel.fingerprint());
    Ok(())
}
