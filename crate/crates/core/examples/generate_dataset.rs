//! Generates a small dataset on disk and reads one split back.
//!
//! Usage: `cargo run --example generate_dataset [-- OUT_DIR]`

use std::path::PathBuf;

use nlos_loc::dataset::{generate_dataset, load_dataset, DatasetConfig, Split};

fn main() -> nlos_loc::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nlosloc_example_data"));
    let config = DatasetConfig {
        n_maps: 20,
        seed: 7,
        ..DatasetConfig::default()
    };
    let summary = generate_dataset(&config, &out)?;
    println!("wrote {} maps to {}", summary.n_maps, out.display());
    println!(
        "{} links: {} LOS, {} NLOS (NLOS fraction {:.3}); {} pairs had no path",
        summary.n_links, summary.n_los, summary.n_nlos, summary.nlos_fraction, summary.n_dropped
    );
    for split in Split::ALL {
        let samples = load_dataset(&out, split)?;
        let nlos = samples.iter().filter(|s| !s.los()).count();
        println!("{split:>5}: {:4} samples, {nlos} NLOS", samples.len());
    }
    Ok(())
}
