//! Regenerates `fixtures/synthetic_panel.csv` from the seeded generator.

use std::path::PathBuf;

fn main() -> folio_core::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic_panel.csv"));
    let panel = folio_core::synthetic::fixture_panel();
    folio_core::market_data::write_panel(&panel, &out)?;
    println!(
        "wrote {} ({} assets x {} dates)",
        out.display(),
        panel.n_assets(),
        panel.n_dates()
    );
    Ok(())
}
