//! Singular-value spectra of the seven-site pump-probe map as experimental
//! constraints accumulate.
//!
//! cargo run --release --example fmo_feasibility -- [disorder samples]

use pptomo::config::{bundled_fmo_style, fmo_style_model};
use pptomo::feasibility::{build_map, continuous_grid, singular_spectrum, AveragingConfig, Scenario};

fn main() -> pptomo::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let model = fmo_style_model();
    let bath = bundled_fmo_style().bath.expect("bundled template has a bath");
    let grid = continuous_grid(&model, &bath)?;
    println!(
        "{} probe points over {:.0}-{:.0} cm^-1",
        grid.len(),
        grid[0],
        grid[grid.len() - 1]
    );
    let avg = AveragingConfig {
        disorder_samples: n,
        seed: 17,
    };
    for sc in Scenario::cumulative_sequence() {
        let map = build_map(&model, &bath, &sc, &grid, &avg)?;
        let s = singular_spectrum(&map);
        let tail: Vec<String> = [9, 19, 29, 39, 48].iter().map(|&i| format!("{:.1e}", s.normalized[i])).collect();
        println!(
            "{:<40} {:5} rows  condition {:.3e}  sigma_i/sigma_1 at i=10,20,30,40,49: {}",
            sc.label,
            map.matrix.nrows(),
            s.condition,
            tail.join(" ")
        );
    }
    Ok(())
}
