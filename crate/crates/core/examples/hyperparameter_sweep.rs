//! A small grid over sub-sampling rate and training size, each cell compared
//! against an exhaustive reference. Writes one JSON report per cell and a CSV.

use maxnull::harness::{sweep, GridConfig};
use maxnull::simgen::{generate, SimSpec};

fn main() -> maxnull::Result<()> {
    let sim = generate(&SimSpec { n: 20, v: 3_000, effect_mu: 1.0, sparsity: 0.01, seed: 4 })?;
    let n = sim.data.subjects();
    let grid = GridConfig {
        perms: vec![1_000],
        etas: vec![0.02, 0.04, 0.16],
        ells: vec![n, 2 * n],
        ..GridConfig::simulation_default(n, 1.0, 4)
    };
    let out = std::env::temp_dir().join("maxnull-sweep-example");
    let res = sweep(&sim.data, &grid, &out)?;
    for row in &res.rows {
        println!(
            "eta {:<5} ell {:<3} {:<6} KL {}",
            row.eta,
            row.ell,
            row.status,
            row.kl.map_or("-".into(), |k| format!("{k:.4}"))
        );
    }
    println!("summary: {}", res.summary_path.display());
    Ok(())
}
