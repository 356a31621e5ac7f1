//! Generate the simulated datasets, write them in both matrix formats with a
//! manifest, and read them back.

use maxnull::io;
use maxnull::simgen::{gen_sim1, sim2_grid, generate};

fn main() -> maxnull::Result<()> {
    let dir = std::env::temp_dir().join("maxnull-simulation-data");
    std::fs::create_dir_all(&dir)?;

    let sim1 = gen_sim1(1);
    let bin = dir.join("sim1.mat0");
    io::write_matrix(&sim1.data, &bin)?;
    std::fs::write(dir.join("sim1.json"), serde_json::to_vec_pretty(&sim1.manifest())?)?;
    let back = io::read_matrix(&bin, Some(sim1.data.n1()))?;
    assert_eq!(back, sim1.data);
    println!("sim1: {} x {} with {} signal voxels -> {}", back.voxels(), back.subjects(), sim1.signal.len(), bin.display());

    let grid = sim2_grid(2_000, 1);
    println!("grid has {} settings; writing the smallest as CSV", grid.len());
    let small = generate(&grid[0])?;
    let csv = dir.join("sim2_first.csv");
    io::write_csv(&small.data, &csv)?;
    let back = io::read_csv(&csv)?;
    assert_eq!(back, small.data);
    println!(
        "n = {}, effect = {}, sparsity = {} -> {}",
        grid[0].n,
        grid[0].effect_mu,
        grid[0].sparsity,
        csv.display()
    );
    Ok(())
}
