//! A small degree × homophily grid, its winner map and a lookup.

use attnforge::recipe::{recommend, run_grid, GridSpec};
use attnforge::synthetic::SplitSizes;

fn main() -> attnforge::Result<()> {
    let mut grid = GridSpec {
        degrees: vec![2.5, 20.0],
        homophilies: vec![0.2, 0.8],
        seeds: 3,
        n: 60,
        split: SplitSizes {
            train_per_class: 10,
            val: 100,
            test: 300,
        },
        ..GridSpec::default()
    };
    grid.train.max_epochs = 60;
    let map = run_grid(&grid)?;
    print!("{}", map.text_grid());
    let r = recommend(3.9, 0.83, &map)?;
    println!("d=3.9 h=0.83 -> {} (cell d={} h={})", r.winner, r.d_avg, r.h);
    Ok(())
}
