// The statistics toolbox on plain samples: descriptives, the normality
// gate, both test branches, effect sizes, and rank correlation.

use std::error::Error;

use exrunner::model::Direction;
use exrunner::stats::{
    cliffs_delta, cohens_d, descriptive, mann_whitney, shapiro_wilk, spearman, welch_t,
};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let wasmer = [12.1, 11.8, 12.6, 12.0, 11.7, 12.4, 12.2, 11.9];
    let browser = [13.9, 14.6, 13.1, 15.2, 14.0, 13.7, 19.8, 14.3];

    for (name, v) in [("wasmer", &wasmer), ("browser", &browser)] {
        let (w, p) = shapiro_wilk(v)?;
        println!(
            "{name:8} {}  Shapiro-Wilk W={w:.3} p={p:.3}",
            descriptive(v)?
        );
    }

    let t = welch_t(&wasmer, &browser, Direction::TwoSided, 0.05)?;
    println!(
        "Welch t = {:.3}, df = {:.2}, p = {:.2e}",
        t.statistic,
        t.df.unwrap_or(0.0),
        t.p_value
    );
    let u = mann_whitney(&wasmer, &browser, Direction::ALess, 0.05)?;
    println!(
        "{}: U = {}, p = {:.2e} ({})",
        u.test_name, u.statistic, u.p_value, u.decision
    );
    println!("{}", cohens_d(&wasmer, &browser)?);
    println!("{}", cliffs_delta(&wasmer, &browser)?);

    let time_s = [1.2, 2.3, 2.9, 4.1, 5.0, 6.2];
    let energy_j = [10.0, 19.5, 30.2, 38.8, 52.0, 58.1];
    let (rho, p) = spearman(&time_s, &energy_j)?;
    println!("time vs energy: Spearman rho = {rho:.3}, p = {p:.4}");
    Ok(())
}

fn main() {
    run_example().unwrap();
}
