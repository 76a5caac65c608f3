//! Trained step sizes against the best fixed step on the square toy
//! problem (about a minute). Pass `quick` for a smaller run.

use tpg_detector::harness::{run_toy, GammaGrid, ToyExperiment};

fn main() -> tpg_detector::Result<()> {
    let mut exp = ToyExperiment::default();
    if std::env::args().nth(1).as_deref() == Some("quick") {
        exp.n = 32;
        exp.sigma2 = 4.0 * 32.0 / 1000.0;
        exp.minibatches_per_generation = 40;
        exp.samples = 1000;
        exp.gamma_grid = GammaGrid { min: 1e-3, max: 6e-2, points: 10 };
    }
    let report = run_toy(&exp)?;
    let (best_gamma, pg) = &report.grid[report.best];
    println!("best fixed step {best_gamma:.3e}");
    println!("{:>3} {:>10} {:>10}", "t", "trained", "fixed");
    for t in 1..=exp.t_max {
        println!("{t:>3} {:>10.2} {:>10.2}", report.tpg.at(t), pg.at(t));
    }
    let steps: Vec<String> = (0..exp.t_max).map(|t| format!("{:.2e}", report.params.step_size(t))).collect();
    println!("learned steps: {}", steps.join(" "));
    Ok(())
}
