//! Equidistant, uniform random and ridge leverage-score landmarks.

use lssvm_ode::harness::{run, RunConfig, StrategyKind};

fn main() -> lssvm_ode::Result<()> {
    let id = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    for m in [10, 20, 50, 150] {
        for strategy in [StrategyKind::Equidistant, StrategyKind::Random, StrategyKind::Leverage] {
            let mut cfg = RunConfig::defaults(id)?;
            cfg.m = m;
            cfg.strategy = strategy;
            let seeds: Vec<u64> = if strategy == StrategyKind::Equidistant { vec![0] } else { (0..5).collect() };
            let mut rmse = Vec::new();
            for seed in seeds {
                cfg.seed = seed;
                rmse.push(run(&cfg)?.metrics.expect("metrics").rmse);
            }
            let mean = rmse.iter().sum::<f64>() / rmse.len() as f64;
            println!("problem {id} m={m:3} {:12} RMSE {mean:.3e}", strategy.name());
        }
    }
    Ok(())
}
