//! Write reference and prediction on a fine grid as CSV, ready for any
//! plotting tool.

use std::path::PathBuf;

use lssvm_ode::harness::{cli_plotdata, run, write_plotdata, write_results, PlotSource, RunConfig};

fn main() -> lssvm_ode::Result<()> {
    let id = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let dir = std::env::args().nth(2).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lssvm-ode-plots"));
    let result = run(&RunConfig::defaults(id)?)?;
    let files = write_results(&dir, &format!("solve-p{id}"), std::slice::from_ref(&result))?;
    let rows = cli_plotdata(PlotSource::Result(&result))?;
    let worst = rows.iter().map(|r| r.abs_error).fold(0.0, f64::max);
    let path = write_plotdata(&dir, &format!("plot-p{id}"), &rows)?;
    println!("results: {}", files.json.display());
    println!("plot data: {} ({} rows, max error {worst:.2e})", path.display(), rows.len());
    Ok(())
}
