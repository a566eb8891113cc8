use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use k3_lax::cli::{error_json, run, RunConfig};
use k3_lax::Error;

fn execute(cfg: &RunConfig) -> k3_lax::Result<(String, i32)> {
    let report = run(cfg)?;
    Ok((report.render(cfg.output)?, report.exit_code))
}

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let outcome = match builder.build() {
        Ok(pool) => pool.install(|| execute(&cfg)),
        Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
    };
    let (text, code) = match outcome {
        Ok(ok) => ok,
        Err(err) => {
            eprintln!("k3lax: {err}");
            (error_json(&err), err.exit_code())
        }
    };
    let mut stdout = std::io::stdout().lock();
    if stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).is_err() {
        return ExitCode::from(1);
    }
    ExitCode::from(code as u8)
}
