//! Parallel sweeps: one child process per scenario file.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Worker count from `DAMAGE_SIM_THREADS`, else the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("DAMAGE_SIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_dir(out: &Path, config: &Path, index: usize) -> PathBuf {
    let stem = config.file_stem().map_or_else(|| format!("run{index}"), |s| s.to_string_lossy().into_owned());
    out.join(stem)
}

/// Runs every config and returns the largest exit status.
pub fn sweep(configs: &[PathBuf], out: &Path, extra: &[String]) -> Result<i32, String> {
    if configs.is_empty() {
        return Err("sweep needs at least one scenario file".into());
    }
    let exe = std::env::current_exe().map_err(|e| format!("cannot locate own executable: {e}"))?;
    let next = AtomicUsize::new(0);
    let codes = Mutex::new(vec![0i32; configs.len()]);
    let workers = thread_cap().min(configs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let status = Command::new(&exe)
                    .arg("--config")
                    .arg(&configs[i])
                    .arg("--out")
                    .arg(run_dir(out, &configs[i], i))
                    .args(extra)
                    .status();
                let code = match status {
                    Ok(s) => s.code().unwrap_or(1),
                    Err(e) => {
                        eprintln!("{}: {e}", configs[i].display());
                        1
                    }
                };
                eprintln!("{}: exit {code}", configs[i].display());
                codes.lock().expect("exit code table")[i] = code;
            });
        }
    });
    Ok(codes.into_inner().expect("exit code table").into_iter().max().unwrap_or(0))
}
