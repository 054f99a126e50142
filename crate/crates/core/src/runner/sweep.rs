//! Multi-seed sweeps: one child process per seed, each with its own run
//! directory.

use std::path::Path;
use std::process::Command;

use crate::error::{Error, Result};

/// Parses `a..b` (exclusive) or `a..=b` (inclusive).
pub fn parse_seed_range(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("seed range `{text}` is not of the form a..b or a..=b"));
    let (lo, hi, inclusive) = if let Some((a, b)) = text.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = text.split_once("..") {
        (a, b, false)
    } else {
        return Err(bad());
    };
    let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
    let seeds: Vec<u64> = if inclusive { (lo..=hi).collect() } else { (lo..hi).collect() };
    if seeds.is_empty() {
        return Err(Error::Config(format!("seed range `{text}` is empty")));
    }
    Ok(seeds)
}

/// Runs `exe run <config> --seed s` for every seed, at most `jobs` at a
/// time. Returns each seed with its exit code.
pub fn sweep(exe: &Path, config: &Path, seeds: &[u64], out: Option<&Path>, jobs: usize) -> Result<Vec<(u64, i32)>> {
    let mut results = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(jobs.max(1)) {
        let mut children = Vec::new();
        for &seed in chunk {
            let mut cmd = Command::new(exe);
            cmd.arg("run").arg(config).arg("--seed").arg(seed.to_string());
            if let Some(dir) = out {
                cmd.arg("--out").arg(dir);
            }
            children.push((seed, cmd.spawn().map_err(|e| Error::io(exe, e))?));
        }
        for (seed, mut child) in children {
            let status = child.wait().map_err(|e| Error::io(exe, e))?;
            results.push((seed, status.code().unwrap_or(-1)));
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_seed_range("1..4").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seed_range("2..=3").unwrap(), vec![2, 3]);
        assert!(parse_seed_range("3..3").is_err());
        assert!(parse_seed_range("x").is_err());
    }
}
