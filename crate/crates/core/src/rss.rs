//! Peak resident-set-size probe.
//!
//! Reads the process's high-water-mark RSS from `/proc/self/status` (the
//! `VmHWM` line). Returns `None` when the information is unavailable — other
//! platforms, restricted procfs — so callers treat memory figures as
//! best-effort instrumentation, never load-bearing data.

/// Peak resident set size of this process in bytes, if the platform exposes it.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    parse_vmhwm(&status)
}

fn parse_vmhwm(status: &str) -> Option<u64> {
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let mut parts = line.split_whitespace();
    let kb: u64 = parts.nth(1)?.parse().ok()?;
    match parts.next() {
        Some("kB") => Some(kb * 1024),
        _ => None,
    }
}
