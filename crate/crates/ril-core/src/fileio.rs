//! Plain-text file formats.
//!
//! All floats are written in Rust's shortest round-trip decimal form, so
//! every file re-parses to bit-identical values and repeated generation is
//! byte-deterministic. Datasets keep provenance in a sidecar file
//! (`<path>.provenance`) that training commands never open.

use std::fmt::Write as _;
use std::path::Path;

use crate::demo::{DemoDataset, SampleSource};
use crate::error::{Error, Result};
use crate::mdp::{MdpSpec, TabularPolicy};

const MDP_HEADER: &str = "ril-mdp v1";
const DEMO_HEADER: &str = "ril-demo v1";
const PROVENANCE_HEADER: &str = "ril-demo-provenance v1";
const POLICY_HEADER: &str = "ril-policy v1";

fn fmt_floats(out: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn parse_floats(line: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad float `{t}` in {what}")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != expected {
        return Err(Error::Parse(format!(
            "{what}: expected {expected} values, found {}",
            vals.len()
        )));
    }
    Ok(vals)
}

/// Serialize an MDP: dimensions, discount, horizon, then the dense
/// transition, reward, and initial tables.
pub fn mdp_to_string(mdp: &MdpSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MDP_HEADER}");
    let _ = writeln!(out, "states {}", mdp.n_states());
    let _ = writeln!(out, "actions {}", mdp.n_actions());
    let _ = writeln!(out, "gamma {}", mdp.gamma());
    let _ = writeln!(out, "horizon {}", mdp.horizon());
    let _ = writeln!(out, "transition");
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            fmt_floats(&mut out, mdp.transition_row(s, a));
        }
    }
    let _ = writeln!(out, "reward");
    for s in 0..mdp.n_states() {
        let row: Vec<f64> = (0..mdp.n_actions()).map(|a| mdp.reward(s, a)).collect();
        fmt_floats(&mut out, &row);
    }
    let _ = writeln!(out, "initial");
    fmt_floats(&mut out, mdp.initial());
    out
}

pub fn mdp_from_string(text: &str) -> Result<MdpSpec> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.trim() != MDP_HEADER {
        return Err(Error::Parse(format!("expected `{MDP_HEADER}` header, found `{header}`")));
    }
    let mut field = |name: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing `{name}` line")))?;
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| Error::Parse(format!("malformed `{name}` line: `{line}`")))?;
        if key != name {
            return Err(Error::Parse(format!("expected `{name}`, found `{key}`")));
        }
        Ok(value.trim().to_string())
    };
    let n_states: usize = field("states")?
        .parse()
        .map_err(|_| Error::Parse("bad state count".into()))?;
    let n_actions: usize = field("actions")?
        .parse()
        .map_err(|_| Error::Parse("bad action count".into()))?;
    let gamma: f64 = field("gamma")?
        .parse()
        .map_err(|_| Error::Parse("bad gamma".into()))?;
    let horizon: usize = field("horizon")?
        .parse()
        .map_err(|_| Error::Parse("bad horizon".into()))?;

    let expect_marker = |lines: &mut std::str::Lines, marker: &str| -> Result<()> {
        match lines.next() {
            Some(l) if l.trim() == marker => Ok(()),
            other => Err(Error::Parse(format!("expected `{marker}` section, found {other:?}"))),
        }
    };
    expect_marker(&mut lines, "transition")?;
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for s in 0..n_states {
        for a in 0..n_actions {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("transition table truncated".into()))?;
            transition.extend(parse_floats(line, n_states, &format!("transition row ({s},{a})"))?);
        }
    }
    expect_marker(&mut lines, "reward")?;
    let mut reward = Vec::with_capacity(n_states * n_actions);
    for s in 0..n_states {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("reward table truncated".into()))?;
        reward.extend(parse_floats(line, n_actions, &format!("reward row {s}"))?);
    }
    expect_marker(&mut lines, "initial")?;
    let line = lines
        .next()
        .ok_or_else(|| Error::Parse("initial distribution missing".into()))?;
    let initial = parse_floats(line, n_states, "initial distribution")?;

    MdpSpec::new(n_states, n_actions, transition, initial, reward, gamma, horizon)
}

pub fn save_mdp(path: &Path, mdp: &MdpSpec) -> Result<()> {
    std::fs::write(path, mdp_to_string(mdp))?;
    Ok(())
}

pub fn load_mdp(path: &Path) -> Result<MdpSpec> {
    let text = std::fs::read_to_string(path)?;
    mdp_from_string(&text)
}

/// Dataset main file: `ril-demo v1 n=<N> delta=<d> seed=<s>` header, then
/// one `state,action` pair per line in generation order.
pub fn dataset_to_string(d: &DemoDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{DEMO_HEADER} n={} delta={} seed={}",
        d.len(),
        d.declared_noise_rate(),
        d.seed()
    );
    for &(s, a) in d.samples() {
        let _ = writeln!(out, "{s},{a}");
    }
    out
}

fn provenance_to_string(tags: &[SampleSource]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{PROVENANCE_HEADER} n={}", tags.len());
    for tag in tags {
        match tag {
            SampleSource::Expert => out.push_str("expert\n"),
            SampleSource::NonExpert(k) => {
                let _ = writeln!(out, "nonexpert {k}");
            }
        }
    }
    out
}

/// Write the dataset and, when provenance is known, its sidecar.
pub fn save_dataset(path: &Path, d: &DemoDataset) -> Result<()> {
    std::fs::write(path, dataset_to_string(d))?;
    if let Some(tags) = d.provenance_for_eval() {
        std::fs::write(sidecar_path(path), provenance_to_string(tags))?;
    }
    Ok(())
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".provenance");
    os.into()
}

/// Load a dataset without touching the sidecar; provenance stays unknown.
/// This is the only loader training commands use.
pub fn load_dataset(path: &Path) -> Result<DemoDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let mut n = None;
    let mut delta = None;
    let mut seed = None;
    let mut parts = header.split_whitespace();
    let magic = format!(
        "{} {}",
        parts.next().unwrap_or_default(),
        parts.next().unwrap_or_default()
    );
    if magic != DEMO_HEADER {
        return Err(Error::Parse(format!("expected `{DEMO_HEADER}` header, found `{header}`")));
    }
    for kv in parts {
        match kv.split_once('=') {
            Some(("n", v)) => n = v.parse::<usize>().ok(),
            Some(("delta", v)) => delta = v.parse::<f64>().ok(),
            Some(("seed", v)) => seed = v.parse::<u64>().ok(),
            _ => return Err(Error::Parse(format!("unknown header field `{kv}`"))),
        }
    }
    let (n, delta, seed) = match (n, delta, seed) {
        (Some(n), Some(d), Some(s)) => (n, d, s),
        _ => return Err(Error::Parse("dataset header missing n/delta/seed".into())),
    };
    let mut samples = Vec::with_capacity(n);
    for line in lines {
        let (s, a) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("malformed sample line `{line}`")))?;
        let s: usize = s.trim().parse().map_err(|_| Error::Parse("bad state index".into()))?;
        let a: usize = a.trim().parse().map_err(|_| Error::Parse("bad action index".into()))?;
        samples.push((s, a));
    }
    if samples.len() != n {
        return Err(Error::Parse(format!(
            "dataset header declares {n} samples, file holds {}",
            samples.len()
        )));
    }
    DemoDataset::from_parts(samples, None, delta, seed)
}

/// Load a dataset together with its provenance sidecar when present.
/// Evaluation/reporting use only.
pub fn load_dataset_with_sidecar(path: &Path) -> Result<DemoDataset> {
    let base = load_dataset(path)?;
    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        return Ok(base);
    }
    let text = std::fs::read_to_string(&sidecar)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if !header.starts_with(PROVENANCE_HEADER) {
        return Err(Error::Parse(format!(
            "expected `{PROVENANCE_HEADER}` header in sidecar, found `{header}`"
        )));
    }
    let mut tags = Vec::with_capacity(base.len());
    for line in lines {
        let tag = match line.trim() {
            "expert" => SampleSource::Expert,
            other => match other.strip_prefix("nonexpert ") {
                Some(k) => SampleSource::NonExpert(
                    k.parse().map_err(|_| Error::Parse("bad snapshot index".into()))?,
                ),
                None => return Err(Error::Parse(format!("unknown provenance tag `{other}`"))),
            },
        };
        tags.push(tag);
    }
    DemoDataset::from_parts(
        base.samples().to_vec(),
        Some(tags),
        base.declared_noise_rate(),
        base.seed(),
    )
}

pub fn policy_to_string(policy: &TabularPolicy) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{POLICY_HEADER}");
    let _ = writeln!(out, "states {}", policy.n_states());
    let _ = writeln!(out, "actions {}", policy.n_actions());
    for s in 0..policy.n_states() {
        fmt_floats(&mut out, policy.row(s));
    }
    out
}

pub fn save_policy(path: &Path, policy: &TabularPolicy) -> Result<()> {
    std::fs::write(path, policy_to_string(policy))?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<TabularPolicy> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.trim() != POLICY_HEADER {
        return Err(Error::Parse(format!("expected `{POLICY_HEADER}` header, found `{header}`")));
    }
    let parse_dim = |line: Option<&str>, name: &str| -> Result<usize> {
        let line = line.ok_or_else(|| Error::Parse(format!("missing `{name}` line")))?;
        let v = line
            .strip_prefix(name)
            .ok_or_else(|| Error::Parse(format!("expected `{name}` line, found `{line}`")))?;
        v.trim().parse().map_err(|_| Error::Parse(format!("bad `{name}` value")))
    };
    let n_states = parse_dim(lines.next(), "states")?;
    let n_actions = parse_dim(lines.next(), "actions")?;
    let mut probs = Vec::with_capacity(n_states * n_actions);
    for s in 0..n_states {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("policy table truncated".into()))?;
        probs.extend(parse_floats(line, n_actions, &format!("policy row {s}"))?);
    }
    TabularPolicy::new(n_states, n_actions, probs)
}
