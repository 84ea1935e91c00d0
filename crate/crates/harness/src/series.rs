//! Time-series CSV with a `#` comment header carrying run provenance.

use std::collections::BTreeMap;
use std::path::Path;

use evcs_core::attack::{AttackSpec, Window};
use evcs_core::detect::Verdict;
use evcs_core::mitigate::{RunLog, Strategy};
use evcs_core::Channel;

use crate::stats::{compute_stats, Phase, RunStats};
use crate::{write_atomic, HarnessError, TOOL_VERSION};

pub const COLUMNS: [&str; 19] = [
    "t",
    "d_pv_legacy",
    "d_pv_attacked",
    "d_pv_routed",
    "verdict_pv",
    "d_bes_legacy",
    "d_bes_attacked",
    "d_bes_routed",
    "verdict_bes",
    "d_ev_legacy",
    "d_ev_attacked",
    "d_ev_routed",
    "verdict_ev",
    "p_pv",
    "v_bus",
    "i_bes",
    "v_bes",
    "i_ev",
    "v_ev",
];

/// Plant observables in column order.
pub const OBSERVABLES: [&str; 6] = ["p_pv", "v_bus", "i_bes", "v_bes", "i_ev", "v_ev"];

/// Signals summarized in stats outputs.
pub const STAT_SIGNALS: [&str; 9] = ["p_pv", "v_bus", "i_bes", "v_bes", "i_ev", "v_ev", "d_pv", "d_bes", "d_ev"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub t: f64,
    pub legacy: [f64; 3],
    pub attacked: [f64; 3],
    pub routed: [f64; 3],
    pub attack: [bool; 3],
    pub obs: [f64; 6],
}

impl Record {
    /// Routed duty differs from the (possibly corrupted) legacy path on `c`.
    pub fn rerouted(&self, c: Channel) -> bool {
        self.routed[c.index()] != self.attacked[c.index()]
    }

    pub fn signal(&self, name: &str) -> Option<f64> {
        if let Some(i) = OBSERVABLES.iter().position(|o| *o == name) {
            return Some(self.obs[i]);
        }
        let c: Channel = name.strip_prefix("d_")?.parse().ok()?;
        Some(self.routed[c.index()])
    }
}

/// Provenance lines written above the column header.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub tool: String,
    pub config_hash: String,
    pub seed: u64,
    pub strategy: String,
    pub windows: BTreeMap<Channel, Window>,
}

impl Provenance {
    pub fn new(config_hash: &str, seed: u64, strategy: Option<&Strategy>, attack: Option<&AttackSpec>) -> Self {
        let strategy = match strategy {
            Some(s) => Channel::ALL.iter().map(|&c| format!("{c}={}", s.get(c))).collect::<Vec<_>>().join(" "),
            None => "unmitigated".into(),
        };
        let windows = attack
            .map(|a| a.targets.iter().filter_map(|&c| a.window(c).map(|w| (c, w))).collect())
            .unwrap_or_default();
        Self { tool: TOOL_VERSION.to_string(), config_hash: config_hash.to_string(), seed, strategy, windows }
    }

    fn lines(&self) -> String {
        let windows = if self.windows.is_empty() {
            "none".to_string()
        } else {
            self.windows.iter().map(|(c, w)| format!("{c}={}:{}", w.t_start, w.t_end)).collect::<Vec<_>>().join(" ")
        };
        format!(
            "# tool {}\n# config_hash {}\n# seed {}\n# strategy {}\n# windows {}\n# attack_phase unmitigated_companion\n",
            self.tool, self.config_hash, self.seed, self.strategy, windows
        )
    }

    fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut fields = BTreeMap::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim();
            let (k, v) = body.split_once(' ').unwrap_or((body, ""));
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| fields.get(k).cloned().ok_or_else(|| HarnessError::Config(format!("CSV header lacks '{k}'")));
        let mut windows = BTreeMap::new();
        let w = get("windows")?;
        if w != "none" {
            for item in w.split_whitespace() {
                let bad = || HarnessError::Config(format!("malformed window '{item}'"));
                let (c, span) = item.split_once('=').ok_or_else(bad)?;
                let (a, b) = span.split_once(':').ok_or_else(bad)?;
                let c: Channel = c.parse().map_err(|_| bad())?;
                windows.insert(c, Window::new(a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
            }
        }
        Ok(Self {
            tool: get("tool")?,
            config_hash: get("config_hash")?,
            seed: get("seed")?.parse().map_err(|_| HarnessError::Config("seed is not an integer".into()))?,
            strategy: get("strategy")?,
            windows,
        })
    }

    pub fn first_start(&self) -> Option<f64> {
        self.windows.values().map(|w| w.t_start).reduce(f64::min)
    }

    pub fn in_window(&self, t: f64) -> bool {
        self.windows.values().any(|w| w.contains(t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub provenance: Provenance,
    pub records: Vec<Record>,
}

fn verdict_str(attack: bool) -> &'static str {
    if attack {
        "attack"
    } else {
        "normal"
    }
}

impl TimeSeries {
    pub fn from_log(log: &RunLog, provenance: Provenance) -> Self {
        let records = log
            .rows
            .iter()
            .map(|r| {
                let tri = |d: &evcs_core::plant::DutySet| Channel::ALL.map(|c| d.get(c));
                Record {
                    t: r.t(),
                    legacy: tri(&r.legacy),
                    attacked: tri(&r.attacked),
                    routed: tri(&r.routed),
                    attack: Channel::ALL.map(|c| r.verdict[c.index()] == Verdict::Attack),
                    obs: r.state.observables(),
                }
            })
            .collect();
        Self { provenance, records }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, HarnessError> {
        let mut out = self.provenance.lines().into_bytes();
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| HarnessError::Io(e.to_string());
        w.write_record(COLUMNS).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![r.t.to_string()];
            for c in Channel::ALL {
                let i = c.index();
                row.extend([r.legacy[i].to_string(), r.attacked[i].to_string(), r.routed[i].to_string()]);
                row.push(verdict_str(r.attack[i]).to_string());
            }
            row.extend(r.obs.iter().map(|x| x.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        out.extend(w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?);
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        write_atomic(path, &self.to_csv()?)
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let provenance = Provenance::parse(text)?;
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = rd.headers().map_err(|e| HarnessError::Config(e.to_string()))?.clone();
        if header.iter().ne(COLUMNS) {
            return Err(HarnessError::Config("CSV columns do not match the time-series schema".into()));
        }
        let mut records = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| HarnessError::Config(e.to_string()))?;
            let bad = |col: &str| HarnessError::Config(format!("row {}: bad value in column {col}", line + 1));
            let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(COLUMNS[i]));
            let mut r = Record { t: num(0)?, legacy: [0.0; 3], attacked: [0.0; 3], routed: [0.0; 3], attack: [false; 3], obs: [0.0; 6] };
            for c in Channel::ALL {
                let base = 1 + 4 * c.index();
                r.legacy[c.index()] = num(base)?;
                r.attacked[c.index()] = num(base + 1)?;
                r.routed[c.index()] = num(base + 2)?;
                r.attack[c.index()] = match &rec[base + 3] {
                    "attack" => true,
                    "normal" => false,
                    _ => return Err(bad(COLUMNS[base + 3])),
                };
            }
            for k in 0..6 {
                r.obs[k] = num(13 + k)?;
            }
            records.push(r);
        }
        Ok(Self { provenance, records })
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    pub fn signal(&self, name: &str) -> Vec<f64> {
        self.records.iter().map(|r| r.signal(name).unwrap_or(f64::NAN)).collect()
    }

    /// Samples before the first attack window; the whole run when unattacked.
    pub fn normal_mask(&self) -> Vec<bool> {
        let t0 = self.provenance.first_start().unwrap_or(f64::INFINITY);
        self.records.iter().map(|r| r.t < t0 - 1e-9).collect()
    }

    pub fn window_mask(&self) -> Vec<bool> {
        self.records.iter().map(|r| self.provenance.in_window(r.t)).collect()
    }

    /// Window samples where routing departs from the legacy path: on the
    /// signal's own channel for duties, on any channel for plant observables.
    pub fn mitigation_mask(&self, signal: &str) -> Vec<bool> {
        let own: Option<Channel> = signal.strip_prefix("d_").and_then(|c| c.parse().ok());
        self.records
            .iter()
            .map(|r| {
                self.provenance.in_window(r.t)
                    && match own {
                        Some(c) => r.rerouted(c),
                        None => Channel::ALL.iter().any(|&c| r.rerouted(c)),
                    }
            })
            .collect()
    }
}

/// Normal and mitigation rows from `run`, attack rows from `companion`.
/// Phases with no samples are omitted.
pub fn run_stats(run: &TimeSeries, companion: Option<&TimeSeries>) -> Result<RunStats, HarnessError> {
    let mut out = RunStats::default();
    for signal in STAT_SIGNALS {
        let series = run.signal(signal);
        let attack_src = companion.unwrap_or(run);
        let attack_series = attack_src.signal(signal);
        let parts: [(Phase, &[f64], Vec<bool>); 3] = [
            (Phase::Normal, &series, run.normal_mask()),
            (Phase::Attack, &attack_series, attack_src.window_mask()),
            (Phase::Mitigation, &series, run.mitigation_mask(signal)),
        ];
        for (phase, s, mask) in &parts {
            if !mask.iter().any(|m| *m) {
                continue;
            }
            out.rows.extend(compute_stats(signal, s, &[(*phase, mask)])?.rows);
        }
    }
    Ok(out)
}

/// Stats table; `label` adds a leading strategy column.
pub fn stats_csv(blocks: &[(Option<&str>, &RunStats)], provenance: &Provenance) -> Result<Vec<u8>, HarnessError> {
    let mut out = format!("# tool {}\n# config_hash {}\n# seed {}\n# attack_phase unmitigated_companion\n", provenance.tool, provenance.config_hash, provenance.seed).into_bytes();
    let labelled = blocks.iter().any(|(l, _)| l.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Io(e.to_string());
    let mut head = vec!["signal", "phase", "n", "min", "q1", "median", "q3", "max"];
    if labelled {
        head.insert(0, "strategy");
    }
    w.write_record(&head).map_err(csv_err)?;
    for (label, stats) in blocks {
        for r in &stats.rows {
            let s = &r.summary;
            let mut row = vec![r.signal.clone(), r.phase.to_string(), s.n.to_string()];
            row.extend([s.min, s.q1, s.median, s.q3, s.max].map(|x| x.to_string()));
            if labelled {
                row.insert(0, label.unwrap_or("").to_string());
            }
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    out.extend(w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(n: usize) -> TimeSeries {
        let provenance = Provenance {
            tool: TOOL_VERSION.into(),
            config_hash: "ab".into(),
            seed: 3,
            strategy: "pv=clone bes=clone ev=clone".into(),
            windows: [(Channel::Pv, Window::new(0.5, 0.8))].into(),
        };
        let records = (0..n)
            .map(|k| {
                let t = k as f64 * 0.1;
                let hit = (0.5..0.8).contains(&(t + 1e-12));
                Record {
                    t,
                    legacy: [0.2, 0.7, 0.55],
                    attacked: [if hit { 0.0 } else { 0.2 }, 0.7, 0.55],
                    routed: [0.2, 0.7, 0.55],
                    attack: [hit, false, false],
                    obs: [1000.0 + k as f64, 52.0, -7.0, 52.0, -18.0, 26.1 + 1e-3 * k as f64],
                }
            })
            .collect();
        TimeSeries { provenance, records }
    }

    #[test]
    fn csv_round_trips_exactly() {
        let s = series(12);
        let bytes = s.to_csv().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("# tool evcs-harness"));
        assert!(text.contains(&COLUMNS.join(",")));
        assert_eq!(TimeSeries::from_csv(&text).unwrap(), s);
    }

    #[test]
    fn masks_follow_windows_and_routing() {
        let s = series(12);
        assert_eq!(s.normal_mask().iter().filter(|m| **m).count(), 5);
        assert_eq!(s.window_mask().iter().filter(|m| **m).count(), 3);
        assert_eq!(s.mitigation_mask("d_pv").iter().filter(|m| **m).count(), 3);
        assert_eq!(s.mitigation_mask("d_bes").iter().filter(|m| **m).count(), 0);
        assert_eq!(s.mitigation_mask("v_bus").iter().filter(|m| **m).count(), 3);
        let st = run_stats(&s, None).unwrap();
        assert_eq!(st.get("d_pv", Phase::Attack).unwrap().median, 0.2);
        assert!(st.get("d_bes", Phase::Mitigation).is_none());
        assert_eq!(st.get("p_pv", Phase::Normal).unwrap().median, 1002.0);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let text = "# tool x\n# config_hash a\n# seed 1\n# strategy s\n# windows none\nt,p\n0,1\n";
        assert!(matches!(TimeSeries::from_csv(text), Err(HarnessError::Config(_))));
    }
}
