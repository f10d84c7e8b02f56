//! Prompt templates with `{name}` placeholders.
//!
//! Defaults are compiled in from `data/prompts/`; a directory with files of
//! the same names can override any subset of them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::buffer::BufferEntry;
use super::observation::HistoryEntry;
use crate::fiscal::TaxSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Explore,
    Exploit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub worker_system: String,
    pub worker_user: String,
    pub planner_system: String,
    pub planner_user: String,
    pub explore_hint: String,
    pub exploit_hint: String,
    pub judge_system: String,
    pub judge_user: String,
    pub candidate_system: String,
    pub candidate_user: String,
    pub voter_user: String,
}

macro_rules! builtin {
    ($name:literal) => {
        include_str!(concat!("../../data/prompts/", $name, ".txt")).trim_end().to_string()
    };
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            worker_system: builtin!("worker_system"),
            worker_user: builtin!("worker_user"),
            planner_system: builtin!("planner_system"),
            planner_user: builtin!("planner_user"),
            explore_hint: builtin!("explore_hint"),
            exploit_hint: builtin!("exploit_hint"),
            judge_system: builtin!("judge_system"),
            judge_user: builtin!("judge_user"),
            candidate_system: builtin!("candidate_system"),
            candidate_user: builtin!("candidate_user"),
            voter_user: builtin!("voter_user"),
        }
    }
}

impl PromptTemplates {
    /// Defaults, with any `<field>.txt` found in `dir` replacing its template.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut t = Self::default();
        let slots: [(&str, &mut String); 11] = [
            ("worker_system", &mut t.worker_system),
            ("worker_user", &mut t.worker_user),
            ("planner_system", &mut t.planner_system),
            ("planner_user", &mut t.planner_user),
            ("explore_hint", &mut t.explore_hint),
            ("exploit_hint", &mut t.exploit_hint),
            ("judge_system", &mut t.judge_system),
            ("judge_user", &mut t.judge_user),
            ("candidate_system", &mut t.candidate_system),
            ("candidate_user", &mut t.candidate_user),
            ("voter_user", &mut t.voter_user),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path)?.trim_end().to_string();
            }
        }
        Ok(t)
    }
}

/// Replace `{key}` for each supplied key. Unknown braces are left alone, so
/// JSON examples in templates survive.
pub fn render(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let hit = close.and_then(|c| {
            let key = &after[..c];
            vars.iter().find(|(k, _)| *k == key).map(|(_, v)| (c, v))
        });
        match hit {
            Some((c, v)) => {
                out.push_str(v);
                rest = &after[c + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// `[10% 12% 22%]`
pub fn format_rates(rates: &[f64]) -> String {
    let parts: Vec<String> = rates.iter().map(|r| format!("{}%", trim_num(r * 100.0, 1))).collect();
    format!("[{}]", parts.join(" "))
}

/// `$0-$11600: 10%, $11600+: 12%`
pub fn format_schedule(schedule: &TaxSchedule) -> String {
    let parts: Vec<String> = (0..schedule.num_brackets())
        .map(|j| {
            let lo = schedule.thresholds()[j];
            let rate = trim_num(schedule.rates()[j] * 100.0, 1);
            match schedule.upper(j) {
                Some(hi) => format!("${lo:.0}-${hi:.0}: {rate}%"),
                None => format!("${lo:.0}+: {rate}%"),
            }
        })
        .collect();
    parts.join(", ")
}

pub fn format_history(history: &[HistoryEntry]) -> String {
    if history.is_empty() {
        return "(none yet)".into();
    }
    history
        .iter()
        .map(|h| {
            let flag = match h.satisfied {
                Some(true) => ", satisfied",
                Some(false) => ", unsatisfied",
                None => "",
            };
            format!("- labor {} h, utility {}{flag}", trim_num(h.labor, 2), trim_num(h.utility, 2))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Best buffer entries with welfare min-max normalized by `(lo, hi)`.
pub fn format_trajectories(entries: &[BufferEntry], swf_range: (f64, f64)) -> String {
    if entries.is_empty() {
        return "(none yet)".into();
    }
    entries
        .iter()
        .map(|e| {
            format!(
                "- year {}: TAX={} SWF={}",
                e.tax_year,
                format_rates(e.schedule.rates()),
                trim_num(normalize(e.swf, swf_range), 3)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Min-max normalization; 1.0 when the range is degenerate.
pub fn normalize(x: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (x - lo) / (hi - lo)
    } else {
        1.0
    }
}

/// Directional advice from the last two steps of history.
pub fn worker_phase_hint(phase: Phase, history: &[HistoryEntry]) -> String {
    if phase == Phase::Explore {
        return "Try a number of hours different from your recent choices to learn how your utility responds.".into();
    }
    let n = history.len();
    if n < 2 {
        return "Choose the number of hours you expect to give you the highest utility.".into();
    }
    let (prev, last) = (history[n - 2], history[n - 1]);
    let dl = last.labor - prev.labor;
    let du = last.utility - prev.utility;
    let l = trim_num(last.labor, 1);
    if dl == 0.0 || du == 0.0 {
        return format!("Your utility did not respond to your last change. Labor near {l} looks stable.");
    }
    let (moved, effect) = (if dl > 0.0 { "Increasing" } else { "Decreasing" }, if du > 0.0 { "increased" } else { "decreased" });
    let raise = (dl > 0.0) == (du > 0.0);
    if raise {
        format!("{moved} labor {effect} utility. This implies labor is too low and needs to be increased above labor {l}.")
    } else {
        format!("{moved} labor {effect} utility. This implies labor is too high and needs to be decreased below labor {l}.")
    }
}

pub fn trim_num(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" { "0".into() } else { s }
}
