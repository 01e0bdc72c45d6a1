use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{RunMode, Task};
use super::run::ExperimentResult;
use crate::error::Result;

/// Objectives within this relative distance of the best count as ties.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    /// Mean objective per dataset column; `None` when the method has no run there.
    pub cells: Vec<Option<f64>>,
    pub avg: Option<f64>,
    /// Percent of shared instances on which the method is best, ties included.
    pub pct: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSection {
    pub task: Task,
    pub setting: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub sections: Vec<TableSection>,
}

fn setting(mode: RunMode) -> &'static str {
    match mode {
        RunMode::LearnOpt => "learn-opt",
        RunMode::OptOnly => "opt-only",
        _ => "inductive",
    }
}

/// Row label: the method, suffixed with the protocol for ClusterNet variants.
pub fn method_label(r: &ExperimentResult) -> String {
    match r.mode {
        RunMode::Finetune | RunMode::FinetuneOnly | RunMode::OneTrain => format!("{}-{}", r.method, r.mode.as_str()),
        _ => r.method.clone(),
    }
}

/// Dataset column: the dataset name without a per-graph suffix.
fn column(r: &ExperimentResult) -> String {
    r.dataset.clone()
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn is_best(v: f64, best: f64) -> bool {
    (v - best).abs() <= TIE_TOL * best.abs().max(1.0)
}

/// Aggregates results into one section per task and setting.
pub fn results_table(results: &[ExperimentResult]) -> ResultsTable {
    type Key = (Task, &'static str);
    let mut groups: BTreeMap<Key, Vec<&ExperimentResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.task, setting(r.mode))).or_default().push(r);
    }
    let mut sections = Vec::new();
    for ((task, setting), rs) in groups {
        let columns: Vec<String> = rs.iter().map(|r| column(r)).collect::<BTreeSet<_>>().into_iter().collect();
        let methods: Vec<String> = rs.iter().map(|r| method_label(r)).collect::<BTreeSet<_>>().into_iter().collect();
        // best objective per (instance, seed)
        let mut best: BTreeMap<(String, u64), f64> = BTreeMap::new();
        for r in &rs {
            let e = best
                .entry((r.instance_key(), r.seed))
                .or_insert(r.objective_full_graph);
            *e = if task.maximize() {
                e.max(r.objective_full_graph)
            } else {
                e.min(r.objective_full_graph)
            };
        }
        let rows = methods
            .into_iter()
            .map(|m| {
                let mine: Vec<&&ExperimentResult> = rs.iter().filter(|r| method_label(r) == m).collect();
                let cells = columns
                    .iter()
                    .map(|c| {
                        let v: Vec<f64> = mine.iter().filter(|r| &column(r) == c).map(|r| r.objective_full_graph).collect();
                        mean(&v)
                    })
                    .collect();
                let all: Vec<f64> = mine.iter().map(|r| r.objective_full_graph).collect();
                let wins = mine
                    .iter()
                    .filter(|r| is_best(r.objective_full_graph, best[&(r.instance_key(), r.seed)]))
                    .count();
                let aucs: Vec<f64> = mine.iter().filter_map(|r| r.auc).collect();
                TableRow {
                    method: m,
                    cells,
                    avg: mean(&all),
                    pct: (!mine.is_empty()).then(|| 100.0 * wins as f64 / mine.len() as f64),
                    auc: mean(&aucs),
                }
            })
            .collect();
        sections.push(TableSection {
            task,
            setting: setting.to_string(),
            columns,
            rows,
        });
    }
    ResultsTable { sections }
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

impl ResultsTable {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        for sec in &self.sections {
            let _ = writeln!(s, "### {} ({})\n", sec.task.as_str(), sec.setting);
            let mut head = vec!["Method".to_string()];
            head.extend(sec.columns.iter().cloned());
            head.extend(["Avg.".to_string(), "%".to_string(), "AUC".to_string()]);
            let _ = writeln!(s, "| {} |", head.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(head.len()));
            for r in &sec.rows {
                let mut line = vec![r.method.clone()];
                line.extend(r.cells.iter().map(|&c| cell(c, 4)));
                line.extend([cell(r.avg, 4), cell(r.pct, 1), cell(r.auc, 4)]);
                let _ = writeln!(s, "| {} |", line.join(" | "));
            }
            s.push('\n');
        }
        s
    }

    /// Long format: `task,setting,method,column,value`, blank when missing.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("task,setting,method,column,value\n");
        for sec in &self.sections {
            for r in &sec.rows {
                let named = sec
                    .columns
                    .iter()
                    .map(String::as_str)
                    .zip(r.cells.iter().copied())
                    .chain([("Avg.", r.avg), ("%", r.pct), ("AUC", r.auc)]);
                for (c, v) in named {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{}",
                        sec.task.as_str(),
                        sec.setting,
                        r.method,
                        c,
                        v.map(|x| x.to_string()).unwrap_or_default()
                    );
                }
            }
        }
        s
    }
}

/// Reads every `*.json` result in `dir`, skipping files that do not parse.
pub fn load_results(dir: &Path) -> Result<Vec<ExperimentResult>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        match ExperimentResult::load(&p) {
            Ok(r) => out.push(r),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    Ok(out)
}
