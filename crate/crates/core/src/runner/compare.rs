use std::io::Write;

use super::{run_experiment, ExperimentConfig, ExperimentReport, Objective, ReportSummary};
use crate::error::{ConfigIssue, Error, Result};

/// One `(config, seed)` cell of a comparison.
pub type ComparisonRow = ReportSummary;

/// Medians over the seeds of one objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSummary {
    pub objective: Objective,
    pub probe_accuracy: Option<f64>,
    pub orbit_ratio: Option<f64>,
    pub semantic_ratio: Option<f64>,
    pub convexity_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    /// One entry per objective, in first-appearance order.
    pub medians: Vec<ObjectiveSummary>,
    /// Objectives by decreasing median probe accuracy; ties keep
    /// first-appearance order and objectives without a probe come last.
    pub ordering: Vec<Objective>,
    /// Shared dataset digest of every cell.
    pub dataset_digest: String,
}

impl ComparisonTable {
    pub fn from_reports(reports: &[ExperimentReport]) -> Result<Self> {
        let Some(first) = reports.first() else {
            return Err(Error::Domain("a comparison needs at least one report".into()));
        };
        if let Some(r) = reports.iter().find(|r| r.dataset_digest != first.dataset_digest) {
            return Err(Error::Domain(format!(
                "{} (seed {}) consumed different dataset bytes",
                r.config.objective, r.config.training.seed
            )));
        }
        let rows: Vec<ComparisonRow> = reports.iter().map(ExperimentReport::summary).collect();
        let mut objectives: Vec<Objective> = Vec::new();
        for row in &rows {
            if !objectives.contains(&row.objective) {
                objectives.push(row.objective);
            }
        }
        let medians: Vec<ObjectiveSummary> = objectives
            .iter()
            .map(|&objective| {
                let cells: Vec<&ComparisonRow> = rows.iter().filter(|r| r.objective == objective).collect();
                let med = |f: fn(&ComparisonRow) -> Option<f64>| median(cells.iter().filter_map(|r| f(r)).collect());
                ObjectiveSummary {
                    objective,
                    probe_accuracy: med(|r| r.probe_accuracy),
                    orbit_ratio: med(|r| r.orbit_ratio),
                    semantic_ratio: med(|r| r.semantic_ratio),
                    convexity_rate: med(|r| r.convexity_rate),
                }
            })
            .collect();
        let mut ranked: Vec<&ObjectiveSummary> = medians.iter().collect();
        ranked.sort_by(|a, b| match (a.probe_accuracy, b.probe_accuracy) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        });
        Ok(Self {
            ordering: ranked.iter().map(|s| s.objective).collect(),
            rows,
            medians,
            dataset_digest: first.dataset_digest.clone(),
        })
    }

    pub fn median_for(&self, objective: Objective) -> Option<&ObjectiveSummary> {
        self.medians.iter().find(|m| m.objective == objective)
    }

    /// True when the median probe accuracies are non-increasing along
    /// `chain`. Missing objectives or probes make it false.
    pub fn ordered(&self, chain: &[Objective]) -> bool {
        let probes: Option<Vec<f64>> = chain
            .iter()
            .map(|&o| self.median_for(o).and_then(|m| m.probe_accuracy))
            .collect();
        probes.is_some_and(|p| p.windows(2).all(|w| w[0] >= w[1]))
    }

    /// Per-cell rows followed by one `median` row per objective.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let cell = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        writeln!(out, "objective,seed,probe_accuracy,orbit_ratio,semantic_ratio,convexity_rate")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.objective,
                r.seed,
                cell(r.probe_accuracy),
                cell(r.orbit_ratio),
                cell(r.semantic_ratio),
                cell(r.convexity_rate)
            )?;
        }
        for m in &self.medians {
            writeln!(
                out,
                "{},median,{},{},{},{}",
                m.objective,
                cell(m.probe_accuracy),
                cell(m.orbit_ratio),
                cell(m.semantic_ratio),
                cell(m.convexity_rate)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

/// Run every `(config, seed)` cell, config-major. The seed replaces each
/// config's training seed; the dataset stays fixed.
pub fn run_grid(configs: &[ExperimentConfig], seeds: &[u64]) -> Result<Vec<ExperimentReport>> {
    if seeds.is_empty() {
        return Err(Error::Domain("a comparison needs at least one seed".into()));
    }
    let Some(first) = configs.first() else {
        return Err(Error::Domain("a comparison needs at least one config".into()));
    };
    let issues: Vec<ConfigIssue> = configs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.dataset != first.dataset)
        .map(|(i, _)| ConfigIssue {
            path: format!("configs[{i}].dataset"),
            message: "differs from the dataset block of configs[0]".into(),
        })
        .collect();
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    let mut reports = Vec::with_capacity(configs.len() * seeds.len());
    for config in configs {
        for &seed in seeds {
            let mut cell = config.clone();
            cell.training.seed = seed;
            reports.push(run_experiment(&cell)?);
        }
    }
    Ok(reports)
}

/// Run the grid and tabulate per-objective medians and their ordering.
pub fn compare_objectives(configs: &[ExperimentConfig], seeds: &[u64]) -> Result<ComparisonTable> {
    ComparisonTable::from_reports(&run_grid(configs, seeds)?)
}

#[cfg(test)]
mod tests {
    use super::super::{BundleDataset, DatasetConfig};
    use super::*;

    fn tiny(objective: Objective) -> ExperimentConfig {
        let dataset = DatasetConfig::Bundle(BundleDataset {
            modulus: 3,
            digit_range: 4,
            count: 90,
            ..BundleDataset::default()
        });
        let mut config = ExperimentConfig::new(dataset, objective);
        config.encoder.hidden = vec![8];
        config.encoder.latent_dim = 3;
        config.training.epochs = 2;
        config.diagnostics.probe_epochs = 30;
        config.diagnostics.convexity_pairs = 200;
        config
    }

    #[test]
    fn median_handles_parity() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }

    #[test]
    fn single_cell_matches_the_run_summary() {
        let config = tiny(Objective::Classification);
        let table = compare_objectives(&[config.clone()], &[7]).unwrap();
        let mut seeded = config;
        seeded.training.seed = 7;
        let report = run_experiment(&seeded).unwrap();
        assert_eq!(table.rows, vec![report.summary()]);
        assert_eq!(table.ordering, vec![Objective::Classification]);
        assert_eq!(table.dataset_digest, report.dataset_digest);
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        assert!(matches!(compare_objectives(&[tiny(Objective::Alignment)], &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn mismatched_datasets_are_rejected() {
        let a = tiny(Objective::Classification);
        let mut b = tiny(Objective::Alignment);
        if let DatasetConfig::Bundle(d) = &mut b.dataset {
            d.seed = 1;
        }
        match compare_objectives(&[a, b], &[0]) {
            Err(Error::Config(issues)) => assert_eq!(issues[0].path, "configs[1].dataset"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_lists_cells_then_medians() {
        let table = compare_objectives(&[tiny(Objective::Classification), tiny(Objective::Reconstruction)], &[0, 1]).unwrap();
        let csv = table.to_csv_string();
        assert_eq!(csv.lines().count(), 1 + 4 + 2);
        assert!(csv.lines().nth(5).unwrap().starts_with("classification,median,"));
        assert_eq!(table.ordering.len(), 2);
    }
}
