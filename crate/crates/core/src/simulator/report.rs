//! CSV and JSON renderings of step reports.
//!
//! Every number appears as an exact fraction and as a 12-place decimal
//! derived from it. Column and key order are fixed.

use serde::Serialize;

use super::scenario::SCHEMA_VERSION;
use super::StepReport;
use crate::model::ProfileMode;
use crate::ratio::{self, Number, DECIMAL_PLACES};

fn task_cell(value: &Option<Vec<u64>>) -> String {
    value
        .as_ref()
        .map(|v| v.iter().map(u64::to_string).collect::<Vec<_>>().join(" "))
        .unwrap_or_default()
}

/// Header: `step, N_t, cStar, cStar_decimal, nStar, coverage,
/// coverage_decimal, taskValue`, then `<label>, <label>_decimal` per
/// baseline.
pub fn reports_to_csv(reports: &[StepReport]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "step",
        "N_t",
        "cStar",
        "cStar_decimal",
        "nStar",
        "coverage",
        "coverage_decimal",
        "taskValue",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if let Some(first) = reports.first() {
        for (label, _) in &first.baseline_times {
            header.push(label.clone());
            header.push(format!("{label}_decimal"));
        }
    }
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.step.to_string(),
            r.num_vms().to_string(),
            ratio::to_exact_string(&r.c_star),
            ratio::to_decimal_string(&r.c_star, DECIMAL_PLACES),
            r.n_star.to_string(),
            ratio::to_exact_string(&r.coverage),
            ratio::to_decimal_string(&r.coverage, DECIMAL_PLACES),
            task_cell(&r.task_value),
        ];
        for (_, t) in &r.baseline_times {
            row.push(ratio::to_exact_string(t));
            row.push(ratio::to_decimal_string(t, DECIMAL_PLACES));
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Document<'a> {
    schema_version: u32,
    mode: ProfileMode,
    steps: Vec<StepJson<'a>>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct StepJson<'a> {
    step: usize,
    #[serde(rename = "N_t")]
    n_t: usize,
    c_star: Number,
    n_star: usize,
    coverage: Number,
    per_vm_time: Vec<VmTime<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    task_value: Option<&'a [u64]>,
    baselines: Vec<BaselineJson<'a>>,
    stragglers: &'a [String],
    excluded_classes: &'a [Vec<String>],
    #[serde(skip_serializing_if = "Option::is_none")]
    decode_verified: Option<bool>,
}

#[derive(Serialize)]
struct VmTime<'a> {
    vm: &'a str,
    time: Number,
}

#[derive(Serialize)]
struct BaselineJson<'a> {
    name: &'a str,
    time: Number,
}

pub fn reports_to_json(reports: &[StepReport], mode: ProfileMode) -> String {
    let doc = Document {
        schema_version: SCHEMA_VERSION,
        mode,
        steps: reports
            .iter()
            .map(|r| StepJson {
                step: r.step,
                n_t: r.num_vms(),
                c_star: Number::from(&r.c_star),
                n_star: r.n_star,
                coverage: Number::from(&r.coverage),
                per_vm_time: r
                    .per_vm_time
                    .iter()
                    .map(|(vm, t)| VmTime {
                        vm,
                        time: Number::from(t),
                    })
                    .collect(),
                task_value: r.task_value.as_deref(),
                baselines: r
                    .baseline_times
                    .iter()
                    .map(|(name, t)| BaselineJson {
                        name,
                        time: Number::from(t),
                    })
                    .collect(),
                stragglers: &r.stragglers,
                excluded_classes: &r.excluded_classes,
                decode_verified: r.decode_verified,
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("report serializes");
    out.push('\n');
    out
}
