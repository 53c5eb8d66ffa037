//! `report` subcommand: summarize a finished run from its artifacts.
//! Reads only; never recomputes.

use abmident_core::error::{Error, Result};
use serde_json::Value;
use std::path::Path;

pub fn report(output_dir: &Path) -> Result<String> {
    let manifest_path = output_dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|_| Error::config(format!("missing manifest at {}", manifest_path.display())))?;
    let manifest: Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("manifest.json: {e}")))?;
    let protocol = manifest["protocol"].as_str().unwrap_or("?");

    let mut out = String::new();
    out.push_str(&format!("protocol: {protocol}\n"));
    out.push_str(&format!(
        "config hash: {}\n",
        manifest["config_hash"].as_str().unwrap_or("?")
    ));

    match protocol {
        "smd" | "oracle" => {
            if output_dir.join("ident_report.json").exists() {
                summarize_ident(output_dir, &mut out)?;
            } else {
                out.push_str("no identification report in this run\n");
            }
        }
        "bayes" => {
            let chain = load(output_dir, "chain.json")?;
            out.push_str(&format!(
                "acceptance rate: {}\n",
                chain["acceptance_rate"].as_f64().unwrap_or(f64::NAN)
            ));
            if let Some(warnings) = chain["warnings"].as_array() {
                for w in warnings {
                    out.push_str(&format!("warning: {}\n", w.as_str().unwrap_or("?")));
                }
            }
            summarize_ident(output_dir, &mut out)?;
        }
        "indirect" => {
            let report = load(output_dir, "ii_report.json")?;
            out.push_str(&format!(
                "verdict: {}\n",
                report["verdict"].as_str().unwrap_or("?")
            ));
            let matches = report["matches"].as_array().cloned().unwrap_or_default();
            out.push_str(&format!("matches: {}\n", matches.len()));
            for m in matches.iter().take(5) {
                out.push_str(&format!(
                    "  node {} at {:?} distance {}\n",
                    m["node"], m["values"], m["distance"]
                ));
            }
            out.push_str(&format!("match_tol: {}\n", report["match_tol"]));
        }
        "ergodicity" => {
            let report = load(output_dir, "ergodicity.json")?;
            out.push_str(&format!(
                "verdict: {}\n",
                report["verdict"].as_str().unwrap_or("?")
            ));
            out.push_str(&format!("ratios: {}\n", report["per_moment_ratio"]));
        }
        "simulate" => {
            let rows = std::fs::read_to_string(output_dir.join("trajectory.csv"))
                .map(|t| t.lines().count().saturating_sub(1))
                .unwrap_or(0);
            out.push_str(&format!(
                "trajectory: {rows} observations in trajectory.csv\n"
            ));
        }
        other => out.push_str(&format!("unknown protocol `{other}`\n")),
    }
    Ok(out)
}

fn load(dir: &Path, name: &str) -> Result<Value> {
    let text = std::fs::read_to_string(dir.join(name))
        .map_err(|_| Error::config(format!("missing artifact `{name}`")))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{name}: {e}")))
}

fn summarize_ident(dir: &Path, out: &mut String) -> Result<()> {
    let report = load(dir, "ident_report.json")?;
    let classes = report["classification"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    let flat: Vec<String> = report["flat_dimensions"]
        .as_array()
        .map(|a| {
            a.iter()
                .filter_map(|v| v.as_str().map(String::from))
                .collect()
        })
        .unwrap_or_default();
    let labels: Vec<String> = classes
        .iter()
        .map(|c| {
            let name = c.as_str().unwrap_or("?");
            if name == "UnderIdentified" && !flat.is_empty() {
                format!("UnderIdentified: {}", flat.join(", "))
            } else {
                name.to_string()
            }
        })
        .collect();
    out.push_str(&format!("classification: {}\n", labels.join(", ")));

    if let Some(minima) = report["global_minima"].as_array() {
        out.push_str(&format!("global minima: {}\n", minima.len()));
        for m in minima.iter().take(5) {
            out.push_str(&format!(
                "  node {} at {:?} J = {}\n",
                m["index"], m["values"], m["objective"]
            ));
        }
    }
    if let Some(eigen) = report["eigen"].as_array() {
        if !eigen.is_empty() {
            let values: Vec<String> = eigen.iter().map(|p| p["value"].to_string()).collect();
            out.push_str(&format!("hessian eigenvalues: [{}]\n", values.join(", ")));
        }
    }
    if report["boundary_minimum"].as_bool() == Some(true) {
        out.push_str("warning: a minimum lies on the grid boundary\n");
    }
    if report["inconclusive"].as_bool() == Some(true) {
        out.push_str("warning: inconclusive (too few effective samples)\n");
    }
    if let Some(evidence) = report["evidence"].as_object() {
        for (k, v) in evidence {
            out.push_str(&format!("evidence[{k}]: {}\n", v.as_str().unwrap_or("?")));
        }
    }
    Ok(())
}
