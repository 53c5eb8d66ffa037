//! Artifact serialization: CSV (RFC 4180, CRLF, '.' decimal separator,
//! UTF-8) and JSON with a `schema_version` field. Numbers print in Rust's
//! shortest round-trip form, so identical data always serializes to
//! identical bytes.

use crate::bayes::PosteriorChain;
use crate::indirect::IiReport;
use crate::moments::{ErgodicityReport, MomentVector};
use crate::oracle::{FpDensity, StationaryDistribution, TransitionMatrix};
use crate::smd::{IdentReport, ObjectiveSurface};
use serde_json::{json, Value};

pub const SCHEMA_VERSION: u32 = 1;
const EOL: &str = "\r\n";

/// Quote a CSV field when RFC 4180 requires it.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') || s.contains('\r') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_row(fields: &[String]) -> String {
    let mut row = fields
        .iter()
        .map(|f| csv_field(f))
        .collect::<Vec<_>>()
        .join(",");
    row.push_str(EOL);
    row
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// One row per grid node: swept parameter values, objective, validity.
pub fn surface_csv(surface: &ObjectiveSurface) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = surface.grid.dims.iter().map(|d| d.name.clone()).collect();
    header.push("j".to_string());
    header.push("valid".to_string());
    out.push_str(&csv_row(&header));
    for i in 0..surface.values.len() {
        let mut fields: Vec<String> = surface
            .grid
            .node_values(i)
            .iter()
            .map(|&v| num(v))
            .collect();
        fields.push(num(surface.values[i]));
        fields.push(if surface.valid[i] { "1" } else { "0" }.to_string());
        out.push_str(&csv_row(&fields));
    }
    out
}

/// Provenance sidecar for a surface: seeds, weight matrix, moment spec,
/// simulation config.
pub fn surface_sidecar(surface: &ObjectiveSurface, config_hash: &str) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "source": surface.source,
        "seeds": { "master_seed": surface.master_seed, "crn": surface.crn },
        "weight": { "kind": surface.weight.kind, "matrix": surface.weight.rows() },
        "moment_spec": surface.moment_spec,
        "config": surface.config,
        "base_params": surface.base_params,
        "grid": surface.grid,
        "boundary_warning": surface.boundary_warning,
        "config_hash": config_hash,
    })
}

pub fn ident_report_json(report: &IdentReport) -> Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    v["schema_version"] = json!(SCHEMA_VERSION);
    v
}

/// One row per retained draw: index, sampled parameters, log posterior,
/// accept flag.
pub fn chain_csv(chain: &PosteriorChain) -> String {
    let mut out = String::new();
    let mut header = vec!["draw".to_string()];
    header.extend(chain.sampled_dims.iter().cloned());
    header.push("log_posterior".to_string());
    header.push("accepted".to_string());
    out.push_str(&csv_row(&header));
    for (i, ((params, lp), acc)) in chain.samples.iter().zip(&chain.accepted).enumerate() {
        let mut fields = vec![i.to_string()];
        for d in &chain.sampled_dims {
            fields.push(num(params.get(d).unwrap_or(f64::NAN)));
        }
        fields.push(num(*lp));
        fields.push(if *acc { "1" } else { "0" }.to_string());
        out.push_str(&csv_row(&fields));
    }
    out
}

pub fn chain_sidecar(chain: &PosteriorChain, config_hash: &str) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "chain_seed": chain.chain_seed,
        "acceptance_rate": chain.acceptance_rate,
        "proposal_scales": chain.proposal_scales,
        "priors": chain.priors,
        "sampled_dims": chain.sampled_dims,
        "draws": chain.samples.len(),
        "warnings": chain.warnings,
        "config_hash": config_hash,
    })
}

pub fn ii_report_json(report: &IiReport) -> Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    v["schema_version"] = json!(SCHEMA_VERSION);
    v
}

/// Match list: node index, parameter values, distance.
pub fn ii_matches_csv(report: &IiReport) -> String {
    let mut out = String::new();
    let mut header = vec!["node".to_string()];
    header.extend(report.grid.dims.iter().map(|d| d.name.clone()));
    header.push("distance".to_string());
    out.push_str(&csv_row(&header));
    for m in &report.matches {
        let mut fields = vec![m.node.to_string()];
        fields.extend(m.values.iter().map(|&v| num(v)));
        fields.push(num(m.distance));
        out.push_str(&csv_row(&fields));
    }
    out
}

pub fn ergodicity_json(report: &ErgodicityReport, m: usize, config_hash: &str) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "per_moment_ratio": report.per_moment_ratio,
        "verdict": report.verdict,
        "threshold_used": report.threshold_used,
        "m": m,
        "config_hash": config_hash,
    })
}

pub fn trajectory_csv(observables: &[f64]) -> String {
    let mut out = String::new();
    out.push_str(&csv_row(&["t".to_string(), "y".to_string()]));
    for (t, &y) in observables.iter().enumerate() {
        out.push_str(&csv_row(&[t.to_string(), num(y)]));
    }
    out
}

pub fn transition_matrix_csv(p: &TransitionMatrix) -> String {
    let mut out = String::new();
    let mut header = vec!["state".to_string(), "measure".to_string()];
    header.extend(p.labels.iter().map(|&l| format!("to_{l}")));
    out.push_str(&csv_row(&header));
    for i in 0..p.n_states() {
        let mut fields = vec![num(p.labels[i]), num(p.measure_values[i])];
        for j in 0..p.n_states() {
            fields.push(num(p.probs[(i, j)]));
        }
        out.push_str(&csv_row(&fields));
    }
    out
}

pub fn stationary_csv(p: &TransitionMatrix, pi: &StationaryDistribution) -> String {
    let mut out = String::new();
    out.push_str(&csv_row(&[
        "state".to_string(),
        "measure".to_string(),
        "pi".to_string(),
    ]));
    for i in 0..pi.pi.len() {
        out.push_str(&csv_row(&[
            num(p.labels[i]),
            num(p.measure_values[i]),
            num(pi.pi[i]),
        ]));
    }
    out
}

pub fn fp_density_csv(d: &FpDensity) -> String {
    let mut out = String::new();
    out.push_str(&csv_row(&["x".to_string(), "density".to_string()]));
    for (x, p) in d.xs.iter().zip(&d.density) {
        out.push_str(&csv_row(&[num(*x), num(*p)]));
    }
    out
}

pub fn moments_json(mv: &MomentVector, config_hash: &str) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "raw": mv.raw,
        "autocov": mv.autocov,
        "spec": mv.spec,
        "sample_size": mv.sample_size,
        "config_hash": config_hash,
    })
}

/// Gnuplot script for a surface CSV: a heatmap for 2-D grids, a line plot
/// for 1-D grids.
pub fn surface_plot_script(csv_name: &str, surface: &ObjectiveSurface) -> String {
    let dims = &surface.grid.dims;
    if dims.len() == 2 {
        format!(
            concat!(
                "set datafile separator ','\n",
                "set title 'objective surface'\n",
                "set xlabel '{x}'\n",
                "set ylabel '{y}'\n",
                "set view map\n",
                "splot '{csv}' every ::1 using 1:2:3 with points palette pointtype 7 title 'J'\n",
            ),
            x = dims[0].name,
            y = dims[1].name,
            csv = csv_name,
        )
    } else {
        format!(
            concat!(
                "set datafile separator ','\n",
                "set title 'objective profile'\n",
                "set xlabel '{x}'\n",
                "set ylabel 'J'\n",
                "plot '{csv}' every ::1 using 1:{col} with linespoints title 'J'\n",
            ),
            x = dims[0].name,
            csv = csv_name,
            col = dims.len() + 1,
        )
    }
}

/// Gnuplot script for a posterior chain CSV: trace plots per dimension.
pub fn chain_plot_script(csv_name: &str, chain: &PosteriorChain) -> String {
    let mut out = String::from("set datafile separator ','\nset xlabel 'draw'\n");
    for (i, d) in chain.sampled_dims.iter().enumerate() {
        out.push_str(&format!(
            "set ylabel '{d}'\nplot '{csv_name}' every ::1 using 1:{} with lines title '{d}'\npause -1\n",
            i + 2
        ));
    }
    out
}
