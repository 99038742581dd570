//! Trajectory and report emission: CSV, JSON, and aligned text tables.
//!
//! CSV columns, in frozen order: `t`, the occupations `n_<orbital>` for every
//! flat spin-orbital, the squared amplitudes `f_1..f_D`, the dynamical phases
//! `xi_1..xi_D`, `energy`, `norm`, and the normalized sector distances
//! `d_1..d_K`. Floats are printed in Rust's shortest round-trip form, so a
//! given run is byte-reproducible.

use std::io::Write;

use serde::Serialize;
use serde_json::json;

use crate::dynamics::Trajectory;
use crate::fock::SpinOrbital;
use crate::gpc::{PinningReport, ResponseTable};
use crate::sector_map::{AmplitudeMap, SymmetryConstraintSet};

fn fmt(x: f64) -> String {
    // Shortest representation that round-trips; normalize negative zero.
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

/// Header + rows for a trajectory. `norb` is taken from the first record.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    let norb = traj.occupations.first().map_or(0, |n| n.len());
    let dim = traj.amplitudes.first().map_or(0, |f| f.len());
    let n_dist = traj.distances.first().map_or(0, |d| d.len());

    let mut header: Vec<String> = vec!["t".to_string()];
    header.extend((0..norb).map(|p| format!("n_{}", SpinOrbital::from_flat(p))));
    header.extend((1..=dim).map(|a| format!("f_{a}")));
    header.extend((1..=dim).map(|a| format!("xi_{a}")));
    header.push("energy".to_string());
    header.push("norm".to_string());
    header.extend((1..=n_dist).map(|j| format!("d_{j}")));
    out.push_str(&header.join(","));
    out.push('\n');

    for i in 0..traj.len() {
        let mut row: Vec<String> = vec![fmt(traj.times[i])];
        row.extend(traj.occupations[i].iter().map(|&x| fmt(x)));
        row.extend(traj.amplitudes[i].iter().map(|&x| fmt(x)));
        row.extend(traj.xi_dyn[i].iter().map(|&x| fmt(x)));
        row.push(fmt(traj.energy[i]));
        row.push(fmt(traj.norm[i]));
        row.extend(traj.distances[i].iter().map(|&x| fmt(x)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parse a trajectory CSV produced by [`trajectory_csv`]. Frames and basis
/// metadata are not part of the CSV and come back empty.
pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let cols: Vec<&str> = header.split(',').collect();
    let find_range = |prefix: &str| -> (usize, usize) {
        let start = cols.iter().position(|c| c.starts_with(prefix));
        match start {
            None => (0, 0),
            Some(s) => {
                let len = cols[s..].iter().take_while(|c| c.starts_with(prefix)).count();
                (s, len)
            }
        }
    };
    if cols.first() != Some(&"t") {
        return Err("first column must be t".to_string());
    }
    let (n_start, n_len) = find_range("n_");
    let (f_start, f_len) = find_range("f_");
    let (xi_start, xi_len) = find_range("xi_");
    let energy_col = cols
        .iter()
        .position(|c| *c == "energy")
        .ok_or("missing energy column")?;
    let norm_col = cols
        .iter()
        .position(|c| *c == "norm")
        .ok_or("missing norm column")?;
    let (d_start, d_len) = find_range("d_");

    let mut traj = Trajectory {
        times: Vec::new(),
        occupations: Vec::new(),
        amplitudes: Vec::new(),
        xi_dyn: Vec::new(),
        xi_geo: Vec::new(),
        energy: Vec::new(),
        norm: Vec::new(),
        distances: Vec::new(),
        frames: Vec::new(),
        basis: Vec::new(),
        integrator: "csv".to_string(),
        freeze_events: Vec::new(),
        projection_residual: 0.0,
    };
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|x| x.parse::<f64>().map_err(|e| format!("line {}: {e}", lineno + 2)))
            .collect::<Result<_, _>>()?;
        if fields.len() != cols.len() {
            return Err(format!("line {}: wrong column count", lineno + 2));
        }
        traj.times.push(fields[0]);
        traj.occupations
            .push(fields[n_start..n_start + n_len].to_vec());
        traj.amplitudes.push(fields[f_start..f_start + f_len].to_vec());
        traj.xi_dyn.push(fields[xi_start..xi_start + xi_len].to_vec());
        traj.xi_geo.push(vec![0.0; f_len]);
        traj.energy.push(fields[energy_col]);
        traj.norm.push(fields[norm_col]);
        traj.distances.push(fields[d_start..d_start + d_len].to_vec());
    }
    Ok(traj)
}

/// JSON document for a trajectory (column metadata plus full data).
pub fn trajectory_json(traj: &Trajectory) -> serde_json::Value {
    json!({
        "integrator": traj.integrator,
        "basis": traj.basis.iter().map(|d| json!({
            "bits": d.bits(),
            "label": d.label(),
        })).collect::<Vec<_>>(),
        "projection_residual": traj.projection_residual,
        "freeze_events": traj.freeze_events,
        "data": {
            "t": traj.times,
            "n": traj.occupations,
            "f": traj.amplitudes,
            "xi_dyn": traj.xi_dyn,
            "xi_geo": traj.xi_geo,
            "energy": traj.energy,
            "norm": traj.norm,
            "distances": traj.distances,
        },
    })
}

/// JSON document for a sector map and its inverse.
pub fn sector_map_json(map: &AmplitudeMap, set: &SymmetryConstraintSet) -> serde_json::Value {
    json!({
        "determinants": map.col_labels.iter().map(|d| json!({
            "bits": d.bits(),
            "label": d.label(),
        })).collect::<Vec<_>>(),
        "row_labels": map.row_labels.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
        "matrix": map.matrix,
        "includes_normalization_row": map.includes_normalization_row,
        "sum_rules": map.sum_rules.iter().map(|r| json!({
            "orbitals": r.orbitals,
            "total": r.total,
        })).collect::<Vec<_>>(),
        "eliminated_orbitals": map.eliminated,
        "fixed_occupations": map.fixed_slots,
        "inverse_denominator": set.denominator.to_string(),
        "inverse_numerators": set.numerators.iter().map(|row| {
            row.iter().map(|x| x.to_string()).collect::<Vec<_>>()
        }).collect::<Vec<_>>(),
        "constraints": (0..set.dim()).map(|j| {
            let (coeff, constant) = set.functional(j);
            json!({
                "label": format!("d{}", j + 1),
                "constant": constant.to_string(),
                "coefficients": coeff.iter().enumerate()
                    .filter(|(_, c)| !num_traits::Zero::is_zero(*c))
                    .map(|(p, c)| json!({
                        "orbital": SpinOrbital::from_flat(p).to_string(),
                        "value": c.to_string(),
                    })).collect::<Vec<_>>(),
            })
        }).collect::<Vec<_>>(),
    })
}

/// Aligned text rendering of the map and the inverse functionals.
pub fn sector_map_text(map: &AmplitudeMap, set: &SymmetryConstraintSet) -> String {
    let mut out = String::new();
    out.push_str("amplitude map M (rows: occupations, columns: determinants)\n");
    out.push_str(&format!(
        "columns: {}\n",
        map.col_labels
            .iter()
            .map(|d| d.label())
            .collect::<Vec<_>>()
            .join("  ")
    ));
    for (row, label) in map.matrix.iter().zip(map.row_labels.iter()) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:2}")).collect();
        out.push_str(&format!("{:>8} | {}\n", label.to_string(), cells.join(" ")));
    }
    out.push_str(&format!(
        "\ninverse (x {}): one functional per determinant\n",
        set.denominator
    ));
    for j in 0..set.dim() {
        let nums: Vec<String> = set.numerators[j].iter().map(|x| format!("{x:3}")).collect();
        out.push_str(&format!(
            "d{} = ({}) / {}  [{}]\n",
            j + 1,
            nums.join(" "),
            set.denominator,
            set.col_labels[j].label()
        ));
    }
    out
}

/// Serialize any report type to pretty JSON text.
pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialization")
}

/// Pinning report as JSON.
pub fn pinning_report_json(report: &PinningReport) -> serde_json::Value {
    json!({
        "pin_tol": report.pin_tol,
        "quasi_tol": report.quasi_tol,
        "entries": report.entries.iter().map(|e| json!({
            "label": e.label,
            "distance": e.distance,
            "normalized": e.normalized,
            "pinned": e.pinned,
            "quasipinned": e.quasipinned,
            "d2": e.d2,
        })).collect::<Vec<_>>(),
    })
}

/// Perturbation-response batch as JSON.
pub fn response_tables_json(tables: &[ResponseTable]) -> serde_json::Value {
    json!(tables
        .iter()
        .map(|t| json!({
            "constraint": t.constraint_label,
            "d0": t.d0,
            "d2_expect": t.d2_expect,
            "gap": t.gap,
            "cov_v": t.cov_v,
            "gamma_v": t.gamma_v,
            "points": t.points.iter().map(|p| json!({
                "lambda": p.lambda,
                "d_exact": p.d_exact,
                "bound_linear": p.bound_linear,
                "first_order": p.first_order,
                "quad_coeff": p.quad_coeff,
                "bound_holds": p.bound_holds,
            })).collect::<Vec<_>>(),
        }))
        .collect::<Vec<_>>())
}

/// Write text to a file, creating parent directories.
pub fn write_text(path: &std::path::Path, text: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())
}
