use std::fmt::Write as _;
use std::io::Write;

use super::suite::BenchmarkSummary;
use super::ClosedLoopResult;
use crate::controllers::ControllerKind;
use crate::error::Result;
use crate::plant::{state_csv_fields, TRACE_CSV_HEADER};

pub const RUN_CSV_HEADER: &str = "clock_h,Tj_C,T_C,Cs,Lbar_um,mu0,mu1,mu2,mu3,MT,measured_Lbar_um,e";

/// Per-run trace: the plant export columns plus the measured mean size (µm)
/// and the squared tracking error seen by the controller (µm²).
pub fn write_run_csv(mut w: impl Write, run: &ClosedLoopResult) -> Result<()> {
    debug_assert!(RUN_CSV_HEADER.starts_with(TRACE_CSV_HEADER));
    writeln!(w, "{RUN_CSV_HEADER}")?;
    for s in &run.trace {
        let fields = state_csv_fields(&s.state);
        writeln!(
            w,
            "{},{:.8e},{:.8e}",
            fields.join(","),
            s.measured_mean_size * 1e6,
            s.squared_error * 1e12
        )?;
    }
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "failed".to_string(), |d| format!("{d:.2}"))
}

fn noise_label(level: f64) -> String {
    if level == 0.0 {
        "clean".into()
    } else {
        format!("±{:.0}% noise", level * 100.0)
    }
}

fn time_label(seconds: Option<f64>) -> String {
    match seconds {
        None => "n/a".into(),
        Some(s) if s < 1e-3 => format!("{:.1} µs", s * 1e6),
        Some(s) if s < 1.0 => format!("{:.2} ms", s * 1e3),
        Some(s) => format!("{s:.2} s"),
    }
}

/// Deviation table (one row per set-point and noise level, one column per
/// controller) followed by the timing row and the mis-tuned PI comparison.
pub fn render_markdown(summary: &BenchmarkSummary) -> String {
    let kinds: Vec<ControllerKind> = summary.controllers.iter().map(|s| s.controller).collect();
    let mut out = String::from("# Set-point tracking benchmark\n\nTerminal set-point deviation, %.\n\n");
    let _ = write!(out, "| Set-point | Measurement |");
    for k in &kinds {
        let _ = write!(out, " {k} |");
    }
    out.push('\n');
    out.push_str("|---|---|");
    out.push_str(&"---:|".repeat(kinds.len()));
    out.push('\n');
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for c in &summary.cases {
        if !rows.contains(&(c.set_point_um, c.noise_level)) {
            rows.push((c.set_point_um, c.noise_level));
        }
    }
    for (sp, noise) in rows {
        let _ = write!(out, "| {sp:.0} µm | {} |", noise_label(noise));
        for &k in &kinds {
            let v = summary.case(sp, noise, k).and_then(|c| c.deviation_pct);
            let _ = write!(out, " {} |", cell(v));
        }
        out.push('\n');
    }
    out.push_str("| Mean | |");
    for s in &summary.controllers {
        let _ = write!(out, " {} |", cell(s.mean_deviation_pct));
    }
    out.push('\n');
    out.push_str("| Avg. comp. time | per step |");
    for s in &summary.controllers {
        let _ = write!(out, " {} |", time_label(s.mean_step_time_s));
    }
    out.push('\n');

    let failures: Vec<_> = summary.cases.iter().filter(|c| c.failure.is_some()).collect();
    if !failures.is_empty() {
        out.push_str("\n## Failed runs\n\n");
        for c in failures {
            let _ = writeln!(
                out,
                "- {} at {:.0} µm, {}: {}",
                c.controller,
                c.set_point_um,
                noise_label(c.noise_level),
                c.failure.as_deref().unwrap_or("")
            );
        }
    }
    if let Some(g) = &summary.g2g {
        let _ = write!(
            out,
            "\n## Grade change to {:.0} µm\n\n| Controller | Final L̄ (µm) | Deviation (%) |\n|---|---:|---:|\n",
            g.set_point_um
        );
        let size = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |s| format!("{s:.1}"));
        let _ = writeln!(
            out,
            "| PI tuned for {:.0} µm | {} | {} |",
            g.pi_tuned_for_um,
            size(g.pi_final_size_um),
            cell(g.pi_deviation_pct)
        );
        let _ = writeln!(
            out,
            "| LSTMc | {} | {} |",
            size(g.lstmc_final_size_um),
            cell(g.lstmc_deviation_pct)
        );
    }
    let _ = write!(out, "\nDigest (timings excluded): `{}`\n", summary.digest);
    out
}

/// Line chart of the true mean size over time for the given runs.
pub fn render_svg(runs: &[(String, &ClosedLoopResult)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let palette = [
        "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
    ];
    let mut t_max: f64 = 1.0;
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, r) in runs {
        for s in &r.trace {
            t_max = t_max.max(s.state.clock / 3600.0);
            y_min = y_min.min(s.state.mean_size * 1e6);
            y_max = y_max.max(s.state.mean_size * 1e6);
        }
        y_min = y_min.min(r.scenario.set_point_m * 1e6);
        y_max = y_max.max(r.scenario.set_point_m * 1e6);
    }
    if !y_min.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    let span = (y_max - y_min).max(1.0);
    let x = |t: f64| PAD + (W - 2.0 * PAD) * t / t_max;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - y_min) / span;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n<line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>",
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\">time (h)</text>", W / 2.0, H - 15.0);
    let _ = writeln!(svg, "<text x=\"5\" y=\"{}\">L̄ (µm)</text>", PAD - 15.0);
    let _ = writeln!(svg, "<text x=\"5\" y=\"{}\">{y_min:.0}</text>", H - PAD);
    let _ = writeln!(svg, "<text x=\"5\" y=\"{}\">{y_max:.0}</text>", PAD + 4.0);
    for (i, (label, r)) in runs.iter().enumerate() {
        let color = palette[i % palette.len()];
        let pts: Vec<String> = r
            .trace
            .iter()
            .map(|s| format!("{:.1},{:.1}", x(s.state.clock / 3600.0), y(s.state.mean_size * 1e6)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        let sp = y(r.scenario.set_point_m * 1e6);
        let _ = writeln!(
            svg,
            "<line x1=\"{PAD}\" y1=\"{sp:.1}\" x2=\"{}\" y2=\"{sp:.1}\" stroke=\"{color}\" stroke-dasharray=\"4 3\" stroke-width=\"0.8\"/>",
            W - PAD
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{label}</text>",
            PAD + 10.0,
            PAD + 14.0 * i as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}
