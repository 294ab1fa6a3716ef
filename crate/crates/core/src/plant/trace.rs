use std::io::Write;

use super::PlantState;
use crate::error::Result;

pub const TRACE_CSV_HEADER: &str = "clock_h,Tj_C,T_C,Cs,Lbar_um,mu0,mu1,mu2,mu3,MT";

/// Nine significant digits.
pub(crate) fn fmt9(v: f64) -> String {
    format!("{v:.8e}")
}

pub(crate) fn state_csv_fields(s: &PlantState) -> [String; 10] {
    [
        fmt9(s.clock / 3600.0),
        fmt9(s.jacket_temp),
        fmt9(s.temperature),
        fmt9(s.concentration),
        fmt9(s.mean_size * 1e6),
        fmt9(s.mu0),
        fmt9(s.mu1),
        fmt9(s.mu2),
        fmt9(s.mu3),
        fmt9(s.suspension_density),
    ]
}

pub fn write_trace_csv<W: Write>(mut out: W, states: &[PlantState]) -> Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for s in states {
        writeln!(out, "{}", state_csv_fields(s).join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{PhysicalParams, SeedSpec};

    #[test]
    fn csv_layout() {
        let s = PlantState::seeded(0.6, 30.0, &SeedSpec::default(), &PhysicalParams::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[s, s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], TRACE_CSV_HEADER);
        let fields: Vec<f64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 10);
        assert!((fields[4] - 110.0).abs() < 1e-6);
        assert_eq!(fmt9(1.0 / 3.0), "3.33333333e-1");
    }
}
