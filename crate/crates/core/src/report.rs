//! Trace CSV and plain-text tables.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::config::{pressure_to_force, ForcePressureMap};
use crate::metrics::StepMetrics;
use crate::sim::{SweepRow, Trace, TraceRow};

pub const CSV_HEADER: &str = "t,p_ref,p_sup,p_L,x_v,v_v,u,nu,zhat1,zhat2,zhat3,eta_hat,regime,saturated";
pub const CSV_COLUMNS: usize = 14;

/// `%.9g`: nine significant digits, trailing zeros removed, scientific
/// notation outside `1e-5 <= |x| < 1e9`.
pub fn format_g9(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..DIGITS).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_g9).unwrap_or_default()
}

pub fn csv_row(r: &TraceRow) -> String {
    let z = r.z_hat;
    [
        format_g9(r.t),
        format_g9(r.p_ref),
        format_g9(r.p_sup),
        format_g9(r.p_l),
        format_g9(r.x_v),
        format_g9(r.v_v),
        format_g9(r.u),
        opt(r.nu),
        opt(z.map(|z| z[0])),
        opt(z.map(|z| z[1])),
        opt(z.map(|z| z[2])),
        opt(r.eta_hat),
        r.regime.letter().to_string(),
        if r.saturated { "1" } else { "0" }.to_string(),
    ]
    .join(",")
}

pub fn write_trace_csv<W: Write>(trace: &Trace, mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &trace.rows {
        writeln!(w, "{}", csv_row(r))?;
    }
    w.flush()
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

pub fn metrics_table(title: &str, metrics: &[StepMetrics], map: &ForcePressureMap) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(
        s,
        "{:>3} {:>8} {:>8} {:>8} {:>11} {:>9} {:>10} {:>9} {:>6} {:>10}",
        "seg", "p_ref", "F_kN", "step", "overshoot%", "rise_s", "settle_s", "err_bar", "dy_zc", "aperiodic"
    );
    for m in metrics {
        let _ = writeln!(
            s,
            "{:>3} {:>8.2} {:>8.2} {:>8.2} {:>11.3} {:>9} {:>10} {:>9.4} {:>6} {:>10}",
            m.segment,
            m.p_ref,
            pressure_to_force(m.p_ref, map),
            m.step,
            m.overshoot,
            fmt_opt(m.rise_time, 4),
            fmt_opt(m.settling_time, 4),
            m.steady_state_error,
            m.zero_crossings_of_dy,
            if m.is_aperiodic() { "yes" } else { "no" },
        );
    }
    s
}

pub fn comparison_table(fbl: &[StepMetrics], baseline: &[StepMetrics]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>3} {:>8} | {:>11} {:>10} {:>6} | {:>11} {:>10} {:>6}",
        "seg", "p_ref", "fbl_os%", "fbl_ts", "fbl_zc", "base_os%", "base_ts", "base_zc"
    );
    for (f, b) in fbl.iter().zip(baseline) {
        let _ = writeln!(
            s,
            "{:>3} {:>8.2} | {:>11.3} {:>10} {:>6} | {:>11.3} {:>10} {:>6}",
            f.segment,
            f.p_ref,
            f.overshoot,
            fmt_opt(f.settling_time, 4),
            f.zero_crossings_of_dy,
            b.overshoot,
            fmt_opt(b.settling_time, 4),
            b.zero_crossings_of_dy,
        );
    }
    s
}

/// One row per factor: worst case over segments.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8} {:>8} {:>14} {:>12} {:>12} {:>7}",
        "factor", "settled", "max_overshoot%", "max_settle_s", "max_err_bar", "max_zc"
    );
    for row in rows {
        match &row.outcome {
            Ok(m) => {
                let max_os = m.iter().map(|x| x.overshoot).fold(0.0, f64::max);
                let max_ts = m.iter().map(|x| x.settling_time).try_fold(0.0_f64, |acc, t| t.map(|t| acc.max(t)));
                let max_err = m.iter().map(|x| x.steady_state_error).fold(0.0, f64::max);
                let max_zc = m.iter().map(|x| x.zero_crossings_of_dy).max().unwrap_or(0);
                let _ = writeln!(
                    s,
                    "{:>8.3} {:>8} {:>14.3} {:>12} {:>12.4} {:>7}",
                    row.factor,
                    if row.all_settled() { "yes" } else { "no" },
                    max_os,
                    fmt_opt(max_ts, 4),
                    max_err,
                    max_zc
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{:>8.3} {:>8} failed: {e}", row.factor, "no");
            }
        }
    }
    s
}
