//! Flat CSV table, one row per sweep point.

use std::fmt::Write;

pub const HEADER: &str = "point,epsilon,alpha,approx_utility,exact_utility,perfect_utility,\
oracle_utility,invertible_utility,map_error,mmse_y_norm,mmse_x_norm,eps1,eps2,in_hxy";

#[derive(Debug, Clone, Default)]
pub struct Row {
    pub point: usize,
    pub epsilon: f64,
    pub alpha: Option<f64>,
    pub approx_utility: Option<f64>,
    pub exact_utility: Option<f64>,
    pub perfect_utility: Option<f64>,
    pub oracle_utility: Option<f64>,
    pub invertible_utility: Option<f64>,
    pub map_error: Option<f64>,
    pub mmse_y_norm: Option<f64>,
    pub mmse_x_norm: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub in_hxy: Option<bool>,
}

/// Six significant digits; `inf` for infinities.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return String::new();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    let text = if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}"))
    } else {
        let s = format!("{v:.5e}");
        let (mantissa, exponent) = s.split_once('e').expect("scientific notation");
        format!("{}e{exponent}", trim_zeros(mantissa))
    };
    if text.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".into()
    } else {
        text
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

impl Row {
    pub fn to_csv(&self) -> String {
        [
            self.point.to_string(),
            format_float(self.epsilon),
            cell(self.alpha),
            cell(self.approx_utility),
            cell(self.exact_utility),
            cell(self.perfect_utility),
            cell(self.oracle_utility),
            cell(self.invertible_utility),
            cell(self.map_error),
            cell(self.mmse_y_norm),
            cell(self.mmse_x_norm),
            cell(self.eps1),
            cell(self.eps2),
            self.in_hxy.map(|b| b.to_string()).unwrap_or_default(),
        ]
        .join(",")
    }
}

pub fn render(rows: &[Row]) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    for r in rows {
        writeln!(out, "{}", r.to_csv()).unwrap();
    }
    out
}
