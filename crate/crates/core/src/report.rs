//! Output artifacts: results tables, fit summaries and forest plots.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::data::MetaDataset;
use crate::mcmc::{summarize, ChainSet, McmcError, PosteriorSummary};
use crate::models::{ModelKind, D_POS, MU_BETA, TAU_BETA_SQ, TAU_POS_SQ};

const Z975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("no rows to plot")]
    Empty,
    #[error("row `{label}`: {reason}")]
    InvalidRow { label: String, reason: String },
    #[error("forest rows: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Population {
    Positive,
    Negative,
    Mixed,
    Pooled,
}

impl Population {
    fn colour(self) -> &'static str {
        match self {
            Population::Positive => "#1b6ca8",
            Population::Negative => "#c0392b",
            Population::Mixed => "#7d3c98",
            Population::Pooled => "#111111",
        }
    }
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Population::Positive => "positive",
            Population::Negative => "negative",
            Population::Mixed => "mixed",
            Population::Pooled => "pooled",
        })
    }
}

impl FromStr for Population {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Population::Positive),
            "negative" => Ok(Population::Negative),
            "mixed" => Ok(Population::Mixed),
            "pooled" => Ok(Population::Pooled),
            other => Err(format!("unknown population `{other}`")),
        }
    }
}

/// One line of a forest plot, on the log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestRow {
    pub label: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub population: Population,
    /// Group heading; observed study rows use "Observed".
    pub model: String,
}

impl ForestRow {
    pub fn new(
        label: impl Into<String>,
        (estimate, lower, upper): (f64, f64, f64),
        population: Population,
        model: impl Into<String>,
    ) -> Result<Self, ReportError> {
        let row = Self { label: label.into(), estimate, lower, upper, population, model: model.into() };
        row.check()?;
        Ok(row)
    }

    fn check(&self) -> Result<(), ReportError> {
        let bad = |reason: &str| Err(ReportError::InvalidRow { label: self.label.clone(), reason: reason.into() });
        if ![self.estimate, self.lower, self.upper].iter().all(|v| v.is_finite()) {
            return bad("non-finite value");
        }
        if !(self.lower <= self.estimate && self.estimate <= self.upper) {
            return bad("interval does not contain the estimate");
        }
        Ok(())
    }
}

pub const FOREST_HEADER: &str = "label,estimate,lower,upper,population,model";

pub fn forest_csv(rows: &[ForestRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FOREST_HEADER.split(',')).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.estimate.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
            r.population.to_string(),
            r.model.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn parse_forest_csv(text: &str) -> Result<Vec<ForestRow>, ReportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let perr = |e: csv::Error| ReportError::Parse(e.to_string());
    let header: Vec<String> = r.headers().map_err(perr)?.iter().map(|h| h.trim().to_string()).collect();
    if header.join(",") != FOREST_HEADER {
        return Err(ReportError::Parse(format!("expected header `{FOREST_HEADER}`")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(perr)?;
        let num = |i: usize| {
            rec[i].trim().parse::<f64>().map_err(|_| ReportError::Parse(format!("`{}` is not a number", &rec[i])))
        };
        let population = rec[4].parse::<Population>().map_err(ReportError::Parse)?;
        rows.push(ForestRow::new(rec[0].trim(), (num(1)?, num(2)?, num(3)?), population, rec[5].trim())?);
    }
    Ok(rows)
}

const WIDTH: f64 = 760.0;
const LABEL_X: f64 = 12.0;
const PLOT_LEFT: f64 = 280.0;
const PLOT_RIGHT: f64 = 720.0;
const TOP: f64 = 30.0;
const ROW_H: f64 = 20.0;
const AXIS_GAP: f64 = 16.0;
const HR_TICKS: [f64; 13] = [0.1, 0.2, 0.25, 0.33, 0.5, 0.67, 0.8, 1.0, 1.25, 1.5, 2.0, 3.0, 5.0];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders a forest plot. Values are log hazard ratios; the axis is
/// labelled in hazard ratios. Rows are grouped under their `model` tag in
/// order of first appearance. Output depends only on `rows`.
pub fn render_forest(rows: &[ForestRow]) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    for r in rows {
        r.check()?;
    }
    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        match groups.iter_mut().find(|(m, _)| *m == r.model) {
            Some((_, v)) => v.push(i),
            None => groups.push((&r.model, vec![i])),
        }
    }

    let lo = rows.iter().map(|r| r.lower).fold(0.0, f64::min);
    let hi = rows.iter().map(|r| r.upper).fold(0.0, f64::max);
    let pad = 0.05 * (hi - lo).max(0.2);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |v: f64| PLOT_LEFT + (v - lo) / (hi - lo) * (PLOT_RIGHT - PLOT_LEFT);

    let n_lines = rows.len() + groups.len();
    let plot_bottom = TOP + n_lines as f64 * ROW_H;
    let height = plot_bottom + AXIS_GAP + 40.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH:.0}" height="{height:.0}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<line class="null-line" x1="{0:.2}" y1="{TOP:.2}" x2="{0:.2}" y2="{plot_bottom:.2}" stroke="#888888" stroke-dasharray="4 3"/>"##,
        x(0.0)
    );

    let mut line = 0usize;
    for (model, idx) in &groups {
        let y = TOP + (line as f64 + 0.7) * ROW_H;
        let _ = writeln!(s, r#"<text class="group" x="{LABEL_X:.2}" y="{y:.2}" font-weight="bold">{}</text>"#, escape(model));
        line += 1;
        for &i in idx {
            let r = &rows[i];
            let yc = TOP + (line as f64 + 0.5) * ROW_H;
            let colour = r.population.colour();
            let _ = writeln!(
                s,
                r#"<text class="label" x="{:.2}" y="{:.2}">{}</text>"#,
                LABEL_X + 12.0,
                yc + 4.0,
                escape(&r.label)
            );
            for (a, b) in [(r.lower, r.estimate), (r.estimate, r.upper)] {
                let _ = writeln!(
                    s,
                    r#"<line class="whisker" data-row="{i}" x1="{:.2}" y1="{yc:.2}" x2="{:.2}" y2="{yc:.2}" stroke="{colour}" stroke-width="1.5"/>"#,
                    x(a),
                    x(b)
                );
            }
            let xe = x(r.estimate);
            if r.population == Population::Pooled {
                let _ = writeln!(
                    s,
                    r#"<polygon class="marker" data-row="{i}" points="{:.2},{yc:.2} {xe:.2},{:.2} {:.2},{yc:.2} {xe:.2},{:.2}" fill="{colour}"/>"#,
                    xe - 6.0,
                    yc - 6.0,
                    xe + 6.0,
                    yc + 6.0
                );
            } else {
                let _ = writeln!(
                    s,
                    r#"<rect class="marker" data-row="{i}" x="{:.2}" y="{:.2}" width="8" height="8" fill="{colour}"/>"#,
                    xe - 4.0,
                    yc - 4.0
                );
            }
            line += 1;
        }
    }

    let axis_y = plot_bottom + AXIS_GAP / 2.0;
    let _ = writeln!(
        s,
        r##"<line class="axis" x1="{PLOT_LEFT:.2}" y1="{axis_y:.2}" x2="{PLOT_RIGHT:.2}" y2="{axis_y:.2}" stroke="#000000"/>"##
    );
    for hr in HR_TICKS {
        let v = f64::ln(hr);
        if v < lo || v > hi {
            continue;
        }
        let xt = x(v);
        let _ = writeln!(
            s,
            r##"<line class="tick" x1="{xt:.2}" y1="{axis_y:.2}" x2="{xt:.2}" y2="{:.2}" stroke="#000000"/>"##,
            axis_y + 4.0
        );
        let _ = writeln!(s, r#"<text class="tick-label" x="{xt:.2}" y="{:.2}" text-anchor="middle">{hr:.2}</text>"#, axis_y + 16.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Hazard ratio (log scale)</text>"#,
        0.5 * (PLOT_LEFT + PLOT_RIGHT),
        axis_y + 32.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Observed study estimates (95% intervals from the standard errors)
/// followed by each model's pooled d_pos (posterior median and CrI).
pub fn example_forest_rows(dataset: &MetaDataset, fits: &[(ModelKind, &PosteriorSummary)]) -> Vec<ForestRow> {
    let mut rows = Vec::new();
    for s in dataset.studies() {
        for (est, pop, tag) in [
            (s.positive, Population::Positive, "+"),
            (s.negative, Population::Negative, "-"),
            (s.mixed, Population::Mixed, "mix"),
        ] {
            if let Some(e) = est {
                let half = Z975 * e.se;
                rows.push(ForestRow {
                    label: format!("{} ({tag})", s.study_id),
                    estimate: e.y,
                    lower: e.y - half,
                    upper: e.y + half,
                    population: pop,
                    model: "Observed".into(),
                });
            }
        }
    }
    for (kind, summary) in fits {
        if let Some(d) = summary.get(D_POS) {
            rows.push(ForestRow {
                label: format!("{} pooled d+", kind.to_string().to_uppercase()),
                estimate: d.median,
                lower: d.lower,
                upper: d.upper,
                population: Population::Pooled,
                model: "Pooled".into(),
            });
        }
    }
    rows
}

/// Effect-scale parameters, which `--hr-scale` exponentiates.
pub fn is_location(name: &str) -> bool {
    name == D_POS || name == MU_BETA || name.starts_with("delta_pos[") || name.starts_with("beta[")
}

/// Copy of `chains` with location parameters exponentiated.
pub fn hr_scale_chains(chains: &ChainSet) -> ChainSet {
    let draws = (0..chains.n_chains())
        .map(|c| {
            (0..chains.names().len())
                .map(|p| {
                    let d = chains.draws(c, p);
                    if is_location(&chains.names()[p]) { d.iter().map(|v| v.exp()).collect() } else { d.to_vec() }
                })
                .collect()
        })
        .collect();
    ChainSet::from_columns(chains.names().to_vec(), draws)
}

pub const SUMMARY_HEADER: &str = "outcome,model,parameter,mean,median,sd,cri_lo,cri_hi,rhat,ess";

/// Rows of the fit summary CSV (no header).
pub fn summary_rows(outcome: &str, model: ModelKind, summary: &PosteriorSummary) -> String {
    let mut out = String::new();
    for r in &summary.rows {
        let rhat = r.rhat.map_or_else(|| "NA".to_string(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            outcome, model, r.name, r.mean, r.median, r.sd, r.lower, r.upper, rhat, r.ess
        );
    }
    out
}

/// Summary of `chains`, on the hazard-ratio scale if requested.
pub fn summary_on_scale(chains: &ChainSet, hr_scale: bool) -> Result<PosteriorSummary, McmcError> {
    if hr_scale {
        summarize(&hr_scale_chains(chains))
    } else {
        summarize(chains)
    }
}

pub const TABLE_PARAMETERS: [&str; 4] = [D_POS, TAU_POS_SQ, MU_BETA, TAU_BETA_SQ];

/// Results table: one row per parameter, and for each model the posterior
/// median with its 95% CrI. Absent parameters are `NA`.
pub fn results_table(fits: &[(ModelKind, &PosteriorSummary)], hr_scale: bool) -> String {
    let mut out = String::from("parameter");
    for (kind, _) in fits {
        let _ = write!(out, ",{kind}_median,{kind}_cri_lo,{kind}_cri_hi");
    }
    out.push('\n');
    for name in TABLE_PARAMETERS {
        out.push_str(name);
        for (_, summary) in fits {
            match summary.get(name) {
                Some(r) => {
                    let f = |v: f64| if hr_scale && is_location(name) { v.exp() } else { v };
                    let _ = write!(out, ",{},{},{}", f(r.median), f(r.lower), f(r.upper));
                }
                None => out.push_str(",NA,NA,NA"),
            }
        }
        out.push('\n');
    }
    out
}

/// Relative reduction in d_pos CrI width of `refined` against `baseline`.
pub fn precision_gain(baseline: &PosteriorSummary, refined: &PosteriorSummary) -> Option<f64> {
    let (a, b) = (baseline.get(D_POS)?, refined.get(D_POS)?);
    Some(1.0 - b.width() / a.width())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::ParamSummary;

    fn count(svg: &str, needle: &str) -> usize {
        svg.matches(needle).count()
    }

    #[test]
    fn single_row_plot() {
        let rows = vec![ForestRow::new("only", (0.0, -0.1, 0.1), Population::Positive, "Observed").unwrap()];
        let svg = render_forest(&rows).unwrap();
        assert_eq!(count(&svg, r#"class="marker""#), 1);
        assert_eq!(count(&svg, r#"class="whisker""#), 2);
        assert_eq!(count(&svg, r#"class="null-line""#), 1);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg, render_forest(&rows).unwrap());
    }

    #[test]
    fn empty_and_invalid_rows() {
        assert_eq!(render_forest(&[]), Err(ReportError::Empty));
        assert!(ForestRow::new("x", (0.5, -0.1, 0.1), Population::Pooled, "M1").is_err());
        let bad = ForestRow {
            label: "y".into(),
            estimate: f64::NAN,
            lower: 0.0,
            upper: 1.0,
            population: Population::Mixed,
            model: "m".into(),
        };
        assert!(render_forest(&[bad]).is_err());
    }

    #[test]
    fn labels_are_escaped() {
        let rows = vec![ForestRow::new("A & <B>", (0.0, -0.1, 0.1), Population::Mixed, "x\"y").unwrap()];
        let svg = render_forest(&rows).unwrap();
        assert!(svg.contains("A &amp; &lt;B&gt;"));
        assert!(svg.contains("x&quot;y"));
    }

    #[test]
    fn null_line_sits_at_zero() {
        let rows = vec![
            ForestRow::new("a", (-0.5, -1.0, 0.0), Population::Positive, "Observed").unwrap(),
            ForestRow::new("b", (0.5, 0.0, 1.0), Population::Pooled, "Pooled").unwrap(),
        ];
        let svg = render_forest(&rows).unwrap();
        // lower whisker of b and upper whisker of a both end on the null line
        let null_x = attr(svg.lines().find(|l| l.contains("null-line")).unwrap(), "x1");
        let b_lo = whiskers(&svg, 1).0;
        let a_hi = whiskers(&svg, 0).1;
        assert_eq!(null_x, b_lo);
        assert_eq!(null_x, a_hi);
    }

    pub(crate) fn attr(line: &str, name: &str) -> f64 {
        let key = format!(" {name}=\"");
        let start = line.find(&key).unwrap() + key.len();
        let end = start + line[start..].find('"').unwrap();
        line[start..end].parse().unwrap()
    }

    /// Horizontal extent (left, right) of row `i`'s whiskers.
    pub(crate) fn whiskers(svg: &str, i: usize) -> (f64, f64) {
        let tag = format!("class=\"whisker\" data-row=\"{i}\"");
        let xs: Vec<f64> = svg
            .lines()
            .filter(|l| l.contains(&tag))
            .flat_map(|l| [attr(l, "x1"), attr(l, "x2")])
            .collect();
        (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    #[test]
    fn forest_csv_round_trip() {
        let rows = vec![
            ForestRow::new("Study, A (+)", (-0.2, -0.4, 0.1), Population::Positive, "Observed").unwrap(),
            ForestRow::new("M3 pooled d+", (-0.11, -0.21, -0.017), Population::Pooled, "Pooled").unwrap(),
        ];
        let text = forest_csv(&rows);
        assert!(text.starts_with("label,estimate,lower,upper,population,model\n"));
        assert_eq!(parse_forest_csv(&text).unwrap(), rows);
        assert!(parse_forest_csv("a,b\n").is_err());
    }

    fn summary(rows: &[(&str, f64, f64, f64)]) -> PosteriorSummary {
        PosteriorSummary {
            rows: rows
                .iter()
                .map(|&(name, median, lower, upper)| ParamSummary {
                    name: name.into(),
                    mean: median,
                    median,
                    sd: 0.1,
                    lower,
                    upper,
                    rhat: Some(1.0),
                    ess: 1000.0,
                })
                .collect(),
        }
    }

    #[test]
    fn results_table_layout() {
        let m1 = summary(&[("d_pos", -0.11, -0.29, 0.057), ("tau_pos_sq", 0.02, 0.0001, 0.21)]);
        let m3 = summary(&[
            ("d_pos", -0.11, -0.21, -0.017),
            ("tau_pos_sq", 0.0037, 0.0, 0.05),
            ("mu_beta", 0.12, -0.094, 0.33),
            ("tau_beta_sq", 0.01, 0.0, 0.18),
        ]);
        let t = results_table(&[(ModelKind::M1, &m1), (ModelKind::M3, &m3)], false);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "parameter,m1_median,m1_cri_lo,m1_cri_hi,m3_median,m3_cri_lo,m3_cri_hi");
        assert_eq!(lines[1], "d_pos,-0.11,-0.29,0.057,-0.11,-0.21,-0.017");
        assert_eq!(lines[3], "mu_beta,NA,NA,NA,0.12,-0.094,0.33");
        assert_eq!(lines.len(), 5);

        let hr = results_table(&[(ModelKind::M3, &m3)], true);
        let d: Vec<f64> = hr.lines().nth(1).unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert!((d[0] - (-0.11f64).exp()).abs() < 1e-15);
        // variances are not exponentiated
        assert!(hr.lines().nth(2).unwrap().starts_with("tau_pos_sq,0.0037,"));

        let gain = precision_gain(&m1, &m3).unwrap();
        assert!((gain - (1.0 - 0.193 / 0.347)).abs() < 1e-12);
    }

    #[test]
    fn hr_scale_transforms_only_locations() {
        let chains = ChainSet::from_columns(
            vec!["d_pos".into(), "tau_pos".into(), "beta[x]".into()],
            vec![vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![-1.0, 2.0]]],
        );
        let t = hr_scale_chains(&chains);
        assert_eq!(t.draws(0, 0), &[1.0, 1f64.exp()]);
        assert_eq!(t.draws(0, 1), &[0.5, 0.5]);
        assert_eq!(t.draws(0, 2), &[(-1f64).exp(), 2f64.exp()]);
    }
}
