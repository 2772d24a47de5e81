//! Text and CSV renderings of a [`FairnessReport`].

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::fairness::{FairnessReport, GroupTable};
use crate::strata::Stratum;

/// Provenance carried into every rendered report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportContext {
    /// Configuration lines (simulation, fit and assessment settings).
    pub config: Vec<String>,
    pub warnings: Vec<String>,
}

impl ReportContext {
    /// First 16 hex digits of SHA-256 over the master seed and config lines.
    pub fn config_hash(&self, master_seed: u64) -> String {
        let mut h = Sha256::new();
        h.update(master_seed.to_le_bytes());
        for line in &self.config {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        hex::encode(&h.finalize()[..8])
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

fn csv_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn render_text(report: &FairnessReport, ctx: &ReportContext) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# principal fairness report");
    let _ = writeln!(s, "# master_seed = {}", report.master_seed);
    let _ = writeln!(s, "# config_hash = {}", ctx.config_hash(report.master_seed));
    for line in &ctx.config {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "draws = {}", report.draws_used);
    for w in &ctx.warnings {
        let _ = writeln!(s, "warning: {w}");
    }

    let _ = writeln!(s, "\n[delta]  p(D=1|h,A=1) - p(D=1|h,A=0)");
    let _ = writeln!(
        s,
        "{:<15} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8}  flag",
        "stratum", "mean", "lower95", "upper95", "imp_q025", "imp_q975", "defined"
    );
    for (h, sum) in report.strata.iter() {
        let _ = writeln!(
            s,
            "{:<15} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8.3}  {}",
            h.name(),
            fmt_opt(sum.delta.map(|i| i.mean)),
            fmt_opt(sum.delta.map(|i| i.lower)),
            fmt_opt(sum.delta.map(|i| i.upper)),
            fmt_opt(sum.imputation_spread.map(|i| i.lower)),
            fmt_opt(sum.imputation_spread.map(|i| i.upper)),
            sum.defined_fraction,
            if sum.unreliable { "unreliable" } else { "" }
        );
    }

    let _ = writeln!(s, "\n[decision_probability]  p(D=1|h,A=a)");
    let _ = writeln!(s, "{:<15} {:>10} {:>10}", "stratum", "A=0", "A=1");
    for (h, sum) in report.strata.iter() {
        let _ = writeln!(
            s,
            "{:<15} {:>10} {:>10}",
            h.name(),
            fmt_opt(sum.decision_prob[0]),
            fmt_opt(sum.decision_prob[1])
        );
    }

    let _ = writeln!(s, "\n[strata_proportion]  share of group A=a in stratum h");
    let _ = writeln!(s, "{:<15} {:>10} {:>10}", "stratum", "A=0", "A=1");
    for (h, sum) in report.strata.iter() {
        let _ = writeln!(
            s,
            "{:<15} {:>10} {:>10}",
            h.name(),
            fmt_opt(sum.proportion[0]),
            fmt_opt(sum.proportion[1])
        );
    }

    let assoc = &report.associational;
    let sp = &assoc.statistical_parity;
    let _ = writeln!(s, "\n[statistical_parity]  p(D=1|A=a)");
    let _ = writeln!(
        s,
        "A=0 {}  A=1 {}  gap {}",
        fmt_opt(sp.rate[0]),
        fmt_opt(sp.rate[1]),
        fmt_opt(sp.gap)
    );
    text_table(
        &mut s,
        "calibration",
        "p(Y=1|D=d,A=a)",
        "D",
        &assoc.calibration,
    );
    text_table(&mut s, "accuracy", "p(D=1|Y=y,A=a)", "Y", &assoc.accuracy);
    s
}

fn text_table(s: &mut String, name: &str, what: &str, key: &str, t: &GroupTable) {
    let _ = writeln!(s, "\n[{name}]  {what}");
    let _ = writeln!(s, "{:<6} {:>10} {:>10} {:>10}", "", "A=0", "A=1", "gap");
    for k in 0..2 {
        let _ = writeln!(
            s,
            "{:<6} {:>10} {:>10} {:>10}",
            format!("{key}={k}"),
            fmt_opt(t.cells[k][0]),
            fmt_opt(t.cells[k][1]),
            fmt_opt(t.gap(k))
        );
    }
}

/// Long-format CSV: `block,stratum,condition,group,statistic,value`.
/// Undefined values are written as `NA`.
pub fn render_csv(report: &FairnessReport, ctx: &ReportContext) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# master_seed = {}", report.master_seed);
    let _ = writeln!(s, "# config_hash = {}", ctx.config_hash(report.master_seed));
    for line in &ctx.config {
        let _ = writeln!(s, "# {line}");
    }
    for w in &ctx.warnings {
        let _ = writeln!(s, "# warning: {w}");
    }
    let _ = writeln!(s, "block,stratum,condition,group,statistic,value");
    let mut row =
        |block: &str, h: Option<Stratum>, cond: &str, group: &str, stat: &str, v: String| {
            let _ = writeln!(
                s,
                "{block},{},{cond},{group},{stat},{v}",
                h.map_or("", Stratum::name)
            );
        };
    row("meta", None, "", "", "draws", report.draws_used.to_string());
    for (h, sum) in report.strata.iter() {
        let i = sum.delta;
        row("delta", Some(h), "", "", "mean", csv_opt(i.map(|i| i.mean)));
        row(
            "delta",
            Some(h),
            "",
            "",
            "lower95",
            csv_opt(i.map(|i| i.lower)),
        );
        row(
            "delta",
            Some(h),
            "",
            "",
            "upper95",
            csv_opt(i.map(|i| i.upper)),
        );
        let q = sum.imputation_spread;
        row(
            "delta",
            Some(h),
            "",
            "",
            "imputation_q025",
            csv_opt(q.map(|i| i.lower)),
        );
        row(
            "delta",
            Some(h),
            "",
            "",
            "imputation_q975",
            csv_opt(q.map(|i| i.upper)),
        );
        row(
            "delta",
            Some(h),
            "",
            "",
            "defined_fraction",
            sum.defined_fraction.to_string(),
        );
        row(
            "delta",
            Some(h),
            "",
            "",
            "unreliable",
            u8::from(sum.unreliable).to_string(),
        );
        for a in 0..2 {
            let g = format!("A={a}");
            row(
                "decision_probability",
                Some(h),
                "",
                &g,
                "mean",
                csv_opt(sum.decision_prob[a]),
            );
            row(
                "strata_proportion",
                Some(h),
                "",
                &g,
                "mean",
                csv_opt(sum.proportion[a]),
            );
        }
    }
    let assoc = &report.associational;
    for a in 0..2 {
        let g = format!("A={a}");
        row(
            "statistical_parity",
            None,
            "",
            &g,
            "rate",
            csv_opt(assoc.statistical_parity.rate[a]),
        );
    }
    row(
        "statistical_parity",
        None,
        "",
        "",
        "gap",
        csv_opt(assoc.statistical_parity.gap),
    );
    for (block, key, t) in [
        ("calibration", "D", &assoc.calibration),
        ("accuracy", "Y", &assoc.accuracy),
    ] {
        for k in 0..2 {
            let cond = format!("{key}={k}");
            for a in 0..2 {
                row(
                    block,
                    None,
                    &cond,
                    &format!("A={a}"),
                    "rate",
                    csv_opt(t.cells[k][a]),
                );
            }
            row(block, None, &cond, "", "gap", csv_opt(t.gap(k)));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::fairness::summarize_strata_draws;

    fn report() -> FairnessReport {
        let data = Dataset::new(
            vec![true, false, true, false],
            vec![false, false, true, true],
            vec![true, false, false, true],
            vec![0.0, 1.0, 2.0, 3.0],
            vec!["x1".into()],
        )
        .unwrap();
        let strata = vec![
            Stratum::Stable,
            Stratum::Stable,
            Stratum::Stable,
            Stratum::Severe,
        ];
        summarize_strata_draws(&data, &[strata], 11).unwrap()
    }

    #[test]
    fn hash_depends_on_seed_and_config() {
        let ctx = ReportContext {
            config: vec!["assess draws=100".into()],
            warnings: vec![],
        };
        assert_eq!(ctx.config_hash(1), ctx.config_hash(1));
        assert_ne!(ctx.config_hash(1), ctx.config_hash(2));
        assert_eq!(ctx.config_hash(1).len(), 16);
    }

    #[test]
    fn renderings_carry_provenance_and_blocks() {
        let ctx = ReportContext {
            config: vec!["assess draws=1".into()],
            warnings: vec!["treated arm has 1 row".into()],
        };
        let text = render_text(&report(), &ctx);
        for needle in [
            "master_seed = 11",
            "config_hash",
            "[delta]",
            "[decision_probability]",
            "[strata_proportion]",
            "[statistical_parity]",
            "[calibration]",
            "[accuracy]",
            "warning: treated arm",
            "unreliable",
        ] {
            assert!(text.contains(needle), "missing {needle}");
        }
        let csv = render_csv(&report(), &ctx);
        assert!(csv.contains("delta,stable,,,mean,0.5"));
        assert!(csv.contains("delta,severe,,,mean,NA"));
        let data_lines = csv.lines().filter(|l| !l.starts_with('#')).count();
        // header + draws + 4 strata * 11 + parity 3 + 2 tables * 6
        assert_eq!(data_lines, 1 + 1 + 44 + 3 + 12);
    }
}
