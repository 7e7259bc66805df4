//! CSV emission (RFC 4180, UTF-8, CRLF) for sweep records and plot data.

use std::io::Write;

use csv::{Terminator, WriterBuilder};

use crate::error::Result;

use super::SweepResult;

/// Pre-aggregated plot kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    NmseVsT,
    RateVsT,
    RateVsPb,
    EeCdf,
    NmseVsRank,
}

impl PlotKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nmse_vs_t" => Some(PlotKind::NmseVsT),
            "rate_vs_t" => Some(PlotKind::RateVsT),
            "rate_vs_pb" => Some(PlotKind::RateVsPb),
            "ee_cdf" => Some(PlotKind::EeCdf),
            "nmse_vs_rank" => Some(PlotKind::NmseVsRank),
            _ => None,
        }
    }

    pub fn file_name(&self) -> &'static str {
        match self {
            PlotKind::NmseVsT => "nmse_vs_t.csv",
            PlotKind::RateVsT => "rate_vs_t.csv",
            PlotKind::RateVsPb => "rate_vs_pb.csv",
            PlotKind::EeCdf => "ee_cdf.csv",
            PlotKind::NmseVsRank => "nmse_vs_rank.csv",
        }
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    WriterBuilder::new().terminator(Terminator::CRLF).from_writer(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Full per-trial record table (wall-clock deliberately excluded so reruns
/// with the same seed are byte-identical).
pub fn records_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = writer(out);
    let users = result.records.first().map_or(0, |r| r.rates.len());
    let mut header = vec![
        "architecture".to_string(),
        "sweep".to_string(),
        "grid_value".to_string(),
        "trial".to_string(),
        "seed".to_string(),
        "t_tra".to_string(),
        "pnr_db".to_string(),
        "snr_db".to_string(),
        "nmse_dte_ca".to_string(),
        "nmse_ste_eq".to_string(),
        "sum_rate".to_string(),
        "sum_rate_perfect".to_string(),
        "p_total_w".to_string(),
        "ee".to_string(),
        "ee_perfect".to_string(),
    ];
    for k in 0..users {
        header.push(format!("rate_{k}"));
    }
    w.write_record(&header)?;
    for r in &result.records {
        let mut row = vec![
            result.architecture.label().to_string(),
            result.sweep.label().to_string(),
            format!("{:e}", r.grid_value),
            r.trial.to_string(),
            r.seed.to_string(),
            r.t_tra.to_string(),
            format!("{:e}", r.pnr_db),
            format!("{:e}", r.snr_db),
            fmt_opt(r.nmse_dte_ca),
            fmt_opt(r.nmse_ste_eq),
            format!("{:e}", r.sum_rate),
            format!("{:e}", r.sum_rate_perfect),
            format!("{:e}", r.p_total),
            format!("{:e}", r.ee),
            format!("{:e}", r.ee_perfect),
        ];
        for rate in &r.rates {
            row.push(format!("{rate:e}"));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One aggregated curve per call; rows ordered by the x value ascending
/// (for the CDF kind, by the metric value).
pub fn emit_plotdata<W: Write>(result: &SweepResult, kind: PlotKind, out: W) -> Result<()> {
    let mut w = writer(out);
    match kind {
        PlotKind::NmseVsT => {
            w.write_record(["t_tra", "nmse_dte_ca_mean", "nmse_ste_eq_mean"])?;
            let ca = sorted(result.mean_by_grid(|r| r.nmse_dte_ca.unwrap_or(f64::NAN)));
            let eq = sorted(result.mean_by_grid(|r| r.nmse_ste_eq.unwrap_or(f64::NAN)));
            for ((g, a), (_, b)) in ca.into_iter().zip(eq) {
                w.write_record(&[format!("{g:e}"), format!("{a:e}"), format!("{b:e}")])?;
            }
        }
        PlotKind::RateVsT | PlotKind::RateVsPb => {
            let x_name = if kind == PlotKind::RateVsT {
                "t_tra"
            } else {
                "p_b_dbm"
            };
            w.write_record([x_name, "sum_rate_mean", "sum_rate_perfect_mean"])?;
            let est = sorted(result.mean_by_grid(|r| r.sum_rate));
            let per = sorted(result.mean_by_grid(|r| r.sum_rate_perfect));
            for ((g, a), (_, b)) in est.into_iter().zip(per) {
                w.write_record(&[format!("{g:e}"), format!("{a:e}"), format!("{b:e}")])?;
            }
        }
        PlotKind::EeCdf => {
            w.write_record(["ee", "fraction"])?;
            let mut vals: Vec<f64> = result.records.iter().map(|r| r.ee).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = vals.len() as f64;
            for (i, v) in vals.iter().enumerate() {
                w.write_record(&[format!("{v:e}"), format!("{:e}", (i + 1) as f64 / n)])?;
            }
        }
        PlotKind::NmseVsRank => {
            w.write_record(["rank", "nmse_dte_ca_median", "nmse_ste_eq_median"])?;
            let ca = sorted(result.median_by_grid(|r| r.nmse_dte_ca));
            let eq = sorted(result.median_by_grid(|r| r.nmse_ste_eq));
            for ((g, a), (_, b)) in ca.into_iter().zip(eq) {
                w.write_record(&[format!("{g:e}"), format!("{a:e}"), format!("{b:e}")])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn sorted(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{Architecture, MetricRecord, SweepVariable};

    fn record(grid: f64, trial: usize, ee: f64, rate: f64) -> MetricRecord {
        MetricRecord {
            grid_value: grid,
            trial,
            seed: 1,
            t_tra: grid as usize,
            pnr_db: 15.0,
            snr_db: 0.0,
            nmse_dte_ca: Some(0.1),
            nmse_ste_eq: None,
            rates: vec![rate],
            sum_rate: rate,
            sum_rate_perfect: rate + 1.0,
            p_total: 2.0,
            ee,
            ee_perfect: ee + 0.1,
            wall: std::time::Duration::ZERO,
        }
    }

    fn result(records: Vec<MetricRecord>) -> SweepResult {
        SweepResult {
            records,
            failures: vec![],
            architecture: Architecture::Irs,
            sweep: SweepVariable::TTra,
        }
    }

    #[test]
    fn empty_records_emit_header_only() {
        let r = result(vec![]);
        let mut buf = Vec::new();
        emit_plotdata(&r, PlotKind::RateVsT, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t_tra,sum_rate_mean,sum_rate_perfect_mean\r\n");
    }

    #[test]
    fn cdf_fraction_non_decreasing() {
        let r = result(vec![
            record(60.0, 0, 0.5, 3.0),
            record(60.0, 1, 0.2, 2.0),
            record(60.0, 2, 0.9, 4.0),
        ]);
        let mut buf = Vec::new();
        emit_plotdata(&r, PlotKind::EeCdf, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.trim_end().lines().skip(1).collect();
        let mut prev_v = f64::NEG_INFINITY;
        let mut prev_f = 0.0;
        for row in rows {
            let mut it = row.split(',');
            let v: f64 = it.next().unwrap().parse().unwrap();
            let f: f64 = it.next().unwrap().parse().unwrap();
            assert!(v >= prev_v);
            assert!(f >= prev_f);
            prev_v = v;
            prev_f = f;
        }
        assert!((prev_f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_rows_sorted_by_grid() {
        let r = result(vec![
            record(180.0, 0, 0.5, 5.0),
            record(60.0, 0, 0.5, 3.0),
            record(120.0, 0, 0.5, 4.0),
        ]);
        let mut buf = Vec::new();
        emit_plotdata(&r, PlotKind::RateVsT, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let xs: Vec<f64> = text
            .trim_end()
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(xs, vec![60.0, 120.0, 180.0]);
    }

    #[test]
    fn records_csv_has_expected_columns() {
        let r = result(vec![record(60.0, 0, 0.5, 3.0)]);
        let mut buf = Vec::new();
        records_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("architecture,sweep,grid_value,trial,seed,t_tra"));
        assert!(header.ends_with("rate_0"));
        // None serializes as an empty field.
        let row = text.lines().nth(1).unwrap();
        assert!(row.contains(",,"));
    }
}
