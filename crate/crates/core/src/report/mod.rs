//! Fit metrics and the CSV/SVG report artifacts.
//!
//! Report CSVs round every value to 6 significant digits so that re-exporting
//! identical inputs is byte-identical.

use std::fs;
use std::path::Path;

use crate::calibrate::CalibrationHistory;
use crate::error::{Error, Result};
use crate::network::Network;

mod svg;

use svg::{Chart, Range, PALETTE};

/// Normalised RMSE in percent: `100 · sqrt(mean((y − c)²)) / mean(y)`.
pub fn nrmse(field_counts: &[f64], counts: &[f64]) -> Result<f64> {
    if field_counts.is_empty() || field_counts.len() != counts.len() {
        return Err(Error::invalid(format!(
            "nRMSE needs equal non-empty vectors, got {} and {}",
            field_counts.len(),
            counts.len()
        )));
    }
    let n = field_counts.len() as f64;
    let mean = field_counts.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "nRMSE is undefined for field counts with mean {mean}"
        )));
    }
    let mse = field_counts
        .iter()
        .zip(counts)
        .map(|(y, c)| (y - c).powi(2))
        .sum::<f64>()
        / n;
    Ok(100.0 * mse.sqrt() / mean)
}

/// `v` rounded to 6 significant digits, printed in shortest form.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() || v == 0.0 {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    rounded.to_string()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountPair {
    pub edge_id: u32,
    pub field_count: f64,
    pub simulated_count: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    /// Percent.
    pub nrmse: f64,
    pub pairs: Vec<CountPair>,
    /// RMSE between the evaluated demand and the prior.
    pub prior_distance: f64,
}

impl FitReport {
    pub fn new(
        network: &Network,
        field_counts: &[f64],
        simulated: &[f64],
        demand: &[f64],
        prior: &[f64],
    ) -> Result<Self> {
        if field_counts.len() != network.num_measured() {
            return Err(Error::invalid("field counts do not match the measured edges"));
        }
        if demand.len() != prior.len() {
            return Err(Error::invalid("demand and prior differ in length"));
        }
        let nrmse = nrmse(field_counts, simulated)?;
        let pairs = network
            .measured_edges()
            .iter()
            .zip(field_counts.iter().zip(simulated))
            .map(|(&edge_id, (&y, &c))| CountPair {
                edge_id,
                field_count: y,
                simulated_count: c,
            })
            .collect();
        let prior_distance = if demand.is_empty() {
            0.0
        } else {
            (demand.iter().zip(prior).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / demand.len() as f64).sqrt()
        };
        Ok(FitReport {
            nrmse,
            pairs,
            prior_distance,
        })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// `iteration,sim_calls,objective,nrmse,is_best`, one row per record.
pub fn export_history(history: &CalibrationHistory, path: impl AsRef<Path>) -> Result<()> {
    let rows = history.records.iter().enumerate().map(|(k, r)| {
        vec![
            r.iteration.to_string(),
            r.sim_calls.to_string(),
            fmt_sig(r.objective),
            fmt_sig(r.nrmse),
            u8::from(k == history.best_index).to_string(),
        ]
    });
    write_file(
        path.as_ref(),
        &csv_text(&["iteration", "sim_calls", "objective", "nrmse", "is_best"], rows)?,
    )
}

/// The best point as `od_id,demand`.
pub fn export_best_od(history: &CalibrationHistory, path: impl AsRef<Path>) -> Result<()> {
    let rows = history
        .best_point()
        .iter()
        .enumerate()
        .map(|(z, d)| vec![(z + 1).to_string(), fmt_sig(*d)]);
    write_file(path.as_ref(), &csv_text(&["od_id", "demand"], rows)?)
}

/// Long-format CSV `method,iteration,sim_calls,objective,nrmse` and an SVG of
/// the best-so-far nRMSE against simulation calls, one series per history.
pub fn export_convergence(
    histories: &[CalibrationHistory],
    csv_path: impl AsRef<Path>,
    svg_path: impl AsRef<Path>,
) -> Result<()> {
    if histories.is_empty() || histories.iter().any(|h| h.records.is_empty()) {
        return Err(Error::invalid("convergence export needs at least one non-empty history"));
    }
    let rows = histories.iter().flat_map(|h| {
        h.records.iter().map(move |r| {
            vec![
                h.method.to_string(),
                r.iteration.to_string(),
                r.sim_calls.to_string(),
                fmt_sig(r.objective),
                fmt_sig(r.nrmse),
            ]
        })
    });
    write_file(
        csv_path.as_ref(),
        &csv_text(&["method", "iteration", "sim_calls", "objective", "nrmse"], rows)?,
    )?;

    let series: Vec<Vec<(f64, f64)>> = histories
        .iter()
        .map(|h| {
            h.records
                .iter()
                .zip(h.best_so_far_nrmse())
                .map(|(r, v)| (r.sim_calls as f64, v))
                .collect()
        })
        .collect();
    let all = series.iter().flatten();
    let mut chart = Chart::new(
        Range::covering(all.clone().map(|p| p.0)).with_zero(),
        Range::covering(all.map(|p| p.1)).with_zero(),
    );
    for (k, (h, s)) in histories.iter().zip(&series).enumerate() {
        chart.polyline(s, PALETTE[k % PALETTE.len()], h.method.name());
    }
    write_file(
        svg_path.as_ref(),
        &chart.render("Best nRMSE so far", "simulation calls", "nRMSE (%)"),
    )
}

/// CSV `edge_id,field_count,simulated_count` and an SVG scatter with a dashed
/// `y = x` reference line.
pub fn export_scatter(report: &FitReport, csv_path: impl AsRef<Path>, svg_path: impl AsRef<Path>) -> Result<()> {
    if report.pairs.is_empty() {
        return Err(Error::invalid("scatter export needs at least one count pair"));
    }
    let rows = report.pairs.iter().map(|p| {
        vec![
            p.edge_id.to_string(),
            fmt_sig(p.field_count),
            fmt_sig(p.simulated_count),
        ]
    });
    write_file(
        csv_path.as_ref(),
        &csv_text(&["edge_id", "field_count", "simulated_count"], rows)?,
    )?;

    let range = Range::covering(
        report
            .pairs
            .iter()
            .flat_map(|p| [p.field_count, p.simulated_count]),
    )
    .with_zero();
    let mut chart = Chart::new(range, range);
    chart.dashed((range.lo, range.lo), (range.hi, range.hi));
    let points: Vec<(f64, f64)> = report
        .pairs
        .iter()
        .map(|p| (p.field_count, p.simulated_count))
        .collect();
    chart.points(&points, PALETTE[0]);
    let title = format!("Field vs simulated counts (nRMSE {}%)", fmt_sig(report.nrmse));
    write_file(
        svg_path.as_ref(),
        &chart.render(&title, "field count", "simulated count"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{IterationRecord, Method};
    use crate::network::tests::two_route_network;

    #[test]
    fn nrmse_examples() {
        assert_eq!(nrmse(&[100.0, 200.0], &[100.0, 200.0]).unwrap(), 0.0);
        assert!((nrmse(&[100.0, 200.0], &[110.0, 190.0]).unwrap() - 100.0 * 10.0 / 150.0).abs() < 1e-12);
        let expect = 100.0 * ((100.0f64.powi(2) + 200.0f64.powi(2)) / 2.0).sqrt() / 150.0;
        assert!((nrmse(&[100.0, 200.0], &[200.0, 400.0]).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 105.409).abs() < 1e-3);
        assert!(matches!(nrmse(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::UndefinedMetric(_))));
        assert!(nrmse(&[], &[]).is_err());
        assert!(nrmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn fmt_sig_rounds() {
        assert_eq!(fmt_sig(0.158104468), "0.158104");
        assert_eq!(fmt_sig(1234567.0), "1234570");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(1e-9), "0.000000001");
    }

    pub(crate) fn history(method: Method, objectives: &[f64]) -> CalibrationHistory {
        let records: Vec<IterationRecord> = objectives
            .iter()
            .enumerate()
            .map(|(k, &f)| IterationRecord {
                iteration: k,
                sim_calls: k + 1,
                objective: f,
                nrmse: f / 10.0,
                best_objective: f,
                point: vec![k as f64, 2.0],
                iterate: vec![k as f64, 2.0],
                counts: vec![1.0, 2.0],
                wall_time_secs: 0.0,
            })
            .collect();
        let best_index = (0..records.len())
            .fold(0, |b, k| if records[k].objective < records[b].objective { k } else { b });
        CalibrationHistory {
            method,
            records,
            best_index,
            aborted: None,
        }
    }

    #[test]
    fn history_csv_marks_one_best() {
        let dir = tempfile::tempdir().unwrap();
        let h = history(Method::LinearMetamodel, &[50.0, 20.0, 30.0, 20.0]);
        let p = dir.path().join("h.csv");
        export_history(&h, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "iteration,sim_calls,objective,nrmse,is_best\n0,1,50,5,0\n1,2,20,2,1\n2,3,30,3,0\n3,4,20,2,0\n"
        );
        let b = dir.path().join("b.csv");
        export_best_od(&h, &b).unwrap();
        assert_eq!(fs::read_to_string(&b).unwrap(), "od_id,demand\n1,1\n2,2\n");
    }

    #[test]
    fn convergence_has_a_series_per_method() {
        let dir = tempfile::tempdir().unwrap();
        let hs: Vec<_> = Method::ALL.iter().map(|&m| history(m, &[9.0, 4.0, 6.0])).collect();
        let (c, s) = (dir.path().join("c.csv"), dir.path().join("c.svg"));
        export_convergence(&hs, &c, &s).unwrap();
        let csv_text = fs::read_to_string(&c).unwrap();
        assert_eq!(csv_text.lines().count(), 1 + 9);
        let svg_text = fs::read_to_string(&s).unwrap();
        assert_eq!(svg_text.matches("class=\"legend-entry\"").count(), 3);
        assert_eq!(svg_text.matches("class=\"series\"").count(), 3);

        export_convergence(&hs[..1], &c, &s).unwrap();
        assert_eq!(fs::read_to_string(&c).unwrap().lines().count(), 4);
        assert!(export_convergence(&[], &c, &s).is_err());
    }

    #[test]
    fn scatter_perfect_fit_lies_on_diagonal() {
        let net = two_route_network();
        let r = FitReport::new(&net, &[70.0, 30.0], &[70.0, 30.0], &[1.0], &[1.0]).unwrap();
        assert_eq!(r.nrmse, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let (c, s) = (dir.path().join("s.csv"), dir.path().join("s.svg"));
        export_scatter(&r, &c, &s).unwrap();
        assert_eq!(
            fs::read_to_string(&c).unwrap(),
            "edge_id,field_count,simulated_count\n1,70,70\n3,30,30\n"
        );
        let svg_text = fs::read_to_string(&s).unwrap();
        assert!(svg_text.contains("stroke-dasharray"));
        for line in svg_text.lines().filter(|l| l.contains("class=\"point\"")) {
            let attr = |name: &str| -> f64 {
                let start = line.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
                line[start..].split('"').next().unwrap().parse().unwrap()
            };
            // the plot area is 550 x 400 px for a square data range
            let (u, v) = ((attr("cx") - 70.0) / 550.0, (430.0 - attr("cy")) / 400.0);
            assert!((u - v).abs() < 1e-3, "{line}");
        }
        let empty = FitReport {
            nrmse: 0.0,
            pairs: vec![],
            prior_distance: 0.0,
        };
        assert!(export_scatter(&empty, &c, &s).is_err());
    }

    #[test]
    fn exports_are_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let h = history(Method::Spsa, &[3.0, 1.0 / 3.0]);
        let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
        export_convergence(std::slice::from_ref(&h), dir.path().join("a.csv"), &a).unwrap();
        export_convergence(std::slice::from_ref(&h), dir.path().join("b.csv"), &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(
            fs::read(dir.path().join("a.csv")).unwrap(),
            fs::read(dir.path().join("b.csv")).unwrap()
        );
    }
}
