//! Localization metrics, uncertainty binning and input ablations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::encoders::Ablation;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::models::{train, ModelKind, TrainConfig, TrainedModel};
use crate::postprocess::{self, TopKMethod, TopKParams};

/// Accuracy thresholds in meters.
pub const DEFAULT_THRESHOLDS_M: [f64; 8] = [1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0];
pub const DEFAULT_BINS: usize = 10;

fn check_pair<A, B>(a: &[A], b: &[B]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("{} predictions for {} ground truths", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    Ok(())
}

pub fn errors(preds: &[Point], truths: &[Point]) -> Result<Vec<f64>> {
    check_pair(preds, truths)?;
    Ok(preds.iter().zip(truths).map(|(p, t)| p.distance(*t)).collect())
}

fn rms(e: &[f64]) -> f64 {
    (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt()
}

pub fn rmse(preds: &[Point], truths: &[Point]) -> Result<f64> {
    Ok(rms(&errors(preds, truths)?))
}

/// Fraction of samples with error `<= x` meters.
pub fn accuracy_at(preds: &[Point], truths: &[Point], x: f64) -> Result<f64> {
    let e = errors(preds, truths)?;
    Ok(fraction_within(&e, x))
}

fn fraction_within(e: &[f64], x: f64) -> f64 {
    e.iter().filter(|&&v| v <= x).count() as f64 / e.len() as f64
}

/// Error of the closest candidate for every sample.
pub fn min_candidate_errors(candidates: &[Vec<Point>], truths: &[Point]) -> Result<Vec<f64>> {
    check_pair(candidates, truths)?;
    candidates
        .iter()
        .zip(truths)
        .map(|(c, t)| {
            if c.is_empty() {
                return Err(Error::InvalidArgument("empty candidate list".into()));
            }
            Ok(c.iter().map(|p| p.distance(*t)).fold(f64::INFINITY, f64::min))
        })
        .collect()
}

pub fn topk_accuracy(candidates: &[Vec<Point>], truths: &[Point], x: f64) -> Result<f64> {
    Ok(fraction_within(&min_candidate_errors(candidates, truths)?, x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBin {
    pub n: usize,
    pub rmse: f64,
    pub min_uncertainty: usize,
    pub max_uncertainty: usize,
}

/// Sorts by uncertainty (stable) and splits into `n_bins` nearly equal bins,
/// the first `len % n_bins` bins holding one extra sample.
pub fn uncertainty_bins(errors: &[f64], uncertainties: &[usize], n_bins: usize) -> Result<Vec<UncertaintyBin>> {
    check_pair(errors, uncertainties)?;
    if n_bins == 0 || errors.len() < n_bins {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} samples into {n_bins} bins",
            errors.len()
        )));
    }
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by_key(|&i| uncertainties[i]);
    let (base, extra) = (errors.len() / n_bins, errors.len() % n_bins);
    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for b in 0..n_bins {
        let len = base + usize::from(b < extra);
        let idx = &order[start..start + len];
        let e: Vec<f64> = idx.iter().map(|&i| errors[i]).collect();
        bins.push(UncertaintyBin {
            n: len,
            rmse: rms(&e),
            min_uncertainty: uncertainties[idx[0]],
            max_uncertainty: uncertainties[idx[len - 1]],
        });
        start += len;
    }
    Ok(bins)
}

/// 1-based ranks, ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

/// Flat metric table, serialized as a JSON object with sorted keys.
///
/// Keys: `n_{s}`, `rmse_{s}`, `acc@{X}m_{s}` for every subset `s` in
/// `all`, `los`, `nlos` that has samples. Heatmap models add
/// `top5_mean_acc@{X}m_{s}`, `top5_argmax_acc@{X}m_{s}`, `spearman_nlos` and
/// `unc_bin{i}_rmse_nlos`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricReport {
    pub values: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric values are finite")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    fn set(&mut self, key: String, v: f64) {
        // non-finite values cannot be represented in JSON
        if v.is_finite() {
            self.values.insert(key, v);
        }
    }
}

pub fn acc_key(x: f64) -> String {
    format!("acc@{x}m")
}

/// Per-sample evaluation output.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub map_id: String,
    pub bs: usize,
    pub ue: usize,
    pub los: bool,
    pub truth: Point,
    pub pred: Point,
    pub uncertainty: Option<usize>,
    pub top5_mean: Vec<Point>,
    pub top5_argmax: Vec<Point>,
}

impl SampleResult {
    pub fn error(&self) -> f64 {
        self.pred.distance(self.truth)
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub thresholds: Vec<f64>,
    /// Defaults to [`TopKParams::for_image_size`] of the model.
    pub topk: Option<TopKParams>,
    pub n_bins: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            thresholds: DEFAULT_THRESHOLDS_M.to_vec(),
            topk: None,
            n_bins: DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rows: Vec<SampleResult>,
    pub report: MetricReport,
}

impl Evaluation {
    pub fn subset(&self, los: Option<bool>) -> Vec<&SampleResult> {
        self.rows.iter().filter(|r| los.is_none_or(|l| r.los == l)).collect()
    }

    /// NLOS uncertainty bins; `None` without heatmaps or with too few samples.
    pub fn nlos_bins(&self, n_bins: usize) -> Option<Vec<UncertaintyBin>> {
        let rows = self.subset(Some(false));
        let unc: Option<Vec<usize>> = rows.iter().map(|r| r.uncertainty).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.error()).collect();
        uncertainty_bins(&e, &unc?, n_bins).ok()
    }
}

/// Runs the model on `samples` and computes every metric.
pub fn evaluate(model: &TrainedModel, samples: &[Sample], opts: &EvalOptions) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    let preds = model.predict(samples)?;
    let params = opts.topk.unwrap_or_else(|| TopKParams::for_image_size(model.config.image_size));
    let rows: Vec<SampleResult> = samples
        .par_iter()
        .zip(preds.par_iter())
        .map(|(s, p)| {
            let mut row = SampleResult {
                map_id: s.record.map_id.clone(),
                bs: s.record.bs_index,
                ue: s.record.ue_index,
                los: s.los(),
                truth: s.true_location,
                pred: p.point,
                uncertainty: None,
                top5_mean: Vec::new(),
                top5_argmax: Vec::new(),
            };
            if let Some((h, t)) = &p.heatmap {
                row.uncertainty = Some(postprocess::uncertainty(h)?);
                row.top5_mean = postprocess::topk(h, t, TopKMethod::Mean, params)?.candidates;
                row.top5_argmax = postprocess::topk(h, t, TopKMethod::Argmax, params)?.candidates;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let report = report_for(&rows, opts);
    Ok(Evaluation { rows, report })
}

fn report_for(rows: &[SampleResult], opts: &EvalOptions) -> MetricReport {
    let mut r = MetricReport::default();
    let heatmap = rows.iter().all(|x| x.uncertainty.is_some());
    for (name, los) in [("all", None), ("los", Some(true)), ("nlos", Some(false))] {
        let sub: Vec<&SampleResult> = rows.iter().filter(|x| los.is_none_or(|l| x.los == l)).collect();
        r.set(format!("n_{name}"), sub.len() as f64);
        if sub.is_empty() {
            continue;
        }
        let e: Vec<f64> = sub.iter().map(|x| x.error()).collect();
        r.set(format!("rmse_{name}"), rms(&e));
        for &x in &opts.thresholds {
            r.set(format!("{}_{name}", acc_key(x)), fraction_within(&e, x));
        }
        if heatmap {
            for (label, pick) in [("mean", 0), ("argmax", 1)] {
                let cands: Vec<Vec<Point>> = sub
                    .iter()
                    .map(|x| if pick == 0 { x.top5_mean.clone() } else { x.top5_argmax.clone() })
                    .collect();
                let truths: Vec<Point> = sub.iter().map(|x| x.truth).collect();
                if let Ok(me) = min_candidate_errors(&cands, &truths) {
                    for &x in &opts.thresholds {
                        r.set(format!("top5_{label}_{}_{name}", acc_key(x)), fraction_within(&me, x));
                    }
                }
            }
        }
    }
    if heatmap {
        let nlos: Vec<&SampleResult> = rows.iter().filter(|x| !x.los).collect();
        let e: Vec<f64> = nlos.iter().map(|x| x.error()).collect();
        let u: Vec<usize> = nlos.iter().filter_map(|x| x.uncertainty).collect();
        if nlos.len() >= 2 {
            let uf: Vec<f64> = u.iter().map(|&v| v as f64).collect();
            if let Ok(rho) = spearman(&uf, &e) {
                r.set("spearman_nlos".into(), rho);
            }
        }
        if let Ok(bins) = uncertainty_bins(&e, &u, opts.n_bins) {
            for (i, b) in bins.iter().enumerate() {
                r.set(format!("unc_bin{}_rmse_nlos", i + 1), b.rmse);
            }
        }
    }
    r
}

/// Writes the per-sample CSV. Heatmap rows add the uncertainty score and up
/// to five candidates of each top-K method.
pub fn write_predictions_csv(path: &Path, rows: &[SampleResult]) -> Result<()> {
    let heatmap = !rows.is_empty() && rows.iter().all(|r| r.uncertainty.is_some());
    let mut header: Vec<String> = ["map_id", "bs", "ue", "los", "x_true", "y_true", "x_pred", "y_pred"]
        .map(String::from)
        .to_vec();
    if heatmap {
        header.push("uncertainty".into());
        for prefix in ["top5", "top5_argmax"] {
            for k in 1..=postprocess::MAX_MODES {
                header.push(format!("x_{prefix}_{k}"));
                header.push(format!("y_{prefix}_{k}"));
            }
        }
    }
    let err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![
            r.map_id.clone(),
            r.bs.to_string(),
            r.ue.to_string(),
            u8::from(r.los).to_string(),
            r.truth.x.to_string(),
            r.truth.y.to_string(),
            r.pred.x.to_string(),
            r.pred.y.to_string(),
        ];
        if heatmap {
            rec.push(r.uncertainty.map(|u| u.to_string()).unwrap_or_default());
            for cands in [&r.top5_mean, &r.top5_argmax] {
                for k in 0..postprocess::MAX_MODES {
                    match cands.get(k) {
                        Some(p) => rec.extend([p.x.to_string(), p.y.to_string()]),
                        None => rec.extend([String::new(), String::new()]),
                    }
                }
            }
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_predictions_csv`].
pub fn read_predictions_csv(path: &Path) -> Result<Vec<SampleResult>> {
    let err = |m: String| Error::format(path, m);
    let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let header = r.headers().map_err(|e| err(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| err(format!("missing column '{name}'")));
    let base = [
        need("map_id")?,
        need("bs")?,
        need("ue")?,
        need("los")?,
        need("x_true")?,
        need("y_true")?,
        need("x_pred")?,
        need("y_pred")?,
    ];
    let unc = col("uncertainty");
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| err(format!("row {}: bad number '{}'", line + 2, field(i))))
        };
        let int = |i: usize| -> Result<usize> {
            field(i)
                .parse()
                .map_err(|_| err(format!("row {}: bad integer '{}'", line + 2, field(i))))
        };
        let cands = |prefix: &str| -> Result<Vec<Point>> {
            let mut out = Vec::new();
            for k in 1..=postprocess::MAX_MODES {
                if let (Some(x), Some(y)) = (col(&format!("x_{prefix}_{k}")), col(&format!("y_{prefix}_{k}"))) {
                    if !field(x).is_empty() {
                        out.push(Point::new(num(x)?, num(y)?));
                    }
                }
            }
            Ok(out)
        };
        let top5_mean = cands("top5")?;
        let top5_argmax = cands("top5_argmax")?;
        rows.push(SampleResult {
            map_id: field(base[0]).to_string(),
            bs: int(base[1])?,
            ue: int(base[2])?,
            los: int(base[3])? == 1,
            truth: Point::new(num(base[4])?, num(base[5])?),
            pred: Point::new(num(base[6])?, num(base[7])?),
            uncertainty: match unc {
                Some(i) if !field(i).is_empty() => Some(int(i)?),
                _ => None,
            },
            top5_mean,
            top5_argmax,
        });
    }
    Ok(rows)
}

/// Ablation results keyed by variant name.
pub type AblationTable = BTreeMap<String, MetricReport>;

pub fn check_variants(kind: ModelKind, variants: &[Ablation]) -> Result<()> {
    if variants.is_empty() {
        return Err(Error::InvalidArgument("no ablation variants given".into()));
    }
    if !kind.is_heatmap() && variants.contains(&Ablation::NoMap) {
        return Err(Error::InvalidArgument(format!("{kind} does not use the map, so no_map does not apply")));
    }
    Ok(())
}

/// Retrains `kind` once per variant with identical config and evaluates each on `test_set`.
pub fn run_ablation(
    kind: ModelKind,
    train_set: &[Sample],
    val_set: &[Sample],
    test_set: &[Sample],
    variants: &[Ablation],
    config: &TrainConfig,
    opts: &EvalOptions,
) -> Result<AblationTable> {
    check_variants(kind, variants)?;
    let mut table = AblationTable::new();
    for &v in variants {
        let (model, _) = train(kind, train_set, val_set, v.flags(), config)?;
        table.insert(v.as_str().to_string(), evaluate(&model, test_set, opts)?.report);
    }
    Ok(table)
}
