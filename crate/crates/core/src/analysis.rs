//! Structure of per-pixel output responses: normalised autocorrelation
//! between response components and the explained-variance spectrum of
//! their covariance.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::heads::{argmax, class_scores};
use crate::model::SegNet;
use crate::par::Exec;
use crate::report::{escape, line_chart_svg, Series};
use crate::tensor::Tensor;

/// Rows of `k`-dimensional response vectors in class order. Implicit
/// background heads contribute their augmented vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    pub k: usize,
    pub rows: Vec<f64>,
}

impl ResponseMatrix {
    pub fn from_rows(k: usize, rows: Vec<f64>) -> Result<Self> {
        if k == 0 || rows.len() % k != 0 {
            return Err(Error::usage(format!("{} values do not form rows of {k}", rows.len())));
        }
        Ok(ResponseMatrix { k, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.k..(i + 1) * self.k]
    }
}

/// Collects the response of every pixel, or only of pixels predicted as
/// `class_filter`, in image then row-major order.
pub fn gather_responses(net: &SegNet, images: &[Tensor], class_filter: Option<usize>, exec: Exec) -> Result<ResponseMatrix> {
    let k = net.num_classes;
    if let Some(c) = class_filter {
        if c >= k {
            return Err(Error::usage(format!("class filter {c} out of range for {k} classes")));
        }
    }
    let parts = exec.map(images, |img| -> Result<Vec<f64>> {
        let logits = net.forward(img)?;
        let c = logits.logits().shape()[2];
        let mut scores = vec![0.0; k];
        let mut rows = Vec::new();
        for v in logits.logits().data().chunks(c) {
            class_scores(net.head, v, &mut scores);
            if class_filter.is_none_or(|f| argmax(&scores) == f) {
                rows.extend_from_slice(&scores);
            }
        }
        Ok(rows)
    });
    let mut rows = Vec::new();
    for p in parts {
        rows.extend(p?);
    }
    ResponseMatrix::from_rows(k, rows)
}

/// `k × k` matrix with zero-norm columns flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct Autocorrelation {
    pub k: usize,
    pub values: Vec<f64>,
    pub zero_columns: Vec<bool>,
}

impl Autocorrelation {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.k + b]
    }

    /// Mean `|R[c][b]|` over `b != c`.
    pub fn off_diagonal_mean(&self, c: usize) -> f64 {
        let total: f64 = (0..self.k).filter(|&b| b != c).map(|b| self.get(c, b).abs()).sum();
        total / (self.k - 1).max(1) as f64
    }
}

fn column_means(v: &ResponseMatrix) -> Vec<f64> {
    let mut m = vec![0.0; v.k];
    for i in 0..v.len() {
        for (a, x) in m.iter_mut().zip(v.row(i)) {
            *a += x;
        }
    }
    let n = v.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// `Σ (v_a − m_a)(v_b − m_b)` over rows; `m` is zero when uncentred.
fn scatter(v: &ResponseMatrix, centered: bool) -> Vec<f64> {
    let k = v.k;
    let means = if centered { column_means(v) } else { vec![0.0; k] };
    let mut s = vec![0.0; k * k];
    let mut d = vec![0.0; k];
    for i in 0..v.len() {
        for ((o, x), m) in d.iter_mut().zip(v.row(i)).zip(&means) {
            *o = x - m;
        }
        for a in 0..k {
            for b in a..k {
                s[a * k + b] += d[a] * d[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            s[a * k + b] = s[b * k + a];
        }
    }
    s
}

/// `R_ab = Σ V_a V_b / sqrt(Σ V_a² Σ V_b²)`, on raw responses by default or
/// on mean-centred ones.
pub fn autocorrelation(v: &ResponseMatrix, centered: bool) -> Result<Autocorrelation> {
    if v.len() < 2 {
        return Err(Error::usage(format!("autocorrelation needs at least 2 rows, got {}", v.len())));
    }
    let k = v.k;
    let s = scatter(v, centered);
    let zero_columns: Vec<bool> = (0..k).map(|a| s[a * k + a] == 0.0).collect();
    let mut values = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            if !zero_columns[a] && !zero_columns[b] {
                let r = s[a * k + b] / (s[a * k + a] * s[b * k + b]).sqrt();
                values[a * k + b] = r.clamp(-1.0, 1.0);
            }
        }
    }
    Ok(Autocorrelation { k, values, zero_columns })
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// descending.
pub fn symmetric_eigenvalues(matrix: &[f64], k: usize) -> Vec<f64> {
    let mut a = matrix.to_vec();
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for p in 0..k {
            for q in 0..k {
                if p != q {
                    s += a[p * k + q] * a[p * k + q];
                }
            }
        }
        s.sqrt()
    };
    for _sweep in 0..100 {
        if off(&a) <= 1e-12 * norm.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = a[p * k + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * k + q] - a[p * k + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let (arp, arq) = (a[r * k + p], a[r * k + q]);
                    a[r * k + p] = c * arp - s * arq;
                    a[r * k + q] = s * arp + c * arq;
                }
                for r in 0..k {
                    let (apr, aqr) = (a[p * k + r], a[q * k + r]);
                    a[p * k + r] = c * apr - s * aqr;
                    a[q * k + r] = s * apr + c * aqr;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..k).map(|i| a[i * k + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvCurve {
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Running share of total variance; ends at 1.
    pub accumulated: Vec<f64>,
}

/// Spectrum of the sample covariance, mean-centred unless `centered` is
/// false.
pub fn explained_variance(v: &ResponseMatrix, centered: bool) -> Result<EvCurve> {
    if v.len() < v.k + 1 {
        return Err(Error::usage(format!(
            "explained variance needs at least {} rows, got {}",
            v.k + 1,
            v.len()
        )));
    }
    let denom = if centered { v.len() - 1 } else { v.len() } as f64;
    let cov: Vec<f64> = scatter(v, centered).into_iter().map(|x| x / denom).collect();
    let eigenvalues: Vec<f64> = symmetric_eigenvalues(&cov, v.k).into_iter().map(|e| e.max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let mut run = 0.0;
    let accumulated = eigenvalues
        .iter()
        .map(|e| {
            run += e;
            if total > 0.0 {
                (run / total).min(1.0)
            } else {
                1.0
            }
        })
        .collect();
    Ok(EvCurve {
        eigenvalues,
        accumulated,
    })
}

/// Smallest number of components whose accumulated share reaches
/// `threshold`.
pub fn effective_dim(curve: &EvCurve, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::usage(format!("threshold {threshold} must lie in (0, 1)")));
    }
    Ok(curve
        .accumulated
        .iter()
        .position(|&a| a >= threshold - 1e-12)
        .map_or(curve.accumulated.len(), |i| i + 1))
}

/// Per class: the mean absolute off-diagonal autocorrelation of that
/// class's component, over pixels predicted as that class. `None` when
/// fewer than two pixels are predicted as the class.
pub fn class_orthogonality(net: &SegNet, images: &[Tensor], exec: Exec) -> Result<Vec<Option<f64>>> {
    (0..net.num_classes)
        .map(|c| {
            let v = gather_responses(net, images, Some(c), exec)?;
            if v.len() < 2 {
                return Ok(None);
            }
            Ok(Some(autocorrelation(&v, false)?.off_diagonal_mean(c)))
        })
        .collect()
}

pub fn matrix_csv(r: &Autocorrelation) -> String {
    let mut out = String::from("row");
    for b in 0..r.k {
        let _ = write!(out, ",c{b}");
    }
    out.push('\n');
    for a in 0..r.k {
        let _ = write!(out, "c{a}");
        for b in 0..r.k {
            let _ = write!(out, ",{}", r.get(a, b));
        }
        out.push('\n');
    }
    out
}

pub fn ev_csv(curve: &EvCurve) -> String {
    let mut out = String::from("component,eigenvalue,accumulated\n");
    for (i, (e, a)) in curve.eigenvalues.iter().zip(&curve.accumulated).enumerate() {
        let _ = writeln!(out, "{},{e},{a}", i + 1);
    }
    out
}

/// Blue-white-red heatmap of a `[-1, 1]` matrix.
pub fn heatmap_svg(r: &Autocorrelation, title: &str) -> String {
    let cell = 32.0;
    let margin = 40.0;
    let side = margin + cell * r.k as f64 + 10.0;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{side}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"{margin}\" y=\"16\">{}</text>\n",
        side + 10.0,
        escape(title)
    );
    for a in 0..r.k {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{a}</text>\n<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{a}</text>",
            margin - 4.0,
            margin + cell * (a as f64 + 0.6),
            margin + cell * (a as f64 + 0.5),
            margin - 4.0
        );
        for b in 0..r.k {
            let v = r.get(a, b);
            let fade = (255.0 * (1.0 - v.abs())).round() as u8;
            let fill = if v >= 0.0 {
                format!("rgb(255,{fade},{fade})")
            } else {
                format!("rgb({fade},{fade},255)")
            };
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\"><title>{v:.3}</title></rect>",
                margin + cell * b as f64,
                margin + cell * a as f64
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Accumulated explained variance, one line per named curve.
pub fn ev_svg(curves: &[(String, EvCurve)]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|(name, c)| Series {
            name: name.clone(),
            points: c.accumulated.iter().enumerate().map(|(i, a)| ((i + 1) as f64, *a)).collect(),
            dashed: false,
        })
        .collect();
    line_chart_svg("Accumulated explained variance", "components", "explained variance", &series)
}
