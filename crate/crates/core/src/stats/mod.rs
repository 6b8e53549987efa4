//! Window statistics of trajectories and their correlation with Grad-CAM.

mod msd;
mod window;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::gradcam::{gradcam_trajectories, window_scores, ClassChoice};
use crate::network::Model;
use crate::trajgen::{Dataset, Mechanism, NUM_CLASSES};

pub use msd::{ensemble_msd, log_spaced_lags, loglog_slope};
pub use window::{
    autocorrelation, consistency_raw, cumulants_2_4, diffusivity_trend, minmax_normalize, non_gaussianity_raw,
    pearson, ratio_spread, singularity_raw, turning_angles, turning_spread, variance, varying_diffusivity_raw,
    Window, SG_EPSILON,
};

/// Default number of subintervals inside NG, SG and VD.
pub const DEFAULT_N_SUB: usize = 4;

/// Statistics of one overlapping window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub trajectory_id: usize,
    pub label: Mechanism,
    pub start: usize,
    pub len: usize,
    pub n_sub: usize,
    pub ac: f64,
    pub cs_raw: f64,
    pub ng_raw: f64,
    pub sg_raw: f64,
    pub vd_raw: f64,
    /// AC times the corpus-normalized turning-angle spread.
    pub cs: f64,
    /// Corpus-normalized NG.
    pub ng: f64,
    /// Corpus-normalized ratio spread times normalized NG.
    pub sg: f64,
    /// Diffusivity trend times normalized NG.
    pub vd: f64,
    pub gradcam_score: f64,
}

/// Raw per-window quantities before corpus normalization.
#[derive(Clone, Copy, Debug)]
struct RawWindow {
    ac: f64,
    turning: f64,
    ng: f64,
    ratio: f64,
    trend: f64,
}

fn raw_window(x: &[f64], y: &[f64], n_sub: usize) -> Result<RawWindow> {
    let w = Window::from_positions(x, y)?;
    Ok(RawWindow {
        ac: autocorrelation(&w)?,
        turning: turning_spread(&w),
        ng: non_gaussianity_raw(&w, n_sub)?,
        ratio: ratio_spread(&w)?,
        trend: diffusivity_trend(&w, n_sub)?,
    })
}

/// Per-class Pearson coefficients against the Grad-CAM score. `None` when
/// undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCorrelations {
    pub label: Mechanism,
    pub windows: usize,
    pub ac: Option<f64>,
    pub cs: Option<f64>,
    pub ng: Option<f64>,
    pub sg: Option<f64>,
    pub vd: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub window: usize,
    pub stride: usize,
    pub n_sub: usize,
    pub class_choice: ClassChoice,
    /// Windows are pooled across trajectories of a class.
    pub pooling: String,
    pub per_class: Vec<ClassCorrelations>,
    #[serde(skip)]
    pub windows: Vec<WindowStats>,
}

/// Grad-CAM scores (true class) and statistics for every window of every
/// trajectory, then per-class Pearson coefficients over pooled windows.
/// Trajectories must have exactly the model's input length.
pub fn correlation_report<F: Scalar>(
    model: &Model<F>,
    dataset: &Dataset,
    window: usize,
    stride: usize,
    n_sub: usize,
) -> Result<CorrelationReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("correlation set".into()));
    }
    let len = model.config().input_len;
    if let Some(t) = dataset.iter().find(|t| t.len() != len) {
        return Err(Error::InvalidConfig(format!(
            "correlation analysis needs fixed length {len}, found {}",
            t.len()
        )));
    }
    let choice = ClassChoice::TrueClass;
    let cams = gradcam_trajectories(model, &dataset.trajectories, choice)?;
    let per_traj: Vec<Vec<(usize, usize, f64, RawWindow)>> = dataset
        .trajectories
        .par_iter()
        .zip(&cams)
        .map(|(t, cam)| {
            window_scores(&cam.scores, len, window, stride)?
                .into_iter()
                .map(|ws| {
                    let r = ws.start..ws.start + ws.len;
                    Ok((ws.start, ws.len, ws.score, raw_window(&t.x[r.clone()], &t.y[r], n_sub)?))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let flat: Vec<(usize, &(usize, usize, f64, RawWindow))> = per_traj
        .iter()
        .enumerate()
        .flat_map(|(id, ws)| ws.iter().map(move |w| (id, w)))
        .collect();
    let turning = minmax_normalize(&flat.iter().map(|w| w.1 .3.turning).collect::<Vec<_>>());
    let ng = minmax_normalize(&flat.iter().map(|w| w.1 .3.ng).collect::<Vec<_>>());
    let ratio = minmax_normalize(&flat.iter().map(|w| w.1 .3.ratio).collect::<Vec<_>>());
    let windows: Vec<WindowStats> = flat
        .iter()
        .enumerate()
        .map(|(i, &(id, &(start, wlen, score, raw)))| WindowStats {
            trajectory_id: id,
            label: dataset.trajectories[id].label,
            start,
            len: wlen,
            n_sub,
            ac: raw.ac,
            cs_raw: raw.ac * raw.turning,
            ng_raw: raw.ng,
            sg_raw: raw.ratio * raw.ng,
            vd_raw: raw.trend * raw.ng,
            cs: raw.ac * turning[i],
            ng: ng[i],
            sg: ratio[i] * ng[i],
            vd: raw.trend * ng[i],
            gradcam_score: score,
        })
        .collect();
    let per_class = Mechanism::ALL
        .iter()
        .map(|&label| class_correlations(label, &windows))
        .collect();
    Ok(CorrelationReport {
        window,
        stride,
        n_sub,
        class_choice: choice,
        pooling: "windows pooled per class".into(),
        per_class,
        windows,
    })
}

fn class_correlations(label: Mechanism, windows: &[WindowStats]) -> ClassCorrelations {
    let sel: Vec<&WindowStats> = windows.iter().filter(|w| w.label == label).collect();
    let g: Vec<f64> = sel.iter().map(|w| w.gradcam_score).collect();
    let r = |f: fn(&WindowStats) -> f64| pearson(&sel.iter().map(|w| f(w)).collect::<Vec<_>>(), &g);
    ClassCorrelations {
        label,
        windows: sel.len(),
        ac: r(|w| w.ac),
        cs: r(|w| w.cs),
        ng: r(|w| w.ng),
        sg: r(|w| w.sg),
        vd: r(|w| w.vd),
    }
}

impl CorrelationReport {
    pub fn class(&self, label: Mechanism) -> &ClassCorrelations {
        &self.per_class[label.index()]
    }

    /// `trajectory_id,class,start,AC,CS,NG,SG,VD,G` records after a header.
    pub fn write_windows<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "trajectory_id,class,start,AC,CS,NG,SG,VD,G")?;
        for w in &self.windows {
            writeln!(
                out,
                "{},{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
                w.trajectory_id, w.label, w.start, w.ac, w.cs, w.ng, w.sg, w.vd, w.gradcam_score
            )?;
        }
        Ok(())
    }

    /// Class-by-statistic matrix of AC, CS, SG and VD coefficients; absent
    /// values are written empty.
    pub fn write_matrix<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "class,AC,CS,SG,VD")?;
        let cell = |v: Option<f64>| v.map(|r| format!("{r:?}")).unwrap_or_default();
        for c in &self.per_class {
            writeln!(out, "{},{},{},{},{}", c.label, cell(c.ac), cell(c.cs), cell(c.sg), cell(c.vd))?;
        }
        debug_assert_eq!(self.per_class.len(), NUM_CLASSES);
        Ok(())
    }
}
