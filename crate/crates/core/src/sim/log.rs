//! Run logs, summary metrics and file export.
//!
//! `run.jsonl` holds one [`TickRecord`] per 200 Hz tick. `metrics.json` holds
//! [`Metrics`]. `traces.csv` has the columns of [`TRACE_COLUMNS`] in that order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cio_filter::FilterState;
use crate::reactive_planner::ReferenceVelocity;
use crate::vehicle_model::{ControlWrench, RigidState, Vec3};
use crate::wrench_estimator::{ContactEvent, EncoderSample, ImuSample, WrenchEstimate};

use super::config::Mode;
use super::environment::ContactRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub r: [f64; 3],
    /// World frame.
    pub v: [f64; 3],
    /// `[w, i, j, k]`, body to world.
    pub q: [f64; 4],
    pub omega: [f64; 3],
    pub gamma: [f64; 2],
}

impl From<&RigidState> for TruthRecord {
    fn from(s: &RigidState) -> Self {
        let q = s.q.quaternion();
        Self {
            r: s.r.into(),
            v: s.world_velocity().into(),
            q: [q.w, q.i, q.j, q.k],
            omega: s.omega.into(),
            gamma: [s.gamma_l, s.gamma_r],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub r: [f64; 3],
    /// World frame.
    pub v: [f64; 3],
    pub q: [f64; 4],
    pub p_diag: Vec<f64>,
    pub velocity_trace: f64,
}

impl From<&FilterState> for FilterRecord {
    fn from(f: &FilterState) -> Self {
        let q = f.q.quaternion();
        Self {
            r: f.r.into(),
            v: f.world_velocity().into(),
            q: [q.w, q.i, q.j, q.k],
            p_diag: f.p.diagonal().iter().copied().collect(),
            velocity_trace: f.velocity_trace(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrenchRecord {
    pub force: [f64; 3],
    pub moment: [f64; 3],
    pub wheel: [f64; 2],
}

impl From<&WrenchEstimate> for WrenchRecord {
    fn from(e: &WrenchEstimate) -> Self {
        Self {
            force: e.force.into(),
            moment: e.moment.into(),
            wheel: [e.wheel_l, e.wheel_r],
        }
    }
}

/// A contact pseudo-measurement applied to the CIO filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    /// Time of the detection this update answers.
    pub event_t: f64,
    /// Force estimate used, body frame.
    pub force: [f64; 3],
    pub trace_before: f64,
    pub trace_after: f64,
    /// Estimated world velocity before and after, and the true one.
    pub v_before: [f64; 3],
    pub v_after: [f64; 3],
    pub v_true: [f64; 3],
}

impl UpdateRecord {
    fn error(v: &[f64; 3], truth: &[f64; 3]) -> Vec3 {
        Vec3::from(*v) - Vec3::from(*truth)
    }

    pub fn error_before(&self) -> Vec3 {
        Self::error(&self.v_before, &self.v_true)
    }

    pub fn error_after(&self) -> Vec3 {
        Self::error(&self.v_after, &self.v_true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsContact {
    pub t: f64,
    #[serde(flatten)]
    pub record: ContactRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub truth: TruthRecord,
    pub imu: Option<ImuSample>,
    pub encoder: Option<EncoderSample>,
    pub wrench: WrenchRecord,
    pub metric: f64,
    pub cio: Option<FilterRecord>,
    pub shadow: Option<FilterRecord>,
    pub v_ref: [f64; 3],
    pub control: ControlWrench,
    pub drive_force: f64,
    pub event: Option<ContactEvent>,
    pub update: Option<UpdateRecord>,
    pub reference: Option<ReferenceVelocity>,
    pub contacts: Vec<PhysicsContact>,
    /// Largest no-slip residual over the dynamics steps since the previous tick.
    pub constraint_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub name: String,
    pub mode: Mode,
    pub seed: Option<u64>,
    pub ticks: Vec<TickRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub name: String,
    pub mode: Mode,
    pub seed: Option<u64>,
    pub duration: f64,
    pub ticks: usize,
    pub physics_contacts: usize,
    pub contact_events: usize,
    pub filter_updates: usize,
    pub cio_max_velocity_error: Option<f64>,
    pub cio_max_horizontal_error: Option<f64>,
    pub shadow_max_velocity_error: Option<f64>,
    pub shadow_max_horizontal_error: Option<f64>,
    /// First time the prediction-only velocity error norm exceeds 2 m/s.
    pub shadow_time_to_2ms: Option<f64>,
    pub final_position: [f64; 3],
    pub max_constraint_residual: Option<f64>,
}

fn velocity_error(f: &Option<FilterRecord>, truth: &TruthRecord) -> Option<Vec3> {
    f.as_ref().map(|f| Vec3::from(f.v) - Vec3::from(truth.v))
}

impl RunLog {
    pub fn cio_errors(&self) -> impl Iterator<Item = (f64, Vec3)> + '_ {
        self.ticks
            .iter()
            .filter_map(|k| velocity_error(&k.cio, &k.truth).map(|e| (k.t, e)))
    }

    pub fn shadow_errors(&self) -> impl Iterator<Item = (f64, Vec3)> + '_ {
        self.ticks
            .iter()
            .filter_map(|k| velocity_error(&k.shadow, &k.truth).map(|e| (k.t, e)))
    }

    pub fn events(&self) -> impl Iterator<Item = &ContactEvent> + '_ {
        self.ticks.iter().filter_map(|k| k.event.as_ref())
    }

    pub fn updates(&self) -> impl Iterator<Item = &UpdateRecord> + '_ {
        self.ticks.iter().filter_map(|k| k.update.as_ref())
    }

    pub fn contacts(&self) -> impl Iterator<Item = &PhysicsContact> + '_ {
        self.ticks.iter().flat_map(|k| k.contacts.iter())
    }

    pub fn metrics(&self) -> Metrics {
        let max = |it: &mut dyn Iterator<Item = f64>| it.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
        let last = self.ticks.last();
        Metrics {
            name: self.name.clone(),
            mode: self.mode,
            seed: self.seed,
            duration: last.map_or(0.0, |k| k.t),
            ticks: self.ticks.len(),
            physics_contacts: self.contacts().count(),
            contact_events: self.events().count(),
            filter_updates: self.updates().count(),
            cio_max_velocity_error: max(&mut self.cio_errors().map(|(_, e)| e.norm())),
            cio_max_horizontal_error: max(&mut self.cio_errors().map(|(_, e)| e.xy().norm())),
            shadow_max_velocity_error: max(&mut self.shadow_errors().map(|(_, e)| e.norm())),
            shadow_max_horizontal_error: max(&mut self.shadow_errors().map(|(_, e)| e.xy().norm())),
            shadow_time_to_2ms: self.shadow_errors().find(|(_, e)| e.norm() > 2.0).map(|(t, _)| t),
            final_position: last.map_or([0.0; 3], |k| k.truth.r),
            max_constraint_residual: max(&mut self.ticks.iter().filter_map(|k| k.constraint_residual)),
        }
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for tick in &self.ticks {
            serde_json::to_writer(&mut out, tick)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut s = String::new();
        for tick in &self.ticks {
            s.push_str(&serde_json::to_string(tick).expect("tick serializes"));
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(TRACE_COLUMNS)?;
        for k in &self.ticks {
            let nan3 = [f64::NAN; 3];
            let cio = k.cio.as_ref().map_or(nan3, |f| f.v);
            let shadow = k.shadow.as_ref().map_or(nan3, |f| f.v);
            let row: Vec<f64> = [k.t]
                .iter()
                .chain(&k.truth.r)
                .chain(&k.truth.v)
                .chain(&cio)
                .chain(&shadow)
                .chain(&k.wrench.force)
                .chain([k.metric, k.event.is_some() as u8 as f64, k.update.is_some() as u8 as f64].iter())
                .copied()
                .collect();
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-axis velocity errors of both filters, one row per tick.
    pub fn write_comparison_csv(&self, path: &Path) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(COMPARISON_COLUMNS)?;
        for k in &self.ticks {
            let nan = Vec3::repeat(f64::NAN);
            let c = velocity_error(&k.cio, &k.truth).unwrap_or(nan);
            let s = velocity_error(&k.shadow, &k.truth).unwrap_or(nan);
            let row = [k.t, c.x, c.y, c.z, s.x, s.y, s.z];
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const TRACE_COLUMNS: [&str; 19] = [
    "t", "x", "y", "z", "vx", "vy", "vz", "cio_vx", "cio_vy", "cio_vz", "shadow_vx", "shadow_vy",
    "shadow_vz", "fx_hat", "fy_hat", "fz_hat", "metric", "event", "update",
];

pub const COMPARISON_COLUMNS: [&str; 7] = [
    "t", "cio_err_x", "cio_err_y", "cio_err_z", "shadow_err_x", "shadow_err_y", "shadow_err_z",
];

pub fn write_metrics(metrics: &Metrics, path: &Path) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    std::fs::write(path, text + "\n")
}
