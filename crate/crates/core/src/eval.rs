//! Episode rollouts under a controller/switcher pair, tracking metrics, and
//! paired multi-seed comparisons.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::controllers::{
    noisy_switch, oracle_switch, random_switch, system_action, CameraMemory, Controller,
    ControllerKind, PolicyMode, PoseMessage, SwitchLabel,
};
use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Point3};
use crate::learn::PolicyParams;
use crate::shell::config::EpisodeConfig;
use crate::shell::rng::{streams, RngStream};
use crate::world::{spawn_episode, Action, Visibility};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwitcherKind {
    Oracle,
    /// Label 0 with the given probability, independent of visibility.
    Random(f64),
    /// Oracle label flipped with the given probability.
    Noisy(f64),
}

impl SwitcherKind {
    pub fn label(self, vis: Visibility, rng: &mut RngStream) -> SwitchLabel {
        match self {
            SwitcherKind::Oracle => oracle_switch(vis),
            SwitcherKind::Random(p) => random_switch(rng, p),
            SwitcherKind::Noisy(eps) => noisy_switch(vis, rng, eps),
        }
    }

    pub fn name(self) -> String {
        match self {
            SwitcherKind::Oracle => "oracle".into(),
            SwitcherKind::Random(p) => format!("random:{p}"),
            SwitcherKind::Noisy(e) => format!("noisy:{e}"),
        }
    }
}

impl std::str::FromStr for SwitcherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::validation("switcher", m);
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let prob = |arg: Option<&str>, hi: f64| -> Result<f64> {
            let a =
                arg.ok_or_else(|| bad(format!("`{kind}` needs a probability, e.g. {kind}:0.1")))?;
            let p: f64 = a
                .parse()
                .map_err(|_| bad(format!("`{a}` is not a number")))?;
            if (0.0..=hi).contains(&p) {
                Ok(p)
            } else {
                Err(bad(format!("{kind} probability {p} outside [0, {hi}]")))
            }
        };
        match (kind, arg) {
            ("oracle", None) => Ok(SwitcherKind::Oracle),
            ("random", a) => Ok(SwitcherKind::Random(prob(a, 1.0)?)),
            ("noisy", a) => Ok(SwitcherKind::Noisy(prob(a, 0.5)?)),
            _ => Err(bad(format!(
                "unknown switcher `{s}` (oracle|random:P|noisy:E)"
            ))),
        }
    }
}

/// A complete camera system under evaluation.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub controller: ControllerKind,
    pub switcher: SwitcherKind,
    pub params: Option<Arc<PolicyParams>>,
    pub policy_mode: PolicyMode,
}

impl SystemSpec {
    pub fn new(controller: ControllerKind, switcher: SwitcherKind) -> Self {
        Self {
            controller,
            switcher,
            params: None,
            policy_mode: PolicyMode::default(),
        }
    }

    pub fn with_params(mut self, params: Arc<PolicyParams>) -> Self {
        self.params = Some(params);
        self
    }

    pub fn name(&self) -> String {
        match self.switcher {
            SwitcherKind::Oracle => self.controller.name().to_string(),
            s => format!("{}/{}", self.controller.name(), s.name()),
        }
    }

    fn controller(&self) -> Result<Controller<'_>> {
        Ok(match self.controller {
            ControllerKind::Virtual => Controller::Virtual,
            ControllerKind::Geometric => Controller::Geometric,
            ControllerKind::Sv => Controller::Sv,
            ControllerKind::Learned => Controller::Learned {
                params: self.params.as_deref().ok_or_else(|| {
                    Error::Contract("learned controller requires policy parameters".into())
                })?,
                mode: self.policy_mode,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraRecord {
    pub pose: CameraPose,
    pub action: Action,
    pub visibility: Visibility,
    pub label: SwitchLabel,
    pub reward: f64,
    pub d_alpha: f64,
    pub d_beta: f64,
    pub d_xi: f64,
}

/// Everything that happened on one step, measured after the step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub cameras: Vec<CameraRecord>,
    pub target: Point3,
}

pub fn run_episode(
    config: &EpisodeConfig,
    system: &SystemSpec,
    seed: u64,
    steps: usize,
) -> Result<Vec<StepRecord>> {
    let controller = system.controller()?;
    let mut world = spawn_episode(config, seed)?;
    let mut target_rng = RngStream::new(seed, streams::TARGET);
    let mut switch_rng = RngStream::new(seed, streams::SWITCHER);
    let mut policy_rng = RngStream::new(seed, streams::POLICY);
    let n = world.n_cameras();
    let mut memories = vec![CameraMemory::default(); n];
    let mut vis: Vec<Visibility> = (0..n)
        .map(|i| crate::world::visibility_of(&world, i))
        .collect();

    let mut records = Vec::with_capacity(steps);
    for _ in 0..steps {
        let messages: Vec<PoseMessage> = (0..n)
            .map(|i| PoseMessage {
                index: i,
                pose: world.cameras[i],
                label: system.switcher.label(vis[i], &mut switch_rng),
            })
            .collect();
        let target = world.target.position();
        let actions = (0..n)
            .map(|i| {
                system_action(
                    i,
                    vis[i],
                    &messages,
                    &target,
                    controller,
                    &mut memories[i],
                    world.arena_half,
                    &mut policy_rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let outcomes = world.step_mut(config, &actions, &mut target_rng)?;
        vis = outcomes.iter().map(|o| o.visibility).collect();
        records.push(StepRecord {
            t: world.t,
            cameras: (0..n)
                .map(|i| CameraRecord {
                    pose: world.cameras[i],
                    action: actions[i],
                    visibility: outcomes[i].visibility,
                    label: messages[i].label,
                    reward: outcomes[i].reward,
                    d_alpha: outcomes[i].d_alpha,
                    d_beta: outcomes[i].d_beta,
                    d_xi: outcomes[i].d_xi,
                })
                .collect(),
            target: world.target.position(),
        });
    }
    Ok(records)
}

fn camera_count(records: &[StepRecord]) -> Result<usize> {
    let first = records
        .first()
        .ok_or_else(|| Error::Contract("metrics need at least one step record".into()))?;
    let n = first.cameras.len();
    if n == 0 || records.iter().any(|r| r.cameras.len() != n) {
        return Err(Error::Contract(
            "inconsistent camera count across records".into(),
        ));
    }
    Ok(n)
}

/// Per-camera time average of `(d_alpha + d_beta) / 2`.
pub fn per_camera_mean_error(records: &[StepRecord]) -> Result<Vec<f64>> {
    let n = camera_count(records)?;
    let steps = records.len() as f64;
    Ok((0..n)
        .map(|i| {
            records
                .iter()
                .map(|r| (r.cameras[i].d_alpha + r.cameras[i].d_beta) / 2.0)
                .sum::<f64>()
                / steps
        })
        .collect())
}

/// Per-camera fraction of steps with the target inside the field of view.
pub fn per_camera_success_rate(records: &[StepRecord]) -> Result<Vec<f64>> {
    let n = camera_count(records)?;
    let steps = records.len() as f64;
    Ok((0..n)
        .map(|i| {
            records
                .iter()
                .filter(|r| r.cameras[i].visibility != Visibility::OutOfView)
                .count() as f64
                / steps
        })
        .collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// System mean angular error in degrees.
pub fn mean_error(records: &[StepRecord]) -> Result<f64> {
    per_camera_mean_error(records).map(|v| mean(&v))
}

pub fn success_rate(records: &[StepRecord]) -> Result<f64> {
    per_camera_success_rate(records).map(|v| mean(&v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub camera_mean_error: Vec<f64>,
    pub camera_success_rate: Vec<f64>,
    pub mean_error: f64,
    pub success_rate: f64,
    pub steps: usize,
}

impl EpisodeReport {
    pub fn from_records(records: &[StepRecord]) -> Result<Self> {
        let camera_mean_error = per_camera_mean_error(records)?;
        let camera_success_rate = per_camera_success_rate(records)?;
        Ok(Self {
            mean_error: mean(&camera_mean_error),
            success_rate: mean(&camera_success_rate),
            camera_mean_error,
            camera_success_rate,
            steps: records.len(),
        })
    }
}

/// Sample mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let m = mean(xs);
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean: m, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemRow {
    pub name: String,
    pub camera_mean_error: Vec<Stat>,
    pub camera_success_rate: Vec<Stat>,
    pub mean_error: Stat,
    pub success_rate: Stat,
    pub reports: Vec<EpisodeReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub rows: Vec<SystemRow>,
}

/// Runs every system on the same seeds and aggregates the metrics.
pub fn compare_systems(
    config: &EpisodeConfig,
    systems: &[SystemSpec],
    seeds: &[u64],
    steps: usize,
) -> Result<ComparisonTable> {
    if seeds.is_empty() {
        return Err(Error::Contract("comparison needs at least one seed".into()));
    }
    let rows = systems
        .iter()
        .map(|system| {
            let reports = seeds
                .par_iter()
                .map(|&seed| {
                    EpisodeReport::from_records(&run_episode(config, system, seed, steps)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let n = config.n_cameras;
            let column = |f: &dyn Fn(&EpisodeReport) -> f64| {
                Stat::of(&reports.iter().map(f).collect::<Vec<_>>())
            };
            Ok(SystemRow {
                name: system.name(),
                camera_mean_error: (0..n)
                    .map(|i| column(&|r| r.camera_mean_error[i]))
                    .collect(),
                camera_success_rate: (0..n)
                    .map(|i| column(&|r| r.camera_success_rate[i]))
                    .collect(),
                mean_error: column(&|r| r.mean_error),
                success_rate: column(&|r| r.success_rate),
                reports,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonTable {
        seeds: seeds.to_vec(),
        steps,
        rows,
    })
}

impl ComparisonTable {
    /// Aligned plain-text table: mean error in degrees and success rate in
    /// percent, each as mean ± std over seeds.
    pub fn to_text(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.camera_mean_error.len());
        let name_w = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = String::new();
        let _ = writeln!(out, "{} seeds x {} steps", self.seeds.len(), self.steps);
        for (title, pick, scale) in [
            ("Mean Error (deg)", 0usize, 1.0),
            ("Success Rate (%)", 1usize, 100.0),
        ] {
            let _ = writeln!(out, "\n{title}");
            let _ = write!(out, "{:<name_w$}", "system");
            for i in 0..n {
                let _ = write!(out, " {:>15}", format!("cam{i}"));
            }
            let _ = writeln!(out, " {:>15}", "all");
            for row in &self.rows {
                let (cams, all) = if pick == 0 {
                    (&row.camera_mean_error, row.mean_error)
                } else {
                    (&row.camera_success_rate, row.success_rate)
                };
                let _ = write!(out, "{:<name_w$}", row.name);
                for s in cams.iter().chain(std::iter::once(&all)) {
                    let cell = format!("{:.2} ± {:.2}", s.mean * scale, s.std * scale);
                    let _ = write!(out, " {cell:>15}");
                }
                let _ = writeln!(out);
            }
        }
        out
    }

    /// One section per system: a row per camera plus an `all` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "system,camera,mean_error_mean,mean_error_std,success_rate_mean,success_rate_std,n_seeds\n",
        );
        let n_seeds = self.seeds.len();
        for row in &self.rows {
            let cams = row
                .camera_mean_error
                .iter()
                .zip(&row.camera_success_rate)
                .enumerate()
                .map(|(i, (e, s))| (i.to_string(), *e, *s));
            let all = std::iter::once(("all".to_string(), row.mean_error, row.success_rate));
            for (cam, e, s) in cams.chain(all) {
                let _ = writeln!(
                    out,
                    "{},{},{:.9},{:.9},{:.9},{:.9},{}",
                    row.name, cam, e.mean, e.std, s.mean, s.std, n_seeds
                );
            }
        }
        out
    }
}
