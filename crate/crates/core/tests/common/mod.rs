//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use camtrack::controllers::{PoseMessage, SwitchLabel};
use camtrack::eval::StepRecord;
use camtrack::geometry::{bearing_to, CameraPose, Obstacle, Point3};
use camtrack::learn::{backward, forward, init_params, PolicyParams, PoseObservation, TUPLE_DIM};
use camtrack::world::{apply_action, Action, TARGET_HEIGHT};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SAMPLES: usize = 1000;

fn inside(p: [f64; 3], o: &Obstacle) -> bool {
    p[0] >= o.min[0]
        && p[0] <= o.max[0]
        && p[1] >= o.min[1]
        && p[1] <= o.max[1]
        && p[2] >= 0.0
        && p[2] <= o.height
}

fn at(p0: &Point3, p1: &Point3, t: f64) -> [f64; 3] {
    [
        p0.x + t * (p1.x - p0.x),
        p0.y + t * (p1.y - p0.y),
        p0.z + t * (p1.z - p0.z),
    ]
}

/// Evenly spaced containment sampler, endpoints included.
pub fn sampled_hit(p0: &Point3, p1: &Point3, o: &Obstacle) -> bool {
    (0..SAMPLES).any(|k| inside(at(p0, p1, k as f64 / (SAMPLES - 1) as f64), o))
}

fn box_distance(p: [f64; 3], o: &Obstacle) -> f64 {
    let lo = [o.min[0], o.min[1], 0.0];
    let hi = [o.max[0], o.max[1], o.height];
    (0..3)
        .map(|a| (lo[a] - p[a]).max(0.0).max(p[a] - hi[a]))
        .map(|d| d * d)
        .sum::<f64>()
        .sqrt()
}

/// Minimum Euclidean distance from the segment to the box. The distance is
/// convex along the segment, so golden-section search converges.
pub fn segment_box_distance(p0: &Point3, p1: &Point3, o: &Obstacle) -> f64 {
    let f = |t: f64| box_distance(at(p0, p1, t), o);
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    let r = (5.0_f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b)).min(f(0.0)).min(f(1.0))
}

fn ray_cost(messages: &[PoseMessage], p: [f64; 2]) -> f64 {
    messages
        .iter()
        .filter(|m| m.label.g() == 1)
        .map(|m| {
            let (s, c) = m.pose.yaw_deg.to_radians().sin_cos();
            let (dx, dy) = (p[0] - m.pose.position.x, p[1] - m.pose.position.y);
            let perp = dx * s - dy * c;
            perp * perp
        })
        .sum()
}

/// Minimizer of the summed squared perpendicular distance to the ground-plane
/// lines of the g = 1 cameras, by repeated grid refinement.
pub fn grid_minimizer(messages: &[PoseMessage], center: [f64; 2], half_width: f64) -> [f64; 2] {
    const N: i32 = 10;
    let mut c = center;
    let mut w = half_width;
    for _ in 0..80 {
        let mut best = (f64::INFINITY, c);
        for i in -N..=N {
            for j in -N..=N {
                let p = [
                    c[0] + w * i as f64 / N as f64,
                    c[1] + w * j as f64 / N as f64,
                ];
                let v = ray_cost(messages, p);
                if v < best.0 {
                    best = (v, p);
                }
            }
        }
        c = best.1;
        w *= 0.5;
    }
    c
}

fn yaw_pitch_error(pose: &CameraPose, target: &Point3) -> (f64, f64) {
    let (dx, dy, dz) = (
        target.x - pose.position.x,
        target.y - pose.position.y,
        target.z - pose.position.z,
    );
    let yaw = dy.atan2(dx).to_degrees();
    let pitch = dz.atan2(dx.hypot(dy)).to_degrees();
    let mut d_yaw = (yaw - pose.yaw_deg) % 360.0;
    if d_yaw > 180.0 {
        d_yaw -= 360.0;
    } else if d_yaw < -180.0 {
        d_yaw += 360.0;
    }
    ((pitch - pose.pitch_deg).abs(), d_yaw.abs())
}

/// Exhaustive one-step search over the action set on the tracker objective.
pub fn brute_tracker(pose: &CameraPose, target: &Point3) -> Action {
    let distance = pose.position.distance(target);
    let want = (distance / 6.0).clamp(1.0, 3.3);
    let mut best = (f64::INFINITY, Action::KeepStill);
    for a in Action::ALL {
        let next = apply_action(pose, a);
        let (da, db) = yaw_pitch_error(&next, target);
        let cost = da / 30.0 + db / 45.0 + (next.zoom - want).abs() / 2.3;
        if cost < best.0 {
            best = (cost, a);
        }
    }
    best.1
}

/// Time-major double sum of the per-step error, over all camera-steps at once.
pub fn resummed_mean_error(records: &[StepRecord]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in records.iter().rev() {
        for c in r.cameras.iter().rev() {
            total += (c.d_alpha + c.d_beta) / 2.0;
            count += 1;
        }
    }
    total / count as f64
}

pub fn resummed_success_rate(records: &[StepRecord]) -> f64 {
    let n = records[0].cameras.len();
    let steps = records.len();
    let mut hits = 0usize;
    for i in 0..n {
        for r in records {
            if r.cameras[i].visibility != camtrack::world::Visibility::OutOfView {
                hits += 1;
            }
        }
    }
    hits as f64 / (n * steps) as f64
}

/// The actor-critic loss evaluated directly from a forward pass.
pub fn loss(
    params: &PolicyParams,
    obs: &PoseObservation,
    action: usize,
    advantage: f64,
    target: f64,
    entropy_coeff: f64,
    value_coeff: f64,
) -> f64 {
    let out = forward(params, obs).unwrap();
    let lp = out.cache.log_probs;
    let entropy: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
    -lp[action] * advantage + value_coeff * (out.value - target).powi(2) - entropy_coeff * entropy
}

/// Largest relative discrepancy between analytic and central-difference
/// gradients; `floor` guards the denominator for near-zero entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub const H: f64 = 1e-5;
/// Central differences carry roundoff near `eps * |L| / H` (about 1e-10 here);
/// smaller entries are compared against this floor instead.
pub const FLOOR: f64 = 1e-5;

pub struct Instance {
    pub params: PolicyParams,
    pub obs: PoseObservation,
    pub action: usize,
    pub advantage: f64,
    pub target: f64,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let mut params = init_params(rng.gen());
    for array in params.arrays_mut() {
        for v in array.data.iter_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    let n = rng.gen_range(2..=6);
    let tuples = (0..n)
        .map(|_| {
            let yaw: f64 = rng.gen_range(-3.1..3.1);
            let mut t = [0.0; TUPLE_DIM];
            t[0] = rng.gen_range(-1.0..1.0);
            t[1] = rng.gen_range(-1.0..1.0);
            t[2] = rng.gen_range(0.6..1.0);
            t[3] = yaw.sin();
            t[4] = yaw.cos();
            t[5] = rng.gen_range(-1.0..1.0);
            t[6] = rng.gen_range(0..2) as f64;
            t
        })
        .collect();
    Instance {
        params,
        obs: PoseObservation {
            self_index: rng.gen_range(0..n),
            tuples,
        },
        action: rng.gen_range(0..11),
        advantage: rng.gen_range(-2.0..2.0),
        target: rng.gen_range(-5.0..5.0),
        entropy_coeff: rng.gen_range(0.0..0.1),
        value_coeff: rng.gen_range(0.1..1.0),
    }
}

/// Max relative error between analytic and central-difference gradients.
pub fn check(inst: &Instance) -> f64 {
    let cache = forward(&inst.params, &inst.obs).unwrap().cache;
    let grad = backward(
        &inst.params,
        &cache,
        inst.action,
        inst.advantage,
        inst.target,
        inst.entropy_coeff,
        inst.value_coeff,
    )
    .unwrap();
    let analytic: Vec<f64> = grad.iter().collect();
    let loss = |p: &PolicyParams| {
        loss(
            p,
            &inst.obs,
            inst.action,
            inst.advantage,
            inst.target,
            inst.entropy_coeff,
            inst.value_coeff,
        )
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = inst.params.clone();
    for a in 0..10 {
        for j in 0..probe.arrays()[a].data.len() {
            let orig = probe.arrays()[a].data[j];
            probe.arrays_mut()[a].data[j] = orig + H;
            let up = loss(&probe);
            probe.arrays_mut()[a].data[j] = orig - H;
            let down = loss(&probe);
            probe.arrays_mut()[a].data[j] = orig;
            numeric.push((up - down) / (2.0 * H));
        }
    }
    max_relative_error(&analytic, &numeric, FLOOR)
}

/// Worst relative gradient error over `n` random instances.
pub fn worst_gradient_error(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| check(&random_instance(&mut rng)))
        .fold(0.0, f64::max)
}

/// Random step records with arbitrary errors and visibilities.
pub fn random_records(rng: &mut ChaCha8Rng, cameras: usize, steps: usize) -> Vec<StepRecord> {
    use camtrack::controllers::SwitchLabel;
    use camtrack::eval::CameraRecord;
    use camtrack::world::Visibility;
    (0..steps)
        .map(|t| StepRecord {
            t: t + 1,
            target: Point3::new(0.0, 0.0, 0.9),
            cameras: (0..cameras)
                .map(|_| CameraRecord {
                    pose: CameraPose::new(Point3::new(10.0, 0.0, 2.5), 0.0, 180.0, 1.0),
                    action: Action::KeepStill,
                    visibility: [
                        Visibility::Visible,
                        Visibility::Occluded,
                        Visibility::OutOfView,
                    ][rng.gen_range(0..3)],
                    label: SwitchLabel::Vision,
                    reward: 0.0,
                    d_alpha: rng.gen_range(0.0..150.0),
                    d_beta: rng.gen_range(0.0..180.0),
                    d_xi: rng.gen_range(0.0..2.3),
                })
                .collect(),
        })
        .collect()
}

pub fn camtrack(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_camtrack"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Small configuration keeping CLI runs short.
pub fn small_config(dir: &std::path::Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{"episode_len": 60, "total_steps": 2000, "n_envs": 2}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

/// Runs `args` in a fresh directory; `CFG` is replaced by a small config and
/// `OUT:name` by a path inside the directory. Returns exit code, stdout and
/// the bytes of every file in `outputs`.
pub fn cli_run(args: &[&str], outputs: &[&str]) -> (Option<i32>, Vec<u8>, Vec<Vec<u8>>) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let args: Vec<String> = args
        .iter()
        .map(|a| match *a {
            "CFG" => cfg.clone(),
            a if a.starts_with("OUT:") => dir.path().join(&a[4..]).to_str().unwrap().to_string(),
            a => a.to_string(),
        })
        .collect();
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = camtrack(&argv);
    let files = outputs
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap_or_default())
        .collect();
    (out.status.code(), out.stdout, files)
}

/// Argument lists covering every subcommand, with the files each one writes.
pub const CLI_CASES: &[(&[&str], &[&str])] = &[
    (
        &[
            "train",
            "--config",
            "CFG",
            "--seed",
            "3",
            "--steps",
            "2000",
            "--out",
            "OUT:p.ckpt",
            "--log",
            "OUT:log.csv",
        ],
        &["p.ckpt", "log.csv"],
    ),
    (
        &[
            "rollout",
            "--config",
            "CFG",
            "--seed",
            "5",
            "--controller",
            "geometric",
            "--switcher",
            "noisy:0.1",
            "--out",
            "OUT:ep.jsonl",
        ],
        &["ep.jsonl"],
    ),
    (
        &[
            "eval",
            "--config",
            "CFG",
            "--controller",
            "sv",
            "--switcher",
            "oracle",
            "--seed",
            "2",
            "--episodes",
            "3",
            "--episode-log",
            "OUT:logs",
        ],
        &[
            "logs/episode_2.jsonl",
            "logs/episode_3.jsonl",
            "logs/episode_4.jsonl",
        ],
    ),
    (
        &[
            "compare",
            "--config",
            "CFG",
            "--systems",
            "sv,geometric,virtual/random:0.3",
            "--seeds",
            "3",
            "--out",
            "OUT:cmp.csv",
        ],
        &["cmp.csv"],
    ),
];

pub fn aimed(position: Point3, target: &Point3) -> CameraPose {
    let b = bearing_to(&position, target).unwrap();
    CameraPose::new(position, b.pitch_deg, b.yaw_deg, 1.0)
}

pub fn perimeter(rng: &mut impl Rng) -> Point3 {
    let s = rng.gen_range(-10.0..10.0);
    let z = rng.gen_range(2.0..3.0);
    match rng.gen_range(0..4) {
        0 => Point3::new(s, -10.0, z),
        1 => Point3::new(10.0, s, z),
        2 => Point3::new(s, 10.0, z),
        _ => Point3::new(-10.0, s, z),
    }
}

/// Ground-plane rays towards `truth` from several cameras, at least two of
/// which are labelled vision and separated by a clear angle.
pub fn instance(rng: &mut impl Rng) -> (Vec<PoseMessage>, [f64; 2]) {
    loop {
        let truth = [rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)];
        let target = Point3::new(truth[0], truth[1], TARGET_HEIGHT);
        let n = rng.gen_range(2..=6);
        let mut msgs: Vec<PoseMessage> = (0..n)
            .map(|index| {
                let pos = perimeter(rng);
                let label = if index < 2 || rng.gen_bool(0.5) {
                    SwitchLabel::Vision
                } else {
                    SwitchLabel::Pose
                };
                let pose = match label {
                    SwitchLabel::Vision => aimed(pos, &target),
                    SwitchLabel::Pose => {
                        CameraPose::new(pos, 0.0, rng.gen_range(-180.0..180.0), 1.0)
                    }
                };
                PoseMessage { index, pose, label }
            })
            .collect();
        let yaws: Vec<f64> = msgs
            .iter()
            .filter(|m| m.label == SwitchLabel::Vision)
            .map(|m| m.pose.yaw_deg.to_radians())
            .collect();
        let spread = yaws
            .iter()
            .flat_map(|a| yaws.iter().map(move |b| (a - b).sin().abs()))
            .fold(0.0, f64::max);
        if spread > 0.2 {
            msgs.shuffle(rng);
            return (msgs, truth);
        }
    }
}
