//! Temporary env-design sweep: runs the single-worker learning loop on
//! candidate scara3 task definitions under the default PPO config. Run with
//! `--ignored --nocapture`; slated for deletion once the preset settles.

use armfleet::kinematics::{
    Joint, JointKind, KinematicChain, ReacherEnv, ReacherEnvSpec, TargetRegion,
};
use armfleet::policy::{sample_action, MlpSpec};
use armfleet::ppo::{adapt_kl_coeff, compute_advantages, sgd_update, PpoConfig, RolloutBatch};
use armfleet::rng::{derive_seed, stream, tag};
use std::f64::consts::PI;

fn scara_chain(q1: (f64, f64), q2: (f64, f64)) -> KinematicChain {
    scara_chain_travel(q1, q2, 0.20)
}

fn scara_chain_travel(q1: (f64, f64), q2: (f64, f64), travel: f64) -> KinematicChain {
    KinematicChain::new(vec![
        Joint {
            kind: JointKind::Revolute,
            axis: [0.0, 0.0, 1.0],
            offset: [0.30, 0.0, 0.0],
            limit_lo: q1.0,
            limit_hi: q1.1,
        },
        Joint {
            kind: JointKind::Revolute,
            axis: [0.0, 0.0, 1.0],
            offset: [0.25, 0.0, 0.0],
            limit_lo: q2.0,
            limit_hi: q2.1,
        },
        Joint {
            kind: JointKind::Prismatic,
            axis: [0.0, 0.0, 1.0],
            offset: [0.0, 0.0, 0.0],
            limit_lo: 0.0,
            limit_hi: travel,
        },
    ])
    .unwrap()
}

fn run_candidate(name: &str, spec_env: ReacherEnvSpec, rounds: u64, seed: u64) {
    run_candidate_oracle(name, spec_env, rounds, seed, false);
}

fn run_candidate_oracle(
    name: &str,
    spec_env: ReacherEnvSpec,
    rounds: u64,
    seed: u64,
    oracle_v: bool,
) {
    run_candidate_full(name, spec_env, rounds, seed, oracle_v, false);
}

fn run_candidate_full(
    name: &str,
    spec_env: ReacherEnvSpec,
    rounds: u64,
    seed: u64,
    oracle_v: bool,
    error_obs: bool,
) {
    run_candidate_norm(name, spec_env, rounds, seed, oracle_v, error_obs, None);
}

fn run_candidate_norm(
    name: &str,
    spec_env: ReacherEnvSpec,
    rounds: u64,
    seed: u64,
    oracle_v: bool,
    error_obs: bool,
    frame: Option<([f64; 3], f64)>,
) {
    let cfg0 = PpoConfig::default();
    let mut cfg = cfg0.clone();
    cfg.num_workers = 1;
    let mlp = MlpSpec::new(spec_env.obs_dim(), spec_env.action_dim()).unwrap();
    let mut params = mlp.init_params(&mut stream(seed, &[tag::POLICY_INIT]));
    let env_seed = derive_seed(seed, &[tag::ENV_RESET, 0]);
    let mut env = ReacherEnv::new(spec_env, env_seed);
    let action_dim = mlp.action_dim;

    let start = env.observation();
    let start_slice = start.as_slice().to_vec();
    println!("\n=== {name} (seed {seed}) start ee {:?}", &start_slice[3..6]);

    for round in 0..rounds {
        let mut rng = stream(seed, &[tag::ACTION_NOISE, 0, round]);
        let mut observations = Vec::new();
        let mut actions = Vec::new();
        let mut log_probs = Vec::new();
        let mut rewards = Vec::new();
        let mut values = Vec::new();
        let mut dones = Vec::new();
        let mut episode_boundaries = Vec::new();
        let mut total_steps = 0usize;
        let dof = action_dim;
        let adapt = |obs: &armfleet::kinematics::Observation| -> Vec<f64> {
            let mut v = obs.as_slice().to_vec();
            if error_obs {
                for i in 0..3 {
                    v[dof + 3 + i] -= v[dof + i];
                }
            }
            if let Some((center, r_ref)) = frame {
                for i in 0..3 {
                    v[dof + i] = (v[dof + i] - center[i]) / r_ref;
                    v[dof + 3 + i] /= r_ref;
                }
            }
            v
        };
        loop {
            let mut obs = env.observation();
            loop {
                let input = adapt(&obs);
                let out = mlp.forward(&params, &input).unwrap();
                let (action, log_prob) = sample_action(&out.mean, &out.log_std, &mut rng);
                let step = env.step(&action).unwrap();
                observations.extend_from_slice(&input);
                actions.extend_from_slice(&action);
                log_probs.push(log_prob);
                rewards.push(step.reward);
                values.push(out.value);
                dones.push(step.done);
                total_steps += 1;
                if step.done {
                    break;
                }
                obs = step.observation;
            }
            episode_boundaries.push(total_steps);
            env.reset();
            if total_steps >= cfg.min_steps_per_task as usize {
                break;
            }
        }
        if oracle_v {
            let gl = cfg.gamma * cfg.gae_lambda;
            for (i, v) in values.iter_mut().enumerate() {
                let o = &observations[i * mlp.input_dim..(i + 1) * mlp.input_dim];
                let (ee, tgt) = (&o[dof..dof + 3], &o[dof + 3..dof + 6]);
                let d = if error_obs {
                    (tgt[0].powi(2) + tgt[1].powi(2) + tgt[2].powi(2)).sqrt()
                } else {
                    ((ee[0] - tgt[0]).powi(2)
                        + (ee[1] - tgt[1]).powi(2)
                        + (ee[2] - tgt[2]).powi(2))
                    .sqrt()
                };
                *v = -d / (1.0 - gl);
            }
        }
        let batch = RolloutBatch {
            obs_dim: mlp.input_dim,
            action_dim,
            observations,
            actions,
            log_probs,
            rewards,
            values,
            dones,
            episode_boundaries,
            total_steps,
            collection_seconds: 0.0,
        };
        let mean_r = batch.mean_step_reward();
        let final_d = -batch.rewards[batch.rewards.len() - 1];
        let best_d = -batch
            .rewards
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);

        let processed = compute_advantages(&batch, cfg.gamma, cfg.gae_lambda).unwrap();
        let mut sgd_rng = stream(seed, &[tag::SGD_SHUFFLE, 0, round]);
        let (new_params, records) =
            sgd_update(&mlp, &params, &processed, &cfg, &mut sgd_rng).unwrap();
        let last = records.last().unwrap();
        cfg.kl_coeff = adapt_kl_coeff(cfg.kl_coeff, last.mean_kl, cfg.kl_target);
        params = new_params;

        if round % 10 == 0 || mean_r >= -0.01 {
            let vals = params.values();
            let log_std_mean =
                vals[vals.len() - action_dim..].iter().sum::<f64>() / action_dim as f64;
            println!(
                "{name} r{:>3}  meanR {:>8.4}  bestD {:>7.4}  finalD {:>7.4}  vloss {:>8.3}  logstd {:>6.2}  klN {:>8.5}",
                round, mean_r, best_d, final_d, last.value_loss, log_std_mean, last.mean_kl
            );
        }
        if mean_r >= -0.01 {
            println!("{name}: threshold crossed at round {round}");
            return;
        }
    }
    println!("{name}: no crossing within {rounds} rounds");
}

#[test]
#[ignore]
fn sweep_candidate_b_bent_start_centered_region() {
    let chain = scara_chain((-2.2, 2.6), (0.4, 2.8));
    let region = TargetRegion::new([0.16, 0.22, 0.02], [0.32, 0.38, 0.18]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.02).unwrap();
    run_candidate("B", spec, 150, 0);
}

#[test]
#[ignore]
fn sweep_candidate_c_bent_start_scale_004() {
    let chain = scara_chain((-2.2, 2.6), (0.4, 2.8));
    let region = TargetRegion::new([0.16, 0.22, 0.02], [0.32, 0.38, 0.18]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.04).unwrap();
    run_candidate("C", spec, 150, 0);
}

#[test]
#[ignore]
fn sweep_candidate_a_current_preset_geometry() {
    let chain = scara_chain((-PI, PI), (-PI, PI));
    let region = TargetRegion::new([0.22, 0.08, 0.04], [0.44, 0.30, 0.16]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.02).unwrap();
    run_candidate("A", spec, 150, 0);
}

#[test]
#[ignore]
fn sweep_candidate_d_pocket_limits_scale_004() {
    let chain = scara_chain((-0.5, 0.7), (0.9, 2.3));
    let region = TargetRegion::new([0.19, 0.20, 0.03], [0.34, 0.35, 0.17]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.04).unwrap();
    run_candidate("D", spec, 150, 0);
}

#[test]
#[ignore]
fn sweep_candidate_e_pocket_limits_scale_002() {
    let chain = scara_chain((-0.5, 0.7), (0.9, 2.3));
    let region = TargetRegion::new([0.19, 0.20, 0.03], [0.34, 0.35, 0.17]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.02).unwrap();
    run_candidate("E", spec, 150, 0);
}

#[test]
#[ignore]
fn sweep_candidate_f_pocket_scale_004_oracle_v() {
    let chain = scara_chain((-0.5, 0.7), (0.9, 2.3));
    let region = TargetRegion::new([0.19, 0.20, 0.03], [0.34, 0.35, 0.17]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.04).unwrap();
    run_candidate_oracle("F", spec, 150, 0, true);
}

#[test]
#[ignore]
fn sweep_candidate_h_tight_pocket_scale_0015() {
    let chain = scara_chain_travel((0.0, 0.4), (1.3, 1.9), 0.10);
    let region = TargetRegion::new([0.20, 0.26, 0.02], [0.28, 0.33, 0.08]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.015).unwrap();
    run_candidate("H", spec, 300, 0);
}

#[test]
#[ignore]
fn sweep_candidate_i_tight_pocket_scale_002() {
    let chain = scara_chain_travel((0.0, 0.4), (1.3, 1.9), 0.10);
    let region = TargetRegion::new([0.20, 0.26, 0.02], [0.28, 0.33, 0.08]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.02).unwrap();
    run_candidate("I", spec, 300, 0);
}

fn arm6_chain_candidate(limits: [(f64, f64); 6]) -> KinematicChain {
    let lengths = [0.20, 0.20, 0.20, 0.15, 0.15, 0.10];
    let joints = lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| Joint {
            kind: JointKind::Revolute,
            axis: if i % 2 == 0 {
                [0.0, 0.0, 1.0]
            } else {
                [0.0, 1.0, 0.0]
            },
            offset: [len, 0.0, 0.0],
            limit_lo: limits[i].0,
            limit_hi: limits[i].1,
        })
        .collect();
    KinematicChain::new(joints).unwrap()
}

const ARM6_LIMITS: [(f64, f64); 6] = [
    (-0.10, 0.20),
    (0.50, 0.80),
    (-0.15, 0.15),
    (0.35, 0.65),
    (-0.15, 0.15),
    (-0.35, -0.05),
];

#[test]
#[ignore]
fn arm6_pocket_geometry_probe() {
    let chain = arm6_chain_candidate(ARM6_LIMITS);
    let mid = chain.mid_range();
    let ee = chain.forward_kinematics(&mid).unwrap();
    println!("arm6 mid q {:?} -> ee {:?}", mid, ee);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut far = 0.0f64;
    let mut rng = stream(5, &[tag::REGION_CHECK]);
    use rand::Rng;
    for _ in 0..20000 {
        let q: Vec<f64> = ARM6_LIMITS
            .iter()
            .map(|&(l, h)| rng.gen_range(l..h))
            .collect();
        let p = chain.forward_kinematics(&q).unwrap();
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
        let d = ((p[0] - ee[0]).powi(2) + (p[1] - ee[1]).powi(2) + (p[2] - ee[2]).powi(2)).sqrt();
        far = far.max(d);
    }
    println!("pocket lo {lo:?}");
    println!("pocket hi {hi:?}");
    println!("max distance from mid-ee {far:.4}");
}

#[test]
#[ignore]
fn sweep_candidate_j_tight_pocket_error_obs() {
    let chain = scara_chain_travel((0.0, 0.4), (1.3, 1.9), 0.10);
    let region = TargetRegion::new([0.20, 0.26, 0.02], [0.28, 0.33, 0.08]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.015).unwrap();
    run_candidate_full("J", spec, 300, 0, false, true);
}

#[test]
#[ignore]
fn sweep_candidate_l_tight_pocket_error_obs_scale_0008() {
    let chain = scara_chain_travel((0.0, 0.4), (1.3, 1.9), 0.10);
    let region = TargetRegion::new([0.20, 0.26, 0.02], [0.28, 0.33, 0.08]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.008).unwrap();
    run_candidate_full("L", spec, 300, 0, false, true);
}

#[test]
#[ignore]
fn sweep_candidate_m_tight_pocket_normalized_frame() {
    let chain = scara_chain_travel((0.0, 0.4), (1.3, 1.9), 0.10);
    let region = TargetRegion::new([0.20, 0.26, 0.02], [0.28, 0.33, 0.08]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.015).unwrap();
    let center = [0.24, 0.295, 0.05];
    let r_ref = 0.06103277807866851;
    run_candidate_norm("M", spec, 300, 0, false, true, Some((center, r_ref)));
}

#[test]
#[ignore]
fn sweep_candidate_m_seed1() {
    let chain = scara_chain_travel((0.0, 0.4), (1.3, 1.9), 0.10);
    let region = TargetRegion::new([0.20, 0.26, 0.02], [0.28, 0.33, 0.08]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.015).unwrap();
    let center = [0.24, 0.295, 0.05];
    let r_ref = 0.06103277807866851;
    run_candidate_norm("M1", spec, 300, 1, false, true, Some((center, r_ref)));
}

#[test]
#[ignore]
fn sweep_candidate_m_seed2() {
    let chain = scara_chain_travel((0.0, 0.4), (1.3, 1.9), 0.10);
    let region = TargetRegion::new([0.20, 0.26, 0.02], [0.28, 0.33, 0.08]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.015).unwrap();
    let center = [0.24, 0.295, 0.05];
    let r_ref = 0.06103277807866851;
    run_candidate_norm("M2", spec, 300, 2, false, true, Some((center, r_ref)));
}

#[test]
#[ignore]
fn sweep_candidate_n_mid_pocket_normalized() {
    let chain = scara_chain_travel((-0.5, 0.7), (0.9, 2.3), 0.20);
    let region = TargetRegion::new([0.19, 0.20, 0.03], [0.34, 0.35, 0.17]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.02).unwrap();
    let center = [0.265, 0.275, 0.10];
    let r_ref = 0.1270826500539632;
    run_candidate_norm("N", spec, 300, 0, false, true, Some((center, r_ref)));
}

#[test]
#[ignore]
fn sweep_candidate_k_mid_pocket_error_obs() {
    let chain = scara_chain_travel((-0.5, 0.7), (0.9, 2.3), 0.20);
    let region = TargetRegion::new([0.19, 0.20, 0.03], [0.34, 0.35, 0.17]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.02).unwrap();
    run_candidate_full("K", spec, 300, 0, false, true);
}

#[test]
#[ignore]
fn sweep_candidate_g_wide_scale_002_oracle_v() {
    let chain = scara_chain((-2.2, 2.6), (0.4, 2.8));
    let region = TargetRegion::new([0.16, 0.22, 0.02], [0.32, 0.38, 0.18]).unwrap();
    let spec = ReacherEnvSpec::new(chain, region, 2048, -0.01, 0.02).unwrap();
    run_candidate_oracle("G", spec, 150, 0, true);
}
