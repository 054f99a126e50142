mod common;

use std::time::Instant;

use common::{central_diff, chain_value_iteration, gae_double_sum, one_hot, ppo_loss_transcribed, projection_hat, rel_err, train_chain};
use plasticity_lab::learners::{
    c51_loss, c51_support, categorical_projection, gae, ppo_loss, softmax, C51Agent, C51Config, CategoricalHead, Hooks,
    PpoCoefs, PpoLossInput, Torso,
};
use plasticity_lab::mitigations::MitigationPlan;
use plasticity_lab::numkit::RngStream;

#[test]
fn gae_matches_double_sum() {
    let mut rng = RngStream::new(1, 0);
    for case in 0..200 {
        let n = 10;
        let rewards: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.uniform01() < 0.2).collect();
        let boot = rng.standard_normal();
        let gamma = rng.uniform(0.8, 1.0);
        let lam = rng.uniform(0.0, 1.0);
        let (adv, ret) = gae(&rewards, &values, &dones, boot, gamma, lam).unwrap();
        let oracle = gae_double_sum(&rewards, &values, &dones, boot, gamma, lam);
        for t in 0..n {
            assert!((adv[t] - oracle[t]).abs() < 1e-10, "case {case} t {t}");
            assert_eq!(ret[t], adv[t] + values[t]);
        }
    }
}

fn random_inputs(rng: &mut RngStream, n: usize) -> [Vec<f64>; 7] {
    let mut v = || (0..n).map(|_| rng.standard_normal()).collect::<Vec<f64>>();
    let old_lp = v();
    let noise = v();
    let new_lp = old_lp.iter().zip(&noise).map(|(o, e)| o + 0.3 * e).collect();
    [old_lp, new_lp, v(), v(), v(), v(), v().into_iter().map(f64::abs).collect()]
}

#[test]
fn ppo_loss_matches_transcription() {
    let mut rng = RngStream::new(2, 0);
    for case in 0..200 {
        let [old_lp, new_lp, adv, ret, old_v, new_v, ent] = random_inputs(&mut rng, 16);
        let vclip = if case % 2 == 0 { Some(0.2) } else { None };
        let coefs = PpoCoefs { clip_eps: 0.2, vf_coef: 0.5, ent_coef: 0.01, value_clip: vclip, normalize_advantages: true };
        let input = PpoLossInput {
            old_log_probs: &old_lp,
            new_log_probs: &new_lp,
            advantages: &adv,
            returns: &ret,
            old_values: &old_v,
            new_values: &new_v,
            entropy: &ent,
        };
        let loss = ppo_loss(&input, &coefs).unwrap();
        let oracle = ppo_loss_transcribed(&old_lp, &new_lp, &adv, &ret, &old_v, &new_v, &ent, 0.2, 0.5, 0.01, vclip);
        assert!((loss.total - oracle).abs() < 1e-10, "case {case}: {} vs {oracle}", loss.total);

        // derivatives of the total against central differences of the oracle
        let f_lp = |lp: &[f64]| ppo_loss_transcribed(&old_lp, lp, &adv, &ret, &old_v, &new_v, &ent, 0.2, 0.5, 0.01, vclip);
        let f_v = |v: &[f64]| ppo_loss_transcribed(&old_lp, &new_lp, &adv, &ret, &old_v, v, &ent, 0.2, 0.5, 0.01, vclip);
        for t in 0..16 {
            let d_lp = central_diff(f_lp, &new_lp, t, 1e-6);
            let d_v = central_diff(f_v, &new_v, t, 1e-6);
            // skip coordinates sitting on a clip kink
            let rho = (new_lp[t] - old_lp[t]).exp();
            if ((rho - 0.8).abs() > 1e-4) && ((rho - 1.2).abs() > 1e-4) {
                assert!(rel_err(loss.d_new_log_probs[t], d_lp) < 1e-4, "case {case} t {t}");
            }
            let dv = new_v[t] - old_v[t];
            if vclip.is_none() || (dv.abs() - 0.2).abs() > 1e-4 {
                assert!(rel_err(loss.d_new_values[t], d_v) < 1e-4, "case {case} t {t}");
            }
        }
    }
}

#[test]
fn on_policy_loss_is_zero() {
    let mut rng = RngStream::new(3, 0);
    for _ in 0..50 {
        let [old_lp, _, adv, ret, old_v, _, ent] = random_inputs(&mut rng, 32);
        let coefs = PpoCoefs { clip_eps: 0.2, vf_coef: 0.5, ent_coef: 0.0, value_clip: Some(0.2), normalize_advantages: true };
        let input = PpoLossInput {
            old_log_probs: &old_lp,
            new_log_probs: &old_lp,
            advantages: &adv,
            returns: &ret,
            old_values: &old_v,
            new_values: &old_v,
            entropy: &ent,
        };
        let loss = ppo_loss(&input, &coefs).unwrap();
        assert!(loss.policy.abs() < 1e-8);
        assert_eq!(loss.clip_fraction, 0.0);
    }
}

#[test]
fn projection_conserves_mass_and_matches_hat_oracle() {
    let head = CategoricalHead::new(-10.0, 10.0, 51).unwrap();
    let mut rng = RngStream::new(4, 0);
    for case in 0..10_000 {
        let raw: Vec<f64> = (0..51).map(|_| 3.0 * rng.standard_normal()).collect();
        let p = softmax(&raw);
        let r = rng.uniform(-15.0, 15.0);
        let gamma = rng.uniform(0.0, 1.0);
        let done = rng.uniform01() < 0.1;
        let m = categorical_projection(&p, r, done, gamma, &head).unwrap();
        let mass: f64 = m.iter().sum();
        assert!((mass - 1.0).abs() < 1e-6, "case {case}: mass {mass}");
        let oracle = projection_hat(&p, head.atoms(), r, gamma, done);
        for (a, b) in m.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "case {case}");
        }
    }
}

#[test]
fn default_support() {
    let z = c51_support(-10.0, 10.0, 51).unwrap();
    assert_eq!((z[0], z[50]), (-10.0, 10.0));
    for w in z.windows(2) {
        assert!((w[1] - w[0] - 0.4).abs() < 1e-12);
    }
}

#[test]
fn zero_discount_reduces_to_cross_entropy_on_reward_mass() {
    let head = CategoricalHead::new(-2.0, 2.0, 5).unwrap();
    let logits = [0.3, -1.0, 0.5, 2.0, 0.0];
    let next = softmax(&[1.0, 2.0, 3.0, 4.0, 5.0]);
    // with γ = 0 the target ignores the next-state distribution
    let m = categorical_projection(&next, 1.0, false, 0.0, &head).unwrap();
    assert_eq!(m, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    let (loss, _) = c51_loss(&m, &logits).unwrap();
    let lse = logits.iter().map(|l: &f64| l.exp()).sum::<f64>().ln();
    assert!((loss - (lse - logits[3])).abs() < 1e-12);
}

#[test]
fn c51_learns_chain_values() {
    let start = Instant::now();
    let truth = chain_value_iteration(0.99);
    assert!((truth[0][0] - 0.99).abs() < 1e-12 && (truth[1][1] - 0.9801).abs() < 1e-12);
    let q = train_chain(1, 5000);
    for s in 0..2 {
        for a in 0..2 {
            assert!((q[s][a] - truth[s][a]).abs() < 0.05, "Q({s},{a}) = {} vs {}", q[s][a], truth[s][a]);
        }
    }
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn target_network_is_frozen_between_syncs() {
    let cfg = C51Config { batch_size: 4, learning_starts: 0, train_freq: 1, buffer_size: 100, ..C51Config::default() };
    let mut rng = RngStream::new(5, 0);
    let mut agent = C51Agent::new(cfg, 2, 2, &Torso::new(vec![8]), &MitigationPlan::default(), &mut rng).unwrap();
    for i in 0..8 {
        agent.buffer.push(&one_hot(i % 2), i % 2, 1.0, &one_hot((i + 1) % 2), i % 3 == 0).unwrap();
    }
    let target = agent.target.clone();
    let mut hooks = Hooks::none();
    for _ in 0..20 {
        agent.update(&mut hooks, &mut rng).unwrap();
    }
    assert_eq!(agent.target, target);
    assert_ne!(agent.online, target);
    agent.sync_target();
    assert_eq!(agent.target, agent.online);
}
