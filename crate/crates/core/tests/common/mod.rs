//! Independent reference implementations shared by the integration tests.

// oracles are written as index loops to mirror the formulas
#![allow(clippy::needless_range_loop)]
//! Each oracle is written from the defining formula, deliberately not in
//! the shape of the library code it checks.

#![allow(dead_code)]

use plasticity_lab::learners::{C51Agent, C51Config, Hooks, Torso};
use plasticity_lab::mitigations::{reg_loss, MitigationPlan, RegKind};
use plasticity_lab::net::{mlp_specs, Activation, MlpShape, NetworkState};
use plasticity_lab::numkit::{Matrix, RngStream};

pub fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Small MLP with every parameter (including biases and norm affine)
/// jittered away from its init values.
pub fn jittered_net(input: usize, hidden: &[usize], output: usize, act: Activation, ln: bool, seed: u64) -> NetworkState {
    let specs = mlp_specs(&MlpShape {
        input,
        hidden,
        output,
        activation: act,
        layer_norm: ln,
        hidden_gain: 1.0,
        head_gain: 1.0,
    });
    let mut rng = RngStream::new(seed, 0);
    let mut net = NetworkState::new(specs, &mut rng).unwrap();
    for p in net.params_mut() {
        for s in p.slices_mut() {
            for v in s.iter_mut() {
                *v += 0.3 * rng.standard_normal();
            }
        }
    }
    net
}

/// Loss `Σ out ⊙ c` plus an optional regularizer.
fn probe_loss(net: &NetworkState, x: &Matrix, c: &Matrix, reg: Option<(RegKind, f64, f64)>) -> f64 {
    let out = net.predict(x).unwrap();
    let mut l: f64 = out.data().iter().zip(c.data()).map(|(a, b)| a * b).sum();
    if let Some((kind, alpha, s)) = reg {
        l += reg_loss(kind, net, alpha, s).unwrap().0;
    }
    l
}

/// Relative error with magnitudes below `1e-6` compared absolutely,
/// so exact zeros on both sides do not divide by zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Maximum relative error between backprop (plus regularizer gradient)
/// and central differences over every parameter of every unit.
pub fn gradcheck(net: &NetworkState, x: &Matrix, c: &Matrix, reg: Option<(RegKind, f64, f64)>, h: f64) -> f64 {
    let trace = net.forward(x).unwrap();
    let mut grads = net.backward(&trace, c).unwrap();
    if let Some((kind, alpha, s)) = reg {
        let (_, g) = reg_loss(kind, net, alpha, s).unwrap();
        grads.add_assign(&g);
    }
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for u in 0..net.unit_count() {
        let n_slices = net.unit_params(u).slices().len();
        for si in 0..n_slices {
            let len = net.unit_params(u).slices()[si].len();
            for i in 0..len {
                let orig = net.unit_params(u).slices()[si][i];
                probe.unit_params_mut(u).slices_mut()[si][i] = orig + h;
                let lp = probe_loss(&probe, x, c, reg);
                probe.unit_params_mut(u).slices_mut()[si][i] = orig - h;
                let lm = probe_loss(&probe, x, c, reg);
                probe.unit_params_mut(u).slices_mut()[si][i] = orig;
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = grads.units[u].slices()[si][i];
                worst = worst.max(rel_err(analytic, numeric));
            }
        }
    }
    worst
}

/// Central difference of a scalar function of a vector, coordinate `i`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + h;
    let fp = f(&p);
    p[i] = x[i] - h;
    let fm = f(&p);
    (fp - fm) / (2.0 * h)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// descending.
pub fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b))
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let left = simpson(f, a, c);
    let right = simpson(f, c, b);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive(f, a, c, left, tol / 2.0, depth - 1) + adaptive(f, c, b, right, tol / 2.0, depth - 1)
}

/// `(2/√π) ∫₀ˣ e^{t²} dt` by adaptive Simpson quadrature.
pub fn erfi_quadrature(x: f64) -> f64 {
    let f = |t: f64| (t * t).exp();
    let whole = simpson(&f, 0.0, x);
    2.0 / std::f64::consts::PI.sqrt() * adaptive(&f, 0.0, x, whole, 1e-14, 50)
}

/// Per-neuron dormancy by explicit loops over samples and neurons.
pub fn dormant_count_loop(post: &Matrix, tau: f64) -> usize {
    let (n, h) = post.shape();
    let mut per_neuron = vec![0.0; h];
    for i in 0..h {
        let mut acc = 0.0;
        for x in 0..n {
            acc += post.get(x, i).abs();
        }
        per_neuron[i] = acc / n as f64;
    }
    let mut layer = 0.0;
    for v in &per_neuron {
        layer += v;
    }
    layer /= h as f64;
    if layer == 0.0 {
        return h;
    }
    let mut count = 0;
    for v in &per_neuron {
        if v / layer <= tau {
            count += 1;
        }
    }
    count
}

pub fn active_count_loop(post: &Matrix) -> usize {
    let mut count = 0;
    for r in 0..post.rows() {
        for c in 0..post.cols() {
            if post.get(r, c) > 0.0 {
                count += 1;
            }
        }
    }
    count
}

/// First `k` with cumulative spectral mass strictly above `mass`.
pub fn stable_rank_scan(sv: &[f64], mass: f64) -> usize {
    let total: f64 = sv.iter().sum();
    let mut cum = 0.0;
    for (k, s) in sv.iter().enumerate() {
        cum += s;
        if cum / total > mass {
            return k + 1;
        }
    }
    sv.len()
}

pub fn l2_of_flat_difference(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn flat_params(net: &NetworkState) -> Vec<f64> {
    (0..net.unit_count()).flat_map(|u| net.unit_params(u).flat()).collect()
}

/// `A_t = Σ_l (γλ)^l (Π_{k<l}(1−d_{t+k})) δ_{t+l}` written as a double sum.
pub fn gae_double_sum(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lam: f64) -> Vec<f64> {
    let n = rewards.len();
    let v_next = |t: usize| if t + 1 < n { values[t + 1] } else { bootstrap };
    let delta: Vec<f64> = (0..n)
        .map(|t| rewards[t] + gamma * if dones[t] { 0.0 } else { v_next(t) } - values[t])
        .collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for l in 0..n - t {
                let alive = (0..l).all(|k| !dones[t + k]);
                if !alive {
                    break;
                }
                sum += (gamma * lam).powi(l as i32) * delta[t + l];
            }
            sum
        })
        .collect()
}

/// Hat-function form of the categorical projection:
/// `m_i = Σ_j p_j · max(0, 1 − |clamp(r + γ z_j) − z_i| / Δz)`.
pub fn projection_hat(p: &[f64], atoms: &[f64], r: f64, gamma: f64, done: bool) -> Vec<f64> {
    let n = atoms.len();
    let (lo, hi) = (atoms[0], atoms[n - 1]);
    let dz = (hi - lo) / (n - 1) as f64;
    let g = if done { 0.0 } else { gamma };
    let mut m = vec![0.0; n];
    for j in 0..n {
        let tz = (r + g * atoms[j]).max(lo).min(hi);
        for i in 0..n {
            let w = 1.0 - (tz - atoms[i]).abs() / dz;
            if w > 0.0 {
                m[i] += p[j] * w;
            }
        }
    }
    m
}

/// Two-state deterministic chain used for C51 convergence:
/// s0: a0 → s1 (r=0), a1 → end (r=0.5); s1: a0 → end (r=1), a1 → s0 (r=0).
pub fn chain_step(state: usize, action: usize) -> (f64, Option<usize>) {
    match (state, action) {
        (0, 0) => (0.0, Some(1)),
        (0, _) => (0.5, None),
        (_, 0) => (1.0, None),
        _ => (0.0, Some(0)),
    }
}

/// Optimal action values of the chain by value iteration.
pub fn chain_value_iteration(gamma: f64) -> [[f64; 2]; 2] {
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..10_000 {
        let mut next = q;
        for s in 0..2 {
            for a in 0..2 {
                let (r, nxt) = chain_step(s, a);
                next[s][a] = r + nxt.map_or(0.0, |n| gamma * q[n][0].max(q[n][1]));
            }
        }
        let diff: f64 = (0..2).flat_map(|s| (0..2).map(move |a| (s, a))).map(|(s, a)| (next[s][a] - q[s][a]).abs()).sum();
        q = next;
        if diff < 1e-15 {
            break;
        }
    }
    q
}

/// Term-by-term transcription of the clipped PPO objective.
#[allow(clippy::too_many_arguments)]
pub fn ppo_loss_transcribed(
    old_lp: &[f64],
    new_lp: &[f64],
    adv: &[f64],
    returns: &[f64],
    old_v: &[f64],
    new_v: &[f64],
    ent: &[f64],
    eps: f64,
    vf: f64,
    ent_coef: f64,
    vclip: Option<f64>,
) -> f64 {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut policy = 0.0;
    let mut value = 0.0;
    let mut entropy = 0.0;
    for t in 0..adv.len() {
        let a = (adv[t] - mean) / (std + 1e-8);
        let rho = (new_lp[t] - old_lp[t]).exp();
        let clipped_rho = if rho < 1.0 - eps {
            1.0 - eps
        } else if rho > 1.0 + eps {
            1.0 + eps
        } else {
            rho
        };
        policy += -f64::min(rho * a, clipped_rho * a);
        let unclipped = (new_v[t] - returns[t]).powi(2);
        value += match vclip {
            Some(c) => {
                let vc = old_v[t] + (new_v[t] - old_v[t]).max(-c).min(c);
                f64::max(unclipped, (vc - returns[t]).powi(2))
            }
            None => unclipped,
        };
        entropy += ent[t];
    }
    policy / n + vf * value / n - ent_coef * entropy / n
}

pub fn one_hot(s: usize) -> [f64; 2] {
    let mut o = [0.0; 2];
    o[s] = 1.0;
    o
}

/// Trains C51 with uniform exploration on the two-state chain and returns
/// the learned expected values.
pub fn train_chain(seed: u64, steps: u64) -> [[f64; 2]; 2] {
    let cfg = C51Config {
        lr: 1e-3,
        gamma: 0.99,
        batch_size: 32,
        target_freq: 100,
        learning_starts: 200,
        train_freq: 1,
        buffer_size: 10_000,
        ..C51Config::default()
    };
    let mut rng = RngStream::new(seed, 0);
    let plan = MitigationPlan::default();
    let mut agent = C51Agent::new(cfg, 2, 2, &Torso::new(vec![32]), &plan, &mut rng).unwrap();
    let mut hooks = Hooks::none();
    let mut update_rng = rng.sibling(6);
    let mut state = 0;
    for step in 1..=steps {
        let a = rng.below(2);
        let (r, next) = chain_step(state, a);
        let next_obs = one_hot(next.unwrap_or(0));
        agent.buffer.push(&one_hot(state), a, r, &next_obs, next.is_none()).unwrap();
        state = next.unwrap_or(0);
        if step > agent.cfg.learning_starts {
            agent.update(&mut hooks, &mut update_rng).unwrap();
        }
        if step % agent.cfg.target_freq == 0 {
            agent.sync_target();
        }
    }
    let q = agent.q_values(&agent.online, &Matrix::from_rows(&[one_hot(0), one_hot(1)]).unwrap()).unwrap();
    [[q.get(0, 0), q.get(0, 1)], [q.get(1, 0), q.get(1, 1)]]
}
