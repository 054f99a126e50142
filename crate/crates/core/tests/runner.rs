use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use plasticity_lab::learners::Torso;
use plasticity_lab::metrics::{weight_difference, MetricLine};
use plasticity_lab::mitigations::{registry, Category, Method, MethodInfo, TriggerClass};
use plasticity_lab::net::{load_checkpoint, read_manifest, save_checkpoint};
use plasticity_lab::numkit::RngStream;
use plasticity_lab::runner::{
    list_methods_json, load_config, parse_config, read_metrics, read_summary, replay_metrics, run_experiment,
    ExperimentConfig, CONFIG_FILE, EPISODES_FILE, METRICS_FILE, STREAM_INIT, STREAM_MITIGATION, SUMMARY_FILE,
};
use plasticity_lab::Error;

const C51_TINY: &str = r#"
name = "c51-tiny"
seed = 3
algo = "c51"
total_steps = 600
[scenario]
mode = "level_shift"
n_tasks = 2
segment_length = 300
grid_size = 5
horizon = 30
[network]
hidden = [16]
[c51]
batch_size = 16
learning_starts = 100
target_freq = 50
buffer_size = 500
[logging]
metric_interval = 100
probe_batch = 32
"#;

const PPO_TINY: &str = r#"
name = "ppo-tiny"
seed = 4
algo = "ppo"
total_steps = 512
[scenario]
mode = "task_chain"
n_tasks = 2
segment_length = 256
horizon = 50
variants = ["walk", "run"]
[network]
hidden = [16]
[ppo]
rollout_len = 64
minibatches = 4
epochs = 2
[logging]
metric_interval = 128
probe_batch = 32
"#;

const SUP_TINY: &str = r#"
name = "sup-tiny"
seed = 5
algo = "supervised"
total_steps = 600
[scenario]
n_tasks = 3
segment_length = 200
[network]
hidden = [16, 16]
[supervised]
batch_size = 16
input_dim = 6
teacher_hidden = 8
output_dim = 2
eval_size = 64
adapt_window = 100
[logging]
metric_interval = 50
probe_batch = 32
"#;

fn config(text: &str, dir: &Path) -> ExperimentConfig {
    let mut cfg = parse_config(text).unwrap();
    cfg.logging.dir = dir.to_path_buf();
    cfg
}

fn with_mitigations(base: &str, block: &str) -> String {
    format!("{base}\n{block}")
}

fn value(lines: &[MetricLine], step: u64, scope: &str, metric: &str) -> f64 {
    lines
        .iter()
        .find(|l| l.step == step && l.scope == scope && l.metric == metric)
        .unwrap_or_else(|| panic!("no {scope}/{metric} at step {step}"))
        .value
}

#[test]
fn equal_seeds_give_byte_identical_logs() {
    for text in [C51_TINY, PPO_TINY, SUP_TINY] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run_experiment(&config(text, a.path())).unwrap();
        let rb = run_experiment(&config(text, b.path())).unwrap();
        // the config snapshot differs only in the log directory
        for file in [METRICS_FILE, EPISODES_FILE, SUMMARY_FILE] {
            let x = fs::read_to_string(ra.dir.join(file)).unwrap();
            assert!(!x.is_empty(), "{file} is empty");
            assert!(x == fs::read_to_string(rb.dir.join(file)).unwrap(), "{file} differs for {}", ra.summary.name);
        }
        // a different seed changes the trajectory
        let c = tempfile::tempdir().unwrap();
        let mut cfg = config(text, c.path());
        cfg.seed += 1;
        let rc = run_experiment(&cfg).unwrap();
        assert_ne!(fs::read(ra.metrics).unwrap(), fs::read(rc.metrics).unwrap());
    }
}

#[test]
fn reset_all_once_at_returns_weight_difference_to_fresh_init_level() {
    let dir = tempfile::tempdir().unwrap();
    let text = with_mitigations(
        SUP_TINY,
        r#"
[[mitigation]]
method = "reset_layers"
params = { scope = "all" }
trigger = { kind = "once_at", step = 300 }
"#,
    );
    let cfg = config(&text, dir.path());
    let art = run_experiment(&cfg).unwrap();
    let lines = read_metrics(&art.metrics).unwrap();
    let sup = cfg.supervised.as_ref().unwrap();

    // rebuild both ends independently: the snapshot from the init stream,
    // the reset from the first draws of the mitigation stream
    let torso = Torso::new(cfg.network.hidden.clone());
    let snapshot = torso.build(sup.input_dim, sup.output_dim, 1.0, &mut RngStream::new(cfg.seed, STREAM_INIT)).unwrap();
    let redrawn =
        torso.build(sup.input_dim, sup.output_dim, 1.0, &mut RngStream::new(cfg.seed, STREAM_MITIGATION)).unwrap();
    let fresh_level = weight_difference(&redrawn, &snapshot).unwrap().l2;

    assert_eq!(value(&lines, 0, "net/all", "weight_diff"), 0.0);
    let before = value(&lines, 250, "net/all", "weight_diff");
    let at = value(&lines, 300, "net/all", "weight_diff");
    assert!(before > 0.0);
    assert!((at - fresh_level).abs() < 1e-9 * fresh_level, "logged {at} vs fresh-init level {fresh_level}");
    // training resumes from the new point
    assert_ne!(value(&lines, 350, "net/all", "weight_diff"), at);
}

#[test]
fn firing_counts_match_their_triggers() {
    let dir = tempfile::tempdir().unwrap();
    let text = with_mitigations(
        SUP_TINY,
        r#"
[[mitigation]]
method = "shrink_perturb"
params = { beta = 0.1 }
trigger = { kind = "every_k_steps", k = 70 }

[[mitigation]]
method = "redo"
trigger = { kind = "on_task_switch" }

[[mitigation]]
method = "reset_layers"
trigger = { kind = "once_at", step = 450 }

[[mitigation]]
method = "l2"

[[mitigation]]
method = "nap"
"#,
    );
    let cfg = config(&text, dir.path());
    let art = run_experiment(&cfg).unwrap();
    let summary = read_summary(&art.dir).unwrap();
    assert_eq!(summary, art.summary);
    let by_method: BTreeMap<&str, (u64, u64)> =
        summary.firings.iter().map(|f| (f.method.as_str(), (f.count, f.expected))).collect();
    // 600 steps, segments of 200, one gradient step per environment step
    assert_eq!(by_method["shrink_perturb"], (600 / 70, 600 / 70));
    assert_eq!(by_method["redo"], (2, 2));
    assert_eq!(by_method["reset_layers"], (1, 1));
    assert_eq!(by_method["l2"], (600, 600));
    assert_eq!(by_method["nap"], (600, 600));
    assert_eq!(summary.gradient_steps, 600);
}

#[test]
fn non_finite_training_aborts_with_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let text = SUP_TINY.replace("batch_size = 16", "batch_size = 16\nlr = 1e200");
    let cfg = config(&text, dir.path());
    let err = run_experiment(&cfg).unwrap_err();
    let Error::Divergence { step, .. } = err else { panic!("expected divergence, got {err}") };
    assert!(step >= 1 && step < cfg.total_steps);
    let run = dir.path().join("sup-tiny-seed5");
    let summary = read_summary(&run).unwrap();
    let record = summary.diverged.expect("divergence recorded");
    assert_eq!(record.step, step);
    assert_eq!(record.last_metric_step, Some(step / 50 * 50));
    // logs are flushed through the last report and the snapshot survives
    let lines = read_metrics(&run.join(METRICS_FILE)).unwrap();
    assert_eq!(lines.last().map(|l| l.step), record.last_metric_step);
    assert_eq!(load_config(&run.join(CONFIG_FILE)).unwrap().seed, cfg.seed);
}

fn checkpointed_run(dir: &Path) -> (ExperimentConfig, plasticity_lab::runner::RunArtifacts) {
    let text = with_mitigations(SUP_TINY, "[checkpoint]\ninterval = 200\n");
    let cfg = config(&text, dir);
    let art = run_experiment(&cfg).unwrap();
    (cfg, art)
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (_, art) = checkpointed_run(dir.path());
    assert_eq!(art.checkpoints.len(), 4, "steps 0, 200, 400, 600");
    for path in &art.checkpoints {
        let (net, manifest) = load_checkpoint(path).unwrap();
        let again = dir.path().join("again.json");
        save_checkpoint(&net, &again, manifest.meta.clone()).unwrap();
        let (net2, manifest2) = load_checkpoint(&again).unwrap();
        assert_eq!(net2, net);
        assert_eq!(manifest2.sha256, manifest.sha256);
        let blob = |p: &Path, m: &str| fs::read(p.parent().unwrap().join(m)).unwrap();
        assert_eq!(blob(path, &manifest.blob), blob(&again, &manifest2.blob));
    }
    // the step-0 checkpoint is a fresh init
    let (net0, _) = load_checkpoint(&art.checkpoints[0]).unwrap();
    assert_eq!(net0.params(), net0.init_snapshot());
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, art) = checkpointed_run(dir.path());
    let path = &art.checkpoints[1];
    let manifest = read_manifest(path).unwrap();
    let blob = path.parent().unwrap().join(&manifest.blob);
    let mut bytes = fs::read(&blob).unwrap();
    bytes[17] ^= 0x40;
    fs::write(&blob, &bytes).unwrap();
    assert!(matches!(load_checkpoint(path), Err(Error::Checkpoint(_))));
    bytes.truncate(bytes.len() - 8);
    fs::write(&blob, &bytes).unwrap();
    assert!(matches!(load_checkpoint(path), Err(Error::Checkpoint(_))));
}

#[test]
fn replay_reproduces_logged_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (_, art) = checkpointed_run(dir.path());
    let logged = read_metrics(&art.metrics).unwrap();
    for path in &art.checkpoints {
        let replay = replay_metrics(path, None).unwrap();
        let lines = replay.lines();
        assert!(lines.len() >= 15);
        for l in &lines {
            let v = value(&logged, l.step, &l.scope, &l.metric);
            assert!((v - l.value).abs() <= 1e-9, "{} {} at {}: {} vs {v}", l.scope, l.metric, l.step, l.value);
        }
        // every logged metric of that network at that step is replayed
        let n = logged.iter().filter(|m| m.step == replay.step && m.scope.starts_with("net/")).count();
        assert_eq!(n, lines.len());
    }
    // another probe seed changes the activation-based values
    let other = replay_metrics(&art.checkpoints[2], Some(99)).unwrap();
    assert_ne!(other.lines(), replay_metrics(&art.checkpoints[2], None).unwrap().lines());
}

fn trigger_toml(info: &MethodInfo) -> String {
    let t = serde_json::to_value(info.default_trigger).unwrap();
    let obj = t.as_object().unwrap();
    let fields: Vec<String> = obj
        .iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => format!("{k} = \"{s}\""),
            other => format!("{k} = {other}"),
        })
        .collect();
    format!("{{ {} }}", fields.join(", "))
}

#[test]
fn listed_methods_and_defaults_load_as_configs() {
    let listing = list_methods_json();
    let cats = listing["categories"].as_array().unwrap();
    assert_eq!(cats.len(), 5);
    let names: Vec<&str> =
        cats.iter().flat_map(|c| c["methods"].as_array().unwrap()).map(|m| m["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 13);
    assert_eq!(Category::ALL.len(), 5);

    let dir = tempfile::tempdir().unwrap();
    for info in registry() {
        let params: Vec<String> = info
            .params
            .iter()
            .map(|p| match serde_json::to_value(&p.default).unwrap() {
                serde_json::Value::String(s) => format!("{} = \"{s}\"", p.name),
                other => format!("{} = {other}", p.name),
            })
            .collect();
        let text = format!(
            "{SUP_TINY}\n[[mitigation]]\nmethod = \"{}\"\nparams = {{ {} }}\ntrigger = {}\n",
            info.name,
            params.join(", "),
            trigger_toml(&info)
        );
        let path = dir.path().join(format!("{}.toml", info.name));
        fs::write(&path, &text).unwrap();
        let cfg = load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", info.name));
        let entry = &cfg.plan.entries[0];
        assert_eq!(entry.method, Method::from_name(info.name).unwrap());
        assert_eq!(entry.trigger, info.default_trigger);
        for p in &info.params {
            assert_eq!(entry.params.get(p.name), Some(&p.default), "{}.{}", info.name, p.name);
        }
        // loss methods refuse step schedules
        if info.triggers == TriggerClass::Loss {
            let bad = text.replace(&trigger_toml(&info), "{ kind = \"every_k_steps\", k = 5 }");
            assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
        }
    }
}

#[test]
fn empty_plan_logs_the_full_suite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(SUP_TINY, dir.path());
    let art = run_experiment(&cfg).unwrap();
    let lines = read_metrics(&art.metrics).unwrap();
    for scope in ["net/layer0", "net/layer1", "net/all"] {
        for metric in ["rdu", "fau", "stable_rank", "effective_rank", "weight_diff", "weight_diff_per_param"] {
            value(&lines, 0, scope, metric);
            value(&lines, 600, scope, metric);
        }
        // gradient norms exist once a gradient has been taken
        assert!(!lines.iter().any(|l| l.step == 0 && l.metric == "grad_norm"));
        assert!(value(&lines, 50, scope, "grad_norm") > 0.0);
    }
    for task in 0..3 {
        let speed = value(&lines, 200 * task + 100, &format!("task{task}"), "adaptation_speed");
        assert!(speed.is_finite());
    }
    let steps: Vec<u64> = lines.iter().map(|l| l.step).collect();
    assert!(steps.windows(2).all(|w| w[0] <= w[1]), "log steps are monotone");
}

#[test]
fn config_snapshot_is_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    for text in [C51_TINY, PPO_TINY, SUP_TINY] {
        let cfg = config(text, dir.path());
        let art = run_experiment(&cfg).unwrap();
        let written = fs::read_to_string(&art.config).unwrap();
        assert_eq!(written, cfg.to_toml().unwrap());
        let reparsed = load_config(&art.config).unwrap();
        assert_eq!(reparsed, cfg);
        assert_eq!(reparsed.to_toml().unwrap(), written);
    }
}

#[test]
fn rl_runs_log_episodes_and_per_network_scopes() {
    let dir = tempfile::tempdir().unwrap();
    let art = run_experiment(&config(C51_TINY, dir.path())).unwrap();
    let csv = fs::read_to_string(&art.episodes).unwrap();
    let mut rows = csv.lines();
    assert_eq!(rows.next(), Some("step,episode,return,length"));
    let rows: Vec<Vec<f64>> = rows.map(|r| r.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len() as u64, art.summary.episodes);
    for r in &rows {
        assert!(r[3] >= 1.0 && r[3] <= 30.0, "episode length {} within the horizon", r[3]);
    }
    let lines = read_metrics(&art.metrics).unwrap();
    let scopes: std::collections::BTreeSet<&str> = lines.iter().map(|l| l.scope.as_str()).collect();
    assert!(scopes.iter().any(|s| s.ends_with("/all")));
    assert!(scopes.contains("episodes"));
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut files = Vec::new();
    for dir in [root.clone(), root.join("acceptance")] {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.extension().is_some_and(|x| x == "toml") {
                files.push(p);
            }
        }
    }
    assert!(files.len() >= 7, "{files:?}");
    for f in files {
        let cfg = load_config(&f).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        assert_eq!(parse_config(&cfg.to_toml().unwrap()).unwrap(), cfg, "{}", f.display());
    }
}
