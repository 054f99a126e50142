import init, { spectrum, c51_project, gridworld_level, gridworld_path_length } from "./pkg/plasticity_lab_web.js";

const $ = (id) => document.getElementById(id);

function show(el, f) {
  try {
    el.classList.remove("err");
    f();
  } catch (e) {
    el.classList.add("err");
    el.textContent = String(e.message ?? e);
  }
}

function parseMatrix(text) {
  const rows = text.trim().split("\n").map((l) => l.trim().split(/[\s,]+/).map(Number));
  const cols = rows[0].length;
  if (rows.some((r) => r.length !== cols || r.some(Number.isNaN))) throw new Error("ragged or non-numeric matrix");
  return { rows: rows.length, cols, data: new Float64Array(rows.flat()) };
}

function runSpectrum() {
  const out = $("spectrum-out");
  show(out, () => {
    const m = parseMatrix($("matrix").value);
    const s = JSON.parse(spectrum(m.rows, m.cols, m.data));
    const sv = s.singular_values.map((v) => v.toPrecision(5)).join("  ");
    const er = s.effective_rank === null ? "undefined" : s.effective_rank.toFixed(4);
    const sr = s.stable_rank === null ? "undefined" : s.stable_rank;
    out.textContent = `singular values  ${sv}\nstable rank      ${sr}\neffective rank   ${er}`;
  });
}

function randomLowRank() {
  const n = 6, k = 2;
  const u = Array.from({ length: n * k }, () => Math.random() * 2 - 1);
  const v = Array.from({ length: k * n }, () => Math.random() * 2 - 1);
  const lines = [];
  for (let i = 0; i < n; i++) {
    const row = [];
    for (let j = 0; j < n; j++) {
      let s = 0;
      for (let t = 0; t < k; t++) s += u[i * k + t] * v[t * n + j];
      row.push((s + 0.01 * (Math.random() - 0.5)).toFixed(3));
    }
    lines.push(row.join(" "));
  }
  $("matrix").value = lines.join("\n");
  runSpectrum();
}

function runProjection() {
  const out = $("p-out");
  show(out, () => {
    const n = Math.max(2, Math.floor(Number($("p-atoms").value)));
    const vmax = Number($("p-vmax").value);
    const atoms = Array.from({ length: n }, (_, i) => -vmax + (2 * vmax * i) / (n - 1));
    const w = atoms.map((z) => Math.exp(-((z + vmax / 3) ** 2)) + 0.6 * Math.exp(-(((z - vmax / 2) / 0.7) ** 2)));
    const total = w.reduce((a, b) => a + b, 0);
    const p = w.map((x) => x / total);
    const m = c51_project(new Float64Array(p), Number($("p-reward").value), Number($("p-gamma").value),
      $("p-done").checked, -vmax, vmax);
    draw(p, Array.from(m));
    const mean = (q) => q.reduce((a, x, i) => a + x * atoms[i], 0);
    out.textContent = `E[next] = ${mean(p).toFixed(4)}   E[target] = ${mean(m).toFixed(4)}   ` +
      `mass = ${m.reduce((a, b) => a + b, 0).toFixed(12)}`;
  });
}

function draw(p, m) {
  const c = $("p-canvas"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const top = Math.max(...p, ...m) * 1.05, bw = c.width / p.length;
  const bar = (q, i, colour, inset) => {
    const h = (q[i] / top) * (c.height - 10);
    g.fillStyle = colour;
    g.fillRect(i * bw + inset, c.height - h, bw - 2 * inset, h);
  };
  for (let i = 0; i < p.length; i++) {
    bar(p, i, "#bbb", 1);
    bar(m, i, "rgba(40, 90, 200, 0.75)", bw / 4);
  }
}

function runLevel() {
  const out = $("g-out");
  show(out, () => {
    const size = Number($("g-size").value), seed = BigInt($("g-seed").value);
    const text = gridworld_level(size, seed);
    out.textContent = `${text}\nshortest path: ${gridworld_path_length(size, seed)} steps`;
  });
}

function stepSeed(d) {
  $("g-seed").value = Math.max(0, Number($("g-seed").value) + d);
  runLevel();
}

await init();
$("spectrum-go").onclick = runSpectrum;
$("spectrum-random").onclick = randomLowRank;
for (const id of ["p-reward", "p-gamma", "p-atoms", "p-vmax", "p-done"]) $(id).oninput = runProjection;
$("g-prev").onclick = () => stepSeed(-1);
$("g-next").onclick = () => stepSeed(1);
$("g-size").oninput = runLevel;
$("g-seed").oninput = runLevel;
runSpectrum();
runProjection();
runLevel();
