import init, { runCollapse, compareOmp, runProbe } from "./pkg/corrupt_sense_wasm.js";

const $ = (id) => document.getElementById(id);
const PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"];

function call(fn, request, statsEl) {
  try {
    return JSON.parse(fn(JSON.stringify(request)));
  } catch (e) {
    statsEl.textContent = String(e);
    statsEl.className = "stats error";
    return null;
  }
}

// Axes with linear or log scales; returns a point mapper.
function axes(ctx, { xmin, xmax, ymin, ymax, xlabel, ylabel, logx = false, logy = false }) {
  const { width: w, height: h } = ctx.canvas;
  const pad = { l: 60, r: 15, t: 15, b: 40 };
  const tx = (v) => (logx ? Math.log10(v) : v);
  const ty = (v) => (logy ? Math.log10(v) : v);
  const [x0, x1, y0, y1] = [tx(xmin), tx(xmax), ty(ymin), ty(ymax)];
  const map = (x, y) => [
    pad.l + ((tx(x) - x0) / (x1 - x0 || 1)) * (w - pad.l - pad.r),
    h - pad.b - ((ty(y) - y0) / (y1 - y0 || 1)) * (h - pad.t - pad.b),
  ];
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.fillStyle = "#333";
  ctx.font = "11px system-ui";
  ctx.beginPath();
  ctx.moveTo(pad.l, pad.t);
  ctx.lineTo(pad.l, h - pad.b);
  ctx.lineTo(w - pad.r, h - pad.b);
  ctx.stroke();
  for (let i = 0; i <= 4; i++) {
    const fx = x0 + ((x1 - x0) * i) / 4;
    const fy = y0 + ((y1 - y0) * i) / 4;
    const vx = logx ? 10 ** fx : fx;
    const vy = logy ? 10 ** fy : fy;
    const [px] = map(vx, ymin);
    const [, py] = map(xmin, vy);
    ctx.fillText(vx.toPrecision(3), px - 12, h - pad.b + 14);
    ctx.fillText(vy.toPrecision(3), 4, py + 4);
  }
  ctx.fillText(xlabel, w / 2 - 20, h - 8);
  ctx.save();
  ctx.translate(12, h / 2 + 20);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(ylabel, 0, 0);
  ctx.restore();
  return map;
}

function polyline(ctx, map, pts, color, dashed = false) {
  ctx.strokeStyle = color;
  ctx.fillStyle = color;
  ctx.setLineDash(dashed ? [5, 4] : []);
  ctx.beginPath();
  pts.forEach(([x, y], i) => {
    const [px, py] = map(x, y);
    i ? ctx.lineTo(px, py) : ctx.moveTo(px, py);
  });
  ctx.stroke();
  ctx.setLineDash([]);
  for (const [x, y] of pts) {
    const [px, py] = map(x, y);
    ctx.fillRect(px - 2, py - 2, 4, 4);
  }
}

function legend(ctx, labels) {
  labels.forEach((label, i) => {
    ctx.fillStyle = PALETTE[i % PALETTE.length];
    ctx.fillText(label, ctx.canvas.width - 60, 25 + 14 * i);
  });
}

function drawCollapse() {
  const stats = $("c-stats");
  stats.className = "stats";
  stats.textContent = "running...";
  const estimator = $("c-est").value;
  const levels = estimator === "missing" ? [0, 0.2, 0.4, 0.6] : [0, 0.5, 1, 1.5, 2];
  const out = call(runCollapse, {
    estimator,
    n: +$("c-n").value,
    trials: +$("c-trials").value,
    seed: +$("c-seed").value,
    levels,
  }, stats);
  if (!out) return;
  const ks = [...new Set(out.points.map((p) => p.k))];
  const ok = out.points.filter((p) => Number.isFinite(p.mean_error));
  const ymax = Math.max(...ok.map((p) => p.mean_error)) * 1.05 || 1;
  const cmax = Math.max(...ok.map((p) => p.control)) || 1;

  const raw = $("c-raw").getContext("2d");
  let map = axes(raw, { xmin: 0, xmax: Math.max(...levels), ymin: 0, ymax, xlabel: out.axis, ylabel: "mean l2 error" });
  ks.forEach((k, i) => polyline(raw, map, ok.filter((p) => p.k === k).map((p) => [p.level, p.mean_error]), PALETTE[i % PALETTE.length]));
  legend(raw, ks.map((k) => `k=${k}`));

  const col = $("c-col").getContext("2d");
  map = axes(col, { xmin: 0, xmax: cmax, ymin: 0, ymax, xlabel: "control parameter", ylabel: "mean l2 error" });
  ks.forEach((k, i) => polyline(col, map, ok.filter((p) => p.k === k).map((p) => [p.control, p.mean_error]), PALETTE[i % PALETTE.length]));
  if (out.pooled_slope !== null) {
    polyline(col, map, [[0, 0], [cmax, out.pooled_slope * cmax]], "#000", true);
  }
  legend(col, ks.map((k) => `k=${k}`));

  const failed = out.points.filter((p) => p.failure_rate > 0).length;
  stats.textContent = out.pooled_r2 === null
    ? "collapse fit unavailable"
    : `pooled slope ${out.pooled_slope.toFixed(4)}   R² ${out.pooled_r2.toFixed(3)}   slope dispersion ${out.slope_dispersion.toFixed(3)}` +
      (failed ? `\n${failed} cells had trials without a positive definite corrected Gram` : "");
}

function drawOmp() {
  for (const id of ["o-sw", "o-k", "o-n"]) $(`${id}-v`).textContent = $(id).value;
  const stats = $("o-stats");
  stats.className = "stats";
  const out = call(compareOmp, {
    sigma_w: +$("o-sw").value,
    k: +$("o-k").value,
    n: +$("o-n").value,
    p: +$("o-p").value,
    seed: +$("o-seed").value,
  }, stats);
  if (!out) return;
  const ctx = $("o-plot").getContext("2d");
  const coefs = out.coefficients;
  const vals = coefs.flatMap((c) => [c.truth, c.corrected, c.naive]);
  const lim = Math.max(1.2, ...vals.map(Math.abs));
  const map = axes(ctx, { xmin: 0, xmax: coefs.length + 1, ymin: -lim, ymax: lim, xlabel: "coefficient (true or selected)", ylabel: "value" });
  const series = [["truth", "#000"], ["corrected", PALETTE[0]], ["naive", PALETTE[3]]];
  coefs.forEach((c, i) => {
    series.forEach(([key, color], j) => {
      const [px, py] = map(i + 1 + (j - 1) * 0.18, c[key]);
      const [, p0] = map(0, 0);
      ctx.fillStyle = color;
      ctx.fillRect(px - 3, Math.min(py, p0), 6, Math.abs(py - p0) || 1);
    });
    const [px] = map(i + 1, -lim);
    ctx.fillStyle = "#555";
    ctx.fillText(String(c.index), px - 8, 26);
  });
  series.forEach(([key, color], j) => {
    ctx.fillStyle = color;
    ctx.fillText(key, ctx.canvas.width - 80, 40 + 14 * j);
  });
  const corr = out.corrected_error === null ? `failed (${out.message})` : out.corrected_error.toFixed(4);
  stats.textContent =
    `selected (in order): ${out.support.join(", ")}   exact support: ${out.exact_support}\n` +
    `l2 error corrected: ${corr}   naive: ${out.naive_error.toFixed(4)}`;
}

function drawProbe() {
  const stats = $("p-stats");
  stats.className = "stats";
  const out = call(runProbe, { lemma: $("p-lemma").value, trials: +$("p-trials").value, seed: +$("p-seed").value }, stats);
  if (!out) return;
  const ctx = $("p-plot").getContext("2d");
  const pts = out.n_values.map((n, i) => [n, out.medians[i]]);
  const ys = out.medians.filter((m) => m > 0);
  const map = axes(ctx, {
    xmin: Math.min(...out.n_values), xmax: Math.max(...out.n_values),
    ymin: Math.min(...ys) / 1.3, ymax: Math.max(...ys) * 1.3,
    xlabel: "n", ylabel: "median deviation", logx: true, logy: true,
  });
  polyline(ctx, map, pts, PALETTE[0]);
  const [n0, m0] = pts[0];
  const nEnd = pts[pts.length - 1][0];
  polyline(ctx, map, [[n0, m0], [nEnd, m0 * Math.sqrt(n0 / nEnd)]], "#888", true);
  const e = out.scaling_exponent;
  stats.textContent = `fitted exponent ${e === null ? "undefined" : e.toFixed(3)} (dashed: n^-1/2 reference)` +
    (out.required_n ? `\nn needed for median <= 1/54: ${Math.round(out.required_n)}` : "");
}

await init();
$("c-n").addEventListener("input", () => ($("c-n-v").textContent = $("c-n").value));
$("c-n-v").textContent = $("c-n").value;
$("c-run").addEventListener("click", drawCollapse);
for (const id of ["o-sw", "o-k", "o-n", "o-p", "o-seed"]) $(id).addEventListener("input", drawOmp);
$("p-run").addEventListener("click", drawProbe);
drawCollapse();
drawOmp();
drawProbe();
