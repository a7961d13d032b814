import init, { evolve_density, spectral_gap_curve, sample_particles } from "./pkg/hmc_lq_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function plot(canvas, xs, series, opts = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 28;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.ys.filter((y) => y !== null && Number.isFinite(y)));
  const ymin = opts.ymin ?? Math.min(0, ...all);
  const ymax = opts.ymax ?? Math.max(...all) * 1.05;
  const x0 = xs[0], x1 = xs[xs.length - 1];
  const px = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 2 * pad);
  const py = (y) => h - pad - ((y - ymin) / (ymax - ymin || 1)) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px system-ui";
  ctx.fillText(x0.toFixed(2), pad, h - 10);
  ctx.fillText(x1.toFixed(2), w - pad - 30, h - 10);
  ctx.fillText(ymax.toPrecision(3), 2, pad + 4);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.setLineDash(s.dash ?? []);
    ctx.beginPath();
    let started = false;
    xs.forEach((x, i) => {
      const y = s.ys[i];
      if (y === null || !Number.isFinite(y)) return;
      if (started) ctx.lineTo(px(x), py(y));
      else { ctx.moveTo(px(x), py(y)); started = true; }
    });
    ctx.stroke();
  }
  ctx.setLineDash([]);
  series.forEach((s, i) => {
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, w - pad - 150, pad + 14 + 13 * i);
  });
}

function guarded(statusId, fn) {
  return () => {
    const status = $(statusId);
    status.className = "status";
    status.textContent = "working...";
    setTimeout(() => {
      try {
        const t = performance.now();
        const msg = fn();
        status.textContent = `${msg} (${Math.round(performance.now() - t)} ms)`;
      } catch (e) {
        status.className = "status error";
        status.textContent = String(e.message ?? e);
      }
    }, 10);
  };
}

let evolution = null;

function drawFrame() {
  if (!evolution) return;
  const k = Math.min(num("ev-frame"), evolution.frames.length - 1);
  plot($("ev-canvas"), evolution.x, [
    { ys: evolution.target, color: "#888", dash: [4, 3], label: "target f" },
    { ys: evolution.frames[k], color: "#1f5fbf", label: `T^${k} h` },
  ]);
}

$("ev-run").onclick = guarded("ev-status", () => {
  const steps = num("ev-steps");
  evolution = JSON.parse(
    evolve_density($("ev-target").value, num("ev-time"), 257, num("ev-lo"), num("ev-hi"), steps),
  );
  $("ev-frame").max = String(steps);
  $("ev-frame").value = String(steps);
  drawFrame();
  const last = evolution.errors[evolution.errors.length - 1];
  return `relative L2 distance to the target after ${steps} steps: ${last.toExponential(3)}`;
});
$("ev-frame").oninput = drawFrame;

$("gap-run").onclick = guarded("gap-status", () => {
  const r = JSON.parse(
    spectral_gap_curve($("gap-target").value, num("gap-min"), num("gap-max"), num("gap-samples"), 129),
  );
  const series = [{ ys: r.rho, color: "#c0392b", label: "rho (power iteration)" }];
  if (r.reference) series.push({ ys: r.reference, color: "#888", dash: [4, 3], label: "|cos t|" });
  plot($("gap-canvas"), r.t, series, { ymin: 0, ymax: 1.05 });
  const worst = Math.max(...r.rho);
  return `largest rho ${worst.toFixed(4)}; rho near 1 means no contraction`;
});

$("pt-run").onclick = guarded("pt-status", () => {
  const r = JSON.parse(
    sample_particles($("pt-target").value, num("pt-time"), num("pt-count"), num("pt-steps"),
      BigInt(num("pt-seed")), -1, 2),
  );
  const last = r.steps[r.steps.length - 1];
  plot($("pt-canvas"), r.x, [
    { ys: last.operator, color: "#1f5fbf", label: `T^${last.n} h0 (normalized)` },
    { ys: last.histogram, color: "#e67e22", label: "particle histogram" },
  ]);
  return r.steps
    .map((s) => `n=${s.n}: L1 ${s.l1.toFixed(4)} vs noise ${s.mc_error.toFixed(4)}`)
    .join("; ");
});

await init();
$("ev-run").click();
