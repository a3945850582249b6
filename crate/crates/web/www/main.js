import init, { equilibrium, simulate, bound, mass_of } from "./pkg/fptorus_web.js";

const $ = (id) => document.getElementById(id);
const field = (id) => $(id).value.trim();
const problem = () => ({
  d: field("d"), pi: field("pi"), phi: field("phi"), f0: field("f0"),
  n: Number($("n").value),
});

function show(id, text, isError) {
  $(id).textContent = text;
  $(id).className = isError ? "out err" : "out";
}

// Draws each series as a polyline, all on a common y range.
function plot(canvas, xs, series) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 28;
  ctx.clearRect(0, 0, w, h);
  let lo = Infinity, hi = -Infinity;
  for (const s of series) for (const v of s.y) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  if (hi - lo < 1e-12) { lo -= 0.5; hi += 0.5; }
  const x0 = xs[0], x1 = xs[xs.length - 1];
  const px = (x) => pad + (w - 2 * pad) * (x - x0) / (x1 - x0 || 1);
  const py = (y) => h - pad - (h - 2 * pad) * (y - lo) / (hi - lo);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(hi.toPrecision(4), 2, pad - 4);
  ctx.fillText(lo.toPrecision(4), 2, h - 6);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.y.forEach((v, i) => (i ? ctx.lineTo(px(xs[i]), py(v)) : ctx.moveTo(px(xs[i]), py(v))));
    ctx.stroke();
  }
}

function runEquilibrium() {
  const p = problem();
  try {
    const mass = mass_of(p.f0, p.n);
    const eq = equilibrium(p.d, p.phi, p.n, mass);
    show("eq-out", `mass = ${mass}\nC_eq = ${eq.c_eq}\nF(f_eq) = ${eq.free_energy}`);
    plot($("eq-plot"), eq.x(), [{ y: eq.values(), color: "#1565c0" }]);
  } catch (e) {
    show("eq-out", String(e.message ?? e), true);
  }
}

let animation = null;

function runSimulation() {
  const p = problem();
  if (animation) cancelAnimationFrame(animation);
  try {
    const run = simulate(p.d, p.pi, p.phi, p.f0, p.n, Number($("t").value), 120);
    const xs = run.x(), feq = run.equilibrium();
    const mass = run.mass(), energy = run.energy();
    const drift = Math.max(...mass.map((m) => Math.abs(m - mass[0])));
    show("sim-out", `frames = ${run.frame_count}, mass drift = ${drift.toExponential(2)}, ` +
      `F: ${energy[0].toPrecision(6)} -> ${energy[energy.length - 1].toPrecision(6)}`);
    plot($("sim-energy"), run.diag_t(), [{ y: energy, color: "#c62828" }]);
    let k = 0;
    const step = () => {
      plot($("sim-plot"), xs, [
        { y: feq, color: "#aaa" },
        { y: run.frame(k), color: "#2e7d32" },
      ]);
      const ctx = $("sim-plot").getContext("2d");
      ctx.fillText(`t = ${run.time(k).toFixed(4)}`, 40, 20);
      k += 1;
      if (k < run.frame_count) animation = requestAnimationFrame(step);
    };
    step();
  } catch (e) {
    show("sim-out", String(e.message ?? e), true);
  }
}

function runBound() {
  const p = problem();
  try {
    const [t, mu, norm, c, v, wi, ws] = bound(p.d, p.pi, p.phi, p.f0, p.n);
    show("tb-out", [
      `T      = ${t}`,
      `mu     = ${mu}`,
      `|f0|   = ${norm}`,
      `C      = ${c}`,
      `|V|    = ${v}`,
      `W      in [${wi}, ${ws}]`,
    ].join("\n"));
  } catch (e) {
    show("tb-out", String(e.message ?? e), true);
  }
}

await init();
$("eq-run").onclick = runEquilibrium;
$("sim-run").onclick = runSimulation;
$("tb-run").onclick = runBound;
runEquilibrium();
