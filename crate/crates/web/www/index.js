import init, { rate_curve_js, optimal_path_js, sample_path_js } from "./pkg/chldp_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function params() {
  return { drift: $("drift").value, n: num("n"), m: num("m"), T: num("T"), xbar: num("xbar") };
}

function axes(ctx, w, h, [x0, x1], [y0, y1]) {
  const pad = 40;
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0 || 1)) * (h - 2 * pad);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#333";
  ctx.fillText(x0.toFixed(2), pad, h - pad + 14);
  ctx.fillText(x1.toFixed(2), w - pad - 24, h - pad + 14);
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  ctx.fillText(y0.toPrecision(3), 2, h - pad);
  return { sx, sy };
}

function range(values) {
  const v = values.filter(Number.isFinite);
  return [Math.min(...v), Math.max(...v)];
}

// Slices of an (m+1) x n path drawn against x, colored from early (blue) to late (red).
function drawSlices(canvas, values, n, m, every) {
  const ctx = canvas.getContext("2d");
  const xs = Array.from({ length: n }, (_, k) => ((2 * k + 1) * Math.PI) / (2 * n));
  const { sx, sy } = axes(ctx, canvas.width, canvas.height, [0, Math.PI], range(Array.from(values)));
  for (let j = 0; j <= m; j += every) {
    const c = Math.round((255 * j) / m);
    ctx.strokeStyle = `rgb(${c},60,${255 - c})`;
    ctx.beginPath();
    for (let k = 0; k < n; k++) {
      const v = values[j * n + k];
      k === 0 ? ctx.moveTo(sx(xs[k]), sy(v)) : ctx.lineTo(sx(xs[k]), sy(v));
    }
    ctx.stroke();
  }
}

function guard(statusId, f) {
  return () => {
    $(statusId).textContent = "working...";
    setTimeout(() => {
      const t0 = performance.now();
      try {
        $(statusId).textContent = `${f()} (${(performance.now() - t0).toFixed(0)} ms)`;
      } catch (e) {
        $(statusId).textContent = `error: ${e.message ?? e}`;
      }
    }, 10);
  };
}

function runCurve() {
  const p = params();
  const out = rate_curve_js(p.drift, p.n, p.m, p.T, p.xbar, num("ylo"), num("yhi"), num("pts"));
  const ys = [], is = [];
  for (let i = 0; i < out.length; i += 2) { ys.push(out[i]); is.push(out[i + 1]); }
  const canvas = $("curve"), ctx = canvas.getContext("2d");
  const { sx, sy } = axes(ctx, canvas.width, canvas.height, range(ys), [0, range(is)[1]]);
  ctx.strokeStyle = "#c03";
  ctx.beginPath();
  ys.forEach((y, i) => (i === 0 ? ctx.moveTo(sx(y), sy(is[i])) : ctx.lineTo(sx(y), sy(is[i]))));
  ctx.stroke();
  return `${ys.length} levels`;
}

function runPath() {
  const p = params();
  const out = optimal_path_js(p.drift, p.n, p.m, p.T, p.xbar, num("y"));
  drawSlices($("path"), out.subarray(2), p.n, p.m, Math.max(1, Math.floor(p.m / 16)));
  return `I = ${out[0].toPrecision(6)}, y0 = ${out[1].toPrecision(4)}`;
}

function runSample() {
  const p = params();
  const out = sample_path_js(p.drift, p.n, p.m, p.T, num("eps"), BigInt(num("seed")));
  drawSlices($("sample"), out.subarray(1), p.n, p.m, Math.max(1, Math.floor(p.m / 16)));
  return `max |u| = ${out[0].toPrecision(4)}`;
}

await init();
$("run-curve").onclick = guard("curve-status", runCurve);
$("run-path").onclick = guard("path-status", runPath);
$("run-sample").onclick = guard("sample-status", runSample);
