// Built with: wasm-pack build crates/wasm --target web --out-dir www/pkg
import init, { validate_random, complete_synthetic, snr_curve } from "./pkg/fibertt_wasm.js";

const $ = (id) => document.getElementById(id);
const list = (id) => new Uint32Array($(id).value.split(",").map((s) => parseInt(s.trim(), 10)));
const num = (id) => parseFloat($(id).value);
const snrValue = (s) => (s.trim().toLowerCase() === "inf" ? Infinity : parseFloat(s));

function drawGrid(base, observed) {
  const canvas = $("v-grid");
  const ctx = canvas.getContext("2d");
  const [rows, cols] = [base[0], base.length > 1 ? base[1] : 1];
  const cell = Math.max(1, Math.floor(Math.min(canvas.width / cols, canvas.height / rows)));
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let i = 0; i < rows; i++) {
    for (let j = 0; j < cols; j++) {
      // first-index-fastest: fiber (i, j, 0, ...) sits at i + rows * j
      ctx.fillStyle = observed[i + rows * j] ? "#2b4c7e" : "#e8e8e8";
      ctx.fillRect(j * cell, i * cell, cell - 1, cell - 1);
    }
  }
}

function runValidate() {
  const base = list("v-shape");
  const res = JSON.parse(validate_random(base, list("v-ranks"), num("v-rate"), num("v-seed")));
  if (res.error) {
    $("v-verdict").textContent = res.error;
    $("v-verdict").className = "bad";
    return;
  }
  const r = res.report;
  $("v-verdict").textContent = r.overall_valid
    ? `valid: ${r.observed_fiber_count} of ${r.total_fibers} fibers observed`
    : `not valid: ${r.messages.join("; ")}`;
  $("v-verdict").className = r.overall_valid ? "ok" : "bad";
  drawGrid(Array.from(base), res.observed);
  $("v-out").textContent = JSON.stringify(r.splits, null, 1);
}

function runComplete() {
  const t0 = performance.now();
  const res = JSON.parse(
    complete_synthetic(list("c-shape"), list("c-ranks"), num("c-rate"), snrValue($("c-snr").value),
      $("c-method").value, $("c-combine").value, num("c-seed")),
  );
  res.elapsed_ms = Math.round(performance.now() - t0);
  $("c-out").textContent = JSON.stringify(res, null, 1);
}

function plot(points) {
  const svg = $("s-plot");
  const [w, h, pad] = [svg.width.baseVal.value, svg.height.baseVal.value, 40];
  const pts = points.filter((p) => p.median_error > 0);
  const xs = pts.map((p) => p.snr_db);
  const ys = pts.map((p) => Math.log10(p.median_error));
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.floor(Math.min(...ys)), Math.ceil(Math.max(...ys))];
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0 || 1)) * (h - 2 * pad);
  let out = `<line x1="${pad}" y1="${h - pad}" x2="${w - pad}" y2="${h - pad}" stroke="#999"/>`;
  out += `<line x1="${pad}" y1="${pad}" x2="${pad}" y2="${h - pad}" stroke="#999"/>`;
  for (let e = y0; e <= y1; e++) {
    out += `<text x="4" y="${sy(e) + 4}" font-size="11">1e${e}</text>`;
  }
  pts.forEach((p, i) => {
    out += `<circle cx="${sx(xs[i])}" cy="${sy(ys[i])}" r="3" fill="#2b4c7e"/>`;
    out += `<text x="${sx(xs[i]) - 8}" y="${h - pad + 16}" font-size="11">${p.snr_db}</text>`;
  });
  const path = pts.map((p, i) => `${i ? "L" : "M"}${sx(xs[i])},${sy(ys[i])}`).join("");
  out += `<path d="${path}" fill="none" stroke="#2b4c7e"/>`;
  out += `<text x="${w / 2 - 20}" y="${h - 4}" font-size="11">SNR (dB)</text>`;
  svg.innerHTML = out;
}

function runCurve() {
  const snrs = new Float64Array([0, 10, 20, 30, 40, 50]);
  const t0 = performance.now();
  const res = JSON.parse(
    snr_curve(list("s-shape"), list("s-ranks"), num("s-rate"), snrs, num("s-trials"),
      "intersection", $("s-combine").value, 1),
  );
  if (res.error) {
    $("s-note").textContent = res.error;
    return;
  }
  $("s-note").textContent = `median relative error per SNR, ${Math.round(performance.now() - t0)} ms`;
  plot(res.points);
}

await init();
$("v-run").onclick = runValidate;
$("c-run").onclick = runComplete;
$("s-run").onclick = runCurve;
runValidate();
