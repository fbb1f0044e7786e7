// Generated by `wasm-bindgen --target web --out-dir www/pkg`.
import init, { power_map, greedy_candidate, controller_error_map } from "./pkg/kernel_pi_web.js";

const PROBE_N = 121;
const QUAD_ORDER = 24;

const $ = (id) => document.getElementById(id);
const canvas = $("view");
const ctx = canvas.getContext("2d");
const status = $("status");

let centers = [];
let mode = "power";

function gridCenters(n) {
  const out = [];
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      out.push(-1 + (2 * i) / (n - 1), -1 + (2 * j) / (n - 1));
    }
  }
  return out;
}

// Probe (i, j) is x1 = -1 + 2i/(n-1), x2 = -1 + 2j/(n-1); x1 runs right, x2 up.
function toPixel(x1, x2) {
  return [((x1 + 1) / 2) * canvas.width, ((1 - x2) / 2) * canvas.height];
}

function fromPixel(px, py) {
  return [(px / canvas.width) * 2 - 1, 1 - (py / canvas.height) * 2];
}

// Viridis-ish ramp, enough to read a heat map.
function color(t) {
  const stops = [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];
  const s = Math.min(Math.max(t, 0), 1) * (stops.length - 1);
  const k = Math.min(Math.floor(s), stops.length - 2);
  const f = s - k;
  return stops[k].map((a, i) => Math.round(a + f * (stops[k + 1][i] - a)));
}

function draw(values, n, pts) {
  const max = values.reduce((m, v) => Math.max(m, v), 0) || 1;
  const img = ctx.createImageData(n, n);
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const [r, g, b] = color(values[i * n + j] / max);
      const o = ((n - 1 - j) * n + i) * 4;
      img.data.set([r, g, b, 255], o);
    }
  }
  const off = new OffscreenCanvas(n, n);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#fff";
  ctx.strokeStyle = "#000";
  for (let k = 0; k < pts.length; k += 2) {
    const [x, y] = toPixel(pts[k], pts[k + 1]);
    ctx.beginPath();
    ctx.arc(x, y, 4, 0, 2 * Math.PI);
    ctx.fill();
    ctx.stroke();
  }
  return max;
}

function params() {
  return [$("family").value, parseFloat($("rho").value)];
}

function run(label, f) {
  const t0 = performance.now();
  try {
    f();
    status.className = "";
    status.textContent = `${label} in ${(performance.now() - t0).toFixed(0)} ms, ${centers.length / 2} centers`;
    return true;
  } catch (e) {
    status.className = "err";
    status.textContent = String(e.message ?? e);
    return false;
  }
}

function renderPower() {
  mode = "power";
  return run("power map", () => {
    const [fam, rho] = params();
    const values = power_map(fam, rho, new Float64Array(centers), PROBE_N);
    $("max-power").textContent = draw(values, PROBE_N, centers).toExponential(4);
  });
}

function renderError() {
  mode = "error";
  run("error map", () => {
    const [fam, rho] = params();
    const n = parseInt($("grid").value, 10);
    const values = controller_error_map(fam, rho, n, QUAD_ORDER, PROBE_N);
    centers = gridCenters(n);
    $("sup-err").textContent = draw(values, PROBE_N, centers).toExponential(4);
  });
}

function rerender() {
  mode === "power" ? renderPower() : renderError();
}

await init();

centers = gridCenters(3);
$("rho").addEventListener("input", () => {
  $("rho-val").textContent = $("rho").value;
  rerender();
});
$("family").addEventListener("change", rerender);
$("reset").addEventListener("click", () => {
  centers = gridCenters(3);
  renderPower();
});
$("greedy").addEventListener("click", () => {
  if (mode !== "power") return renderPower();
  const [fam, rho] = params();
  try {
    const c = greedy_candidate(fam, rho, new Float64Array(centers), PROBE_N);
    centers.push(c[0], c[1]);
  } catch (e) {
    status.className = "err";
    status.textContent = String(e.message ?? e);
    return;
  }
  renderPower();
});
$("errmap").addEventListener("click", renderError);
canvas.addEventListener("click", (ev) => {
  if (mode !== "power") return;
  const r = canvas.getBoundingClientRect();
  centers.push(...fromPixel(ev.clientX - r.left, ev.clientY - r.top));
  // A rejected point (e.g. on top of an existing center) is dropped again.
  if (!renderPower()) centers.splice(-2, 2);
});

renderPower();
