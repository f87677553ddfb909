import init, { reach, cluster, friction } from "./pkg/isot_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

// top view, x to the right, y up; meters to pixels
function topView(canvas, x0, x1, y0, y1) {
  const ctx = canvas.getContext("2d");
  const sx = canvas.width / (x1 - x0);
  const sy = canvas.height / (y1 - y0);
  const s = Math.min(sx, sy);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return {
    ctx,
    px: (p) => [(p[0] - x0) * s, canvas.height - (p[1] - y0) * s],
    scale: s,
  };
}

function drawReach(r, target) {
  const v = topView($("reach-top"), -0.1, 0.8, -0.3, 0.3);
  const { ctx, px } = v;
  ctx.strokeStyle = "#aaa";
  ctx.beginPath();
  r.path.forEach((p, i) => (i ? ctx.lineTo(...px(p)) : ctx.moveTo(...px(p))));
  ctx.stroke();
  ctx.strokeStyle = "#246";
  ctx.lineWidth = 3;
  ctx.beginPath();
  r.joints.forEach((p, i) => (i ? ctx.lineTo(...px(p)) : ctx.moveTo(...px(p))));
  ctx.stroke();
  ctx.lineWidth = 1;
  ctx.fillStyle = "#c33";
  const [tx, ty] = px(target);
  ctx.fillRect(tx - 3, ty - 3, 6, 6);
}

function runReach() {
  const target = [num("rx"), num("ry"), num("rz")];
  try {
    const r = JSON.parse(reach(...target, num("ryaw")));
    drawReach(r, target);
    $("reach-out").textContent =
      `converged: ${r.converged}  steps: ${r.steps}  error: ${r.error.toExponential(2)}\n` +
      `q: [${r.q.map((x) => x.toFixed(3)).join(", ")}]`;
  } catch (e) {
    $("reach-out").textContent = String(e);
  }
}

function runCluster() {
  try {
    const r = JSON.parse(cluster($("objects").value, Math.max(0, num("seed") | 0)));
    const { ctx, px, scale } = topView($("cluster-top"), 0.1, 0.8, -0.26, 0.26);
    ctx.fillStyle = "#999";
    for (const p of r.cloud) {
      if (p[2] > 0.004) {
        const [x, y] = px(p);
        ctx.fillRect(x, y, 1.5, 1.5);
      }
    }
    ctx.strokeStyle = "#c33";
    ctx.fillStyle = "#c33";
    for (const d of r.detections) {
      const [x, y] = px(d.position);
      const half = (Math.max(d.dims[0], d.dims[1]) / 2) * scale;
      ctx.strokeRect(x - half, y - half, 2 * half, 2 * half);
      ctx.fillText(d.label, x + half + 3, y);
    }
    $("cluster-out").textContent = r.detections
      .map((d) => `${d.label.padEnd(6)} at [${d.position.map((c) => c.toFixed(3)).join(", ")}]  ${d.points} pts`)
      .join("\n") || "no objects";
  } catch (e) {
    $("cluster-out").textContent = String(e);
  }
}

function runFriction() {
  const out = $("friction-out");
  try {
    const r = JSON.parse(friction(num("dx"), num("dy"), num("dz"), num("mu"), $("standard").checked));
    out.innerHTML = `ratio ${r.ratio.toFixed(3)}: <span class="${r.slip ? "slip" : "stable"}">${r.slip ? "slip" : "stable"}</span>`;
  } catch (e) {
    out.textContent = String(e);
  }
}

await init();
$("status").textContent = "ready";
$("reach").onclick = runReach;
$("cluster").onclick = runCluster;
for (const id of ["dx", "dy", "dz", "mu", "standard"]) $(id).oninput = runFriction;
runReach();
runCluster();
runFriction();
