import init, { expected_index_curves, simulate_fit, sampling_distribution } from "./pkg/longline_wasm.js";

const COLORS = { CPUE: "#1f77b4", MEM1: "#d62728", MEM2: "#2ca02c", SEM1: "#9467bd" };

const SURVEY_FIELDS = [
  ["lt", "lambda_T", 5e-4],
  ["lnt", "lambda_NT", 1e-3],
  ["pt", "p_T", 0.02],
  ["pnt", "p_NT", 0.2],
  ["hooks", "hooks per set", 220],
  ["sets", "sets", 20],
  ["soak", "soak (min)", 120],
  ["seed", "seed", 1],
];

function surveyInputs(prefix) {
  const box = document.getElementById(`${prefix}-params`);
  for (const [key, name, value] of SURVEY_FIELDS) {
    const label = document.createElement("label");
    label.textContent = `${name} `;
    const input = document.createElement("input");
    input.type = "number";
    input.id = `${prefix}-${key}`;
    input.value = value;
    label.appendChild(input);
    box.appendChild(label);
  }
  return () => Object.fromEntries(SURVEY_FIELDS.map(([key]) => [key, Number(document.getElementById(`${prefix}-${key}`).value)]));
}

function legend(id, names) {
  document.getElementById(id).innerHTML = names
    .map((n) => `<span style="color:${COLORS[n]}">&#9632; ${n}</span>`)
    .join("");
}

function axes(ctx, w, h, pad, xLabel, yTicks, yOf) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#000";
  ctx.strokeRect(pad, 10, w - pad - 10, h - pad - 10);
  ctx.fillStyle = "#000";
  ctx.font = "12px sans-serif";
  ctx.textAlign = "right";
  for (const t of yTicks) {
    const y = yOf(t);
    ctx.fillText(t.toFixed(2), pad - 4, y + 4);
    ctx.strokeStyle = "#eee";
    ctx.beginPath();
    ctx.moveTo(pad, y);
    ctx.lineTo(w - 10, y);
    ctx.stroke();
  }
  ctx.textAlign = "center";
  ctx.fillText(xLabel, (w + pad) / 2, h - 6);
}

function drawCurves() {
  const lt = Number(document.getElementById("c-lt").value);
  const pt = Number(document.getElementById("c-pt").value);
  const pnt = Number(document.getElementById("c-pnt").value);
  const soak = Number(document.getElementById("c-soak").value);
  document.getElementById("c-pt-v").textContent = pt;
  document.getElementById("c-pnt-v").textContent = pnt;
  const err = document.getElementById("c-error");
  let points;
  try {
    points = JSON.parse(expected_index_curves(lt, pt, pnt, soak, 120));
    err.textContent = "";
  } catch (e) {
    err.textContent = String(e);
    return;
  }
  const canvas = document.getElementById("c-canvas");
  const ctx = canvas.getContext("2d");
  const [w, h, pad] = [canvas.width, canvas.height, 50];
  const keys = ["cpue", "mem1", "mem2"];
  const values = points.flatMap((p) => keys.map((k) => p[k]));
  const lo = Math.min(0.4, ...values);
  const hi = Math.max(1.1, ...values);
  const xOf = (x) => pad + ((Math.log10(x) + 4) / 3) * (w - pad - 10);
  const yOf = (y) => h - pad - ((y - lo) / (hi - lo)) * (h - pad - 20);
  const ticks = [];
  for (let t = Math.ceil(lo * 10) / 10; t <= hi; t += 0.1) ticks.push(t);
  axes(ctx, w, h, pad, "lambda_NT (log scale, 1e-4 to 1e-1); y: estimate / true lambda_T", ticks, yOf);
  for (const [k, name] of [["cpue", "CPUE"], ["mem1", "MEM1"], ["mem2", "MEM2"]]) {
    ctx.strokeStyle = COLORS[name];
    ctx.lineWidth = 2;
    ctx.beginPath();
    points.forEach((p, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, xOf(p.lambda_nontarget), yOf(p[k])));
    ctx.stroke();
  }
  ctx.lineWidth = 1;
}

function fmt(v) {
  return v === null || v === undefined || Number.isNaN(v) ? "NA" : Number(v).toExponential(3);
}

function runSingle(read) {
  const p = read();
  const out = document.getElementById("s-out");
  try {
    const r = JSON.parse(simulate_fit(p.lt, p.lnt, p.pt, p.pnt, p.hooks, p.sets, p.soak, BigInt(p.seed)));
    const [b, t, nt, e] = r.counts;
    let html = `<p>baited ${b}, target ${t}, non-target ${nt}, empty ${e}
      (escaped: ${r.escaped_target} target, ${r.escaped_nontarget} non-target)</p>
      <table><tr><th>method</th><th>lambda_T</th><th>estimate / truth</th><th>se</th></tr>`;
    for (const f of r.fits) {
      html += f.error
        ? `<tr><td>${f.method}</td><td colspan="3" class="error">${f.error}</td></tr>`
        : `<tr><td>${f.method}</td><td>${fmt(f.lambda_target)}</td><td>${(f.lambda_target / p.lt).toFixed(3)}</td><td>${fmt(f.se)}</td></tr>`;
    }
    out.innerHTML = html + "</table>";
  } catch (e) {
    out.innerHTML = `<p class="error">${e}</p>`;
  }
}

function runSampling(read) {
  const p = read();
  const reps = Number(document.getElementById("d-reps").value);
  const out = document.getElementById("d-out");
  let dists;
  try {
    dists = JSON.parse(sampling_distribution(p.lt, p.lnt, p.pt, p.pnt, p.hooks, p.sets, p.soak, reps, BigInt(p.seed)));
  } catch (e) {
    out.innerHTML = `<p class="error">${e}</p>`;
    return;
  }
  const canvas = document.getElementById("d-canvas");
  const ctx = canvas.getContext("2d");
  const [w, h, pad] = [canvas.width, canvas.height, 50];
  const all = dists.flatMap((d) => d.values);
  const lo = Math.min(...all);
  const hi = Math.max(...all);
  const bins = 40;
  const width = (hi - lo) / bins || 1;
  const hist = dists.map((d) => {
    const counts = new Array(bins).fill(0);
    for (const v of d.values) counts[Math.min(bins - 1, Math.floor((v - lo) / width))] += 1;
    return counts.map((c) => c / Math.max(1, d.values.length));
  });
  const top = Math.max(...hist.flat());
  const xOf = (x) => pad + ((x - lo) / (hi - lo || 1)) * (w - pad - 10);
  const yOf = (y) => h - pad - (y / top) * (h - pad - 20);
  axes(ctx, w, h, pad, `estimate / true lambda_T (${lo.toFixed(2)} to ${hi.toFixed(2)})`, [0, top / 2, top], yOf);
  ctx.strokeStyle = "#888";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(xOf(1), 10);
  ctx.lineTo(xOf(1), h - pad);
  ctx.stroke();
  ctx.setLineDash([]);
  dists.forEach((d, k) => {
    ctx.strokeStyle = COLORS[d.method];
    ctx.lineWidth = 2;
    ctx.beginPath();
    hist[k].forEach((f, i) => {
      const x0 = xOf(lo + i * width);
      const x1 = xOf(lo + (i + 1) * width);
      if (i === 0) ctx.moveTo(x0, yOf(0));
      ctx.lineTo(x0, yOf(f));
      ctx.lineTo(x1, yOf(f));
    });
    ctx.stroke();
  });
  ctx.lineWidth = 1;
  legend("d-legend", dists.map((d) => d.method));
  out.innerHTML =
    "<table><tr><th>method</th><th>mean</th><th>sd</th><th>failed</th></tr>" +
    dists.map((d) => `<tr><td>${d.method}</td><td>${d.mean.toFixed(3)}</td><td>${d.sd.toFixed(3)}</td><td>${d.failures}</td></tr>`).join("") +
    "</table>";
}

await init();
legend("c-legend", ["CPUE", "MEM1", "MEM2"]);
for (const id of ["c-lt", "c-pt", "c-pnt", "c-soak"]) document.getElementById(id).addEventListener("input", drawCurves);
drawCurves();
const readSingle = surveyInputs("s");
const readSampling = surveyInputs("d");
document.getElementById("s-run").addEventListener("click", () => runSingle(readSingle));
document.getElementById("d-run").addEventListener("click", () => runSampling(readSampling));
