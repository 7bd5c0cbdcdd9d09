import init, { fuse_1d, synthetic_slice, DropoutDemo } from "./pkg/gbdl_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#4c78a8", "#f58518", "#54a24b", "#b279a2"];

function drawCurves(canvas, xs, curves, colors, widths) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const ymax = Math.max(...curves.flatMap((c) => Array.from(c))) * 1.05;
  const px = (x) => ((x - xs[0]) / (xs[xs.length - 1] - xs[0])) * w;
  const py = (y) => h - (y / ymax) * (h - 10);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(px(0), 0);
  ctx.lineTo(px(0), h);
  ctx.stroke();
  curves.forEach((c, k) => {
    ctx.strokeStyle = colors[k];
    ctx.lineWidth = widths[k];
    ctx.beginPath();
    c.forEach((y, i) => (i ? ctx.lineTo(px(xs[i]), py(y)) : ctx.moveTo(px(xs[i]), py(y))));
    ctx.stroke();
  });
  ctx.lineWidth = 1;
}

// Paints a row-major grid; `color` maps a value to [r, g, b].
function drawGrid(canvas, values, width, height, color) {
  const off = new OffscreenCanvas(width, height);
  const octx = off.getContext("2d");
  const img = octx.createImageData(width, height);
  values.forEach((v, i) => {
    const [r, g, b] = color(v);
    img.data.set([r, g, b, 255], 4 * i);
  });
  octx.putImageData(img, 0, 0);
  const ctx = canvas.getContext("2d");
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

const gray = (v) => {
  const g = Math.round(255 * Math.min(1, Math.max(0, v)));
  return [g, g, g];
};
const heat = (v) => {
  const t = Math.min(1, Math.max(0, v));
  return [Math.round(255 * t), Math.round(80 * (1 - t)), Math.round(255 * (1 - t))];
};

function fusionPanel() {
  const slices = [
    { mean: -1.0, sd: 1.2 },
    { mean: 0.8, sd: 0.9 },
    { mean: 2.0, sd: 1.5 },
  ];
  const box = $("fusion-controls");
  slices.forEach((s, k) => {
    const f = document.createElement("fieldset");
    f.innerHTML = `<legend style="color:${COLORS[k]}">slice ${k + 1}</legend>
      <label>mean <input type="range" min="-3" max="3" step="0.1" value="${s.mean}" data-k="${k}" data-f="mean"></label>
      <label>sd <input type="range" min="0.2" max="3" step="0.05" value="${s.sd}" data-k="${k}" data-f="sd"></label>`;
    box.appendChild(f);
  });
  const redraw = () => {
    const r = fuse_1d(
      Float64Array.from(slices.map((s) => s.mean)),
      Float64Array.from(slices.map((s) => s.sd)),
      -5, 5, 400,
    );
    const curves = [...slices.keys()].map((k) => r.slice_pdf(k));
    curves.push(r.fused_pdf());
    drawCurves($("fusion"), r.xs(), curves, [...COLORS.slice(0, 3), "#000"], [1.5, 1.5, 1.5, 3]);
    $("fusion-info").textContent =
      `fused mean ${r.mean.toFixed(3)}, sd ${r.sd.toFixed(3)}, KL to N(0, 1) ${r.kl.toFixed(4)} nats`;
    r.free();
  };
  box.addEventListener("input", (e) => {
    const { k, f } = e.target.dataset;
    slices[k][f] = parseFloat(e.target.value);
    redraw();
  });
  redraw();
}

function generatorPanel() {
  const redraw = () => {
    const diff = parseFloat($("gen-diff").value);
    $("gen-diff-val").textContent = diff.toFixed(2);
    const s = synthetic_slice(
      BigInt($("gen-seed").value || 0),
      parseInt($("gen-index").value || 0, 10),
      diff, 32,
      parseInt($("gen-z").value, 10),
    );
    drawGrid($("gen-img"), s.intensity(), s.width, s.height, gray);
    drawGrid($("gen-mask"), s.mask(), s.width, s.height, (m) => (m ? [230, 60, 60] : [20, 20, 20]));
    $("gen-info").textContent = `foreground ${(100 * s.foreground).toFixed(1)}% of the volume`;
    s.free();
  };
  ["gen-seed", "gen-index", "gen-z", "gen-diff"].forEach((id) => $(id).addEventListener("input", redraw));
  redraw();
}

function dropoutPanel() {
  let demo = null;
  const redraw = () => {
    const passes = parseInt($("mc-passes").value, 10);
    const drop = parseFloat($("mc-drop").value);
    $("mc-passes-val").textContent = passes;
    $("mc-drop-val").textContent = drop.toFixed(2);
    if (!demo) return;
    const t0 = performance.now();
    const u = demo.predict(0, passes, drop, parseInt($("mc-z").value, 10));
    const ms = performance.now() - t0;
    drawGrid($("mc-img"), u.intensity(), u.width, u.height, gray);
    drawGrid($("mc-prob"), u.probability(), u.width, u.height, heat);
    drawGrid($("mc-ent"), u.entropy(), u.width, u.height, heat);
    const ent = u.entropy();
    const mean = ent.reduce((a, b) => a + b, 0) / ent.length;
    $("mc-info").textContent =
      `input, foreground probability, entropy. Dice ${u.dice.toFixed(3)}, mean entropy ${mean.toFixed(3)} bits, ${ms.toFixed(0)} ms`;
    u.free();
  };
  $("mc-train").addEventListener("click", () => {
    $("mc-info").textContent = "training…";
    setTimeout(() => {
      if (demo) demo.free();
      demo = new DropoutDemo(0n, 0.3, 15);
      redraw();
    }, 20);
  });
  ["mc-passes", "mc-drop", "mc-z"].forEach((id) => $(id).addEventListener("input", redraw));
  redraw();
}

await init();
$("status").textContent = "";
fusionPanel();
generatorPanel();
dropoutPanel();
