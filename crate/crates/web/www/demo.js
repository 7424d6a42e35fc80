import init, { pair_membership_grid, ratio_curve, degeneracy_probe } from "./pkg/qex_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guard(msg, fn) {
  $(msg).textContent = "";
  $(msg).className = "";
  try {
    fn();
  } catch (e) {
    $(msg).textContent = String(e);
    $(msg).className = "err";
  }
}

function drawGrid(canvas, grid, color) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(grid.width, grid.height);
  const cells = grid.cells;
  for (let i = 0; i < cells.length; i++) {
    const on = cells[i] === 1;
    img.data.set(on ? color : [255, 255, 255], 4 * i);
    img.data[4 * i + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
}

function drawMembership() {
  guard("g-msg", () => {
    const [r, rho] = [num("g-r"), num("g-rho")];
    const e = pair_membership_grid(r, rho, "E", 240, 240);
    const f = pair_membership_grid(r, rho, "F", 240, 240);
    drawGrid($("g-e"), e, [40, 90, 200]);
    drawGrid($("g-f"), f, [200, 80, 40]);
    const fmt = (b) => b.map((v) => v.toFixed(3)).join(", ");
    $("g-msg").textContent = `${e.admissible ? "admissible" : "not admissible"}; E box [${fmt(e.bounds)}], F box [${fmt(f.bounds)}]`;
  });
}

function fillTable(table, header, rows) {
  table.innerHTML = "<tr>" + header.map((h) => `<th>${h}</th>`).join("") + "</tr>" +
    rows.map((r) => "<tr>" + r.map((v) => `<td>${v}</td>`).join("") + "</tr>").join("");
}

function plot(canvas, xs, ys) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const lx = xs.map(Math.log2);
  const good = ys.filter(Number.isFinite);
  const ymax = Math.max(...good) * 1.2;
  const [x0, x1] = [Math.min(...lx), Math.max(...lx)];
  const px = (x) => 30 + (w - 50) * (x1 === x0 ? 0.5 : (x - x0) / (x1 - x0));
  const py = (y) => h - 20 - (h - 40) * (y / ymax);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(30, 20, w - 50, h - 40);
  ctx.fillText("0", 15, h - 20);
  ctx.fillText(ymax.toFixed(2), 2, 24);
  ctx.fillStyle = "#2050c0";
  lx.forEach((x, i) => {
    if (Number.isFinite(ys[i])) ctx.fillRect(px(x) - 3, py(ys[i]) - 3, 6, 6);
    ctx.fillStyle = "#555";
    ctx.fillText(`2^${x}`, px(x) - 10, h - 5);
    ctx.fillStyle = "#2050c0";
  });
}

function runCurve() {
  guard("c-msg", () => {
    const a = Float64Array.from($("c-a").value.split(",").map(Number));
    const v = ratio_curve(num("c-d"), $("c-fam").value, a, num("c-kmin"), num("c-kmax"), num("c-n"), 1n);
    const rows = [];
    for (let i = 0; i < v.length; i += 3) rows.push([v[i], v[i + 1], v[i + 2]]);
    fillTable($("c-table"), ["rho", "ratio", "se"], rows.map(([r, q, s]) => [r.toExponential(2), q.toFixed(4), s.toFixed(4)]));
    plot($("c-plot"), rows.map((r) => r[0]), rows.map((r) => r[1]));
  });
}

function runProbe() {
  guard("p-msg", () => {
    const v = degeneracy_probe(num("p-a"), num("p-b"), $("p-s").value, num("p-kmin"), num("p-kmax"), num("p-n"), 2n);
    const rows = [];
    for (let i = 0; i + 3 <= v.length - 1; i += 3) rows.push([v[i], v[i + 1], v[i + 2]]);
    fillTable($("p-table"), ["rho", "ratio", "overlap"],
      rows.map(([r, q, o]) => [r.toExponential(2), q.toFixed(4), Number.isFinite(o) ? o.toFixed(3) : "-"]));
    $("p-msg").textContent = `fitted exponent ${v[v.length - 1].toFixed(3)}`;
  });
}

await init();
$("g-run").onclick = drawMembership;
$("c-run").onclick = runCurve;
$("p-run").onclick = runProbe;
drawMembership();
