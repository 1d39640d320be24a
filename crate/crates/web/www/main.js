import init, { soft_assignment, pq_tradeoff, train_alignment } from "./pkg/ssp_web.js";

const $ = (id) => document.getElementById(id);
const query = { x: 0.4, y: 0.1 };

function call(fn, ...args) {
  try {
    $("status").textContent = "";
    return JSON.parse(fn(...args));
  } catch (e) {
    $("status").textContent = String(e);
    return null;
  }
}

function drawExplorer() {
  const tau = Math.pow(10, Number($("tau").value));
  $("tau-value").textContent = tau.toPrecision(3);
  const kind = document.querySelector("input[name=kind]:checked").value;
  const r = call(soft_assignment, query.x, query.y, tau, kind);
  if (!r) return;

  const c = $("plane").getContext("2d");
  const s = (v) => 150 + v * 120;
  c.clearRect(0, 0, 300, 300);
  r.centroids.forEach(([x, y], l) => {
    c.fillStyle = `rgba(40,140,90,${0.15 + 0.85 * r.probs[l]})`;
    c.beginPath();
    c.arc(s(x), s(-y), 6 + 14 * r.probs[l], 0, 2 * Math.PI);
    c.fill();
  });
  c.fillStyle = "#c33";
  c.fillRect(s(query.x) - 4, s(-query.y) - 4, 8, 8);

  $("probs").innerHTML =
    "<tr><th>anchor</th><th>sim</th><th>p</th><th></th></tr>" +
    r.probs.map((p, l) =>
      `<tr><td>${l}${l === r.argmax ? " *" : ""}</td><td>${r.similarities[l].toFixed(3)}</td>` +
      `<td>${p.toFixed(3)}</td><td><span class="bar" style="width:${Math.round(p * 150)}px"></span></td></tr>`
    ).join("") +
    `<tr><td>entropy</td><td></td><td>${r.entropy.toFixed(3)}</td></tr>`;
}

function runTradeoff() {
  const r = call(pq_tradeoff, Number($("pq-seed").value), new Uint32Array([1, 2, 4, 8, 16, 32]));
  if (!r) return;
  $("pq-table").innerHTML =
    "<tr><th>M</th><th>mAP</th><th>bytes/vector</th><th>MiB</th></tr>" +
    r.rows.map((row) =>
      `<tr><td>${row.m}</td><td>${row.map.toFixed(4)}</td><td>${row.bytes_per_vector}</td><td>${row.reference_mib.toFixed(2)}</td></tr>`
    ).join("") +
    `<tr><td>exact</td><td>${r.exact_map.toFixed(4)}</td><td>${32 * 4}</td><td>${r.reference_raw_mib.toFixed(2)}</td></tr>`;
}

function runAlignment() {
  $("al-out").textContent = "training...";
  // let the label paint before the blocking call
  setTimeout(() => {
    const r = call(train_alignment, 0, Number($("al-epochs").value), $("al-loss").value);
    if (!r) return;
    $("al-out").textContent =
      `symmetric mAP   ${r.symmetric_map.toFixed(4)}\n` +
      `untrained asym  ${r.untrained_map.toFixed(4)}\n` +
      `trained asym    ${r.trained_map.toFixed(4)}\n\n` +
      r.epoch_losses.map((l, i) => `epoch ${i + 1}  loss ${l.toFixed(5)}`).join("\n");
  }, 20);
}

await init();
$("status").textContent = "";
$("plane").addEventListener("click", (e) => {
  const rect = e.target.getBoundingClientRect();
  query.x = (e.clientX - rect.left - 150) / 120;
  query.y = -(e.clientY - rect.top - 150) / 120;
  drawExplorer();
});
$("tau").addEventListener("input", drawExplorer);
document.querySelectorAll("input[name=kind]").forEach((el) => el.addEventListener("change", drawExplorer));
$("pq-run").addEventListener("click", runTradeoff);
$("al-run").addEventListener("click", runAlignment);
drawExplorer();
