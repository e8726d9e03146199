import init, { analyze, solve, simulate } from "./pkg/hwctrl_web.js";

const PRESETS = {
  "N model": {
    "name": "N model",
    "classes": [
      {
        "lambda": 2.0,
        "gamma": 0.5
      },
      {
        "lambda": 0.75,
        "gamma": 1.0
      }
    ],
    "pools": [
      {
        "nu": 1.0
      },
      {
        "nu": 1.0
      }
    ],
    "edges": [
      {
        "class": 1,
        "pool": 1,
        "mu": 1.0
      },
      {
        "class": 1,
        "pool": 2,
        "mu": 2.0
      },
      {
        "class": 2,
        "pool": 2,
        "mu": 1.5
      }
    ],
    "cost": {
      "q_weights": [
        1.0,
        2.0
      ],
      "i_weights": [
        1.0,
        1.0
      ],
      "m": 1.0
    },
    "grid": {
      "radius": 8.0,
      "h": 0.25
    }
  },
  "W model": {
    "name": "W model",
    "classes": [
      {
        "lambda": 0.5,
        "gamma": 1.0
      },
      {
        "lambda": 1.25,
        "gamma": 0.5
      },
      {
        "lambda": 1.0,
        "gamma": 1.0
      }
    ],
    "pools": [
      {
        "nu": 1.0
      },
      {
        "nu": 1.0
      }
    ],
    "edges": [
      {
        "class": 1,
        "pool": 1,
        "mu": 1.0
      },
      {
        "class": 2,
        "pool": 1,
        "mu": 1.5
      },
      {
        "class": 2,
        "pool": 2,
        "mu": 1.0
      },
      {
        "class": 3,
        "pool": 2,
        "mu": 2.0
      }
    ],
    "cost": {
      "q_weights": [
        1.0,
        1.0,
        1.0
      ],
      "i_weights": [
        0.0,
        0.0
      ],
      "m": 1.0
    }
  },
  "M model": {
    "name": "M model, equal service rates",
    "classes": [
      {
        "lambda": 1.5,
        "gamma": 1.0
      },
      {
        "lambda": 1.5,
        "gamma": 1.0
      }
    ],
    "pools": [
      {
        "nu": 1.0
      },
      {
        "nu": 1.0
      },
      {
        "nu": 1.0
      }
    ],
    "edges": [
      {
        "class": 1,
        "pool": 1,
        "mu": 1.0
      },
      {
        "class": 1,
        "pool": 2,
        "mu": 1.0
      },
      {
        "class": 2,
        "pool": 2,
        "mu": 1.0
      },
      {
        "class": 2,
        "pool": 3,
        "mu": 1.0
      }
    ],
    "cost": {
      "q_weights": [
        1.0,
        1.0
      ],
      "i_weights": [
        0.0,
        0.0,
        0.0
      ],
      "m": 1.0
    }
  },
  "Inverted V": {
    "name": "inverted V",
    "classes": [
      {
        "lambda": 1.0,
        "gamma": 1.0
      }
    ],
    "pools": [
      {
        "nu": 0.5
      },
      {
        "nu": 0.25
      }
    ],
    "edges": [
      {
        "class": 1,
        "pool": 1,
        "mu": 1.0
      },
      {
        "class": 1,
        "pool": 2,
        "mu": 2.0
      }
    ],
    "cost": {
      "q_weights": [
        1.0
      ],
      "i_weights": [
        1.0,
        10.0
      ],
      "m": 1.0
    },
    "constraints": {
      "delta": [
        0.3,
        1000000.0
      ],
      "theta": [
        0.5,
        0.5
      ]
    },
    "grid": {
      "radius": 8.0,
      "h": 0.01
    }
  },
  "M/M/N+M": {
    "name": "M/M/N+M",
    "classes": [
      {
        "lambda": 1.0,
        "gamma": 0.5
      }
    ],
    "pools": [
      {
        "nu": 1.0
      }
    ],
    "edges": [
      {
        "class": 1,
        "pool": 1,
        "mu": 1.0
      }
    ],
    "cost": {
      "q_weights": [
        1.0
      ],
      "i_weights": [
        0.0
      ],
      "m": 1.0
    },
    "grid": {
      "radius": 8.0,
      "h": 0.01
    }
  }
};

const $ = (id) => document.getElementById(id);
const canvas = $("plot");
const ctx = canvas.getContext("2d");

function status(text, isError = false) {
  $("status").textContent = text;
  $("status").className = isError ? "err" : "";
}

function clear() {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
}

function range(values) {
  let lo = Infinity, hi = -Infinity;
  for (const v of values) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  return hi > lo ? [lo, hi] : [lo - 1, hi + 1];
}

function lines(xs, series, colors) {
  clear();
  const pad = 30, w = canvas.width - 2 * pad, h = canvas.height - 2 * pad;
  const [x0, x1] = range(xs);
  const [y0, y1] = range(series.flat());
  const sx = (x) => pad + (w * (x - x0)) / (x1 - x0);
  const sy = (y) => pad + h - (h * (y - y0)) / (y1 - y0);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w, h);
  ctx.fillStyle = "#333";
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  ctx.fillText(y0.toPrecision(3), 2, pad + h);
  ctx.fillText(x0.toPrecision(3), pad, canvas.height - 8);
  ctx.fillText(x1.toPrecision(3), pad + w - 30, canvas.height - 8);
  series.forEach((ys, k) => {
    ctx.strokeStyle = colors[k % colors.length];
    ctx.beginPath();
    ys.forEach((y, i) => (i ? ctx.lineTo(sx(xs[i]), sy(y)) : ctx.moveTo(sx(xs[i]), sy(y))));
    ctx.stroke();
  });
}

function heatmap(sol) {
  clear();
  const n = sol.nodes, size = Math.min(canvas.width / 2, canvas.height) - 20;
  const cell = size / n;
  const [lo, hi] = range(sol.v);
  const hues = [210, 20, 120, 280];
  for (let c = 0; c < sol.v.length; c++) {
    const i = c % n, j = Math.floor(c / n);
    const t = (sol.v[c] - lo) / (hi - lo);
    ctx.fillStyle = `hsl(${240 - 240 * t}, 70%, 50%)`;
    ctx.fillRect(10 + i * cell, 10 + (n - 1 - j) * cell, cell + 0.5, cell + 0.5);
    ctx.fillStyle = `hsl(${hues[(sol.queue_class[c] - 1) % 4]}, 60%, ${35 + 15 * sol.idle_pool[c]}%)`;
    ctx.fillRect(30 + size + i * cell, 10 + (n - 1 - j) * cell, cell + 0.5, cell + 0.5);
  }
  ctx.fillStyle = "#333";
  ctx.fillText("V (blue low, red high)", 10, size + 18);
  ctx.fillText("policy: hue = queued class, shade = idling pool", 30 + size, size + 18);
}

function show(obj) {
  $("out").textContent = JSON.stringify(obj, (k, v) => (k === "path" || k === "v" ? undefined : v), 2);
}

function wrap(label, f, draw) {
  status(label + "…");
  setTimeout(() => {
    const t0 = performance.now();
    try {
      const result = JSON.parse(f($("spec").value));
      status(`${label} done in ${(performance.now() - t0).toFixed(0)} ms`);
      draw(result);
      show(result);
    } catch (e) {
      status(String(e.message ?? e), true);
    }
  }, 10);
}

function drawSolution(sol) {
  if (sol.dim === 1) {
    const xs = sol.v.map((_, c) => -sol.radius + c * sol.h);
    lines(xs, [sol.v, sol.idle_pool], ["#1f77b4", "#d62728"]);
  } else {
    heatmap(sol);
  }
}

function drawPath(res) {
  const t = res.path.map((r) => r[0]);
  const dims = res.path[0].length - 2;
  const series = [];
  for (let i = 0; i < dims; i++) series.push(res.path.map((r) => r[1 + i]));
  lines(t, series, ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"]);
}

async function main() {
  await init();
  for (const name of Object.keys(PRESETS)) {
    const opt = document.createElement("option");
    opt.textContent = name;
    $("preset").append(opt);
  }
  const load = () => ($("spec").value = JSON.stringify(PRESETS[$("preset").value], null, 2));
  $("preset").addEventListener("change", load);
  load();
  $("analyze").addEventListener("click", () => wrap("analyze", analyze, clear));
  $("solve").addEventListener("click", () =>
    wrap("solve", (s) => solve(s, +$("radius").value, +$("mesh").value), drawSolution));
  $("simulate").addEventListener("click", () =>
    wrap("simulate", (s) => simulate(s, +$("horizon").value, +$("dt").value, +$("seed").value), drawPath));
  status("ready");
}

main();
