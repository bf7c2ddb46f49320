"""Compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--out results.md]

Times col2im (the scatter behind every convolution gradient), single and
batched DTW, and one desk-model training step with each backend. The
training step runs in a subprocess per backend because the backend is
chosen at import time.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from ecgrecon import _fallback

try:
    from ecgrecon import _ext
except ImportError:
    _ext = None

STEP_SNIPPET = r"""
import json, timeit
import numpy as np
from ecgrecon import kernels
from ecgrecon.loss import composite_loss
from ecgrecon.model import DESK_CONFIG, Model
m = Model.build(DESK_CONFIG, init_seed=0)
r = np.random.default_rng(0)
x = r.uniform(-1, 1, (16, 12, 512)).astype(np.float32)
y = np.tanh(r.standard_normal((16, 12, 512))).astype(np.float32)
def step():
    m.zero_grad()
    out = m(x, training=True, rng=np.random.default_rng(1))
    composite_loss(out.reshape(y.shape), y).backward()
step()
t = min(timeit.repeat(step, number=1, repeat=REPEAT))
print(json.dumps({"backend": kernels.BACKEND, "seconds": t}))
"""


def best(fn, repeat, number=1):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench_col2im(repeat):
    # geometry of the first desk encoder's 2D conv gradient: batch 16, 8 channels, 3x5 kernel
    b, c, kh, kw, ho, wo = 16, 8, 3, 5, 12, 256
    hp, wp = ho + kh - 1, 2 * (wo - 1) + kw
    cols = np.random.default_rng(0).standard_normal((b * ho * wo, c * kh * kw)).astype(np.float32)
    args = (b, c, hp, wp, kh, kw, 1, 2, ho, wo)
    rows = [("col2im 16x8x3x5 -> 14x515", best(lambda: _fallback.col2im2d(cols, *args), repeat),
             best(lambda: _ext.col2im2d(cols, *args), repeat) if _ext else None)]
    return rows


def bench_dtw(repeat):
    r = np.random.default_rng(1)
    a, b = r.standard_normal(512), r.standard_normal(512)
    rows = [("dtw 512 x 512", best(lambda: _fallback.dtw(a, b), repeat),
             best(lambda: _ext.dtw(a, b), repeat) if _ext else None)]
    A, B = r.standard_normal((12, 512)), r.standard_normal((12, 512))
    rows.append(("dtw_many 12 leads x 512", best(lambda: _fallback.dtw_many(A, B), repeat),
                 best(lambda: _ext.dtw_many(A, B), repeat) if _ext else None))
    A, B = r.integers(0, 4, (100_000, 6)).astype(float), r.integers(0, 4, (100_000, 6)).astype(float)
    rows.append(("dtw_many 100k pairs x 6", best(lambda: _fallback.dtw_many(A, B), repeat),
                 best(lambda: _ext.dtw_many(A, B), repeat) if _ext else None))
    return rows


def bench_train_step(repeat):
    out = {}
    for label, pure in (("python", "1"), ("compiled", "0")):
        env = dict(os.environ, ECGR_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", STEP_SNIPPET.replace("REPEAT", str(repeat))],
                             env=env, capture_output=True, text=True, check=True)
        doc = json.loads(res.stdout.strip().splitlines()[-1])
        out[label] = doc["seconds"] if doc["backend"] == label else None
    return [("desk training step, batch 16", out["python"], out["compiled"])]


def table(rows):
    lines = ["| kernel | numpy fallback (ms) | compiled (ms) | speed-up |", "|---|---|---|---|"]
    for name, py, c in rows:
        if c is None:
            lines.append(f"| {name} | {py * 1e3:.2f} | n/a | n/a |")
        else:
            lines.append(f"| {name} | {py * 1e3:.2f} | {c * 1e3:.2f} | {py / c:.1f}x |")
    return "\n".join(lines) + "\n"


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--out", help="also write the markdown table here")
    a = p.parse_args(argv)
    rows = bench_col2im(a.repeat) + bench_dtw(a.repeat) + bench_train_step(max(1, a.repeat // 2))
    text = table(rows)
    print(text, end="")
    if a.out:
        with open(a.out, "w", encoding="utf-8") as f:
            f.write(text)


if __name__ == "__main__":
    main()
