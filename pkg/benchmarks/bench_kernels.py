"""Compare the compiled and NumPy kernels, alone and inside a training episode.

    python3 benchmarks/bench_kernels.py [--repeat 200] [--episodes 100]

Kernel timings run in-process against both backend modules. Episode timings
(best of three passes) run a child interpreter per backend with LDF_KERNELS set, since the backend
is fixed at import.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from ldf.kernels import available_backends

EPISODE_SNIPPET = """
import json, time
from ldf import autodiff as ad, kernels
from ldf.episodes import make_synthetic_corpus, sample_episode
from ldf.model import LabelBank, ModelParams
from ldf.trainer import TrainConfig, episode_loss, forward
corpus, table = make_synthetic_corpus(20, 30, 0.8, 20, 1, ad.make_rng(0))
cfg = TrainConfig()
params = ModelParams.init(table.dim, ad.make_rng(1))
opt = ad.Adam(params.parameters())
labels = LabelBank(table)
rng = ad.make_rng(2)
eps = [sample_episode(corpus, 5, 5, 5, rng) for _ in range({n})]
best = float("inf")
for _ in range(3):
    t0 = time.perf_counter()
    for ep in eps:
        out = forward(ep, params, table, labels, cfg)
        ad.backward(episode_loss(out, ep, cfg))
        opt.step()
    best = min(best, time.perf_counter() - t0)
print(json.dumps({{"backend": kernels.BACKEND, "ms": 1e3 * best / {n}}}))
"""


def kernel_cases(rng):
    # one 5-way 5-shot support batch: 25 sentences, up to 14 tokens, 50-d
    x = rng.normal(size=(25, 14, 50))
    f = rng.normal(size=(3, 50, 50))
    b = rng.normal(size=50)
    g = rng.normal(size=(25, 14, 50))
    s = rng.normal(size=(25, 14))
    mask = rng.random((25, 14)) > 0.2
    mask[:, 0] = True
    return {
        "conv1d forward": lambda k: k.conv1d_same_forward(x, f, b),
        "conv1d backward": lambda k: k.conv1d_same_backward(g, x, f),
        "softmax forward": lambda k: k.masked_softmax_forward(s, mask),
        "softmax backward": lambda k: k.masked_softmax_backward(
            k.masked_softmax_forward(s, mask), s),
    }


def time_kernels(repeat):
    backends = available_backends()
    cases = kernel_cases(np.random.default_rng(0))
    rows = []
    for name, fn in cases.items():
        row = {"kernel": name}
        for bname, mod in backends.items():
            best = min(timeit.repeat(lambda: fn(mod), number=repeat, repeat=5)) / repeat
            row[bname] = best * 1e6
        rows.append(row)
    return rows


def time_episodes(n):
    out = []
    for backend in available_backends():
        env = dict(os.environ, LDF_KERNELS=backend)
        res = subprocess.run([sys.executable, "-c", EPISODE_SNIPPET.format(n=n)], env=env,
                             capture_output=True, text=True, check=True)
        out.append(json.loads(res.stdout))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--episodes", type=int, default=100)
    args = ap.parse_args()

    rows = time_kernels(args.repeat)
    names = [k for k in rows[0] if k != "kernel"]
    print(f"{'kernel':<18}" + "".join(f"{n + ' us':>12}" for n in names) +
          ("     speedup" if len(names) > 1 else ""))
    for row in rows:
        line = f"{row['kernel']:<18}" + "".join(f"{row[n]:>12.1f}" for n in names)
        if "cython" in row:
            line += f"{row['python'] / row['cython']:>11.1f}x"
        print(line)
    print()
    for rec in time_episodes(args.episodes):
        print(f"training episode ({rec['backend']}): {rec['ms']:.2f} ms")


if __name__ == "__main__":
    main()
