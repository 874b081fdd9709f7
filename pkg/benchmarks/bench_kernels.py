"""Time the hot kernels under numba and under the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--budget 8000] [--repeat 5]

Each backend runs in its own interpreter because the switch is read at import.
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from apishift import kernels
from apishift._accel import backend
from apishift.oracle import skewed_scenario

budget, repeat = int(sys.argv[1]), int(sys.argv[2])
sc = skewed_scenario()
p, cdf = sc.p.p.ravel().copy(), sc.cdf()
P, L = cdf.shape
wsq = np.ones((P, L))
rng = np.random.default_rng(0)
u = rng.random(budget)
parts = rng.integers(0, P, budget)
labels = kernels.draw_labels(parts, cdf, u)

t0 = time.perf_counter()
kernels.masa_loop(p, cdf, u, 1.0, wsq, False)
kernels.observe_sequence(parts, labels, P, L, wsq, False)
warm = time.perf_counter() - t0

def best(fn):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)

print(json.dumps({
    "backend": backend(),
    "first_call_s": warm,
    "masa_loop_s": best(lambda: kernels.masa_loop(p, cdf, u, 1.0, wsq, False)),
    "masa_loop_weighted_s": best(lambda: kernels.masa_loop(p, cdf, u, 1.0, wsq, True)),
    "observe_sequence_s": best(lambda: kernels.observe_sequence(parts, labels, P, L, wsq, False)),
}))
"""


def run(disable, budget, repeat):
    env = dict(os.environ)
    env.pop("APISHIFT_DISABLE_NUMBA", None)
    if disable:
        env["APISHIFT_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER, str(budget), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--budget", type=int, default=8000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    fast, slow = run(False, args.budget, args.repeat), run(True, args.budget, args.repeat)
    print(f"budget {args.budget}, best of {args.repeat}")
    print(f"{'kernel':<22}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for key in ("masa_loop_s", "masa_loop_weighted_s", "observe_sequence_s"):
        print(f"{key[:-2]:<22}{fast[key] * 1e3:>10.2f}ms{slow[key] * 1e3:>10.2f}ms{slow[key] / fast[key]:>9.0f}x")
    print(f"{'first call':<22}{fast['first_call_s']:>11.2f}s{slow['first_call_s']:>11.2f}s")


if __name__ == "__main__":
    main()
