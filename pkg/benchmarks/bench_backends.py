"""Time the simulation loop under both backends.

The backend is fixed at import, so each one runs in its own interpreter:

    python benchmarks/bench_backends.py [--t-final 1500] [--repeat 3]

The numba timing excludes the first (compiling) call.
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = """
import json, sys, time
import liepid
from liepid.cli import reproduction_specs
name, t_final, repeat = sys.argv[1], float(sys.argv[2]), int(sys.argv[3])
[(_, spec)] = reproduction_specs(name, {"t_final": t_final})
cfg = spec.to_sim_config()
t0 = time.perf_counter()
tr = liepid.simulate(cfg)
first = time.perf_counter() - t0
times = []
for _ in range(repeat):
    t0 = time.perf_counter()
    tr = liepid.simulate(cfg)
    times.append(time.perf_counter() - t0)
print(json.dumps({"backend": liepid.BACKEND, "first": first, "best": min(times),
                  "steps": cfg.n_steps, "final_phi": float(tr.phi[-1])}))
"""


def run(backend: str, name: str, t_final: float, repeat: int) -> dict:
    env = dict(os.environ, LIEPID_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", WORKER, name, str(t_final), str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--t-final", type=float, default=1500.0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--runs", nargs="+", default=["so3-first-order", "so3-second-order", "se3-first-order"])
    args = ap.parse_args()

    print(f"{'run':<18} {'backend':<7} {'steps':>8} {'first [s]':>10} {'best [s]':>9} {'us/step':>8}  final phi")
    for name in args.runs:
        res = {b: run(b, name, args.t_final, args.repeat) for b in ("numba", "numpy")}
        for b, r in res.items():
            print(f"{name:<18} {b:<7} {r['steps']:>8} {r['first']:>10.3f} {r['best']:>9.3f} "
                  f"{1e6 * r['best'] / r['steps']:>8.2f}  {r['final_phi']:.3e}")
        print(f"{name:<18} speedup {res['numpy']['best'] / res['numba']['best']:.1f}x")


if __name__ == "__main__":
    main()
