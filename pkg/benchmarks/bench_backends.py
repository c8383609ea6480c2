"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_backends.py [--repeat N]

Times the 33x33 QR eigensolve, a 400-point gain scan and a 20 s
four-vehicle platoon simulation on each importable backend.
"""
import argparse
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np

from predcacc import _backend
from predcacc.numerics import balance, hessenberg
from predcacc.simlab import heterogeneous_scenario, run_platoon_sim
from predcacc.stability import build_lifted_system, experiment_params, gain_scan


@contextmanager
def using(name):
    """Route the module-level eigen kernel through one backend."""
    saved = _backend.hqr
    _backend.hqr = _backend.available()[name].hqr
    try:
        yield
    finally:
        _backend.hqr = saved


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    H = hessenberg(balance(build_lifted_system(experiment_params()).Acl))
    axes = {"kp": np.linspace(0.05, 1.0, 20), "kd": np.linspace(0.1, 2.0, 20)}
    cfg = replace(heterogeneous_scenario(initial_errors=(1.0, -1.0, 0.5)), duration=20.0)

    rows = []
    for name, mod in sorted(_backend.available().items()):
        t_hqr = best_of(lambda: mod.hqr(H.copy(), 60), args.repeat)
        with using(name):
            t_scan = best_of(lambda: gain_scan(experiment_params(), axes), 1)
        t_sim = best_of(lambda: run_platoon_sim(cfg, backend=name), args.repeat)
        rows.append((name, t_hqr, t_scan, t_sim))

    print(f"{'backend':<10} {'hqr 33x33':>12} {'scan 400 pts':>14} {'sim 4 veh 20 s':>16}")
    for name, t_hqr, t_scan, t_sim in rows:
        print(f"{name:<10} {t_hqr * 1e3:>9.3f} ms {t_scan:>12.3f} s {t_sim * 1e3:>13.2f} ms")
    if len(rows) == 2:
        (_, *a), (_, *b) = rows  # compiled, python
        print("speedup    " + "  ".join(f"{y / x:8.1f}x" for x, y in zip(a, b)))


if __name__ == "__main__":
    main()
