"""Benchmark the Monte Carlo kernel: compiled (numba) vs pure-Python fallback.

Each mode runs in a subprocess so the SCPTMLAB_NUMBA flag is honored at
import time. Usage: python benchmarks/bench_mc.py [reps] [num_devices]
"""

from __future__ import annotations

import os
import subprocess
import sys
import textwrap

WORKLOAD = textwrap.dedent("""
    import time
    from scptmlab import build_plan, derive, make_config
    from scptmlab.accel import numba_enabled
    from scptmlab.mc import run_replication

    reps, n = {reps}, {n}
    config = make_config(num_devices=n, scheme="GP")
    derived = derive(config)
    plan = build_plan(config, derived)

    run_replication(config, derived, plan, seed=0)  # warm up / compile
    t0 = time.perf_counter()
    for rep in range(reps):
        run_replication(config, derived, plan, seed=rep)
    dt = time.perf_counter() - t0
    mode = "numba" if numba_enabled() else "python"
    print(f"{{mode:>7}}: {{reps}} reps of N={{n}} in {{dt:.3f}} s "
          f"({{dt / reps * 1000:.1f}} ms/rep)")
""")


def main() -> None:
    reps = int(sys.argv[1]) if len(sys.argv) > 1 else 20
    n = int(sys.argv[2]) if len(sys.argv) > 2 else 500
    code = WORKLOAD.format(reps=reps, n=n)
    for flag in ("1", "0"):
        env = dict(os.environ, SCPTMLAB_NUMBA=flag)
        subprocess.run([sys.executable, "-c", code], env=env, check=True)


if __name__ == "__main__":
    main()
