"""Compiled vs Python backend timings for the two hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends produce identical results on these inputs; the script checks
that before timing.
"""
import argparse
import timeit

import numpy as np

from kitinet import _backend, dsmc
from kitinet.dsmc import DsmcConfig
from kitinet.kernel import KitiConfig, kitinet_collide
from kitinet.rng import stream


def kiti_case(n_particles, n_divide):
    rng = np.random.default_rng(0)
    D = n_particles * n_divide
    x, v = 0.3 * rng.normal(size=D), rng.normal(size=D)
    cfg = KitiConfig(n_divide=n_divide, coll_coef=0.5)
    return lambda: kitinet_collide(x, v, cfg, stream(1))


def dsmc_case(num_particles):
    cfg = DsmcConfig(num_particles=num_particles, cells_per_axis=(20, 20), seed=3)
    state = dsmc.dsmc_step(dsmc.init_gas(cfg), cfg)
    return lambda: dsmc.dsmc_step(state, cfg)


CASES = {
    "kiti_collide N=16 nd=4": lambda: kiti_case(16, 4),
    "kiti_collide N=64 nd=8": lambda: kiti_case(64, 8),
    "kiti_collide N=256 nd=2": lambda: kiti_case(256, 2),
    "dsmc_step 1e4 particles": lambda: dsmc_case(10_000),
}


def same_result(fn):
    out = {}
    for b in _backend.available():
        prev = _backend.use(b)
        r = fn()
        _backend.use(prev)
        out[b] = r
    if len(out) < 2:
        return True
    a, b = out["compiled"], out["python"]
    if isinstance(a, tuple):
        return all(np.allclose(p, q, rtol=1e-12, atol=1e-12) for p, q in zip(a[:2], b[:2]))
    return np.array_equal(a.velocities, b.velocities)


def bench(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    backends = _backend.available()
    print(f"{'case':28s}" + "".join(f"{b:>14s}" for b in backends) + "     speedup  match")
    for label, make in CASES.items():
        fn = make()
        times = {}
        for b in backends:
            prev = _backend.use(b)
            times[b] = bench(fn, args.repeat)
            _backend.use(prev)
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        cells = "".join(f"{times[b] * 1e3:11.3f} ms" for b in backends)
        print(f"{label:28s}{cells}{speed:11.1f}x  {same_result(fn)}")


if __name__ == "__main__":
    main()
