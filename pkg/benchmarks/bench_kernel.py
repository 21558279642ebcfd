"""Time forward and BPTT passes of the compiled kernel against the pure-Python one.

    python benchmarks/bench_kernel.py --hidden 8 --steps 200 --repeats 5
"""

import argparse
import time

import numpy as np

from rnnevo import backend
from rnnevo.genome import random_genome
from rnnevo.program import compile_genome


def best_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--inputs", type=int, default=5)
    ap.add_argument("--outputs", type=int, default=2)
    ap.add_argument("--hidden", type=int, default=8)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    g = random_genome(rng, args.inputs, args.outputs, args.hidden, edge_prob=0.5,
                      recurrent_prob=0.2, max_skip=5)
    prog = compile_genome(g)
    X = rng.uniform(0, 1, (args.steps, args.inputs))
    Y = rng.uniform(0, 1, (args.steps, args.outputs))
    print(f"genome: {len(g.nodes)} nodes, {len(g.edges)} edges, {prog.params.size} params, "
          f"{args.steps} steps")

    names = backend.available()
    results = {}
    for name in names:
        k = backend.get_backend(name)
        fwd = best_time(lambda: k.forward(prog, prog.params, X), args.repeats)
        bwd = best_time(lambda: k.loss_grad(prog, prog.params, X, Y), args.repeats)
        results[name] = (fwd, bwd)
        print(f"{name:8s} forward {fwd * 1e3:9.3f} ms   loss+grad {bwd * 1e3:9.3f} ms")
    if "cython" in results and "python" in results:
        (cf, cb), (pf, pb) = results["cython"], results["python"]
        print(f"speedup  forward {pf / cf:8.1f}x     loss+grad {pb / cb:8.1f}x")
        _, g_c = backend.get_backend("cython").loss_grad(prog, prog.params, X, Y)
        _, g_p = backend.get_backend("python").loss_grad(prog, prog.params, X, Y)
        print(f"max |grad difference| {np.max(np.abs(g_c - g_p)):.3g}")


if __name__ == "__main__":
    main()
