"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Shapes mirror a default run: batch 10, a (100, 100) classifier on 20-d input,
a (64, 16) learner on 10 logits, and GEM duals with up to 9 constraints.
"""
import argparse
import timeit

import numpy as np

from sscl.kernels import available_backends, load_backend


def _mlp(rng, dims):
    ws = [np.ascontiguousarray(rng.normal(0, 0.1, (a, b))) for a, b in zip(dims[:-1], dims[1:])]
    bs = [np.zeros(b) for b in dims[1:]]
    return ws, bs


def _qp(rng, k, n=12_000):
    G = rng.normal(size=(k, n))
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    P = np.ascontiguousarray(G @ G.T)
    q = np.ascontiguousarray(-(G @ rng.normal(size=n)))
    return P, q, 1.0 / np.linalg.eigvalsh(P)[-1]


def cases(rng):
    x = rng.normal(size=(10, 20))
    y = rng.integers(0, 10, size=10)
    z = rng.normal(size=(10, 10))
    target = np.full((10, 10), 0.1)
    cls_w, cls_b = _mlp(rng, [20, 100, 100, 10])
    lrn_w, lrn_b = _mlp(rng, [10, 64, 16, 10])
    up = rng.normal(size=(10, 10))
    P4, q4, s4 = _qp(rng, 4)
    P9, q9, s9 = _qp(rng, 9)
    return {
        "mlp_forward classifier": lambda k: k.mlp_forward(cls_w, cls_b, x),
        "mlp_forward learner": lambda k: k.mlp_forward(lrn_w, lrn_b, z),
        "mlp_backward classifier": lambda k: k.mlp_backward(cls_w, k.mlp_forward(cls_w, cls_b, x), up),
        "xent_rows": lambda k: k.xent_rows(z, y),
        "soft_xent_rows": lambda k: k.soft_xent_rows(z, target),
        "softmax_rows": lambda k: k.softmax_rows(z),
        "qp_dual_pg k=4": lambda k: k.qp_dual_pg(P4, q4, s4, 2000, 1e-10),
        "qp_dual_pg k=9": lambda k: k.qp_dual_pg(P9, q9, s9, 2000, 1e-10),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    names = available_backends()
    backends = {n: load_backend(n) for n in names}
    if len(names) < 2:
        print("compiled backend not built; timing the fallback only")
    table = cases(np.random.default_rng(args.seed))

    print(f"{'kernel':26s}" + "".join(f"{n + ' us':>14s}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for label, fn in table.items():
        times = {}
        for n, k in backends.items():
            t = timeit.Timer(lambda: fn(k))
            loops, _ = t.autorange()
            times[n] = min(t.repeat(args.repeat, loops)) / loops * 1e6
        row = f"{label:26s}" + "".join(f"{times[n]:14.2f}" for n in names)
        if len(names) > 1:
            row += f"{times['python'] / times['cython']:9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
