"""Time the compiled and pure-Python kernels on the same inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-``repeat`` time for each
backend and the speed-up of the compiled one.
"""

import argparse
import timeit

import numpy as np

from animove.kernels import available_backends


def inputs(rng):
    T, N = 100_000, 3
    g = rng.dirichlet(np.ones(N), size=(1, N))
    delta = rng.dirichlet(np.ones(N))
    le = rng.normal(size=(T, N))
    Tm, d = 2000, 2
    mh = dict(y=rng.normal(size=(Tm, d)), observed=np.ones(Tm, dtype=np.uint8), proc_var=np.ones(Tm - 1),
              noise=rng.normal(scale=0.5, size=(Tm, d)), log_u=np.log(rng.random(Tm)), z=rng.normal(size=(Tm, d)))
    gs = dict(log_inc=rng.normal(size=(Tm, N)), log_gamma=np.log(g[0]), log_delta=np.log(delta),
              u=rng.random(Tm), s=rng.integers(0, N, Tm).astype(np.int64))
    return delta, g, le, mh, gs


def cases(mod, delta, g, le, mh, gs):
    lg = np.log(g)
    return {
        "hmm_forward_loglik (T=1e5, N=3)": lambda: mod.hmm_forward_loglik(delta, g, le),
        "hmm_forward (T=1e5, N=3)": lambda: mod.hmm_forward(delta, g, le),
        "hmm_backward (T=1e5, N=3)": lambda: mod.hmm_backward(g, le),
        "hmm_viterbi (T=1e5, N=3)": lambda: mod.hmm_viterbi(np.log(delta), lg, le),
        "rw_mh_sweep (T=2000, d=2)": lambda: mod.rw_mh_sweep(mh["z"].copy(), mh["y"], mh["observed"],
                                                             mh["proc_var"], 0.5, 0.0, np.zeros(2), 1.0,
                                                             mh["noise"], mh["log_u"]),
        "gibbs_state_sweep (T=2000, N=3)": lambda: mod.gibbs_state_sweep(gs["s"].copy(), gs["log_inc"],
                                                                         gs["log_gamma"], gs["log_delta"],
                                                                         gs["u"]),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    data = inputs(np.random.default_rng(0))
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the pure-Python kernels only")
    timings = {name: {k: min(timeit.repeat(f, number=1, repeat=args.repeat))
                      for k, f in cases(mod, *data).items()}
               for name, mod in backends.items()}
    width = max(len(k) for k in timings["python"])
    print(f"{'kernel':<{width}}  {'python':>10}  {'cython':>10}  {'speed-up':>8}")
    for k, tp in timings["python"].items():
        tc = timings.get("cython", {}).get(k)
        extra = f"{tc * 1e3:>8.2f}ms  {tp / tc:>7.1f}x" if tc else f"{'-':>10}  {'-':>8}"
        print(f"{k:<{width}}  {tp * 1e3:>8.2f}ms  {extra}")


if __name__ == "__main__":
    main()
