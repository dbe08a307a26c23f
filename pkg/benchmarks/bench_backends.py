"""Compare the compiled CCA kernels with the pure-Python fallback.

Times both labelling strategies of each available backend on seeded random
binary volumes and reports the median of several trials. ``scipy.ndimage.label``
is timed alongside as an outside reference, and all component counts are
checked for agreement.

    python3 benchmarks/bench_backends.py --dims 3 --sizes 50,100 --trials 5
"""

import argparse
import statistics
import sys
import time

import numpy as np
from scipy import ndimage

from instmetrics import _cca_fallback
from instmetrics.cca import DEFAULT_CONNECTIVITY, CcaStrategy, label_array

try:
    from instmetrics import _cca_kernels
except ImportError:
    _cca_kernels = None


def median_time(fn, trials):
    times, value = [], None
    for _ in range(trials):
        start = time.perf_counter()
        value = fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times), value


def scipy_structure(dims, conn):
    rank = {4: 1, 8: 2, 6: 1, 18: 2, 26: 3}[conn]
    return ndimage.generate_binary_structure(dims, rank)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dims", type=int, choices=(2, 3), default=3)
    parser.add_argument("--sizes", default="32,64,100")
    parser.add_argument("--connectivity", type=int)
    parser.add_argument("--density", type=float, default=0.5)
    parser.add_argument("--trials", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    conn = args.connectivity or DEFAULT_CONNECTIVITY[args.dims]
    backends = {"python": _cca_fallback}
    if _cca_kernels is not None:
        backends["cython"] = _cca_kernels
    else:
        print("# compiled extension not built; timing the fallback only", file=sys.stderr)

    print("dims,size,backend,strategy,median_seconds,components,speedup_vs_python")
    for size in (int(s) for s in args.sizes.split(",")):
        fg = np.random.default_rng(args.seed).random((size,) * args.dims) < args.density
        ref_seconds, (_, ref_count) = median_time(
            lambda: ndimage.label(fg, scipy_structure(args.dims, conn)), args.trials)
        print(f"{args.dims},{size},scipy,ndimage.label,{ref_seconds:.6f},{ref_count},")
        for strategy in (CcaStrategy.TWO_PASS_UNION_FIND, CcaStrategy.FLOOD_FILL):
            python_seconds = None
            for name, kernels in backends.items():
                seconds, (_, count) = median_time(
                    lambda: label_array(fg, conn, strategy, kernels=kernels), args.trials)
                if count != ref_count:
                    print(f"error: {name}/{strategy.value} found {count} components, scipy {ref_count}",
                          file=sys.stderr)
                    return 1
                python_seconds = python_seconds or seconds
                print(f"{args.dims},{size},{name},{strategy.value},{seconds:.6f},{count},"
                      f"{python_seconds / seconds:.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
