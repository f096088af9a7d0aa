"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on the same inputs under both backends; outputs are
compared for exact equality before timings are reported.
"""

import argparse
import time

import numpy as np

from stemcalyx import _backend
from stemcalyx.classify import _poly_kernel
from stemcalyx.imaging import median_filter, trace_boundary
from stemcalyx.labels import ClassLabel
from stemcalyx.segmentation import auto_seed, grow_cut_full
from stemcalyx.synthgen import SplitMix64, SynthSpec, gen_apple_scene, gen_candidate_shape


def _growcut_case():
    scene = gen_apple_scene([SynthSpec(ClassLabel.DEFECT, 1.0, 20.0, 0.5, 7)], 256, 11)
    image = median_filter(scene.image, 1)
    seeds = auto_seed(image)
    return lambda: grow_cut_full(image, seeds), lambda r: (r.labels.tobytes(), r.strength.tobytes())


def _trace_case():
    mask = gen_candidate_shape(SynthSpec(ClassLabel.CALYX, 2.0, 10.0, 1.0, 3))
    return lambda: trace_boundary(mask), lambda r: r.tobytes()


def _smo_case():
    from stemcalyx.classify import svm_binary

    rng = SplitMix64(5)
    n, d = 300, 20
    X = rng.normal(n * d).reshape(n, d)
    t = np.where(X[:, 0] + 0.5 * X[:, 1] ** 2 + 0.3 * rng.normal(n) > 0.5, 1.0, -1.0)
    return (lambda: svm_binary(X, t, 1.0, 3, 1e-3, 100 * n, 1.0 / d),
            lambda r: (r[0].tobytes(), r[1], r[3]))


CASES = {"growcut": _growcut_case, "moore_trace": _trace_case, "smo": _smo_case}


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = _backend.available()
    if "compiled" not in backends:
        print("compiled kernels not built; only the numpy fallback will be timed")
    print(f"{'kernel':<12}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}  same")
    try:
        for name, make in CASES.items():
            run, key = make()
            times, keys = {}, {}
            for b in backends:
                _backend.set_backend(b)
                times[b], result = _time(run, args.repeat)
                keys[b] = key(result)
            same = len({repr(k) for k in keys.values()}) == 1
            speed = times["python"] / times["compiled"] if "compiled" in times else 1.0
            print(f"{name:<12}" + "".join(f"{times[b]:>11.4f}s" for b in backends)
                  + f"{speed:>9.1f}x  {'yes' if same else 'NO'}")
    finally:
        _backend.set_backend(backends[0])


if __name__ == "__main__":
    main()
