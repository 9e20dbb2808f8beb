"""Compare the compiled and numpy frame kernels, plus the matcher variants.

Run with ``python3 benchmarks/bench_kernels.py``. Prints one ``key=value``
block per measurement; times are medians in microseconds.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from evtr import _pykernels
from evtr.correlation import CorrelationEngine
from evtr.events import compress, EventFrame

try:
    from evtr import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def median_us(fn, repeats: int) -> float:
    fn()
    samples = []
    for _ in range(repeats):
        a = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - a)
    return float(np.median(samples)) / 1000.0


def random_events(rng, n, width=320, height=180, span=66_000):
    t = np.sort(rng.integers(0, span, n))
    return t, rng.integers(0, width, n), rng.integers(0, height, n)


def bench_backends(rng, repeats: int) -> None:
    w, h = 320, 180
    t, u, v = random_events(rng, 20_000)
    last = np.full((h, w), -(1 << 60), dtype=np.int64)
    bits = np.packbits(rng.random((h, w)) < 0.05, axis=1)
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    for name, mod in backends:
        print(f"backend={name}")
        print(f"accumulate_us={median_us(lambda: mod.accumulate_packed(t, u, v, 0, 66_000, w, h), repeats):.1f}")
        print(f"stamp_us={median_us(lambda: mod.stamp_events(last, t, u, v), repeats):.1f}")
        print(f"window_us={median_us(lambda: mod.window_packed(last, 0, 66_000), repeats):.1f}")
        for m in (1, 8, 5):
            print(f"compress_m{m}_us={median_us(lambda: mod.compress_packed(bits, w, m), repeats):.1f}")
        print()


def bench_matcher(rng, repeats: int, s: int = 4) -> None:
    w, h = 320, 180
    frames = [EventFrame.from_pixels((rng.random((h, w)) < 0.05).astype(np.uint8)) for _ in range(2 * s + 2)]
    for m in (1, 8):
        teach = [compress(f, m) for f in frames[:-1]]
        rep = compress(frames[-1], m)
        eng = CorrelationEngine(h, teach[0].width)
        prepared = eng.prepare(teach)
        print(f"factor={m}")
        print(f"concatenated_us={median_us(lambda: eng.correlate_many(teach, rep), repeats):.1f}")
        print(f"concatenated_cached_us={median_us(lambda: eng.correlate_prepared(prepared, rep), repeats):.1f}")
        print(f"per_frame_us={median_us(lambda: eng.correlate_each(teach, rep), repeats):.1f}")
        print()


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    bench_backends(rng, args.repeats)
    bench_matcher(rng, args.repeats)


if __name__ == "__main__":
    main()
