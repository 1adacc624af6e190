"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each row also checks that both backends return the same value.
"""
import argparse
import timeit

import numpy as np

from fruitsize import _pykernels as py
from fruitsize.estimators3d import draw_samples
from fruitsize.kernels import compiled_backend as cy


def cases(rng):
    disk = np.ascontiguousarray(np.argwhere(np.hypot(*np.mgrid[-40:41, -40:41]) <= 40), dtype=np.int64)
    cloud = rng.normal(size=(800, 3))
    cloud = np.ascontiguousarray(40 * cloud / np.linalg.norm(cloud, axis=1)[:, None] + [0, 0, 1000])
    ring = np.argwhere(np.abs(np.hypot(*np.mgrid[-30:31, -30:31]) - 30) < 0.7)
    bu, bv = np.ascontiguousarray(ring[:, 1] + 60), np.ascontiguousarray(ring[:, 0] + 60)
    noisy = np.vstack([cloud + rng.normal(0, 1, cloud.shape), rng.uniform(-60, 60, (340, 3)) + [0, 0, 1000]])
    samples = draw_samples(rng, len(noisy), 5000)
    return {
        "max_sqdist_2d (5k px)": (lambda k: k.max_sqdist_2d(disk)),
        "max_sqdist_3d (800 pts)": (lambda k: k.max_sqdist_3d(cloud)),
        "hough_votes (61x61x31)": (lambda k: k.hough_votes(bu, bv, 30, 30, 61, 61, 15.0, 1.0, 31)),
        "ransac_search (500 it)": (lambda k: k.ransac_search(noisy, samples, 3.0, 0.99, 500)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if cy is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"{'kernel':<26}{'cython ms':>11}{'python ms':>11}{'speedup':>9}  same")
    for name, fn in cases(np.random.default_rng(0)).items():
        t_c = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        t_p = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        a, b = fn(cy), fn(py)
        same = np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b
        print(f"{name:<26}{t_c:>11.2f}{t_p:>11.2f}{t_p / t_c:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
