"""Time the numba and numpy paths of each hot kernel on representative shapes.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Shapes follow the toy model at 8 kHz: a 1 s waveform through the first conv
layer, the grouped positional conv on 100 frames, VAD framing of 60 s of
audio and the synthesis filter on 1 s.
"""

import argparse
import timeit

import numpy as np

from agegender import _kernels as K


def cases(rng):
    wave = rng.normal(size=(8000, 1))
    w0 = rng.normal(size=(32, 1, 10))
    feats = np.pad(rng.normal(size=(100, 32)), ((4, 4), (0, 0)))
    wpos = rng.normal(size=(32, 8, 8))
    g0 = rng.normal(size=((8000 - 10) // 5 + 1, 32))
    long = rng.normal(size=60 * 8000)
    return {
        "conv1d fwd, first layer": (lambda: K.conv1d_forward_np(wave, w0, 5, 1),
                                    lambda: K.conv1d_forward_nb(wave, w0, 5, 1)),
        "conv1d bwd, first layer": (lambda: K.conv1d_backward_np(wave, w0, g0, 5, 1),
                                    lambda: K.conv1d_backward_nb(wave, w0, g0, 5, 1)),
        "conv1d fwd, grouped pos": (lambda: K.conv1d_forward_np(feats, wpos, 1, 4),
                                    lambda: K.conv1d_forward_nb(feats, wpos, 1, 4)),
        "frame power, 60 s": (lambda: K.frame_power_np(long, 200, 80),
                              lambda: K.frame_power_nb(long, 200, 80)),
        "one-pole filter, 1 s": (lambda: K.one_pole_np(wave[:, 0], 0.3),
                                 lambda: K.one_pole_nb(wave[:, 0], 0.3)),
    }


def best_of(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if K.njit is None:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':26s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, (f_np, f_nb) in cases(rng).items():
        a, b = f_np(), f_nb()  # also compiles the numba path
        for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            np.testing.assert_allclose(x, y, rtol=1e-9, atol=1e-9)
        t_np, t_nb = best_of(f_np, args.repeat), best_of(f_nb, args.repeat)
        print(f"{name:26s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
