#!/usr/bin/env python3
"""Compare the compiled kernels against the pure-numpy fallback.

Shapes mirror the training hot loop: attention score rows, layer-norm over
hidden states, and cross-entropy over the vocabulary.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from pxre.kernels import pure

try:
    from pxre.kernels import _fast
except ImportError:
    _fast = None


def cases(rng):
    att = np.ascontiguousarray(rng.normal(size=(8 * 4 * 48, 48)))
    att_dy = np.ascontiguousarray(rng.normal(size=att.shape))
    att_y = pure.softmax2d(att)
    hid = np.ascontiguousarray(rng.normal(size=(8 * 48, 64)))
    gamma = rng.normal(size=64)
    beta = rng.normal(size=64)
    hid_dy = np.ascontiguousarray(rng.normal(size=hid.shape))
    _, xhat, inv_std = pure.layernorm2d(hid, gamma, beta, 1e-5)
    logits = np.ascontiguousarray(rng.normal(size=(256, 4000)))
    targets = rng.integers(0, 4000, size=256).astype(np.int64)
    return [
        ("softmax (1536x48)", lambda m: m.softmax2d(att)),
        ("softmax_backward", lambda m: m.softmax2d_backward(att_y, att_dy)),
        ("layernorm (384x64)", lambda m: m.layernorm2d(hid, gamma, beta, 1e-5)),
        ("layernorm_backward", lambda m: m.layernorm2d_backward(hid_dy, xhat, inv_std, gamma)),
        ("nll (256x4000)", lambda m: m.nll2d(logits, targets)),
    ]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    if _fast is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation`")
        return

    rng = np.random.default_rng(0)
    print(f"{'kernel':24s} {'pure (ms)':>10s} {'compiled (ms)':>14s} {'speedup':>8s}")
    for name, fn in cases(rng):
        t_pure = min(timeit.repeat(lambda: fn(pure), number=args.repeats, repeat=3))
        t_fast = min(timeit.repeat(lambda: fn(_fast), number=args.repeats, repeat=3))
        ms = 1000.0 / args.repeats
        print(
            f"{name:24s} {t_pure * ms:10.3f} {t_fast * ms:14.3f} "
            f"{t_pure / t_fast:7.2f}x"
        )


if __name__ == "__main__":
    main()
