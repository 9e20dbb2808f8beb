"""Pure-numpy versions of the compiled frame kernels (same signatures)."""

import numpy as np


def _check_bounds(u, v, width, height):
    bad = np.flatnonzero((u < 0) | (u >= width) | (v < 0) | (v >= height))
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"event {i} at (u={u[i]}, v={v[i]}) outside {width}x{height} sensor")


def accumulate_packed(t, u, v, t_start, t_end, width, height):
    _check_bounds(u, v, width, height)
    keep = (t >= t_start) & (t < t_end)
    dense = np.zeros((height, width), dtype=bool)
    dense[v[keep], u[keep]] = True
    return np.packbits(dense, axis=1)


def stamp_events(last_t, t, u, v):
    height, width = last_t.shape
    _check_bounds(u, v, width, height)
    np.maximum.at(last_t, (v, u), t)


def window_packed(last_t, t_start, t_end):
    return np.packbits((last_t >= t_start) & (last_t < t_end), axis=1)


def compress_packed(bits, width, factor):
    height = bits.shape[0]
    dense = np.unpackbits(bits, axis=1, count=width).astype(np.int32)
    ncols = -(-width // factor)
    pad = ncols * factor - width
    if pad:
        dense = np.pad(dense, ((0, 0), (0, pad)))
    return dense.reshape(height, ncols, factor).sum(axis=2, dtype=np.int32)
