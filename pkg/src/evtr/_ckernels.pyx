# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for bit-packed event frames.

Bit layout matches ``numpy.packbits`` with the default big bit order: column
``u`` of a row lives in byte ``u >> 3`` under mask ``0x80 >> (u & 7)``.
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int64_t, int32_t, uint8_t, uint64_t

cnp.import_array()

cdef uint8_t POPCOUNT[256]
cdef int _i
for _i in range(256):
    POPCOUNT[_i] = bin(_i).count("1")


def _check_bounds(const int64_t[:] u, const int64_t[:] v, Py_ssize_t width, Py_ssize_t height):
    cdef Py_ssize_t i, n = u.shape[0]
    for i in range(n):
        if u[i] < 0 or u[i] >= width or v[i] < 0 or v[i] >= height:
            return i
    return -1


def accumulate_packed(const int64_t[:] t, const int64_t[:] u, const int64_t[:] v,
                      int64_t t_start, int64_t t_end, Py_ssize_t width, Py_ssize_t height):
    cdef Py_ssize_t bad = _check_bounds(u, v, width, height)
    if bad >= 0:
        raise ValueError(
            f"event {bad} at (u={u[bad]}, v={v[bad]}) outside {width}x{height} sensor")
    cdef Py_ssize_t nbytes = (width + 7) // 8
    out = np.zeros((height, nbytes), dtype=np.uint8)
    cdef uint8_t[:, ::1] bits = out
    cdef Py_ssize_t i, n = t.shape[0]
    cdef int64_t col
    with nogil:
        for i in range(n):
            if t[i] >= t_start and t[i] < t_end:
                col = u[i]
                bits[v[i], col >> 3] |= <uint8_t>(0x80 >> (col & 7))
    return out


def stamp_events(int64_t[:, ::1] last_t, const int64_t[:] t, const int64_t[:] u,
                 const int64_t[:] v):
    cdef Py_ssize_t height = last_t.shape[0], width = last_t.shape[1]
    cdef Py_ssize_t bad = _check_bounds(u, v, width, height)
    if bad >= 0:
        raise ValueError(
            f"event {bad} at (u={u[bad]}, v={v[bad]}) outside {width}x{height} sensor")
    cdef Py_ssize_t i, n = t.shape[0]
    with nogil:
        for i in range(n):
            if t[i] > last_t[v[i], u[i]]:
                last_t[v[i], u[i]] = t[i]


def window_packed(const int64_t[:, ::1] last_t, int64_t t_start, int64_t t_end):
    cdef Py_ssize_t height = last_t.shape[0], width = last_t.shape[1]
    cdef Py_ssize_t nbytes = (width + 7) // 8
    out = np.empty((height, nbytes), dtype=np.uint8)
    cdef uint8_t[:, ::1] bits = out
    cdef Py_ssize_t r, c, byte, hi
    cdef uint64_t span = <uint64_t>(t_end - t_start)
    cdef uint8_t acc
    with nogil:
        for r in range(height):
            for byte in range(nbytes):
                acc = 0
                hi = min(width, (byte + 1) * 8)
                for c in range(byte * 8, hi):
                    # unsigned compare folds both window bounds into one test
                    acc = (acc << 1) | (<uint64_t>(last_t[r, c] - t_start) < span)
                acc <<= (byte + 1) * 8 - hi
                bits[r, byte] = acc
    return out


def compress_packed(const uint8_t[:, ::1] bits, Py_ssize_t width, Py_ssize_t factor):
    cdef Py_ssize_t height = bits.shape[0]
    cdef Py_ssize_t ncols = (width + factor - 1) // factor
    out = np.zeros((height, ncols), dtype=np.int32)
    cdef int32_t[:, ::1] vals = out
    cdef Py_ssize_t r, c, b, k, step, base, nbytes = bits.shape[1]
    cdef int32_t acc
    cdef uint8_t byte
    with nogil:
        if factor % 8 == 0:
            # whole bytes per output column; trailing pad bits are always zero
            step = factor // 8
            for r in range(height):
                for c in range(ncols):
                    acc = 0
                    for b in range(c * step, min((c + 1) * step, nbytes)):
                        acc += POPCOUNT[bits[r, b]]
                    vals[r, c] = acc
        else:
            for r in range(height):
                for b in range(nbytes):
                    byte = bits[r, b]
                    if byte == 0:
                        continue
                    base = b * 8
                    for k in range(8):
                        if byte & (0x80 >> k):
                            vals[r, (base + k) // factor] += 1
    return out
