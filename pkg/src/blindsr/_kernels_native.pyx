# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot image kernels (see _kernels_numpy.py)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t reflect_index(Py_ssize_t i, Py_ssize_t n) nogil:
    # mirror without edge repetition; pads here never exceed n - 1
    if i < 0:
        return -i
    if i >= n:
        return 2 * n - 2 - i
    return i


def correlate2d_reflect(cnp.float32_t[:, :, ::1] image, cnp.float64_t[:, ::1] kernel):
    cdef Py_ssize_t h = image.shape[0]
    cdef Py_ssize_t w = image.shape[1]
    cdef Py_ssize_t c = image.shape[2]
    cdef Py_ssize_t kh = kernel.shape[0]
    cdef Py_ssize_t kw = kernel.shape[1]
    cdef Py_ssize_t ph = kh // 2
    cdef Py_ssize_t pw = kw // 2
    cdef Py_ssize_t y, x, ch, i, j, yy, xx
    cdef double acc

    out_arr = np.empty((h, w, c), dtype=np.float32)
    cdef cnp.float32_t[:, :, ::1] out = out_arr
    with nogil:
        for y in range(h):
            for x in range(w):
                if ph <= y < h - ph and pw <= x < w - pw:
                    # interior: no reflection needed
                    for ch in range(c):
                        acc = 0.0
                        for i in range(kh):
                            yy = y + i - ph
                            for j in range(kw):
                                acc += kernel[i, j] * image[yy, x + j - pw, ch]
                        out[y, x, ch] = <cnp.float32_t> acc
                else:
                    for ch in range(c):
                        acc = 0.0
                        for i in range(kh):
                            yy = reflect_index(y + i - ph, h)
                            for j in range(kw):
                                xx = reflect_index(x + j - pw, w)
                                acc += kernel[i, j] * image[yy, xx, ch]
                        out[y, x, ch] = <cnp.float32_t> acc
    return out_arr


def dynamic_conv(cnp.float32_t[:, :, ::1] image, cnp.float32_t[:, :, ::1] weights):
    cdef Py_ssize_t h = image.shape[0]
    cdef Py_ssize_t w = image.shape[1]
    cdef Py_ssize_t c = image.shape[2]
    cdef Py_ssize_t k2 = weights.shape[2]
    cdef Py_ssize_t k = <Py_ssize_t> round(k2 ** 0.5)
    cdef Py_ssize_t p = k // 2
    cdef Py_ssize_t y, x, ch, i, j, yy, xx
    cdef double acc

    out_arr = np.empty((h, w, c), dtype=np.float32)
    cdef cnp.float32_t[:, :, ::1] out = out_arr
    with nogil:
        for y in range(h):
            for x in range(w):
                for ch in range(c):
                    acc = 0.0
                    for i in range(k):
                        yy = y + i - p
                        if yy < 0 or yy >= h:
                            continue
                        for j in range(k):
                            xx = x + j - p
                            if xx < 0 or xx >= w:
                                continue
                            acc += weights[y, x, i * k + j] * image[yy, xx, ch]
                    out[y, x, ch] = <cnp.float32_t> acc
    return out_arr


def resample_axis0(cnp.float32_t[:, :, ::1] image, cnp.int64_t[:, ::1] indices,
                   cnp.float64_t[:, ::1] weights):
    cdef Py_ssize_t n_out = indices.shape[0]
    cdef Py_ssize_t taps = indices.shape[1]
    cdef Py_ssize_t w = image.shape[1]
    cdef Py_ssize_t c = image.shape[2]
    cdef Py_ssize_t u, t, x, ch
    cdef double acc

    out_arr = np.empty((n_out, w, c), dtype=np.float32)
    cdef cnp.float32_t[:, :, ::1] out = out_arr
    with nogil:
        for u in range(n_out):
            for x in range(w):
                for ch in range(c):
                    acc = 0.0
                    for t in range(taps):
                        acc += weights[u, t] * image[indices[u, t], x, ch]
                    out[u, x, ch] = <cnp.float32_t> acc
    return out_arr
