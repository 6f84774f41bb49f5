# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-sample loops for the feed-forward compressor.

Must stay operation-for-operation identical to ``_pykernels`` so both
backends agree to rounding.
"""

from libc.math cimport fabs, log10, pow as cpow

cdef double LEVEL_FLOOR = 1e-6


cdef inline double _run(const double[::1] x, double[::1] y, double threshold,
                        double ratio, double a_att, double a_rel,
                        double g_prev) noexcept nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double mag, x_db, g_sc, g_r
    for i in range(n):
        mag = fabs(x[i])
        if mag < LEVEL_FLOOR:
            mag = LEVEL_FLOOR
        x_db = 20.0 * log10(mag)
        if x_db > threshold:
            g_sc = threshold + (x_db - threshold) / ratio
        else:
            g_sc = x_db
        g_r = g_sc - x_db
        if g_r > 0.0:
            g_r = 0.0
        if g_r < g_prev:
            g_prev = a_att * g_prev + (1.0 - a_att) * g_r
        else:
            g_prev = a_rel * g_prev + (1.0 - a_rel) * g_r
        y[i] = x[i] * cpow(10.0, g_prev / 20.0)
    return g_prev


def comp_run(const double[::1] x, double[::1] y, double threshold, double ratio,
             double a_att, double a_rel, double g_prev):
    """Fill ``y`` from ``x``; return the final smoothed gain (dB)."""
    with nogil:
        g_prev = _run(x, y, threshold, ratio, a_att, a_rel, g_prev)
    return g_prev


def comp_run_rows(const double[:, ::1] x, double[:, ::1] y,
                  const double[::1] threshold, const double[::1] ratio,
                  const double[::1] a_att, const double[::1] a_rel):
    """Process each row independently from a fresh (0 dB) state."""
    cdef Py_ssize_t r
    with nogil:
        for r in range(x.shape[0]):
            _run(x[r], y[r], threshold[r], ratio[r], a_att[r], a_rel[r], 0.0)
