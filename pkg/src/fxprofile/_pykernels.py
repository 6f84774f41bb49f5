"""Pure-Python twin of ``_ckernels``; used when the extension is absent."""

import math

LEVEL_FLOOR = 1e-6


def comp_run(x, y, threshold, ratio, a_att, a_rel, g_prev):
    log10 = math.log10
    for i in range(len(x)):
        xi = float(x[i])
        mag = abs(xi)
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
        y[i] = xi * 10.0 ** (g_prev / 20.0)
    return g_prev


def comp_run_rows(x, y, threshold, ratio, a_att, a_rel):
    for r in range(x.shape[0]):
        comp_run(x[r], y[r], float(threshold[r]), float(ratio[r]),
                 float(a_att[r]), float(a_rel[r]), 0.0)
