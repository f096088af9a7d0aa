# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_kernels_py``.

Each function keeps the signature and the floating-point operation order
of its numpy counterpart.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, INFINITY

cnp.import_array()

cdef int UNLABELED = 0

cdef int VN_DR[4]
cdef int VN_DC[4]
VN_DR[:] = [-1, 1, 0, 0]
VN_DC[:] = [0, 0, -1, 1]

cdef int MDX[8]
cdef int MDY[8]
MDX[:] = [1, 1, 0, -1, -1, -1, 0, 1]
MDY[:] = [0, -1, -1, -1, 0, 1, 1, 1]


def growcut(double[:, :, ::1] features, signed char[:, ::1] labels,
            double[:, ::1] strength, double max_norm, long max_iters):
    cdef Py_ssize_t h = features.shape[0]
    cdef Py_ssize_t w = features.shape[1]
    cdef Py_ssize_t nch = features.shape[2]
    cdef Py_ssize_t r, c, rr, cc, k, ch
    cdef double best, attack, dist, sq, d, s
    cdef signed char lab
    cdef bint changed
    cdef long passes = 0

    # Attenuation per direction is fixed for the whole run; neighbours
    # outside the image get gain 0 and never win.
    gain_arr = np.zeros((4, h, w), dtype=np.float64)
    cdef double[:, :, ::1] gain = gain_arr
    for k in range(4):
        for r in range(h):
            rr = r + VN_DR[k]
            if rr < 0 or rr >= h:
                continue
            for c in range(w):
                cc = c + VN_DC[k]
                if cc < 0 or cc >= w:
                    continue
                if nch == 1:
                    dist = fabs(features[r, c, 0] - features[rr, cc, 0])
                else:
                    d = features[r, c, 0] - features[rr, cc, 0]
                    sq = d * d
                    for ch in range(1, nch):
                        d = features[r, c, ch] - features[rr, cc, ch]
                        sq = sq + d * d
                    dist = sqrt(sq)
                gain[k, r, c] = 1.0 - dist / max_norm

    new_lab_arr = np.empty((h, w), dtype=np.int8)
    new_str_arr = np.empty((h, w), dtype=np.float64)
    cdef signed char[:, ::1] new_lab = new_lab_arr
    cdef double[:, ::1] new_str = new_str_arr
    # A cell can only change if it or a neighbour changed in the previous
    # pass; everything else is copied through unchanged.
    dirty_arr = np.ones((h, w), dtype=np.uint8)
    moved_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] dirty = dirty_arr
    cdef cnp.uint8_t[:, ::1] moved = moved_arr

    while passes < max_iters:
        passes += 1
        changed = False
        for r in range(h):
            for c in range(w):
                moved[r, c] = 0
                if not dirty[r, c]:
                    new_str[r, c] = strength[r, c]
                    new_lab[r, c] = labels[r, c]
                    continue
                best = strength[r, c]
                lab = labels[r, c]
                for k in range(4):
                    rr = r + VN_DR[k]
                    cc = c + VN_DC[k]
                    if rr < 0 or rr >= h or cc < 0 or cc >= w:
                        continue
                    s = strength[rr, cc]
                    if s == 0.0:
                        continue
                    attack = gain[k, r, c] * s
                    if attack > best:
                        best = attack
                        lab = labels[rr, cc]
                new_str[r, c] = best
                new_lab[r, c] = lab
                if best != strength[r, c] or lab != labels[r, c]:
                    changed = True
                    moved[r, c] = 1
        labels[:, :] = new_lab
        strength[:, :] = new_str
        if not changed:
            break
        for r in range(h):
            for c in range(w):
                dirty[r, c] = moved[r, c] or (r > 0 and moved[r - 1, c]) or (
                    r + 1 < h and moved[r + 1, c]) or (c > 0 and moved[r, c - 1]) or (
                    c + 1 < w and moved[r, c + 1])
    return passes


cdef inline int _direction(int dx, int dy):
    cdef int d
    for d in range(8):
        if MDX[d] == dx and MDY[d] == dy:
            return d
    return -1


def moore_trace(cnp.uint8_t[:, ::1] padded):
    cdef Py_ssize_t h = padded.shape[0]
    cdef Py_ssize_t w = padded.shape[1]
    cdef Py_ssize_t x, y
    cdef int sx = -1, sy = -1
    for y in range(h):
        for x in range(w):
            if padded[y, x]:
                sx = <int>x
                sy = <int>y
                break
        if sx >= 0:
            break
    if sx < 0:
        return np.empty((0, 2), dtype=np.int64)

    cdef int back = 2
    cdef int first_move = -1
    cdef int px = sx, py = sy
    cdef int found, d, kk, nx, ny, prev, bx, by
    cdef Py_ssize_t limit = 4 * h * w + 8
    cdef Py_ssize_t step, n = 1
    points_arr = np.empty((limit + 1, 2), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] points = points_arr
    points[0, 0] = sx
    points[0, 1] = sy
    for step in range(limit):
        found = -1
        for kk in range(1, 9):
            d = (back + kk) % 8
            if padded[py + MDY[d], px + MDX[d]]:
                found = d
                break
        if found < 0:
            break
        nx = px + MDX[found]
        ny = py + MDY[found]
        if first_move < 0:
            first_move = found
        elif px == sx and py == sy and found == first_move:
            n -= 1
            break
        prev = (found + 7) % 8
        bx = px + MDX[prev]
        by = py + MDY[prev]
        back = _direction(bx - nx, by - ny)
        px = nx
        py = ny
        points[n, 0] = px
        points[n, 1] = py
        n += 1
    return points_arr[:n].copy()


def smo_solve(double[:, ::1] kmat, double[::1] y, double c, double tol,
              long max_iter):
    cdef Py_ssize_t n = y.shape[0]
    alpha_arr = np.zeros(n)
    grad_arr = -np.ones(n)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] grad = grad_arr
    cdef double tau = 1e-12
    cdef long it = 0
    cdef double gap = INFINITY
    cdef Py_ssize_t t, i, j
    cdef double score, m_up, m_low, bdiff, a, obj, best_obj
    cdef double yi, yj, old_i, old_j, quad, delta, diff, total, ai, aj
    cdef double dai, daj
    cdef bint is_up, is_low, any_up, any_low

    while it < max_iter:
        any_up = False
        any_low = False
        m_up = -INFINITY
        m_low = INFINITY
        i = 0
        for t in range(n):
            score = -y[t] * grad[t]
            is_up = (y[t] > 0 and alpha[t] < c) or (y[t] < 0 and alpha[t] > 0)
            is_low = (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < c)
            if is_up:
                if not any_up or score > m_up:
                    m_up = score
                    i = t
                any_up = True
            if is_low:
                if score < m_low:
                    m_low = score
                any_low = True
        if not any_up or not any_low:
            gap = 0.0
            break
        gap = m_up - m_low
        if gap < tol:
            break
        j = 0
        best_obj = INFINITY
        for t in range(n):
            is_low = (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < c)
            if not is_low:
                continue
            score = -y[t] * grad[t]
            bdiff = m_up - score
            if not bdiff > 0:
                continue
            a = kmat[i, i] + kmat[t, t] - 2.0 * kmat[i, t]
            if not a > 0:
                a = tau
            obj = -(bdiff * bdiff) / a
            if obj < best_obj:
                best_obj = obj
                j = t

        yi = y[i]
        yj = y[j]
        old_i = alpha[i]
        old_j = alpha[j]
        quad = kmat[i, i] + kmat[j, j] - 2.0 * kmat[i, j]
        if quad <= 0:
            quad = tau
        if yi != yj:
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            ai = old_i + delta
            aj = old_j + delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > 0:
                if ai > c:
                    ai = c
                    aj = c - diff
            else:
                if aj > c:
                    aj = c
                    ai = c + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            ai = old_i - delta
            aj = old_j + delta
            if total > c:
                if ai > c:
                    ai = c
                    aj = total - c
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > c:
                if aj > c:
                    aj = c
                    ai = total - c
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        dai = ai - old_i
        daj = aj - old_j
        for t in range(n):
            grad[t] = grad[t] + ((yi * y[t]) * kmat[i, t] * dai
                                 + (yj * y[t]) * kmat[j, t] * daj)
        it += 1
    return alpha_arr, grad_arr, it, float(gap)
