"""Pure numpy implementations of the hot kernels.

These are the reference versions. ``_kernels.pyx`` mirrors every function
here with the same signature and the same floating-point operation order,
so both backends produce identical labels and traces.
"""

import numpy as np

UNLABELED = 0
FOREGROUND = 1
BACKGROUND = 2

# Von Neumann neighbours, in the fixed order used to break attack ties.
# (drow, dcol): up, down, left, right
_VN_OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1))

# Moore neighbourhood in visually counterclockwise order (image y points
# down): E, NE, N, NW, W, SW, S, SE.
MOORE_DX = (1, 1, 0, -1, -1, -1, 0, 1)
MOORE_DY = (0, -1, -1, -1, 0, 1, 1, 1)


def _shift(a, drow, dcol, fill):
    """Return b with b[r, c] = a[r + drow, c + dcol], out-of-range -> fill."""
    out = np.full_like(a, fill)
    h, w = a.shape[:2]
    rs_dst = slice(max(0, -drow), h - max(0, drow))
    cs_dst = slice(max(0, -dcol), w - max(0, dcol))
    rs_src = slice(max(0, drow), h - max(0, -drow))
    cs_src = slice(max(0, dcol), w - max(0, -dcol))
    out[rs_dst, cs_dst] = a[rs_src, cs_src]
    return out


def growcut(features, labels, strength, max_norm, max_iters):
    """Run the synchronous grow-cut automaton in place.

    features: float64 (H, W, C); labels: int8 (H, W); strength: float64 (H, W).
    Returns the number of passes executed (the last one is the no-change
    pass when the automaton converged).
    """
    h, w, nch = features.shape
    # Per-direction attenuation g(|C_p - C_q|) is constant over the run.
    gains = []
    for drow, dcol in _VN_OFFSETS:
        nb = _shift(features, drow, dcol, 0.0)
        diff = features - nb
        if nch == 1:
            dist = np.abs(diff[:, :, 0])
        else:
            sq = diff[:, :, 0] * diff[:, :, 0]
            for c in range(1, nch):
                sq = sq + diff[:, :, c] * diff[:, :, c]
            dist = np.sqrt(sq)
        g = 1.0 - dist / max_norm
        valid = _shift(np.ones((h, w), dtype=bool), drow, dcol, False)
        gains.append((g, valid))

    passes = 0
    while passes < max_iters:
        passes += 1
        new_labels = labels.copy()
        new_strength = strength.copy()
        for (drow, dcol), (g, valid) in zip(_VN_OFFSETS, gains):
            nb_strength = _shift(strength, drow, dcol, 0.0)
            nb_label = _shift(labels, drow, dcol, UNLABELED)
            attack = g * nb_strength
            win = valid & (attack > new_strength)
            new_strength[win] = attack[win]
            new_labels[win] = nb_label[win]
        changed = not (np.array_equal(new_labels, labels)
                       and np.array_equal(new_strength, strength))
        labels[...] = new_labels
        strength[...] = new_strength
        if not changed:
            break
    return passes


def moore_trace(padded):
    """Moore-neighbour trace of the outer contour with Jacob's stopping rule.

    ``padded`` is a uint8 (H, W) array with a one-pixel zero border. Returns
    an int64 (N, 2) array of (x, y) points in padded coordinates.
    """
    h, w = padded.shape
    start = None
    for y in range(h):
        row = padded[y]
        nz = np.flatnonzero(row)
        if nz.size:
            start = (int(nz[0]), y)
            break
    if start is None:
        return np.empty((0, 2), dtype=np.int64)

    sx, sy = start
    # Start pixel is top-most, so its N neighbour (index 2) is background.
    back = 2
    first_move = None
    px, py = sx, sy
    points = [(sx, sy)]
    limit = 4 * h * w + 8
    for _ in range(limit):
        found = -1
        for k in range(1, 9):
            d = (back + k) % 8
            if padded[py + MOORE_DY[d], px + MOORE_DX[d]]:
                found = d
                break
        if found < 0:
            break  # isolated pixel
        nx, ny = px + MOORE_DX[found], py + MOORE_DY[found]
        if first_move is None:
            first_move = found
        elif (px, py) == (sx, sy) and found == first_move:
            points.pop()  # start pixel re-entered in the original way
            break
        # The neighbour scanned just before `found` is background; seen from
        # the new pixel it sits at the direction below.
        prev = (found + 7) % 8
        bx, by = px + MOORE_DX[prev], py + MOORE_DY[prev]
        back = _direction(bx - nx, by - ny)
        px, py = nx, ny
        points.append((px, py))
    return np.asarray(points, dtype=np.int64)


def _direction(dx, dy):
    for d in range(8):
        if MOORE_DX[d] == dx and MOORE_DY[d] == dy:
            return d
    raise ValueError("not a Moore neighbour")


def smo_solve(kmat, y, c, tol, max_iter):
    """SMO for the C-SVM dual with second-order working-set selection.

    Minimises 0.5 a'Qa - e'a subject to 0 <= a <= c and y'a = 0 where
    Q_ij = y_i y_j K_ij. Returns (alpha, grad, iterations, gap); the bias
    comes from ``smo_bias``.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(kmat).copy()
    tau = 1e-12
    it = 0
    gap = np.inf
    while it < max_iter:
        score = -y * grad
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        if not up.any() or not low.any():
            gap = 0.0
            break
        s_up = np.where(up, score, -np.inf)
        i = int(np.argmax(s_up))
        m_up = s_up[i]
        s_low = np.where(low, score, np.inf)
        m_low = s_low.min()
        gap = m_up - m_low
        if gap < tol:
            break
        bdiff = m_up - score
        cand = low & (bdiff > 0)
        a = diag[i] + diag - 2.0 * kmat[i]
        a = np.where(a > 0, a, tau)
        obj = np.where(cand, -(bdiff * bdiff) / a, np.inf)
        j = int(np.argmin(obj))

        # Analytic two-variable update (LIBSVM form).
        yi, yj = y[i], y[j]
        qi = yi * y * kmat[i]
        qj = yj * y * kmat[j]
        old_i, old_j = alpha[i], alpha[j]
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
        grad += qi * (ai - old_i) + qj * (aj - old_j)
        it += 1

    return alpha, grad, it, float(gap)


def smo_bias(alpha, grad, y, c):
    """Bias b of the decision function sum_i alpha_i y_i K(x_i, x) + b."""
    yg = y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        rho = yg[free].mean()
    else:
        ub = np.inf
        lb = -np.inf
        for t in range(y.shape[0]):
            at_upper = alpha[t] >= c
            at_lower = alpha[t] <= 0
            if (at_upper and y[t] < 0) or (at_lower and y[t] > 0):
                ub = min(ub, yg[t])
            else:
                lb = max(lb, yg[t])
        rho = (ub + lb) / 2.0
    return float(-rho)
