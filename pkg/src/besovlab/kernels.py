"""Hot loops: shifted-difference power sums, their gradients, annulus sups.

Every kernel has a numba implementation and a numpy implementation with
identical semantics. :mod:`besovlab._accel` decides which one the public
names below are bound to.

Grid values are treated as a function on the whole integer lattice that
vanishes outside the ``N x N`` box, so a power sum over ``x`` runs over all
of Z^2, not only over box nodes. Offsets are integer ``(di, dj)`` rows.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import BACKEND, HAVE_NUMBA, jit


def support_bbox(values: np.ndarray) -> tuple[int, int, int, int]:
    """Half-open index box ``(i0, i1, j0, j1)`` holding every nonzero value.

    An all-zero array gives an empty box ``(0, 0, 0, 0)``.
    """
    rows = np.flatnonzero(np.any(values != 0.0, axis=1))
    if rows.size == 0:
        return 0, 0, 0, 0
    cols = np.flatnonzero(np.any(values != 0.0, axis=0))
    return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1


def _prefix(a: np.ndarray) -> np.ndarray:
    c = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=c[1:, 1:])
    return c


def _as_int_power(p: float) -> int:
    return int(p) if float(p).is_integer() and 1 <= p <= 16 else 0


# --------------------------------------------------------------------------
# numpy implementations


def _powersums_np(values, offsets, p):
    i0, i1, j0, j1 = support_bbox(values)
    out = np.zeros(len(offsets))
    if i0 == i1:
        return out
    P = np.abs(values) ** p
    cum = _prefix(P)

    def rect(a0, a1, b0, b1):
        return cum[a1, b1] - cum[a0, b1] - cum[a1, b0] + cum[a0, b0]

    PB = rect(i0, i1, j0, j1)
    for k, (a, b) in enumerate(np.asarray(offsets, dtype=np.int64)):
        x0, x1 = max(i0, i0 - a), min(i1, i1 - a)
        y0, y1 = max(j0, j0 - b), min(j1, j1 - b)
        if x0 >= x1 or y0 >= y1:
            out[k] = 2.0 * PB
            continue
        d = values[x0 + a:x1 + a, y0 + b:y1 + b] - values[x0:x1, y0:y1]
        acc = float(np.sum(np.abs(d) ** p))
        out[k] = acc + (PB - rect(x0, x1, y0, y1)) + (PB - rect(x0 + a, x1 + a, y0 + b, y1 + b))
    return out


def _psi_np(d, p):
    return p * np.abs(d) ** (p - 1.0) * np.sign(d)


def _powersum_grad_np(values, offsets, coefs, p, region):
    n, m = values.shape
    r0, r1, c0, c1 = region
    grad = np.zeros_like(values)
    if r0 >= r1 or c0 >= c1:
        return grad
    pad = n
    big = np.zeros((n + 2 * pad, m + 2 * pad))
    big[pad:pad + n, pad:pad + m] = values
    core = values[r0:r1, c0:c1]
    g = np.zeros_like(core)
    for (a, b), c in zip(np.asarray(offsets, dtype=np.int64), coefs):
        if c == 0.0:
            continue
        fwd = big[pad + r0 + a:pad + r1 + a, pad + c0 + b:pad + c1 + b]
        bwd = big[pad + r0 - a:pad + r1 - a, pad + c0 - b:pad + c1 - b]
        g += c * (_psi_np(core - bwd, p) - _psi_np(fwd - core, p))
    grad[r0:r1, c0:c1] = g
    return grad


def _annulus_sup_np(values, offsets, weights, mode):
    n, m = values.shape
    g = np.zeros_like(values)
    i0, i1, j0, j1 = support_bbox(values)
    if i0 == i1:
        return g
    pad = n
    big = np.zeros((n + 2 * pad, m + 2 * pad))
    big[pad:pad + n, pad:pad + m] = values
    absv = np.abs(values)
    for (a, b), w in zip(np.asarray(offsets, dtype=np.int64), weights):
        other = big[pad + a:pad + n + a, pad + b:pad + m + b]
        diff = np.abs(other - values)
        if mode == 0:
            cand = 0.5 * w * diff
        else:
            den = absv + np.abs(other)
            with np.errstate(invalid="ignore", divide="ignore"):
                cand = np.where(den > 0.0, w * diff * absv / den, 0.0)
        np.maximum(g, cand, out=g)
    return g


def _oracle_sums_np(values, p):
    n = values.shape[0]
    pad = n
    big = np.zeros((3 * n, 3 * n))
    big[pad:2 * pad, pad:2 * pad] = values
    out = np.zeros((2 * n - 1, 2 * n - 1))
    # every lattice x with x or x+h inside the box lies in the padded frame
    for a in range(-(n - 1), n):
        for b in range(-(n - 1), n):
            if a == 0 and b == 0:
                continue
            lo_i, hi_i = max(0, -a), min(3 * n, 3 * n - a)
            lo_j, hi_j = max(0, -b), min(3 * n, 3 * n - b)
            d = big[lo_i + a:hi_i + a, lo_j + b:hi_j + b] - big[lo_i:hi_i, lo_j:hi_j]
            out[a + n - 1, b + n - 1] = np.sum(np.abs(d) ** p)
    return out


# --------------------------------------------------------------------------
# numba implementations

if HAVE_NUMBA:

    @jit
    def _ipow(d, k):
        r = 1.0
        for _ in range(k):
            r *= d
        return r

    @jit
    def _rect(cum, a0, a1, b0, b1):
        return cum[a1, b1] - cum[a0, b1] - cum[a1, b0] + cum[a0, b0]

    @jit
    def _powersums_nb(values, offsets, p, ip, i0, i1, j0, j1, cum):
        m = offsets.shape[0]
        out = np.empty(m)
        PB = _rect(cum, i0, i1, j0, j1)
        for k in range(m):
            a = offsets[k, 0]
            b = offsets[k, 1]
            x0 = max(i0, i0 - a)
            x1 = min(i1, i1 - a)
            y0 = max(j0, j0 - b)
            y1 = min(j1, j1 - b)
            if x0 >= x1 or y0 >= y1:
                out[k] = 2.0 * PB
                continue
            acc = 0.0
            for i in range(x0, x1):
                for j in range(y0, y1):
                    d = abs(values[i + a, j + b] - values[i, j])
                    if d != 0.0:
                        if ip > 0:
                            acc += _ipow(d, ip)
                        else:
                            acc += math.pow(d, p)
            out[k] = (acc + (PB - _rect(cum, x0, x1, y0, y1))
                      + (PB - _rect(cum, x0 + a, x1 + a, y0 + b, y1 + b)))
        return out

    @jit
    def _zget(values, i, j):
        if 0 <= i < values.shape[0] and 0 <= j < values.shape[1]:
            return values[i, j]
        return 0.0

    @jit
    def _psi(d, p, ip):
        if d == 0.0:
            return 0.0
        ad = abs(d)
        if ip > 0:
            r = p * _ipow(ad, ip - 1)
        else:
            r = p * math.pow(ad, p - 1.0)
        return r if d > 0.0 else -r

    @jit
    def _powersum_grad_nb(values, offsets, coefs, p, ip, r0, r1, c0, c1):
        grad = np.zeros_like(values)
        for k in range(offsets.shape[0]):
            c = coefs[k]
            if c == 0.0:
                continue
            a = offsets[k, 0]
            b = offsets[k, 1]
            for i in range(r0, r1):
                for j in range(c0, c1):
                    v = values[i, j]
                    d1 = _zget(values, i + a, j + b) - v
                    d0 = v - _zget(values, i - a, j - b)
                    grad[i, j] += c * (_psi(d0, p, ip) - _psi(d1, p, ip))
        return grad

    @jit
    def _annulus_sup_nb(values, offsets, weights, mode, i0, i1, j0, j1):
        n, m = values.shape
        g = np.zeros_like(values)
        for k in range(offsets.shape[0]):
            a = offsets[k, 0]
            b = offsets[k, 1]
            w = weights[k]
            # x in B, or (half mode only) x + h in B
            for part in range(2 if mode == 0 else 1):
                if part == 0:
                    xa0, xa1, xb0, xb1 = i0, i1, j0, j1
                else:
                    xa0 = max(0, i0 - a)
                    xa1 = min(n, i1 - a)
                    xb0 = max(0, j0 - b)
                    xb1 = min(m, j1 - b)
                for i in range(xa0, xa1):
                    for j in range(xb0, xb1):
                        v = values[i, j]
                        o = _zget(values, i + a, j + b)
                        d = abs(o - v)
                        if mode == 0:
                            c = 0.5 * w * d
                        else:
                            den = abs(v) + abs(o)
                            c = w * d * abs(v) / den if den > 0.0 else 0.0
                        if c > g[i, j]:
                            g[i, j] = c
        return g

    @jit
    def _oracle_sums_nb(values, p):
        n = values.shape[0]
        out = np.zeros((2 * n - 1, 2 * n - 1))
        for a in range(-(n - 1), n):
            for b in range(-(n - 1), n):
                if a == 0 and b == 0:
                    continue
                acc = 0.0
                for i in range(-(n - 1), 2 * n - 1):
                    for j in range(-(n - 1), 2 * n - 1):
                        d = _zget(values, i + a, j + b) - _zget(values, i, j)
                        if d != 0.0:
                            acc += math.pow(abs(d), p)
                out[a + n - 1, b + n - 1] = acc
        return out


def _powersums_nb_entry(values, offsets, p):
    i0, i1, j0, j1 = support_bbox(values)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64).reshape(-1, 2)
    if i0 == i1:
        return np.zeros(len(offsets))
    cum = _prefix(np.abs(values) ** p)
    return _powersums_nb(np.ascontiguousarray(values, dtype=np.float64), offsets,
                         float(p), _as_int_power(p), i0, i1, j0, j1, cum)


def _powersum_grad_nb_entry(values, offsets, coefs, p, region):
    r0, r1, c0, c1 = region
    return _powersum_grad_nb(np.ascontiguousarray(values, dtype=np.float64),
                             np.ascontiguousarray(offsets, dtype=np.int64).reshape(-1, 2),
                             np.ascontiguousarray(coefs, dtype=np.float64),
                             float(p), _as_int_power(p), r0, r1, c0, c1)


def _annulus_sup_nb_entry(values, offsets, weights, mode):
    i0, i1, j0, j1 = support_bbox(values)
    if i0 == i1:
        return np.zeros_like(values)
    return _annulus_sup_nb(np.ascontiguousarray(values, dtype=np.float64),
                           np.ascontiguousarray(offsets, dtype=np.int64).reshape(-1, 2),
                           np.ascontiguousarray(weights, dtype=np.float64),
                           int(mode), i0, i1, j0, j1)


def _oracle_sums_nb_entry(values, p):
    return _oracle_sums_nb(np.ascontiguousarray(values, dtype=np.float64), float(p))


IMPLEMENTATIONS = {
    "numpy": {
        "powersums": _powersums_np,
        "powersum_grad": _powersum_grad_np,
        "annulus_sup": _annulus_sup_np,
        "oracle_sums": _oracle_sums_np,
    },
}
if HAVE_NUMBA:
    IMPLEMENTATIONS["numba"] = {
        "powersums": _powersums_nb_entry,
        "powersum_grad": _powersum_grad_nb_entry,
        "annulus_sup": _annulus_sup_nb_entry,
        "oracle_sums": _oracle_sums_nb_entry,
    }

_active = IMPLEMENTATIONS[BACKEND]


def powersums(values, offsets, p):
    """``S(h) = sum_x |f(x+h) - f(x)|^p`` over Z^2 for each offset row.

    Unscaled: multiply by ``spacing**2`` to get ``||f(.+h) - f||_p^p``.
    """
    return _active["powersums"](values, offsets, p)


def powersum_grad(values, offsets, coefs, p, region):
    """Gradient of ``sum_k coefs[k] * S(h_k)`` w.r.t. the box values.

    Only nodes inside ``region = (r0, r1, c0, c1)`` are filled; the rest of
    the returned array is zero.
    """
    return _active["powersum_grad"](values, offsets, coefs, p, region)


def annulus_sup(values, offsets, weights, mode=0):
    """Pointwise ``max_k weights[k] * a(x, x + h_k)`` over box nodes.

    ``mode=0`` uses ``a = |f(x+h) - f(x)| / 2``; ``mode=1`` splits the
    difference in proportion to ``|f(x)| / (|f(x)| + |f(x+h)|)``.
    """
    return _active["annulus_sup"](values, offsets, weights, mode)


def oracle_sums(values, p):
    """Brute-force ``S(h)`` table for every ``|h_i| < N``, indexed ``[a+N-1, b+N-1]``."""
    return _active["oracle_sums"](values, p)
