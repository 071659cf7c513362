"""mpmath evaluation of the perturbed resolvent near the threshold mu = 0.

Only the supp V sized linear algebra runs in extended precision; inputs and
outputs are ordinary numpy arrays. The branch data are rebuilt from the
angle psi = -theta_+/2 of the double-precision coefficients, which is exact.
"""
from __future__ import annotations

import math

import mpmath
import numpy as np

from .errors import NearSingular


def _branch(c):
    psi = mpmath.mpf(-c.theta_plus) / 2
    s = mpmath.sin(psi)
    return {
        "mu": 2 * s,
        "theta": -2 * psi,
        "a1": 1 / mpmath.cos(psi),
        "a2": -1 / mpmath.sqrt(1 + s * s),
        "b": -2 * mpmath.asinh(s),
    }


def _kernel_table(br, sign, ks):
    pref = 1 / (4 * br["mu"] ** 3)
    out = {}
    for k in ks:
        osc = sign * 1j * br["a1"] * mpmath.expj(-sign * br["theta"] * k)
        out[k] = pref * (osc + br["a2"] * mpmath.exp(br["b"] * k))
    return out


def _block(table, rows, cols):
    M = mpmath.matrix(len(rows), len(cols))
    for i, n in enumerate(rows):
        for j, m in enumerate(cols):
            M[i, j] = table[abs(int(n) - int(m))]
    return M


def _distances(*pairs):
    ks = set()
    for a, b in pairs:
        a, b = np.asarray(a), np.asarray(b)
        ks.update(np.unique(np.abs(a[:, None] - b[None, :])).tolist())
    return sorted(int(k) for k in ks)


def _resolvent(br, sign, V, rows, cols, table, cond_cap):
    supp = V.support
    v = [mpmath.sqrt(abs(mpmath.mpf(x))) for x in V.V_support]
    d = len(supp)
    M = _block(table, supp, supp)
    for i in range(d):
        for j in range(d):
            M[i, j] = v[i] * M[i, j] * v[j]
        M[i, i] += int(np.sign(V.V_support[i]))
    right = _block(table, supp, cols)
    for i in range(d):
        for j in range(len(cols)):
            right[i, j] = v[i] * right[i, j]
    # lu_solve takes one right-hand side at a time; d is small, so invert.
    Minv = mpmath.inverse(M)
    if cond_cap is not None:
        cond = mpmath.mnorm(M, 1) * mpmath.mnorm(Minv, 1)
        if cond > cond_cap:
            raise NearSingular(
                f"Birman-Schwinger condition {mpmath.nstr(cond, 4)} exceeds cap",
                condition=float(cond))
    X = Minv * right
    left = _block(table, rows, supp)
    for i in range(len(rows)):
        for j in range(d):
            left[i, j] = left[i, j] * v[j]
    return _block(table, rows, cols) - left * X


def _to_numpy(A):
    return np.array([[complex(A[i, j]) for j in range(A.cols)] for i in range(A.rows)])


def perturbed_resolvent_mp(c, V, rows, cols, dps, cond_cap):
    with mpmath.workdps(dps):
        br = _branch(c)
        ks = _distances((rows, cols), (rows, V.support), (V.support, cols),
                        (V.support, V.support))
        table = _kernel_table(br, c.sign, ks)
        cap = None if cond_cap is None or math.isinf(cond_cap) \
            else mpmath.mpf(cond_cap) * mpmath.mpf(10) ** (dps - 16)
        return _to_numpy(_resolvent(br, c.sign, V, rows, cols, table, cap))


def _object_table(table, kmax):
    out = np.empty(kmax + 1, dtype=object)
    for k in range(kmax + 1):
        out[k] = table[k]
    return out


def _jump_part(br, sign, supp, v, U, rows, cols):
    """v-corrected part R_0 v M^{-1} v R_0 as an object array (one sign)."""
    kmax = int(max(np.abs(np.subtract.outer(rows, supp)).max(),
                   np.abs(np.subtract.outer(supp, cols)).max(),
                   np.abs(np.subtract.outer(supp, supp)).max()))
    tab = _object_table(_kernel_table(br, sign, range(kmax + 1)), kmax)
    d = len(supp)
    M = mpmath.matrix(d, d)
    for i in range(d):
        for j in range(d):
            M[i, j] = v[i] * tab[abs(int(supp[i]) - int(supp[j]))] * v[j]
        M[i, i] += U[i]
    Minv = mpmath.inverse(M)
    vMv = np.empty((d, d), dtype=object)
    for i in range(d):
        for j in range(d):
            vMv[i, j] = v[i] * Minv[i, j] * v[j]
    left = tab[np.abs(np.subtract.outer(rows, supp))]
    right = tab[np.abs(np.subtract.outer(supp, cols))]
    return (left @ vMv) @ right


def jump_mp(c, V, rows, cols, dps):
    """mu^3 [R_V^+ - R_V^-] with the correction term in extended precision.

    For real V, R_V^- is the complex conjugate of R_V^+, so the jump is
    2i mu^3 Im R_V^+. The free part mu^3 (R_0^+ - R_0^-) = (i/2) a1 cos(theta k)
    is exact in double; the correction cancels heavily and is formed in
    mpmath (object arrays keep the products cheap).
    """
    rows, cols = np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)
    supp = V.support
    with mpmath.workdps(dps):
        br = _branch(c)
        v = [mpmath.sqrt(abs(mpmath.mpf(x))) for x in V.V_support]
        U = [int(np.sign(x)) for x in V.V_support]
        corr = _jump_part(br, 1, supp, v, U, rows, cols)
        mu3 = br["mu"] ** 3
        corr = np.array([[float(mu3 * z.imag) for z in row] for row in corr])
    k = np.abs(np.subtract.outer(rows, cols))
    return 0.5j * c.a1 * np.cos(c.theta_plus * k) - 2j * corr


def inverse_bs_norm(c, V, dps):
    """Largest singular values of M^{+/-}(mu)^{-1} and of M^{+/-}(mu).

    The inverse is formed in extended precision; its entries are then well
    represented in double, where the 2-norm is taken.
    """
    with mpmath.workdps(dps):
        br = _branch(c)
        supp = V.support
        ks = _distances((supp, supp))
        table = _kernel_table(br, c.sign, ks)
        v = [mpmath.sqrt(abs(mpmath.mpf(x))) for x in V.V_support]
        d = len(supp)
        M = _block(table, supp, supp)
        for i in range(d):
            for j in range(d):
                M[i, j] = v[i] * M[i, j] * v[j]
            M[i, i] += int(np.sign(V.V_support[i]))
        Minv = _to_numpy(mpmath.inverse(M))
        Md = _to_numpy(M)
    return float(np.linalg.norm(Minv, 2)), float(np.linalg.norm(Md, 2))
