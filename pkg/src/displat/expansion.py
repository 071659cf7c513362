"""Threshold expansions of the free resolvent and singularity fits.

Near 0, R_0^{+/-}(mu^4) = sum_{j=-3}^{N} mu^j G_j^{+/-} + O(mu^{N+1}); near 16,
J R_0^{+/-}((2-mu)^4) J = sum_{j=-1}^{N} mu^{j/2} Gt_j^{+/-} + O(mu^{(N+1)/2}),
both in the weighted operator norm B(s, -s). The coefficients are closed-form
functions of k = |n - m|; ``sign="real"`` returns the real (bold) kernel that
the complex coefficient multiplies, e.g. G_1^{+/-} = ((-1 +/- i)/32) G_1 and
Gt_1^{+/-} = +/- i Gt_1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import NearSingular, OutOfRange, Unimplemented, WeightTooSmall
from .lattice import CompactPotential
from .resolvent import (_sign, coefficients_below_two, extended_digits,
                        spectral_coefficients)

SQRT2 = math.sqrt(2.0)
Q16 = 2.0 * SQRT2 - 3.0  # e^{b(2)} with the J sign folded in
ORDERS = {0: (-3, -2, -1, 0, 1, 2, 3), 16: (-1, 0, 1, 2)}


def _real_kernel(threshold, j, k, lib):
    """Real kernel part and complex prefactor function of the sign."""
    if threshold == 0:
        if j == -3:
            return lib.one(k), lambda s: (-1 + s * 1j) / 4
        if j in (-2, 2):
            return 0 * k, lambda s: 0.0
        if j == -1:
            return lib.frac(1, 8) - k * k / 2, lambda s: (1 + s * 1j) / 4
        if j == 0:
            return (k ** 3 - k) / 12, lambda s: 1.0
        if j == 1:
            return (k ** 4 / 3 - 5 * k ** 2 / 6 + lib.frac(3, 16)), \
                lambda s: (-1 + s * 1j) / 32
        if j == 3:
            return (k ** 6 - 35 * k ** 4 / 4 + 259 * k ** 2 / 16 - lib.frac(225, 64)), \
                lambda s: (-1 - s * 1j) / (4 * 720)
    if threshold == 16:
        r2, q = lib.sqrt2, lib.q16 ** k
        if j == -1:
            return lib.one(k) / 32, lambda s: s * 1j
        if j == 0:
            return (2 * r2 * k - q) / (32 * r2), lambda s: 1.0
        if j == 1:
            return -(2 * k * k - lib.frac(13, 8)) / 32, lambda s: s * 1j
        if j == 2:
            # The (2 sqrt2 - 3)^k part is fixed by the series of the closed form;
            # see the decisions ledger and tests/test_expansion.py.
            return (-k ** 3 / 24 + 5 * k / 48 - q * (k / 64 + 7 * r2 / 256)), lambda s: 1.0
    raise Unimplemented(f"no closed form for threshold {threshold}, order {j}")


class _NumpyLib:
    sqrt2 = SQRT2
    q16 = Q16

    @staticmethod
    def one(k):
        return np.ones_like(k)

    @staticmethod
    def frac(a, b):
        return a / b


class _MpLib:
    @property
    def sqrt2(self):
        return mpmath.sqrt(2)

    @property
    def q16(self):
        return 2 * mpmath.sqrt(2) - 3

    @staticmethod
    def one(k):
        return mpmath.mpf(1)

    @staticmethod
    def frac(a, b):
        return mpmath.mpf(a) / b


def coefficient_kernel(threshold: int, j: int, sign, n, m):
    """Closed-form coefficient G_j (threshold 0) or Gt_j (threshold 16) at (n, m).

    ``sign`` is +1, -1 (or "+", "-") for the complex coefficient, or "real"
    for the real kernel it is built from.
    """
    if threshold not in ORDERS or j not in ORDERS[threshold]:
        raise Unimplemented(f"no closed form for threshold {threshold}, order {j}")
    k = np.abs(np.subtract(n, m)).astype(float)
    base, pref = _real_kernel(threshold, j, k, _NumpyLib)
    if sign == "real":
        return base
    return pref(_sign(sign)) * base


def coefficient_matrix(threshold: int, j: int, sign, rows, cols) -> np.ndarray:
    """Kernel block on rows x cols, tabulated once per distance."""
    rows, cols = np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)
    k = np.abs(rows[:, None] - cols[None, :])
    if k.size == 0:
        return np.zeros(k.shape)
    table = coefficient_kernel(threshold, j, sign, np.arange(k.max() + 1), 0)
    return np.asarray(table)[k]


def _coefficient_mp(threshold, j, sign, k):
    base, pref = _real_kernel(threshold, j, mpmath.mpf(k), _MpLib())
    p = pref(sign)
    return mpmath.mpc(p) * base if p != 0 else mpmath.mpf(0)


def _exact_mp(threshold, sign, mu, k):
    """Exact free kernel at distance k: R_0(mu^4) or J R_0((2 - mu)^4) J."""
    if threshold == 0:
        psi = mpmath.asin(mu / 2)
    else:
        psi = mpmath.atan2(1 - mu / 2, mpmath.sqrt(mu * (1 - mu / 4)))
    s = mpmath.sin(psi)
    nu, theta = 2 * s, -2 * psi
    a1, a2, b = 1 / mpmath.cos(psi), -1 / mpmath.sqrt(1 + s * s), -2 * mpmath.asinh(s)
    val = (sign * 1j * a1 * mpmath.expj(-sign * theta * k) + a2 * mpmath.exp(b * k)) / (4 * nu ** 3)
    return -val if (threshold == 16 and k % 2) else val


def remainder_kernel(threshold: int, N: int, mu: float, sign, kmax: int) -> np.ndarray:
    """Remainder of the truncated expansion at distances k = 0..kmax."""
    sg = _sign(sign)
    lo = ORDERS[threshold][0]
    if N not in range(lo, ORDERS[threshold][-1] + 1):
        raise Unimplemented(f"truncation order {N} outside the closed-form set")
    dps = 30 + int(math.ceil((N + 8) * math.log10(max(2.0, 1.0 / mu)))) \
        + int(math.ceil(6 * math.log10(kmax + 2)))
    out = np.empty(kmax + 1, dtype=complex)
    with mpmath.workdps(dps):
        m = mpmath.mpf(mu)
        step = 1 if threshold == 0 else mpmath.mpf(1) / 2
        for k in range(kmax + 1):
            acc = _exact_mp(threshold, sg, m, k)
            for j in range(lo, N + 1):
                acc -= m ** (j * step) * _coefficient_mp(threshold, j, sg, k)
            out[k] = complex(acc)
    return out


def _check_weight(threshold, N, s):
    need = 0.5 + N + (4 if threshold == 0 else 2)
    if s <= need:
        raise WeightTooSmall(f"s={s} must exceed {need} for threshold {threshold}, N={N}")


def expansion_error(threshold: int, N: int, s: float, mu: float, sign,
                    half_width: int = 200) -> float:
    """B(s, -s) norm of the expansion remainder on a window of given half-width.

    The norm is the largest singular value of
    diag(<n>^{-s}) (exact - truncated) diag(<m>^{-s}).
    """
    if threshold not in ORDERS:
        raise Unimplemented(f"threshold must be 0 or 16, got {threshold}")
    _check_weight(threshold, N, s)
    if not 0.0 < mu <= 0.2:
        raise OutOfRange(f"mu={mu} outside (0, 0.2]")
    n = np.arange(-half_width, half_width + 1)
    r = remainder_kernel(threshold, N, mu, sign, 2 * half_width)
    w = (1.0 + n.astype(float) ** 2) ** (-0.5 * s)
    A = w[:, None] * r[np.abs(n[:, None] - n[None, :])] * w[None, :]
    return float(np.linalg.norm(A, 2))


@dataclass
class ExpansionReport:
    threshold: int
    N: int
    s: float
    mu: list
    err: list
    fitted_order: float
    expected_order: float
    converged: bool = True
    doubling_change: float = 0.0
    sign: int = 1

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold, "N": self.N, "s": self.s,
            "mu": [float(x) for x in self.mu], "err": [float(x) for x in self.err],
            "fitted_order": self.fitted_order, "expected_order": self.expected_order,
            "window_converged": self.converged, "doubling_change": self.doubling_change,
            "sign": "+" if self.sign > 0 else "-",
        }


DEFAULT_MUS = (0.2, 0.1, 0.05, 0.025)


def default_weight(threshold: int, N: int) -> float:
    return N + (5.0 if threshold == 0 else 3.0)


def expansion_report(threshold: int, N: int, s: float | None = None,
                     mus=DEFAULT_MUS, sign=1, half_width: int = 200) -> ExpansionReport:
    """Errors at each mu, log-log order fit, and the window-doubling check."""
    s = default_weight(threshold, N) if s is None else float(s)
    mus = [float(x) for x in mus]
    errs = [expansion_error(threshold, N, s, mu, sign, half_width) for mu in mus]
    slope = float(np.polyfit(np.log(mus), np.log(errs), 1)[0])
    big = max(mus)
    e1 = errs[mus.index(big)]
    e2 = expansion_error(threshold, N, s, big, sign, 2 * half_width)
    change = abs(e2 - e1) / e2
    expected = N + 1.0 if threshold == 0 else 0.5 * (N + 1)
    return ExpansionReport(threshold, N, s, mus, errs, slope, expected,
                           bool(change < 0.01), float(change), _sign(sign))


# -- singularity of the Birman-Schwinger inverse ---------------------------------

@dataclass
class SingularityFit:
    threshold: int
    sign: int
    mu: list
    norms: list
    exponent: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "sign": "+" if self.sign > 0 else "-",
                "mu": list(map(float, self.mu)), "norms": list(map(float, self.norms)),
                "exponent": self.exponent}


def inverse_singularity_fit(V: CompactPotential, sign=1, threshold: int = 0,
                            mus=None, cond_cap: float = 1e14) -> SingularityFit:
    """Log-log slope of ||M^{+/-}(mu)^{-1}||_2 as mu -> 0 (or 2 - mu -> 2 for 16).

    The inverse is formed in extended precision, so the condition number
    (which grows like mu^{-6} for a second-kind resonance at 0) never limits
    the result. ``cond_cap`` is checked against the working precision: it
    applies to the residual digits after the mu-dependent loss.
    """
    from ._extended import inverse_bs_norm
    V.require_support()
    mus = np.geomspace(1e-3, 1e-1, 13) if mus is None else np.asarray(mus, dtype=float)
    norms = []
    for mu in mus:
        c = spectral_coefficients(mu, sign) if threshold == 0 else coefficients_below_two(mu, sign)
        dps = extended_digits(min(mu, 2.0 - mu))
        inv, fwd = inverse_bs_norm(c, V, dps)
        if inv * fwd > cond_cap * 10.0 ** (dps - 16):
            raise NearSingular(f"condition {inv * fwd:.3e} at mu={mu} exceeds the "
                               f"precision-scaled cap", condition=inv * fwd)
        norms.append(inv)
    norms = np.array(norms)
    slope = float(np.polyfit(np.log(mus), np.log(norms), 1)[0])
    return SingularityFit(threshold, _sign(sign), mus.tolist(), norms.tolist(), slope)
