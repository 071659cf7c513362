"""Free evolution kernels on Z, decay fits and stationary-phase diagnostics.

A translation-invariant flow with Fourier multiplier g(x) has kernel

    K(t, k) = (1/2pi) int_{-pi}^{pi} g(x) e^{ikx} dx,

evaluated with the periodic trapezoid rule. With nodes x_j = -pi + 2 pi j / N
the rule is ``(-1)^k * ifft(g)[k mod N]``, so one FFT yields every offset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._parallel import pmap
from .errors import InsufficientSamples, ResolutionTooLow
from .lattice import KernelMatrix

#: max |d/dx (2 - 2cos x)^2| = max |8 (1 - cos x) sin x|
BILAPLACIAN_SPEED = 6.0 * math.sqrt(3.0)
#: max |d/dx (2 - 2cos x)|
LAPLACIAN_SPEED = 2.0

FLOWS = ("bilaplacian", "laplacian", "cos", "sinc")
SINC_SERIES_CUTOFF = 1e-8


def bilaplacian_symbol(x):
    return (2.0 - 2.0 * np.cos(x)) ** 2


def laplacian_symbol(x):
    """Symbol of -Delta, i.e. M_1(x) = 2 - 2cos x."""
    return 2.0 - 2.0 * np.cos(x)


def sinc(z):
    """sin(z)/z, with the two-term series where |z| < 1e-8."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < SINC_SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 - z * z / 6.0, np.sin(safe) / safe)


def multiplier(flow: str, t: float, x):
    """Fourier multiplier of the named flow at time ``t``."""
    if flow == "bilaplacian":
        return np.exp(-1j * t * bilaplacian_symbol(x))
    m1 = laplacian_symbol(x)
    if flow == "laplacian":
        # Delta has symbol -M_1, so e^{it Delta} has multiplier e^{-it M_1}.
        return np.exp(-1j * t * m1)
    if flow == "cos":
        return np.cos(t * m1).astype(complex)
    if flow == "sinc":
        return sinc(t * m1).astype(complex)
    raise ValueError(f"unknown flow {flow!r}; expected one of {FLOWS}")


def symbol_speed(flow: str) -> float:
    return BILAPLACIAN_SPEED if flow == "bilaplacian" else LAPLACIAN_SPEED


def required_resolution(t: float, speed: float) -> int:
    """Minimum trapezoid size, 64 + 16 max(1, |t| speed)."""
    return int(math.ceil(64 + 16 * max(1.0, abs(t) * speed)))


def _grid_size(t, speed, max_offset, resolution):
    need = max(required_resolution(t, speed), 2 * max_offset + 2)
    if resolution is None:
        return 1 << int(math.ceil(math.log2(need)))
    if resolution < need:
        raise ResolutionTooLow(
            f"resolution {resolution} below required {need} at t={t}")
    return int(resolution)


def kernel_row(flow: str, t: float, offsets=None, resolution=None):
    """K(t, k) for the named flow.

    Parameters
    ----------
    flow : {"bilaplacian", "laplacian", "cos", "sinc"}
    t : float
    offsets : array of int, optional
        Offsets k to return. ``None`` returns every offset the grid resolves,
        ``-N/2 .. N/2 - 1``.
    resolution : int, optional
        Trapezoid size. Must meet the oscillation budget; defaults to the
        next power of two above it.

    Returns
    -------
    offsets, values : ndarray, ndarray
    """
    if offsets is not None:
        offsets = np.asarray(offsets, dtype=int)
        max_off = int(np.abs(offsets).max()) if offsets.size else 0
    else:
        max_off = 0
    N = _grid_size(t, symbol_speed(flow), max_off, resolution)
    x = -np.pi + 2.0 * np.pi * np.arange(N) / N
    row = np.fft.ifft(multiplier(flow, t, x))
    if offsets is None:
        offsets = np.arange(-(N // 2), N // 2)
    sign = 1.0 - 2.0 * (offsets % 2)
    return offsets, sign * row[offsets % N]


def _as_row(offsets, values) -> KernelMatrix:
    # Row 0 of the translation-invariant kernel: entry (0, k) = K(t, -k) = K(t, k).
    return KernelMatrix(np.array([0]), offsets, values[None, :])


def free_kernel_bilaplacian(t: float, offsets, resolution=None) -> KernelMatrix:
    """Kernel row of e^{-it Delta^2}; entry (0, k) holds K(t, k)."""
    return _as_row(*kernel_row("bilaplacian", t, offsets, resolution))


def free_kernel_laplacian(t: float, offsets, resolution=None) -> KernelMatrix:
    """Kernel row of e^{it Delta}; entry (0, k) holds K(t, k)."""
    return _as_row(*kernel_row("laplacian", t, offsets, resolution))


def free_beam_kernels(t: float, offsets, resolution=None):
    """Kernel rows of cos(t Delta) and sin(t Delta)/(t Delta)."""
    return (_as_row(*kernel_row("cos", t, offsets, resolution)),
            _as_row(*kernel_row("sinc", t, offsets, resolution)))


def free_sup_norm(flow: str, t: float) -> float:
    """sup_k |K(t, k)| over every offset the grid resolves."""
    _, vals = kernel_row(flow, t)
    return float(np.abs(vals).max())


# -- decay fits -----------------------------------------------------------------

@dataclass
class DecayFitReport:
    times: np.ndarray
    sup_norms: np.ndarray
    fitted_exponent: float
    fit_residual: float
    fit_window: tuple
    intercept: float = 0.0
    extra: dict = field(default_factory=dict)

    def band_ratio(self, power: float) -> float:
        """max/min of t^power * sup_norm over the fit window."""
        lo, hi = self.fit_window
        sel = (self.times >= lo) & (self.times <= hi)
        scaled = self.times[sel] ** power * self.sup_norms[sel]
        return float(scaled.max() / scaled.min())

    def to_dict(self) -> dict:
        return {
            "fit_window": [float(self.fit_window[0]), float(self.fit_window[1])],
            "fitted_exponent": float(self.fitted_exponent),
            "fit_residual": float(self.fit_residual),
            "intercept": float(self.intercept),
            "times": [float(x) for x in self.times],
            "sup_norms": [float(x) for x in self.sup_norms],
            **self.extra,
        }


def decay_fit(times, sup_norms, window=(1e2, 1e4), min_samples: int = 8) -> DecayFitReport:
    """Least-squares slope of log sup_norm against log t inside ``window``.

    The residual is the root-mean-square misfit in log coordinates.
    """
    times = np.asarray(times, dtype=float)
    sups = np.asarray(sup_norms, dtype=float)
    if times.shape != sups.shape:
        raise ValueError("times and sup_norms differ in length")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if np.any(sups <= 0):
        raise ValueError("sup norms must be positive")
    lo, hi = window
    sel = (times >= lo * (1 - 1e-12)) & (times <= hi * (1 + 1e-12))
    if sel.sum() < min_samples:
        raise InsufficientSamples(
            f"{sel.sum()} samples in [{lo}, {hi}], need {min_samples}")
    x, y = np.log(times[sel]), np.log(sups[sel])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return DecayFitReport(times, sups, float(coef[0]),
                          float(np.sqrt(np.mean(resid ** 2))), (lo, hi), float(coef[1]))


def sample_times(window=(1e2, 1e4), samples: int = 25) -> np.ndarray:
    return np.geomspace(window[0], window[1], samples)


def free_decay(flow: str, window=(1e2, 1e4), samples: int = 25) -> DecayFitReport:
    """Sample sup_k |K(t, k)| on log-spaced t and fit the decay exponent."""
    times = sample_times(window, samples)
    sups = np.array(pmap(lambda t: free_sup_norm(flow, t), times))
    rep = decay_fit(times, sups, window)
    rep.extra["flow"] = flow
    return rep


def write_decay_csv(path, times, sup_norms) -> None:
    with open(path, "w") as fh:
        fh.write("t,supnorm\n")
        for t, s in zip(times, sup_norms):
            fh.write(f"{t:.17g},{s:.17g}\n")


# -- stationary phase -------------------------------------------------------------

GRID_POINTS = 2048
ROOT_TOL = 1e-12
CRITICAL_TOL = 1e-10
TIE_TOL = 1e-8


def phase(s, x):
    """Phi_s(x) = (2 - 2cos x)^2 - s x."""
    return bilaplacian_symbol(x) - s * x


def phase_derivative(s, x, order: int):
    """Derivative of Phi_s of the given order (1..4)."""
    c = np.cos(x)
    if order == 1:
        return 8.0 * (1.0 - c) * np.sin(x) - s
    if order == 2:
        return 8.0 * (1.0 - c) * (2.0 * c + 1.0)
    if order == 3:
        return 8.0 * np.sin(x) * (4.0 * c - 1.0)
    if order == 4:
        return 8.0 * (8.0 * c * c - c - 4.0)
    raise ValueError("order must be 1..4")


@dataclass
class PhaseDiagnostics:
    s: float
    critical_points: list
    derivative_table: list
    ties: list
    predicted_decay_exponent: Fraction

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "critical_points": self.critical_points,
            "derivative_table": self.derivative_table,
            "ties": self.ties,
            "predicted_decay_exponent": str(self.predicted_decay_exponent),
        }


def _bisect(f, a, b, fa):
    while b - a > ROOT_TOL:
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def _roots(f, grid):
    """Sign-change roots of ``f`` on ``grid`` plus exact grid zeros."""
    vals = f(grid)
    roots = list(grid[vals == 0.0])
    for i in np.nonzero(vals[:-1] * vals[1:] < 0)[0]:
        roots.append(_bisect(f, grid[i], grid[i + 1], vals[i]))
    return roots


def phase_diagnostics(s: float) -> PhaseDiagnostics:
    """Critical points of Phi_s on [-pi, 0] and the Van der Corput exponent.

    Simple roots of Phi_s' are bracketed on a 2048-point grid and bisected.
    Tangent roots (no sign change) sit at zeros of Phi_s''; those and the two
    endpoints are accepted when |Phi_s'| <= 1e-10.
    """
    s = float(s)
    grid = np.linspace(-np.pi, 0.0, GRID_POINTS)
    d1 = lambda x: phase_derivative(s, x, 1)
    d2 = lambda x: phase_derivative(0.0, x, 2)
    cands = _roots(d1, grid)
    cands += [x for x in _roots(d2, grid) + [grid[0], grid[-1]]
              if abs(d1(x)) <= CRITICAL_TOL]
    points = []
    for x in sorted(cands):
        if abs(d1(x)) > CRITICAL_TOL:
            continue
        if not points or abs(x - points[-1]) > 1e-8:
            points.append(float(x))
    table, ties, exponent = [], [], None
    for x in points:
        ders = [float(phase_derivative(s, x, q)) for q in range(1, 5)]
        table.append({"x": x, "d1": ders[0], "d2": ders[1], "d3": ders[2], "d4": ders[3]})
        ties.append(abs(ders[1]) < TIE_TOL)
        q = next((q for q in (2, 3, 4) if abs(ders[q - 1]) > TIE_TOL), 4)
        e = Fraction(1, q)
        exponent = e if exponent is None else min(exponent, e)
    return PhaseDiagnostics(s, points, table, ties,
                            exponent if exponent is not None else Fraction(1))
