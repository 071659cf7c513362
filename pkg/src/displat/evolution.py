"""Perturbed evolution: eigendecomposition oracle, Stone-formula quadrature,
beam propagators and perturbed decay fits.

The oracle diagonalizes the truncation of H = Delta^2 + V to a window and
applies functions of H on its continuum part. The Stone route integrates

    (2 / pi i) int_0^2 g(mu^4) mu^3 [R_V^+ - R_V^-](mu^4) dmu

in the angle psi with mu = 2 sin(psi). The jump then carries the factor
dmu/dpsi = 2 cos(psi), which cancels the 1/cos(psi) blow-up of the free
kernel at mu = 2; at V = 0 the integrand is simply i cos(2 psi k).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eig_banded

from ._parallel import pmap
from .errors import QuadratureNotConverged, WavefrontCollision, WindowTooSmall
from .free import BILAPLACIAN_SPEED, LAPLACIAN_SPEED, DecayFitReport, decay_fit, sinc
from .lattice import (MARGIN, CompactPotential, GridWindow, KernelMatrix,
                      hamiltonian_banded, hamiltonian_matrix)
from .resolvent import coefficients_from_angle, jump_integrand

KINDS = ("schrodinger", "halfwave", "cos", "sinc")
DELTA_EDGE = 1e-3 * 16.0
#: Cells next to supp V that count as "near" for the embedded-eigenvalue proxy.
NEAR_SUPPORT = 10
EMBEDDED_MASS = 0.99
WAVEFRONT_GAP = 50


# -- eigendecomposition oracle -----------------------------------------------------

@dataclass
class SpectralOracle:
    """Eigendecomposition of H truncated to ``window`` (zero boundary).

    ``ac_mask`` marks eigenvalues in (delta_edge, 16 - delta_edge), the
    finite stand-in for the absolutely continuous part; ``bound`` marks
    eigenvalues outside [0, 16]. Whatever is in neither is the edge band.
    """
    window: GridWindow
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    ac_mask: np.ndarray
    bound_mask: np.ndarray
    delta_edge: float
    warnings: list = field(default_factory=list)

    @property
    def bound_states(self) -> np.ndarray:
        return self.eigenvalues[self.bound_mask]

    @property
    def edge_mask(self) -> np.ndarray:
        return ~(self.ac_mask | self.bound_mask)

    def projector(self, mask) -> np.ndarray:
        Q = self.eigenvectors[:, mask]
        return Q @ Q.T

    def positions(self, sites) -> np.ndarray:
        sites = np.asarray(sites, dtype=int)
        if not self.window.contains(sites):
            raise WindowTooSmall("requested sites fall outside the oracle window")
        return self.window.position(sites)

    def max_residual(self, V: CompactPotential) -> float:
        """max_i ||H q_i - lambda_i q_i||_2."""
        H = hamiltonian_matrix(V, self.window)
        R = H @ self.eigenvectors - self.eigenvectors * self.eigenvalues[None, :]
        return float(np.linalg.norm(R, axis=0).max())

    def orthonormality_error(self) -> float:
        Q = self.eigenvectors
        return float(np.abs(Q.T @ Q - np.eye(Q.shape[1])).max())


def spectral_oracle(V: CompactPotential, window: GridWindow,
                    delta_edge: float = DELTA_EDGE) -> SpectralOracle:
    """Dense symmetric eigendecomposition of the truncated H.

    Raises WindowTooSmall unless supp V sits at least two cells inside.
    Warns (and records) eigenvalues in the continuum band whose eigenvector
    keeps more than 99% of its mass within ten cells of supp V.
    """
    if V.support.size and not window.contains(V.support, margin=MARGIN):
        raise WindowTooSmall("supp V must lie at least two cells inside the window")
    w, Q = eig_banded(hamiltonian_banded(V, window), lower=True)
    ac = (w > delta_edge) & (w < 16.0 - delta_edge)
    bound = (w < 0.0) | (w > 16.0)
    notes = []
    if V.support.size:
        n = window.indices
        near = (n >= V.support.min() - NEAR_SUPPORT) & (n <= V.support.max() + NEAR_SUPPORT)
        mass = (Q[near, :] ** 2).sum(axis=0)
        for i in np.nonzero(ac & (mass > EMBEDDED_MASS))[0]:
            msg = (f"eigenvalue {w[i]:.6g} inside the continuum is localized at supp V "
                   f"(mass {mass[i]:.4f}); possible embedded eigenvalue")
            warnings.warn(msg)
            notes.append(msg)
    return SpectralOracle(window, w, Q, ac, bound, float(delta_edge), notes)


def spectral_function(kind: str, t: float, lam) -> np.ndarray:
    """g(lambda) for the named propagator at time t (lambda > 0 for the beam kinds)."""
    lam = np.asarray(lam, dtype=float)
    if kind == "schrodinger":
        return np.exp(-1j * t * lam)
    root = np.sqrt(np.clip(lam, 0.0, None))
    if kind == "halfwave":
        return np.exp(-1j * t * root)
    if kind == "cos":
        return np.cos(t * root).astype(complex)
    if kind == "sinc":
        return sinc(t * root).astype(complex)
    raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")


def oracle_propagator(oracle: SpectralOracle, t: float, kind: str,
                      rows=None, cols=None) -> KernelMatrix:
    """sum over the ac mask of g(lambda_i) q_i q_i^T on rows x cols.

    ``rows`` and ``cols`` are lattice sites (default: the whole window).
    Only the requested columns are formed, so a narrow column block costs
    O(size^2) per time.
    """
    win = oracle.window
    rows = win.indices if rows is None else np.asarray(rows, dtype=int)
    cols = win.indices if cols is None else np.asarray(cols, dtype=int)
    Q = oracle.eigenvectors[:, oracle.ac_mask]
    g = spectral_function(kind, t, oracle.eigenvalues[oracle.ac_mask])
    Qr, Qc = Q[oracle.positions(rows)], Q[oracle.positions(cols)]
    B = Qc.T
    ent = Qr @ (g.real[:, None] * B) + 1j * (Qr @ (g.imag[:, None] * B))
    return KernelMatrix(rows, cols, ent)


def _column_sup(oracle: SpectralOracle, kind: str, times, cols) -> np.ndarray:
    """max over all rows and the given columns of |kernel|, for each time."""
    Q = oracle.eigenvectors[:, oracle.ac_mask]
    lam = oracle.eigenvalues[oracle.ac_mask]
    B = Q[oracle.positions(cols)].T

    def one(t):
        g = spectral_function(kind, t, lam)
        re, im = Q @ (g.real[:, None] * B), Q @ (g.imag[:, None] * B)
        return float(np.sqrt(re * re + im * im).max())
    return np.array(pmap(one, times))


# -- Stone quadrature ------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule on psi in (0, pi/2).

    ``panels`` uniform panels; the first and last are split geometrically
    (ratio ``ratio``, ``depth`` levels) toward mu = 0 and mu = 2. Each
    panel gets at least ``order`` nodes and at least ``budget`` nodes per
    oscillation of the phase. ``tol`` bounds the change under panel doubling.
    """
    panels: int = 64
    depth: int = 12
    ratio: float = 0.5
    budget: float = 8.0
    order: int = 16
    tol: float = 1e-8

    def __post_init__(self):
        if self.panels < 64:
            raise ValueError("panel count must be at least 64")
        if self.budget < 8:
            raise ValueError("budget must be at least 8 nodes per oscillation")
        if not 0.0 < self.ratio < 1.0 or self.depth < 0 or self.order < 2:
            raise ValueError("invalid refinement settings")

    def doubled(self) -> "QuadratureSpec":
        return QuadratureSpec(2 * self.panels, self.depth, self.ratio, self.budget,
                              self.order, self.tol)

    def to_dict(self) -> dict:
        return {"panels": self.panels, "depth": self.depth, "ratio": self.ratio,
                "budget": self.budget, "order": self.order, "tol": self.tol}


_MU_POWER = {"schrodinger": 4, "halfwave": 2}


def _panel_edges(quad: QuadratureSpec) -> np.ndarray:
    h = 0.5 * math.pi / quad.panels
    inner = np.linspace(h, 0.5 * math.pi - h, quad.panels - 1)
    geo = h * quad.ratio ** np.arange(quad.depth, 0, -1)
    return np.concatenate([[0.0], geo, inner, 0.5 * math.pi - geo[::-1], [0.5 * math.pi]])


def quadrature_nodes(quad: QuadratureSpec, t_max: float, power: int, k_max: int):
    """Nodes and weights in psi for phases up to t_max mu^power and kernels cos(2 psi k_max).

    The geometric endpoint panels are short and the integrand is smooth on
    each of them, so they start from half the uniform-panel order.
    """
    edges = _panel_edges(quad)
    h = 0.5 * math.pi / quad.panels
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        phase = t_max * abs((2 * math.sin(b)) ** power - (2 * math.sin(a)) ** power)
        osc = (phase + 2.0 * k_max * (b - a)) / (2.0 * math.pi)
        base = quad.order if b - a > 0.75 * h else max(8, quad.order // 2)
        m = max(base, int(math.ceil(quad.budget * osc)))
        x, w = np.polynomial.legendre.leggauss(m)
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def stone_integrand(psi: float, V: CompactPotential, rows, cols) -> np.ndarray:
    """2 cos(psi) mu^3 [R_V^+ - R_V^-](mu^4) on rows x cols, mu = 2 sin(psi)."""
    c = coefficients_from_angle(psi, 1)
    return 2.0 * math.cos(psi) * jump_integrand(c, V, rows, cols)


def _stone_sum(V, rows, cols, quad, t_max, power, weights_fn):
    """Sum of weights_fn(mu) * integrand over the rule (one integrand pass)."""
    k_max = int(np.abs(np.subtract.outer(np.append(rows, V.support),
                                         np.append(cols, V.support))).max())
    psi, w = quadrature_nodes(quad, t_max, power, k_max)
    mats = pmap(lambda p: stone_integrand(p, V, rows, cols), psi)
    mu = 2.0 * np.sin(psi)
    coef = weights_fn(mu) * w[None, :]
    out = np.tensordot(coef, np.array(mats), axes=(1, 0))
    return (2.0 / (math.pi * 1j)) * out, psi.size


def _sites(x):
    return x.indices if hasattr(x, "indices") else np.asarray(x, dtype=int)


def stone_kernels(times, V: CompactPotential, kind: str, rows, cols,
                  quad: QuadratureSpec = QuadratureSpec(), check: bool = True,
                  g=None) -> list:
    """Stone-formula kernels of e^{-itH} P_ac or e^{-it sqrt H} P_ac at several t.

    The integrand does not depend on t, so one pass over the nodes serves
    every time. With ``check`` the rule is rerun with doubled panels; the
    doubled result is returned and QuadratureNotConverged is raised when the
    two differ by more than ``quad.tol``. ``g`` overrides the spectral
    function: it maps (t, mu) to the weight of the node.
    """
    if kind not in _MU_POWER:
        raise ValueError("stone kernels support kind 'schrodinger' or 'halfwave'")
    rows, cols = _sites(rows), _sites(cols)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    p = _MU_POWER[kind]
    g = g or (lambda t, mu: np.exp(-1j * t * mu ** p))
    fn = lambda mu: np.array([g(t, mu) for t in times])
    t_max = float(np.abs(times).max())
    ent, _ = _stone_sum(V, rows, cols, quad, t_max, p, fn)
    if check:
        fine, _ = _stone_sum(V, rows, cols, quad.doubled(), t_max, p, fn)
        change = float(np.abs(fine - ent).max())
        if change > quad.tol:
            raise QuadratureNotConverged(
                f"panel doubling changed the kernel by {change:.3e} > {quad.tol:.1e}")
        ent = fine
    return [KernelMatrix(rows, cols, e) for e in ent]


def stone_kernel(t: float, V: CompactPotential, kind: str, rows, cols,
                 quad: QuadratureSpec = QuadratureSpec(), check: bool = True) -> KernelMatrix:
    """Single-time version of :func:`stone_kernels`."""
    return stone_kernels([t], V, kind, rows, cols, quad, check)[0]


# -- beam propagators --------------------------------------------------------------

def _time_average_weights(t: float, points: int = 64):
    """Gauss-Legendre rule for (1/t) int_0^t f(s) ds."""
    x, w = np.polynomial.legendre.leggauss(points)
    return 0.5 * t * (x + 1.0), 0.5 * w


def beam_propagators(t: float, V: CompactPotential, rows, cols, source: str = "oracle",
                     oracle: SpectralOracle | None = None, window: GridWindow | None = None,
                     quad: QuadratureSpec = QuadratureSpec(), delta_edge: float = 0.0,
                     average_points: int | None = None):
    """cos(t sqrt H) P_ac and sin(t sqrt H)/(t sqrt H) P_ac kernels.

    The cosine is always the half-sum of the halfwave kernels at +t and -t.
    For ``source="oracle"`` the sinc comes from the functional calculus; for
    ``source="stone"`` it is the time average (1/2t) int_{-t}^{t} cos(s sqrt H) ds
    evaluated with a Gauss-Legendre rule in s.
    """
    rows, cols = _sites(rows), _sites(cols)
    if source == "oracle":
        if oracle is None:
            if window is None:
                raise ValueError("oracle source needs an oracle or a window")
            oracle = spectral_oracle(V, window, delta_edge)
        plus = oracle_propagator(oracle, t, "halfwave", rows, cols).entries
        minus = oracle_propagator(oracle, -t, "halfwave", rows, cols).entries
        cos = 0.5 * (plus + minus)
        sin_c = oracle_propagator(oracle, t, "sinc", rows, cols).entries
        return KernelMatrix(rows, cols, cos), KernelMatrix(rows, cols, sin_c)
    if source != "stone":
        raise ValueError("source must be 'oracle' or 'stone'")
    plus, minus = stone_kernels([t, -t], V, "halfwave", rows, cols, quad)
    cos = 0.5 * (plus.entries + minus.entries)
    if t == 0:
        return KernelMatrix(rows, cols, cos), KernelMatrix(rows, cols, cos)
    # Enough s-nodes to resolve cos(s mu^2) for mu^2 <= 4 over [0, t].
    pts = average_points or max(32, int(math.ceil(8.0 * 4.0 * abs(t) / (2.0 * math.pi))) + 16)
    s, w = _time_average_weights(abs(t), pts)
    g = lambda _t, mu: np.cos(np.multiply.outer(mu ** 2, s)) @ w
    sin_c = stone_kernels([abs(t)], V, "halfwave", rows, cols, quad, g=g)[0].entries
    return KernelMatrix(rows, cols, cos), KernelMatrix(rows, cols, sin_c)


# -- perturbed decay ---------------------------------------------------------------

def front_speed(kind: str) -> float:
    """Largest group velocity of the flow: the bi-Laplacian symbol or, for sqrt H, M_1."""
    return BILAPLACIAN_SPEED if kind == "schrodinger" else LAPLACIAN_SPEED


def wavefront_clearance(kind: str, window: GridWindow, cols, t_max: float) -> float:
    """Cells between the front launched from ``cols`` at t_max and the window edge."""
    cols = np.asarray(cols)
    room = min(cols.min() - window.n_min, window.n_max - cols.max())
    return float(room - front_speed(kind) * t_max)


def observation_block(V: CompactPotential, window: GridWindow, margin: int = 32) -> np.ndarray:
    """Columns within ``margin`` cells of supp V (of the origin when V = 0)."""
    lo, hi = (int(V.support.min()), int(V.support.max())) if V.support.size else (0, 0)
    return np.arange(max(lo - margin, window.n_min), min(hi + margin, window.n_max) + 1)


def perturbed_decay_fit(V: CompactPotential, kind: str, fit_window=(50.0, 2000.0),
                        window: int | GridWindow = 4096, samples: int = 25,
                        delta_edge: float = 0.0, wavefront: str = "raise",
                        block_margin: int = 32,
                        oracle: SpectralOracle | None = None) -> DecayFitReport:
    """Fit the decay exponent of the sup of the oracle kernel over log-spaced t.

    The sup runs over every row of the window and the columns within
    ``block_margin`` of supp V. ``wavefront="raise"`` raises
    WavefrontCollision when the front comes within 50 cells of the window
    edge inside the fit window; ``"report"`` records the clearance and fits
    anyway.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if isinstance(window, int):
        window = GridWindow(-(window // 2), window - window // 2 - 1)
    cols = observation_block(V, window, block_margin)
    clearance = wavefront_clearance(kind, window, cols, fit_window[1])
    if clearance < WAVEFRONT_GAP and wavefront == "raise":
        raise WavefrontCollision(
            f"{kind} front comes within {clearance:.0f} cells of the window edge "
            f"(need {WAVEFRONT_GAP}) at t={fit_window[1]}")
    oracle = oracle or spectral_oracle(V, window, delta_edge)
    times = np.geomspace(fit_window[0], fit_window[1], samples)
    sups = _column_sup(oracle, kind, times, cols)
    rep = decay_fit(times, sups, fit_window)
    rep.extra.update({
        "kind": kind, "window": [window.n_min, window.n_max], "delta_edge": delta_edge,
        "observation_columns": [int(cols[0]), int(cols[-1])],
        "wavefront_clearance": clearance,
        "wavefront_collision": bool(clearance < WAVEFRONT_GAP),
        "bound_states": [float(x) for x in oracle.bound_states],
        "warnings": list(oracle.warnings),
    })
    return rep


__all__ = ["SpectralOracle", "spectral_oracle", "spectral_function", "oracle_propagator",
           "QuadratureSpec", "quadrature_nodes", "stone_integrand", "stone_kernel",
           "stone_kernels", "beam_propagators", "perturbed_decay_fit", "front_speed",
           "wavefront_clearance", "observation_block", "KINDS", "DELTA_EDGE"]
