"""Closed-form free resolvent kernels, the Birman-Schwinger matrix and the
perturbed resolvent on the spectrum (0, 16).

Notation: for mu in (0, 2) the boundary values R_0^{+/-}(mu^4) of
(Delta^2 - z)^{-1} have the kernel

    (1 / 4 mu^3) (+/- i a1 e^{-/+ i theta |n-m|} + a2 e^{b |n-m|})

with cos theta = 1 - mu^2/2, theta in (-pi, 0). Writing mu = 2 sin(psi),
psi in (0, pi/2), gives theta = -2 psi, a1 = 1/cos(psi) and
b = -2 asinh(sin psi); these forms stay accurate near both ends of the
spectrum, so they are what the code evaluates.

Near mu = 0 the Birman-Schwinger matrix M = U + v R_0 v is dominated by a
rank-one mu^{-3} block and the perturbed resolvent suffers cancellation of
roughly 12 log10(1/mu) digits. :func:`perturbed_resolvent_boundary` therefore
switches to mpmath for small mu (``precision="auto"``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import BranchError, NearSingular, OutOfRange, WindowTooSmall
from .lattice import (MARGIN, CompactPotential, GridFunction, GridWindow, KernelMatrix,
                      apply_bilaplacian, apply_hamiltonian, hamiltonian_matrix, parity)

CONDITION_CAP = 1e12
#: Below this mu, ``precision="auto"`` evaluates the perturbed resolvent in mpmath.
EXTENDED_BELOW = 0.5
#: The jump mu^3 [R_V^+ - R_V^-] loses fewer digits (its leading terms cancel
#: between the two signs); double is used down to this mu.
JUMP_EXTENDED_BELOW = 0.1


def _sign(sign) -> int:
    if sign in (1, "+", "plus"):
        return 1
    if sign in (-1, "-", "minus"):
        return -1
    raise ValueError(f"sign must be + or -, got {sign!r}")


@dataclass(frozen=True)
class SpectralCoefficients:
    mu: float
    sign: int
    theta_plus: float
    b: float
    a1: float
    a2: float


def coefficients_from_angle(psi: float, sign) -> SpectralCoefficients:
    """Branch data for mu = 2 sin(psi), psi in (0, pi/2)."""
    if not 0.0 < psi < 0.5 * math.pi:
        raise OutOfRange(f"psi={psi} outside (0, pi/2)")
    s = math.sin(psi)
    return SpectralCoefficients(
        mu=2.0 * s, sign=_sign(sign), theta_plus=-2.0 * psi,
        b=-2.0 * math.asinh(s), a1=1.0 / math.cos(psi),
        a2=-1.0 / math.sqrt(1.0 + s * s))


def spectral_coefficients(mu: float, sign) -> SpectralCoefficients:
    """Branch data theta_+, b, a1, a2 at spectral parameter mu in (0, 2)."""
    if not 0.0 < mu < 2.0:
        raise OutOfRange(f"mu={mu} outside (0, 2)")
    return coefficients_from_angle(math.asin(0.5 * mu), sign)


def coefficients_below_two(eps: float, sign) -> SpectralCoefficients:
    """Branch data at mu = 2 - eps, accurate for small eps."""
    if not 0.0 < eps < 2.0:
        raise OutOfRange(f"eps={eps} outside (0, 2)")
    return coefficients_from_angle(
        math.atan2(1.0 - 0.5 * eps, math.sqrt(eps * (1.0 - 0.25 * eps))), sign)


def free_kernel_values(coeffs: SpectralCoefficients, k) -> np.ndarray:
    """R_0^{+/-}(mu^4) as a function of k = |n - m| (vectorized)."""
    k = np.abs(np.asarray(k, dtype=float))
    c = coeffs
    osc = c.sign * 1j * c.a1 * np.exp(-c.sign * 1j * c.theta_plus * k)
    return (osc + c.a2 * np.exp(c.b * k)) / (4.0 * c.mu ** 3)


def free_resolvent_boundary(coeffs: SpectralCoefficients, n, m):
    """Kernel R_0^{+/-}(mu^4, n, m); broadcasts over ``n`` and ``m``."""
    return free_kernel_values(coeffs, np.subtract(n, m))


def free_resolvent_matrix(coeffs: SpectralCoefficients, rows, cols) -> np.ndarray:
    rows, cols = np.asarray(rows), np.asarray(cols)
    return free_kernel_values(coeffs, rows[:, None] - cols[None, :])


# -- resolvent of -Delta ----------------------------------------------------------

def _theta_root(omega: complex) -> complex:
    """e^{i theta} for 2 - 2cos(theta) = omega, Im theta < 0 (so |e^{i theta}| > 1)."""
    w = 2.0 - complex(omega)
    disc = np.sqrt(w * w - 4.0 + 0j)
    z1, z2 = 0.5 * (w + disc), 0.5 * (w - disc)
    z = z1 if abs(z1) >= abs(z2) else z2
    if abs(z) <= 1.0 + 1e-14:
        raise BranchError(f"omega={omega} lies on the spectrum [0, 4]")
    return z


def resolvent_minus_laplacian(omega: complex, n, m):
    """Kernel of (-Delta - omega)^{-1} for omega off [0, 4].

    Equals -i e^{-i theta |n-m|} / (2 sin theta) with theta in the lower
    half strip; with z = e^{i theta} this is z^{-|n-m|} / (z - 1/z).
    """
    z = _theta_root(omega)
    theta = -1j * np.log(z)
    if not (-math.pi - 1e-15 <= theta.real <= math.pi + 1e-15 and theta.imag < 0):
        raise BranchError(f"theta={theta} outside the lower half strip")
    k = np.abs(np.subtract(n, m))
    return np.exp(-k * np.log(z)) / (z - 1.0 / z)


def resolvent_minus_laplacian_boundary(lam: float, sign, n, m):
    """Boundary value (-Delta - (lam +/- i0))^{-1} for lam in (0, 4)."""
    if not 0.0 < lam < 4.0:
        raise OutOfRange(f"lambda={lam} outside (0, 4)")
    sg = _sign(sign)
    # theta/2 = asin(sqrt(lam)/2), written with atan2 so that lam near 4
    # keeps full accuracy (4 - lam is exact there).
    root, co = math.sqrt(lam), math.sqrt(4.0 - lam)
    theta = -2.0 * math.atan2(root, co) * sg
    sin_theta = -0.5 * sg * root * co
    k = np.abs(np.subtract(n, m))
    return -1j * np.exp(-1j * theta * k) / (2.0 * sin_theta)


def free_resolvent_offaxis(z: complex, n, m):
    """Kernel of (Delta^2 - z)^{-1} for z off [0, 16].

    Uses (1/(2 sqrt z)) (R_{-Delta}(sqrt z) - R_{-Delta}(-sqrt z)) with the
    square root taken on the branch 0 < arg z < 2 pi.
    """
    z = complex(z)
    if z.imag == 0.0 and 0.0 <= z.real <= 16.0:
        raise BranchError(f"z={z} lies on the spectrum [0, 16]")
    arg = math.atan2(z.imag, z.real) % (2.0 * math.pi)
    root = math.sqrt(abs(z)) * complex(math.cos(0.5 * arg), math.sin(0.5 * arg))
    return (resolvent_minus_laplacian(root, n, m)
            - resolvent_minus_laplacian(-root, n, m)) / (2.0 * root)


# -- Birman-Schwinger -------------------------------------------------------------

@dataclass(frozen=True)
class BirmanSchwingerSystem:
    support: np.ndarray
    U_diag: np.ndarray
    v_diag: np.ndarray
    M: np.ndarray
    mu: float
    sign: int

    def condition(self) -> float:
        s = np.linalg.svd(self.M, compute_uv=False)
        return float(s[0] / s[-1]) if s[-1] > 0 else math.inf


def birman_schwinger(mu: float, sign, V: CompactPotential,
                     coeffs: SpectralCoefficients | None = None) -> BirmanSchwingerSystem:
    """M^{+/-}(mu) = U + v R_0^{+/-}(mu^4) v on supp V."""
    V.require_support()
    c = coeffs if coeffs is not None else spectral_coefficients(mu, sign)
    supp, v = V.support, V.v
    M = v[:, None] * free_resolvent_matrix(c, supp, supp) * v[None, :]
    M[np.diag_indices_from(M)] += V.U
    return BirmanSchwingerSystem(supp, V.U, v, M, c.mu, c.sign)


def _check_condition(M: np.ndarray, cap: float):
    s = np.linalg.svd(M, compute_uv=False)
    cond = s[0] / s[-1] if s[-1] > 0 else math.inf
    if cond > cap:
        raise NearSingular(
            f"Birman-Schwinger matrix condition {cond:.3e} exceeds cap {cap:.1e}",
            sigma_min=float(s[-1]), condition=float(cond))


def extended_digits(mu: float) -> int:
    """Working digits for the mpmath path at spectral parameter mu."""
    return 30 + int(math.ceil(12.0 * max(0.0, math.log10(2.0 / mu))))


def perturbed_resolvent_boundary(mu: float, sign, V: CompactPotential, rows, cols,
                                 precision: str = "auto",
                                 cond_cap: float = CONDITION_CAP,
                                 coeffs: SpectralCoefficients | None = None) -> KernelMatrix:
    """R_V^{+/-}(mu^4) = R_0 - R_0 v M^{-1} v R_0 on ``rows x cols``.

    Parameters
    ----------
    rows, cols : GridWindow or array of int
    precision : {"auto", "double", "extended"}
        ``auto`` uses mpmath below mu = 0.5.
    cond_cap : float
        Condition-number cap on M in double precision. In extended
        precision the cap is scaled by 10^(digits - 16).
    """
    rows = rows.indices if hasattr(rows, "indices") else np.asarray(rows, dtype=int)
    cols = cols.indices if hasattr(cols, "indices") else np.asarray(cols, dtype=int)
    c = coeffs if coeffs is not None else spectral_coefficients(mu, sign)
    if V.is_zero:
        return KernelMatrix(rows, cols, free_resolvent_matrix(c, rows, cols))
    use_mp = precision == "extended" or (precision == "auto" and c.mu < EXTENDED_BELOW)
    if use_mp:
        from ._extended import perturbed_resolvent_mp
        ent = perturbed_resolvent_mp(c, V, rows, cols, extended_digits(c.mu), cond_cap)
        return KernelMatrix(rows, cols, ent)
    bs = birman_schwinger(c.mu, c.sign, V, coeffs=c)
    _check_condition(bs.M, cond_cap)
    v = bs.v_diag
    left = free_resolvent_matrix(c, rows, bs.support) * v[None, :]
    right = v[:, None] * free_resolvent_matrix(c, bs.support, cols)
    corr = left @ np.linalg.solve(bs.M, right)
    return KernelMatrix(rows, cols, free_resolvent_matrix(c, rows, cols) - corr)


def perturbed_resolvent_second_identity(mu: float, sign, V: CompactPotential, rows, cols,
                                        precision: str = "auto") -> KernelMatrix:
    """R_0 - R_0 V R_0 + R_0 V R_V V R_0, an independent consistency route.

    R_V is only needed on supp V x supp V, where it comes from the symmetric
    identity.
    """
    rows = rows.indices if hasattr(rows, "indices") else np.asarray(rows, dtype=int)
    cols = cols.indices if hasattr(cols, "indices") else np.asarray(cols, dtype=int)
    c = spectral_coefficients(mu, sign)
    supp, Vs = V.support, V.V_support
    R0 = free_resolvent_matrix(c, rows, cols)
    left = free_resolvent_matrix(c, rows, supp) * Vs[None, :]
    right = Vs[:, None] * free_resolvent_matrix(c, supp, cols)
    RV = perturbed_resolvent_boundary(mu, sign, V, supp, supp, precision=precision).entries
    return KernelMatrix(rows, cols, R0 - left @ free_resolvent_matrix(c, supp, cols)
                        + left @ RV @ right)


def jump_integrand(coeffs_plus: SpectralCoefficients, V: CompactPotential, rows, cols,
                   precision: str = "auto") -> np.ndarray:
    """mu^3 [R_V^+ - R_V^-](mu^4) on ``rows x cols`` (the Stone integrand core)."""
    c = coeffs_plus
    if V.is_zero:
        # mu^3 (R0^+ - R0^-) = (i/2) a1 cos(theta k)
        k = np.abs(np.asarray(rows)[:, None] - np.asarray(cols)[None, :])
        return 0.5j * c.a1 * np.cos(c.theta_plus * k)
    use_mp = precision == "extended" or (precision == "auto" and c.mu < JUMP_EXTENDED_BELOW)
    if use_mp:
        from ._extended import jump_mp
        return jump_mp(c, V, rows, cols, extended_digits(c.mu))
    cm = SpectralCoefficients(c.mu, -1, c.theta_plus, c.b, c.a1, c.a2)
    cp = SpectralCoefficients(c.mu, 1, c.theta_plus, c.b, c.a1, c.a2)
    plus = perturbed_resolvent_boundary(c.mu, 1, V, rows, cols, "double", math.inf, cp)
    minus = perturbed_resolvent_boundary(c.mu, -1, V, rows, cols, "double", math.inf, cm)
    return c.mu ** 3 * (plus.entries - minus.entries)


def j_conjugate(K: KernelMatrix) -> KernelMatrix:
    """J K J for a kernel on arbitrary index sets."""
    return KernelMatrix(K.rows, K.cols,
                        parity(K.rows)[:, None] * K.entries * parity(K.cols)[None, :])


# -- truncated-window oracle with exact exterior -------------------------------------

#: Two-site cells of the pentadiagonal stencil, ordered away from the window.
_CELL = np.array([[6.0, -4.0], [-4.0, 6.0]])
_HOP = np.array([[1.0, 0.0], [-4.0, 1.0]])
DECIMATION_TOL = 1e-15


def lead_surface_block(z: complex, max_iter: int = 200) -> np.ndarray:
    """Surface 2x2 block of (Delta^2 - z)^{-1} on a half line, by decimation.

    The half line is cut into two-site cells; each sweep eliminates every
    other cell, doubling the reach of the effective coupling, until the
    coupling falls below DECIMATION_TOL relative to the cell block. For
    Im z = eps the sweeps needed grow like log2(1/eps).
    """
    z = complex(z)
    d = _CELL - z * np.eye(2)
    es, e, a, b = d.copy(), d.copy(), _HOP.astype(complex), _HOP.T.astype(complex)
    for _ in range(max_iter):
        gi = np.linalg.inv(e)
        agb, bga = a @ gi @ b, b @ gi @ a
        es = es - agb
        e = e - agb - bga
        a, b = -a @ gi @ a, -b @ gi @ b
        if max(np.abs(a).max(), np.abs(b).max()) < DECIMATION_TOL * np.abs(e).max():
            return np.linalg.inv(es)
    raise NearSingular(f"decimation did not converge at z={z}")


def window_resolvent(V: CompactPotential, window: GridWindow, z: complex) -> np.ndarray:
    """(Delta^2 + V - z)^{-1} on Z restricted to ``window``, as a dense matrix.

    The truncated matrix is corrected by the Schur complements of the two
    exterior half lines (surface blocks from :func:`lead_surface_block`), so
    no wall reflections enter. Needs supp V inside the window.
    """
    if V.support.size and not window.contains(V.support, margin=MARGIN):
        raise WindowTooSmall("supp V must lie inside the window")
    A = hamiltonian_matrix(V, window).astype(complex) - z * np.eye(window.size)
    gs = lead_surface_block(z)
    n = window.size
    # Window rows coupled to the exterior cell (first site out, second site out).
    right = np.zeros((n, 2))
    right[n - 2, 0], right[n - 1, 0], right[n - 1, 1] = 1.0, -4.0, 1.0
    left = np.zeros((n, 2))
    left[1, 0], left[0, 0], left[0, 1] = 1.0, -4.0, 1.0
    A -= right @ gs @ right.T + left @ gs @ left.T
    return np.linalg.inv(A)


# -- consistency checks ------------------------------------------------------------

def _column_window(half_width: int, m: int = 0) -> GridWindow:
    return GridWindow.centered(half_width, m)


def free_column_residual(mu: float, sign, m: int = 0, half_width: int = 30) -> float:
    """Interior sup of |(Delta^2 - mu^4) R_0^{+/-}(., m) - delta_m|."""
    win = _column_window(half_width, m)
    col = free_resolvent_boundary(spectral_coefficients(mu, sign), win.indices, m)
    phi = GridFunction(win, col)
    res = apply_bilaplacian(phi).values - mu ** 4 * phi.values
    res[m - win.n_min] -= 1.0
    return float(np.abs(res[win.interior_mask()]).max())


def perturbed_column_residual(mu: float, sign, V: CompactPotential, m: int = 0,
                              half_width: int = 30) -> float:
    """Interior sup of |(Delta^2 + V - mu^4) R_V^{+/-}(., m) - delta_m|."""
    win = _column_window(half_width, m)
    col = perturbed_resolvent_boundary(mu, sign, V, win, [m]).entries[:, 0]
    phi = GridFunction(win, col)
    res = apply_hamiltonian(phi, V).values - mu ** 4 * phi.values
    res[m - win.n_min] -= 1.0
    return float(np.abs(res[win.interior_mask()]).max())


def splitting_error(mu: float, sign, offsets) -> float:
    """max |R_0^{+/-}(mu^4) - (R_{-Delta}(mu^2 +/- i0) - R_{-Delta}(-mu^2)) / (2 mu^2)|.

    Relative to max |R_0^{+/-}(mu^4)|, which grows like mu^-3 near zero.
    """
    k = np.asarray(offsets)
    lhs = free_resolvent_boundary(spectral_coefficients(mu, sign), k, 0)
    rhs = (resolvent_minus_laplacian_boundary(mu * mu, sign, k, 0)
           - resolvent_minus_laplacian(-mu * mu, k, 0)) / (2.0 * mu * mu)
    return float(np.abs(lhs - rhs).max() / np.abs(lhs).max())


def offaxis_agreement(mu: float, sign, V: CompactPotential, eps: float = 1e-6,
                      window: GridWindow = GridWindow(-300, 299), block: int = 10) -> float:
    """max entrywise gap between R_V^{+/-}(mu^4) and the window oracle at mu^4 +/- i eps.

    Compared on the sites within ``block`` of the window centre.
    """
    sg = _sign(sign)
    R = window_resolvent(V, window, mu ** 4 + sg * 1j * eps)
    centre = (window.n_min + window.n_max) // 2
    sites = np.arange(centre - block, centre + block + 1)
    pos = window.position(sites)
    ref = perturbed_resolvent_boundary(mu, sg, V, sites, sites).entries
    return float(np.abs(R[np.ix_(pos, pos)] - ref).max())
