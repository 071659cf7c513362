"""Lattice windows, grid functions, potentials and difference operators on Z.

Everything here is an immutable value or a pure function. Sequences on Z are
represented on a finite window ``[n_min, n_max]`` and are taken to vanish
outside it (zero padding); consumers keep a margin between the data they care
about and the window edge.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptySupport, WindowTooSmall

#: Five-point stencil of the bi-Laplacian, offsets -2..2.
BILAPLACIAN_STENCIL = np.array([1.0, -4.0, 6.0, -4.0, 1.0])
#: Number of cells next to each window edge where the bi-Laplacian sees padding.
MARGIN = 2


@dataclass(frozen=True)
class GridWindow:
    """Inclusive integer range ``n_min..n_max`` with at least five sites."""

    n_min: int
    n_max: int

    def __post_init__(self):
        object.__setattr__(self, "n_min", int(self.n_min))
        object.__setattr__(self, "n_max", int(self.n_max))
        if self.n_max - self.n_min + 1 < 5:
            raise WindowTooSmall(
                f"window [{self.n_min}, {self.n_max}] has fewer than 5 sites")

    @classmethod
    def centered(cls, half_width: int, center: int = 0) -> "GridWindow":
        return cls(center - half_width, center + half_width)

    @property
    def size(self) -> int:
        return self.n_max - self.n_min + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1)

    def contains(self, n, margin: int = 0) -> bool:
        """True if every site in ``n`` lies at least ``margin`` cells inside."""
        n = np.atleast_1d(n)
        return bool(np.all(n >= self.n_min + margin) and np.all(n <= self.n_max - margin))

    def position(self, n) -> np.ndarray:
        """Array offsets of lattice sites ``n`` inside this window."""
        return np.asarray(n) - self.n_min

    def interior_mask(self, margin: int = MARGIN) -> np.ndarray:
        idx = self.indices
        return (idx >= self.n_min + margin) & (idx <= self.n_max - margin)


@dataclass(frozen=True)
class GridFunction:
    """Complex sequence on a window; entries outside the window are zero."""

    window: GridWindow
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.window.size,):
            raise ValueError(
                f"expected {self.window.size} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function has non-finite entries")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, window: GridWindow, fn) -> "GridFunction":
        return cls(window, fn(window.indices))

    @classmethod
    def delta(cls, window: GridWindow, site: int = 0) -> "GridFunction":
        vals = np.zeros(window.size, dtype=complex)
        vals[site - window.n_min] = 1.0
        return cls(window, vals)

    def at(self, n) -> np.ndarray:
        """Values at lattice sites ``n`` (zero outside the window)."""
        n = np.asarray(n)
        inside = (n >= self.window.n_min) & (n <= self.window.n_max)
        out = np.zeros(n.shape, dtype=complex)
        out[inside] = self.values[n[inside] - self.window.n_min]
        return out

    def interior(self, margin: int = MARGIN) -> np.ndarray:
        return self.values[self.window.interior_mask(margin)]


@dataclass(frozen=True)
class WeightedNormSpec:
    """Weight exponent ``s`` of the space with norm sum <n>^{2s} |phi(n)|^2."""

    s: float

    def __post_init__(self):
        if not np.isfinite(self.s):
            raise ValueError("weight exponent must be finite")


@dataclass(frozen=True)
class KernelMatrix:
    """Operator kernel K(n, m) for n in ``row_window`` and m in ``col_window``.

    The row and column index sets are integer arrays rather than windows so
    that kernels on ``supp V`` (which may have gaps or fewer than five sites)
    use the same container.
    """

    rows: np.ndarray
    cols: np.ndarray
    entries: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=int)
        cols = np.asarray(self.cols, dtype=int)
        ent = np.asarray(self.entries, dtype=complex)
        if ent.shape != (rows.size, cols.size):
            raise ValueError(
                f"entries shape {ent.shape} does not match {rows.size}x{cols.size}")
        if not np.all(np.isfinite(ent)):
            raise ValueError("kernel has non-finite entries")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "entries", ent)

    @classmethod
    def on_windows(cls, row_window: GridWindow, col_window: GridWindow, entries):
        return cls(row_window.indices, col_window.indices, entries)

    def to_csv(self, path) -> None:
        """Write ``n,m,re,im`` rows with 17 significant digits."""
        n, m = np.meshgrid(self.rows, self.cols, indexing="ij")
        with open(path, "w") as fh:
            fh.write("n,m,re,im\n")
            for a, b, z in zip(n.ravel(), m.ravel(), self.entries.ravel()):
                fh.write(f"{a},{b},{z.real:.17g},{z.imag:.17g}\n")


class CompactPotential:
    """Real potential with finite support.

    ``V(n0 + i) = values[i]``; every other site carries zero. Derived data
    (``v = sqrt|V|``, ``U = sign V``, moment vectors ``v_k`` and their
    alternating versions) live on the support, which is the only place the
    Birman-Schwinger objects act.
    """

    def __init__(self, n0: int, values):
        vals = np.asarray(values, dtype=float).copy()
        if vals.ndim != 1:
            raise ValueError("potential values must be one-dimensional")
        if not np.all(np.isfinite(vals)):
            raise ValueError("potential has non-finite entries")
        vals.setflags(write=False)
        self.n0 = int(n0)
        self.values = vals
        nz = np.nonzero(vals)[0]
        self.support = (nz + self.n0).astype(int)
        self.V_support = vals[nz]

    def __repr__(self):
        return f"CompactPotential(n0={self.n0}, values={self.values.tolist()!r})"

    def __eq__(self, other):
        if not isinstance(other, CompactPotential):
            return NotImplemented
        return (np.array_equal(self.support, other.support)
                and np.array_equal(self.V_support, other.V_support))

    @classmethod
    def from_sites(cls, sites, values) -> "CompactPotential":
        sites = np.asarray(sites, dtype=int)
        values = np.asarray(values, dtype=float)
        if sites.size == 0:
            return cls(0, [])
        lo, hi = sites.min(), sites.max()
        full = np.zeros(hi - lo + 1)
        full[sites - lo] = values
        return cls(lo, full)

    @classmethod
    def zero(cls) -> "CompactPotential":
        return cls(0, [])

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        return {"n0": self.n0, "values": [float(x) for x in self.values]}

    @classmethod
    def from_dict(cls, data: dict) -> "CompactPotential":
        return cls(int(data["n0"]), data["values"])

    @classmethod
    def load(cls, path) -> "CompactPotential":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    # -- derived data ----------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return self.support.size == 0

    def require_support(self) -> None:
        if self.is_zero:
            raise EmptySupport("potential vanishes identically")

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.V_support).sum())

    @property
    def v(self) -> np.ndarray:
        """sqrt|V| on the support."""
        return np.sqrt(np.abs(self.V_support))

    @property
    def U(self) -> np.ndarray:
        """sign V on the support (values in {-1, +1})."""
        return np.sign(self.V_support)

    def v_moment(self, k: int) -> np.ndarray:
        """v_k(n) = n^k v(n) on the support."""
        return self.support.astype(float) ** k * self.v

    def v_tilde_moment(self, k: int) -> np.ndarray:
        """(-1)^n n^k v(n) on the support."""
        return parity(self.support) * self.v_moment(k)

    @property
    def v_tilde(self) -> np.ndarray:
        return self.v_tilde_moment(0)

    def at(self, n) -> np.ndarray:
        n = np.asarray(n)
        out = np.zeros(n.shape)
        inside = (n >= self.n0) & (n < self.n0 + self.values.size)
        out[inside] = self.values[n[inside] - self.n0]
        return out

    def on_window(self, window: GridWindow) -> np.ndarray:
        return self.at(window.indices)

    def shifted(self, k: int) -> "CompactPotential":
        """The translate V(. - k)."""
        return CompactPotential(self.n0 + k, self.values)

    def support_radius(self) -> int:
        return int(np.abs(self.support).max()) if self.support.size else 0


def parity(n) -> np.ndarray:
    """(-1)^n as floats."""
    return 1.0 - 2.0 * (np.asarray(n) % 2)


# -- operators on arrays (zero padded) ----------------------------------------

def laplacian_array(values: np.ndarray) -> np.ndarray:
    p = np.pad(np.asarray(values), 1)
    return p[2:] + p[:-2] - 2.0 * p[1:-1]


def bilaplacian_array(values: np.ndarray) -> np.ndarray:
    p = np.pad(np.asarray(values), 2)
    return p[4:] - 4.0 * p[3:-1] + 6.0 * p[2:-2] - 4.0 * p[1:-3] + p[:-4]


def apply_laplacian(phi: GridFunction) -> GridFunction:
    """(Delta phi)(n) = phi(n+1) + phi(n-1) - 2 phi(n), zero padded."""
    return GridFunction(phi.window, laplacian_array(phi.values))


def apply_bilaplacian(phi: GridFunction) -> GridFunction:
    """Five-point stencil [1, -4, 6, -4, 1], zero padded."""
    return GridFunction(phi.window, bilaplacian_array(phi.values))


def apply_hamiltonian(phi: GridFunction, V: CompactPotential) -> GridFunction:
    """(Delta^2 + V) phi on the window of ``phi``.

    Raises WindowTooSmall when supp V reaches into the two-cell margin.
    """
    if V.support.size and not phi.window.contains(V.support, margin=MARGIN):
        raise WindowTooSmall("supp V touches the window margin")
    return GridFunction(phi.window,
                        bilaplacian_array(phi.values) + V.on_window(phi.window) * phi.values)


def apply_J(phi: GridFunction) -> GridFunction:
    """(J phi)(n) = (-1)^n phi(n)."""
    return GridFunction(phi.window, parity(phi.window.indices) * phi.values)


def weighted_norm(phi: GridFunction, spec: WeightedNormSpec) -> float:
    """(sum <n>^{2s} |phi(n)|^2)^{1/2} with <n> = (1 + n^2)^{1/2}."""
    n = phi.window.indices.astype(float)
    w = (1.0 + n * n) ** spec.s
    return float(np.sqrt(np.sum(w * np.abs(phi.values) ** 2)))


def sup_kernel_norm(K) -> float:
    """max |K(n, m)|, the l1 -> l_inf norm of the kernel.

    Accepts a :class:`KernelMatrix` or any array.
    """
    entries = K.entries if isinstance(K, KernelMatrix) else np.asarray(K)
    if entries.size == 0:
        return 0.0
    return float(np.abs(entries).max())


def hamiltonian_matrix(V: CompactPotential, window: GridWindow) -> np.ndarray:
    """Dense truncation of Delta^2 + V to ``window`` (zero boundary)."""
    n = window.size
    H = np.zeros((n, n))
    for off, c in zip(range(-2, 3), BILAPLACIAN_STENCIL):
        H += np.diag(np.full(n - abs(off), c), off)
    H[np.diag_indices(n)] += V.on_window(window)
    return H


def hamiltonian_banded(V: CompactPotential, window: GridWindow) -> np.ndarray:
    """Lower banded storage of the truncated Delta^2 + V (for eig_banded)."""
    n = window.size
    band = np.zeros((3, n))
    band[0] = 6.0 + V.on_window(window)
    band[1, :-1] = -4.0
    band[2, :-2] = 1.0
    return band
