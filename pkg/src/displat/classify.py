"""Threshold classification through the projection and operator chains.

Everything acts on l^2(supp V) with d = |supp V|. A subspace is stored as a
d x r matrix with orthonormal columns. Each chain space is computed twice:

* definition route: the intersection of the orthogonality constraints with
  the kernel condition, as the null space of one stacked matrix;
* kernel route: successive kernels Ker S0 T0 S0|S0, Ker T1|S1, Ker T2|S2
  (and Ker Qt Tt0 Qt|Qt, Ker Tt1|St0, Ker Tt2|St1 at 16).

The two must give the same projectors. Moment constraints use centred
powers (n - c)^k v, which span the same spaces as n^k v and stay well
conditioned for wide supports.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._parallel import pmap
from .errors import ChainSingular, DegenerateVPrime, RouteMismatch
from .expansion import coefficient_matrix
from .lattice import (CompactPotential, GridFunction, GridWindow, apply_hamiltonian,
                      parity)

DEFAULT_TOL = 1e-8
ROUTE_TOL = 1e-8
RESIDUAL_TOL = 1e-8
CHAIN_COND_CAP = 1e12
ZERO_FLOOR = 1e-12
ORTHO_TOL = 1e-12

ZERO_CLASSES = ("regular", "first_kind", "second_kind", "eigenvalue")
SIXTEEN_CLASSES = ("regular", "resonance", "eigenvalue")


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis (columns) of a subspace of l^2(supp V).

    ``sigma`` holds the singular values behind the rank decision that
    produced the basis (empty for spaces built directly).
    """
    label: str
    basis: np.ndarray
    sigma: tuple = ()
    cut: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2:
            raise ValueError("basis must be a d x r array")
        if b.shape[1] and np.abs(b.T @ b - np.eye(b.shape[1])).max() > 1e-10:
            raise ValueError(f"basis of {self.label} is not orthonormal")
        object.__setattr__(self, "basis", b)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def ambient(self) -> int:
        return self.basis.shape[0]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def is_zero(self) -> bool:
        return self.dim == 0

    def inside(self, other: "SubspaceBasis", tol: float = 1e-8) -> bool:
        """True when this subspace lies in ``other`` (projector product test)."""
        if self.dim == 0:
            return True
        return float(np.linalg.norm(other.projector @ self.basis - self.basis)) < tol

    def gap(self) -> float:
        """Ratio of the smallest retained to the largest discarded singular value."""
        s = np.asarray(self.sigma)
        kept, dropped = s[s > self.cut], s[s <= self.cut]
        if kept.size == 0 or dropped.size == 0:
            return float("inf")
        top = dropped.max()
        return float(kept.min() / top) if top > 0 else float("inf")

    def trail(self) -> dict:
        return {"dim": self.dim, "sigma": [float(x) for x in self.sigma],
                "cut": float(self.cut)}


def full_space(d: int, label: str = "I") -> SubspaceBasis:
    return SubspaceBasis(label, np.eye(d))


def orthocomplement(vectors, d: int, label: str, tol: float = 1e-12) -> SubspaceBasis:
    """Orthogonal complement of span(vectors) in R^d (pivoted QR rank)."""
    vectors = [x for x in vectors if np.any(x)]
    if len(vectors) == 0:
        return full_space(d, label)
    A = np.array(vectors, dtype=float).T
    q, r, _ = scipy.linalg.qr(A, mode="full", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int((diag > tol * diag[0]).sum()) if diag.size and diag[0] > 0 else 0
    return SubspaceBasis(label, q[:, rank:])


def nullspace(matrix, subspace: SubspaceBasis, tol: float = DEFAULT_TOL,
              label: str = "", scale: float | None = None,
              symmetric: bool = False) -> SubspaceBasis:
    """Numerical kernel of ``matrix`` restricted to ``subspace``.

    Singular vectors of ``matrix @ basis`` with sigma <= tol * ref are kept,
    where ref = max(sigma_max, scale). ``scale`` lets the caller measure
    smallness against the size of the unprojected operator; without it a
    one-dimensional restriction could never be declared zero. When ref is 0
    the absolute floor 1e-12 applies.

    With ``symmetric=True`` the matrix must be symmetric; the kernel is then
    that of the compression B^T A B, which equals Ker S A S|_S for the
    projector S onto the subspace, and the eigenvalue moduli of the
    compression serve as singular values.
    """
    B = subspace.basis
    if subspace.dim == 0:
        return SubspaceBasis(label, B, (), 0.0)
    if symmetric:
        return kernel_of_compression(B.T @ np.asarray(matrix, dtype=float) @ B,
                                     subspace, tol, label, scale)
    _, s, vh = np.linalg.svd(np.asarray(matrix, dtype=float) @ B, full_matrices=True)
    sig = np.zeros(subspace.dim)
    sig[:s.size] = s
    return _select(sig, vh, subspace, tol, label, scale)


def kernel_of_compression(C, subspace: SubspaceBasis, tol: float = DEFAULT_TOL,
                          label: str = "", scale: float | None = None) -> SubspaceBasis:
    """Kernel of a symmetric operator given by its compression C = B^T A B."""
    if subspace.dim == 0:
        return SubspaceBasis(label, subspace.basis, (), 0.0)
    C = np.asarray(C, dtype=float)
    w, vecs = np.linalg.eigh(0.5 * (C + C.T))
    order = np.argsort(-np.abs(w))
    return _select(np.abs(w)[order], vecs[:, order].T, subspace, tol, label, scale)


def _select(sig, vh, subspace, tol, label, scale):
    ref = max(sig.max(), scale or 0.0)
    cut = tol * ref if ref > 0 else ZERO_FLOOR
    keep = sig <= cut
    basis = subspace.basis @ vh[keep].T
    return SubspaceBasis(label, _reorthonormalize(basis), tuple(sig.tolist()), cut)


def constrained_space(constraints, operator, d: int, tol: float = DEFAULT_TOL,
                      label: str = "") -> SubspaceBasis:
    """{f : <f, c> = 0 for every constraint c, operator f = 0} in R^d.

    Constraints are orthonormalized and the operator is scaled to unit
    spectral norm, then the stacked matrix goes through :func:`nullspace`.
    """
    blocks = []
    constraints = [c for c in constraints if np.any(c)]
    if len(constraints):
        q, _ = np.linalg.qr(np.array(constraints, dtype=float).T)
        blocks.append(q.T)
    if operator is not None:
        op = np.asarray(operator, dtype=float)
        nrm = spectral_norm(op)
        if nrm > 0:
            blocks.append(op / nrm)
    if not blocks:
        return full_space(d, label)
    return nullspace(np.vstack(blocks), full_space(d), tol, label)


def spectral_norm(A, iterations: int = 60) -> float:
    """Largest singular value by power iteration on A^T A from a fixed start."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    x = np.ones(A.shape[1]) / np.sqrt(A.shape[1])
    est = 0.0
    for _ in range(iterations):
        y = A.T @ (A @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x, new = y / ny, np.sqrt(ny)
        if abs(new - est) <= 1e-12 * new:
            return float(new)
        est = new
    return float(est)


def _reorthonormalize(B):
    if B.shape[1] == 0:
        return B
    q, _ = np.linalg.qr(B)
    return q


def projector_distance(a: SubspaceBasis, b: SubspaceBasis) -> float:
    return float(np.linalg.norm(a.projector - b.projector))


def _inverse_on(A, basis: SubspaceBasis, stage: str):
    """Inverse of the restriction of A to a subspace, as a d x d operator.

    Zero on the orthogonal complement. ChainSingular when the restricted
    matrix has condition number above the cap.
    """
    B = basis.basis
    if B.shape[1] == 0:
        return np.zeros((B.shape[0], B.shape[0]))
    R = B.T @ A @ B
    cond = np.linalg.cond(R, 1)
    if not np.isfinite(cond) or cond > CHAIN_COND_CAP:
        raise ChainSingular(f"{stage}: restricted matrix has condition {cond:.3e}",
                            stage=stage)
    return B @ np.linalg.solve(R, B.T)


# -- chain ingredients ----------------------------------------------------------

def _sandwich(vec, K):
    return vec[:, None] * K * vec[None, :]


@dataclass
class ChainData:
    """Chain ingredients in an orthonormal frame of l^2(supp V).

    In site coordinates ``frame`` is None and U is diag(sign V); a parity
    sector carries its d x d_s frame and the compressed matrices.
    """
    U: np.ndarray
    v: np.ndarray
    v_tilde: np.ndarray
    L1: float
    moments: list
    moments_tilde: list
    K: dict
    K_tilde: dict
    frame: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.U.shape[0]

    def lift(self, B: np.ndarray) -> np.ndarray:
        return B if self.frame is None else self.frame @ B


def _centred_moments(V: CompactPotential, kmax: int, tilde: bool = False):
    n = V.support.astype(float)
    x = n - n.mean()
    base = V.v_tilde if tilde else V.v
    return [x ** k * base for k in range(kmax + 1)]


def chain_data(V: CompactPotential, thresholds=(0, 16)) -> ChainData:
    V.require_support()
    n = V.support
    K = {j: _sandwich(V.v, coefficient_matrix(0, j, "real", n, n))
         for j in (-1, 0, 1, 3)} if 0 in thresholds else {}
    Kt = {j: _sandwich(V.v_tilde, coefficient_matrix(16, j, "real", n, n))
          for j in (0, 1, 2)} if 16 in thresholds else {}
    return ChainData(np.diag(V.U), V.v, V.v_tilde, V.l1_norm,
                     _centred_moments(V, 3), _centred_moments(V, 1, tilde=True), K, Kt)


def reflection_sectors(V: CompactPotential):
    """Even and odd frames when V is mirror symmetric about its support centre.

    Every chain operator then commutes with the reflection, so each space is
    the direct sum of its even and odd parts. Returns None otherwise.
    """
    vals = np.asarray(V.values)
    nz = np.nonzero(vals)[0]
    vals = vals[nz.min():nz.max() + 1]
    if vals.size < 2 or not np.array_equal(vals, vals[::-1]):
        return None
    d = V.support.size
    half = d // 2
    even = np.zeros((d, d - half))
    odd = np.zeros((d, half))
    r = np.sqrt(0.5)
    for i in range(half):
        even[i, i] = even[d - 1 - i, i] = r
        odd[i, i], odd[d - 1 - i, i] = r, -r
    if d % 2:
        even[half, half] = 1.0
    return {"even": even, "odd": odd}


def _restrict_vec(E, x):
    y = E.T @ x
    return np.zeros_like(y) if np.linalg.norm(y) <= 1e-13 * np.linalg.norm(x) else y


def restrict(data: ChainData, E: np.ndarray) -> ChainData:
    """Compress the ingredients to the frame E (orthonormal columns).

    Vectors whose component in the frame is at rounding level are set to
    exact zeros, so parity-odd constraints drop out of an even sector.
    """
    c = lambda M: E.T @ M @ E
    return ChainData(c(data.U), _restrict_vec(E, data.v), _restrict_vec(E, data.v_tilde),
                     data.L1, [_restrict_vec(E, m) for m in data.moments],
                     [_restrict_vec(E, m) for m in data.moments_tilde],
                     {j: c(M) for j, M in data.K.items()},
                     {j: c(M) for j, M in data.K_tilde.items()}, E)


# -- projections ----------------------------------------------------------------

@dataclass
class Projections:
    P: np.ndarray
    Q: np.ndarray
    P_tilde: np.ndarray
    Q_tilde: np.ndarray
    Q_space: SubspaceBasis
    S0: SubspaceBasis
    Q_tilde_space: SubspaceBasis


def _projections(data: ChainData) -> Projections:
    d = data.dim
    P = np.outer(data.v, data.v) / data.L1
    Pt = np.outer(data.v_tilde, data.v_tilde) / data.L1
    return Projections(
        P=P, Q=np.eye(d) - P, P_tilde=Pt, Q_tilde=np.eye(d) - Pt,
        Q_space=orthocomplement([data.v], d, "Q"),
        S0=orthocomplement(data.moments[:2], d, "S0"),
        Q_tilde_space=orthocomplement([data.v_tilde], d, "Q~"),
    )


def build_projections(V: CompactPotential) -> Projections:
    """P, Q = I - P, S0 = span{v, v_1}^perp and their tilded versions."""
    V.require_support()
    return _projections(chain_data(V, thresholds=()))


# -- operator chain --------------------------------------------------------------

@dataclass
class OperatorChain:
    """Matrices of the chain on supp V and the kernel-route spaces."""
    proj: Projections
    T0: np.ndarray | None = None
    D0: np.ndarray | None = None
    S1: SubspaceBasis | None = None
    T1: np.ndarray | None = None
    S2: SubspaceBasis | None = None
    D2: np.ndarray | None = None
    T2: np.ndarray | None = None
    S3: SubspaceBasis | None = None
    T0_tilde: np.ndarray | None = None
    S0_tilde: SubspaceBasis | None = None
    T1_tilde: np.ndarray | None = None
    S1_tilde: SubspaceBasis | None = None
    T2_tilde: np.ndarray | None = None
    S2_tilde: SubspaceBasis | None = None
    kernels: dict = field(default_factory=dict)


def _fro(*mats) -> float:
    return float(np.prod([np.linalg.norm(m) for m in mats]))


def _expand(B, C):
    """The operator B C B^T from its compression C."""
    return B @ C @ B.T


def _zero_chain(data: ChainData, proj: Projections, tol):
    # Products are applied to subspace bases (d x r) where possible; the
    # kernel-route scales are products of factor norms, the size of the
    # rounding error in forming the unprojected operators.
    K, L1 = data.K, data.L1
    T0 = data.U + K[0]
    D0 = _inverse_on(proj.Q @ K[-1] @ proj.Q + proj.S0.projector, proj.Q_space, "D0")
    B0 = proj.S0.basis
    S1 = kernel_of_compression(B0.T @ T0 @ B0, proj.S0, tol, "S1", scale=_fro(T0))
    out = dict(T0=T0, D0=D0, S1=S1)
    if S1.is_zero():
        return out
    B1 = S1.basis
    X1 = K[1] @ B1 + (8.0 / L1) * K[-1] @ (proj.P @ (K[-1] @ B1)) \
        + 64.0 * T0 @ (D0 @ (T0 @ B1))
    C1 = B1.T @ X1
    scale1 = _fro(K[1]) + (8.0 / L1) * _fro(K[-1], proj.P, K[-1]) + 64.0 * _fro(T0, D0, T0)
    S2 = kernel_of_compression(C1, S1, tol, "S2", scale=scale1)
    out.update(T1=_expand(B1, C1), S2=S2)
    if S2.is_zero():
        return out
    B2 = S2.basis
    # D2 inverts T1 + S2 on S1; in S1 coordinates that is C1 + W W^T.
    W = B1.T @ B2
    R = C1 + W @ W.T
    cond = np.linalg.cond(R, 1)
    if not np.isfinite(cond) or cond > CHAIN_COND_CAP:
        raise ChainSingular(f"D2: restricted matrix has condition {cond:.3e}", stage="D2")
    D2 = B1 @ np.linalg.solve(R, B1.T)
    inner = K[3] @ B2 - (8.0 * 720.0 / L1) * T0 @ (T0 @ B2) \
        - (720.0 / 64.0) * K[1] @ (D0 @ (K[1] @ B2))
    # right = D0 vG_{-1}v T0 S2 - (||V||/8) D0 T0 D0 vG_1v S2, and left = right^T.
    right = D0 @ (K[-1] @ (T0 @ B2)) - (L1 / 8.0) * D0 @ (T0 @ (D0 @ (K[1] @ B2)))
    C2 = (B2.T @ inner) / 720.0 + (64.0 / L1 ** 2) * right.T @ (D2 @ right)
    scale2 = (_fro(K[3]) + (8.0 * 720.0 / L1) * _fro(T0, T0)
              + (720.0 / 64.0) * _fro(K[1], D0, K[1])) / 720.0 \
        + (64.0 / L1 ** 2) * _fro(D2) * (_fro(D0, K[-1], T0)
                                       + (L1 / 8.0) * _fro(D0, T0, D0, K[1])) ** 2
    S3 = kernel_of_compression(C2, S2, tol, "S3", scale=scale2)
    out.update(D2=D2, T2=_expand(B2, C2), S3=S3)
    return out


def _sixteen_chain(data: ChainData, proj: Projections, tol):
    K, L1 = data.K_tilde, data.L1
    Tt0 = data.U + K[0]
    Bq = proj.Q_tilde_space.basis
    St0 = kernel_of_compression(Bq.T @ Tt0 @ Bq, proj.Q_tilde_space, tol, "S~0",
                                scale=_fro(Tt0))
    out = dict(T0_tilde=Tt0, S0_tilde=St0)
    if St0.is_zero():
        return out
    B = St0.basis
    TB = Tt0 @ B
    C1 = B.T @ (K[1] @ B) + (32.0 / L1) * TB.T @ TB
    St1 = kernel_of_compression(C1, St0, tol, "S~1",
                                scale=_fro(K[1]) + (32.0 / L1) * _fro(Tt0, Tt0))
    out.update(T1_tilde=_expand(B, C1), S1_tilde=St1)
    if St1.is_zero():
        return out
    B1 = St1.basis
    C2 = B1.T @ K[2] @ B1
    out.update(T2_tilde=_expand(B1, C2),
               S2_tilde=kernel_of_compression(C2, St1, tol, "S~2", scale=_fro(K[2])))
    return out


def _chain_from(data: ChainData, tol, thresholds) -> OperatorChain:
    proj = _projections(data)
    parts = {}
    if 0 in thresholds:
        parts.update(_zero_chain(data, proj, tol))
    if 16 in thresholds:
        parts.update(_sixteen_chain(data, proj, tol))
    kernels = {**{f"G{j}": k for j, k in data.K.items()},
               **{f"G~{j}": k for j, k in data.K_tilde.items()}}
    return OperatorChain(proj=proj, kernels=kernels, **parts)


def build_operator_chain(V: CompactPotential, tol: float = DEFAULT_TOL,
                         thresholds=(0, 16)) -> OperatorChain:
    """Assemble T0, D0, T1, D2, T2 and the tilded chain from the bold kernels.

    Matrices are in site coordinates on supp V. The chain stops at the
    first trivial space; ``thresholds`` selects which half is built.
    """
    return _chain_from(chain_data(V, thresholds), tol, thresholds)


# -- definition route -----------------------------------------------------------

ZERO_KEYS = ("S1", "S2", "S3")
SIXTEEN_KEYS = ("S~0", "S~1")
_PARENT = {"S2": "S1", "S3": "S2", "S~1": "S~0"}


def _definition_spaces(data: ChainData, chain: OperatorChain, tol, keys) -> dict:
    d = data.dim
    mom, momt, pr = data.moments, data.moments_tilde, chain.proj
    T0, Tt0 = chain.T0, chain.T0_tilde
    build = {
        "S1": lambda: constrained_space(mom[:2], pr.S0.projector @ T0, d, tol, "S1"),
        "S2": lambda: constrained_space(mom[:3], pr.Q @ T0, d, tol, "S2"),
        "S3": lambda: constrained_space(mom[:4], T0, d, tol, "S3"),
        "S~0": lambda: constrained_space(momt[:1], pr.Q_tilde @ Tt0, d, tol, "S~0"),
        "S~1": lambda: constrained_space(momt[:2], Tt0, d, tol, "S~1"),
    }
    # Each space lies inside its parent by definition, so a trivial parent
    # settles the children without another decomposition.
    out = {}
    for k in ZERO_KEYS + SIXTEEN_KEYS:
        if k in keys:
            p = _PARENT.get(k)
            out[k] = _empty(d, k) if p in out and out[p].is_zero() else build[k]()
    return out


def definition_spaces(V: CompactPotential, tol: float = DEFAULT_TOL,
                      keys=ZERO_KEYS + SIXTEEN_KEYS) -> dict:
    """S1, S2, S3, St0, St1 as intersections of constraints and kernel conditions."""
    need = tuple(t for t, ks in ((0, ZERO_KEYS), (16, SIXTEEN_KEYS)) if set(ks) & set(keys))
    data = chain_data(V, need)
    return _definition_spaces(data, _chain_from(data, tol, need), tol, keys)


def _empty(d, label):
    return SubspaceBasis(label, np.zeros((d, 0)))


def _kernel_route(chain: OperatorChain, d: int, keys) -> dict:
    got = {"S1": chain.S1, "S2": chain.S2, "S3": chain.S3,
           "S~0": chain.S0_tilde, "S~1": chain.S1_tilde}
    return {k: got[k] if got[k] is not None else _empty(d, k) for k in keys}


def _merge(label, parts) -> SubspaceBasis:
    """Direct sum of lifted sector spaces: list of (frame-lifted basis, sector space)."""
    basis = np.hstack([b for b, _ in parts])
    sigma = tuple(x for _, s in parts for x in s.sigma)
    return SubspaceBasis(label, basis, sigma, max(s.cut for _, s in parts))


def _sector_trail(s: SubspaceBasis) -> dict:
    return {"dim": s.dim, "sigma": [float(x) for x in s.sigma], "cut": float(s.cut)}


def _routes(V, tol, route_tol, keys):
    """Both routes, sector by sector, merged into site coordinates."""
    thresholds = (0,) if keys == ZERO_KEYS else (16,)
    data = chain_data(V, thresholds)
    sectors = reflection_sectors(V) or {"all": None}
    defn_parts = {k: [] for k in keys}
    ker_parts = {k: [] for k in keys}
    trails = {k: {"definition": [], "kernel": []} for k in keys}
    chains = {}
    for name, E in sectors.items():
        sd = data if E is None else restrict(data, E)
        chain = _chain_from(sd, tol, thresholds)
        chains[name] = chain
        defn = _definition_spaces(sd, chain, tol, keys)
        ker = _kernel_route(chain, sd.dim, keys)
        for k in keys:
            defn_parts[k].append((sd.lift(defn[k].basis), defn[k]))
            ker_parts[k].append((sd.lift(ker[k].basis), ker[k]))
            trails[k]["definition"].append({"sector": name, **_sector_trail(defn[k])})
            trails[k]["kernel"].append({"sector": name, **_sector_trail(ker[k])})
    defn = {k: _merge(k, defn_parts[k]) for k in keys}
    ker = {k: _merge(k, ker_parts[k]) for k in keys}
    dist = _compare_routes(defn, ker, route_tol)
    for k in keys:
        trails[k]["projector_distance"] = dist[k]
        trails[k]["dim"] = defn[k].dim
    return chains, defn, ker, trails


def _compare_routes(defn: dict, ker: dict, route_tol: float) -> dict:
    dist = {}
    for key, a in defn.items():
        b = ker[key]
        dist[key] = projector_distance(a, b)
        if dist[key] > route_tol:
            raise RouteMismatch(
                f"{key}: definition route dim {a.dim}, kernel route dim {b.dim}, "
                f"projector distance {dist[key]:.3e}", space=key, distance=dist[key])
    return dist


def zero_class_of(dims: dict) -> str:
    if dims["S1"] == 0:
        return "regular"
    if dims["S2"] == 0:
        return "first_kind"
    if dims["S3"] == 0:
        return "second_kind"
    return "eigenvalue"


def sixteen_class_of(dims: dict) -> str:
    if dims["S~0"] == 0:
        return "regular"
    if dims["S~1"] == 0:
        return "resonance"
    return "eigenvalue"


def classify_zero(V: CompactPotential, tol: float = DEFAULT_TOL,
                  route_tol: float = ROUTE_TOL):
    """Class of the threshold 0 and the evidence behind it.

    Returns
    -------
    (class, evidence) where evidence holds the definition-route spaces, the
    per-sector chains and the tolerance trail.
    """
    chains, defn, ker, trail = _routes(V, tol, route_tol, ZERO_KEYS)
    cls = zero_class_of({k: defn[k].dim for k in ZERO_KEYS})
    return cls, {"spaces": defn, "kernel_spaces": ker, "chains": chains, "trail": trail}


def classify_sixteen(V: CompactPotential, tol: float = DEFAULT_TOL,
                     route_tol: float = ROUTE_TOL):
    """Class of the threshold 16 and the evidence behind it.

    When St1 is nontrivial the kernel of Tt2 on it is also reported; it is
    expected to vanish for compactly supported V.
    """
    chains, defn, ker, trail = _routes(V, tol, route_tol, SIXTEEN_KEYS)
    cls = sixteen_class_of({k: defn[k].dim for k in SIXTEEN_KEYS})
    ev = {"spaces": defn, "kernel_spaces": ker, "chains": chains, "trail": trail}
    st2 = [c.S2_tilde.dim for c in chains.values() if c.S2_tilde is not None]
    if st2:
        ev["S~2_dim"] = int(sum(st2))
    return cls, ev


# -- resonance functions ----------------------------------------------------------

def _window_around(V: CompactPotential, margin: int) -> GridWindow:
    return GridWindow(int(V.support.min()) - margin, int(V.support.max()) + margin)


def reconstruct_resonance_function(f, V: CompactPotential, threshold: int = 0,
                                   window: GridWindow | None = None, space: str = "S2",
                                   margin: int = 50):
    """Solution phi of H phi = lambda phi built from a chain vector ``f``.

    Threshold 0: phi = -G0 v f + c1 n + c2. For ``space="S1"`` the constants
    come from T0 f and v' = Q v_1; for S2, c1 = 0 and c2 = <T0 f, v>/||V||_1;
    for S3 both vanish. Threshold 16: phi = J(-Gt0 vt f + c) with
    c = <Tt0 f, vt>/||V||_1.

    The sum G0 v f cancels heavily (the kernel grows like |n - m|^3 while
    the low moments of v f vanish), so it is accumulated in long double.

    Returns
    -------
    (phi, c1, c2) at threshold 0, (phi, c) at threshold 16.
    """
    V.require_support()
    f = np.asarray(f, dtype=float)
    window = window or _window_around(V, margin)
    n, supp, L1 = window.indices, V.support, V.l1_norm
    if threshold == 0:
        v = V.v
        T0 = np.diag(V.U) + _sandwich(v, coefficient_matrix(0, 0, "real", supp, supp))
        Tf = T0 @ f
        if space == "S1":
            v1 = supp.astype(float) * v
            vp = v1 - (v1 @ v) / L1 * v
            nrm = float(np.linalg.norm(vp))
            if nrm < 1e-12:
                raise DegenerateVPrime(f"||v'|| = {nrm:.3e}")
            c1 = float(Tf @ vp) / nrm ** 2
            c2 = float(Tf @ v) / L1 - float(v1 @ v) / L1 * c1
        elif space == "S2":
            c1, c2 = 0.0, float(Tf @ v) / L1
        else:
            c1, c2 = 0.0, 0.0
        phi = -_long_matvec(coefficient_matrix(0, 0, "real", n, supp), v * f) + c1 * n + c2
        return GridFunction(window, phi.astype(float)), c1, c2
    if threshold == 16:
        vt = V.v_tilde
        Tt0 = np.diag(V.U) + _sandwich(vt, coefficient_matrix(16, 0, "real", supp, supp))
        c = float((Tt0 @ f) @ vt) / L1
        phi = parity(n) * (-_long_matvec(coefficient_matrix(16, 0, "real", n, supp),
                                         vt * f) + c).astype(float)
        return GridFunction(window, phi), c
    raise ValueError("threshold must be 0 or 16")


def _long_matvec(A, x):
    return np.asarray(A, dtype=np.longdouble) @ np.asarray(x, dtype=np.longdouble)


def verify_difference_equation(phi: GridFunction, V: CompactPotential, lam: float) -> float:
    """sup over the interior (two-cell margin) of |(Delta^2 + V - lam) phi|."""
    res = apply_hamiltonian(phi, V).values - lam * phi.values
    return float(np.abs(GridFunction(phi.window, res).interior()).max())


def normalized(values) -> np.ndarray:
    """Scale to unit sup norm with a positive entry of largest modulus."""
    values = np.asarray(values, dtype=float)
    i = int(np.argmax(np.abs(values)))
    return values / values[i]


def cosine_similarity(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b)))


# -- report --------------------------------------------------------------------------

@dataclass
class ResonanceReport:
    zero_class: str
    sixteen_class: str
    bases: dict
    phi: list
    residuals: dict
    sigma_trails: dict
    config: dict
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"zero_class": self.zero_class, "sixteen_class": self.sixteen_class,
                "bases": self.bases, "phi": self.phi, "residuals": self.residuals,
                "sigma_trails": self.sigma_trails, "config": self.config,
                "warnings": self.warnings}


def _functions_for(space: SubspaceBasis, key, V, threshold, margin, residual_tol, warnings):
    lam = 0.0 if threshold == 0 else 16.0
    out, res = [], []
    for i in range(space.dim):
        f = space.basis[:, i]
        got = reconstruct_resonance_function(f, V, threshold, space=key, margin=margin)
        phi = got[0]
        scale = float(np.abs(phi.values).max())
        r = verify_difference_equation(phi, V, lam) / scale
        back = V.U * V.v * phi.at(V.support).real
        cos = cosine_similarity(back, f)
        if r > residual_tol:
            warnings.append(f"{key}[{i}]: relative residual {r:.3e} above {residual_tol}")
        if cos < 1 - 1e-10:
            warnings.append(f"{key}[{i}]: f and Uv phi differ (cosine {cos:.12f})")
        out.append({"threshold": threshold, "space": key, "n0": phi.window.n_min,
                    "values": normalized(phi.values.real).tolist(),
                    "constants": [float(c) for c in got[1:]],
                    "recovery_cosine": cos})
        res.append(r)
    return out, res


def classify(V: CompactPotential, tol: float = DEFAULT_TOL, route_tol: float = ROUTE_TOL,
             residual_tol: float = RESIDUAL_TOL, margin: int = 50,
             truncation_radius: int | None = None) -> ResonanceReport:
    """Classify both thresholds and reconstruct the threshold solutions.

    The deepest nontrivial space at each threshold supplies phi: S3, S2 or S1
    at 0 and St1 or St0 at 16.
    """
    (zc, ze), (sc, se) = pmap(lambda fn: fn(V, tol, route_tol),
                              [classify_zero, classify_sixteen])
    warnings, phis, residuals = [], [], {}
    for cls, ev, threshold, order in ((zc, ze, 0, ("S3", "S2", "S1")),
                                      (sc, se, 16, ("S~1", "S~0"))):
        deepest = next((k for k in order if not ev["spaces"][k].is_zero()), None)
        if deepest is None:
            continue
        out, res = _functions_for(ev["spaces"][deepest], deepest, V, threshold, margin,
                                  residual_tol, warnings)
        phis += out
        residuals[f"{threshold}:{deepest}"] = [float(x) for x in res]
    if se.get("S~2_dim"):
        warnings.append("Tt2 has a kernel on St1, outside the compact-support picture")
    if zc == "eigenvalue":
        warnings.append("S3 is nontrivial: the potential lies outside the decay "
                        "assumption of the compact-support classification")
    trails = {**ze["trail"], **se["trail"]}
    bases = {k: s.basis.T.tolist() for k, s in {**ze["spaces"], **se["spaces"]}.items()
             if s.dim}
    config = {"tol": tol, "route_tol": route_tol, "residual_tol": residual_tol,
              "margin": margin, "truncation_radius": truncation_radius,
              "support": [int(V.support.min()), int(V.support.max())]}
    return ResonanceReport(zc, sc, bases, phis, residuals, trails, config, warnings)
