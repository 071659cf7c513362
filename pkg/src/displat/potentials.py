"""Named potentials: the threshold examples and seeded generic potentials."""
from __future__ import annotations

import numpy as np

from .lattice import CompactPotential, bilaplacian_array, parity

EXAMPLE2_CUTOFF = 3e-10


def plateau_profile(n) -> np.ndarray:
    """phi(n) = 2 at n = 0 and 1 elsewhere."""
    n = np.asarray(n)
    return np.where(n == 0, 2.0, 1.0)


def _quotient_potential(phi, n, shift=0.0):
    """shift - (Delta^2 phi)/phi on the interior sites of ``n``."""
    V = shift - bilaplacian_array(phi)[2:-2] / phi[2:-2]
    return n[2:-2], V


def v1() -> CompactPotential:
    """V1 = -(Delta^2 phi)/phi for the plateau profile: (-1, 4, -3, 4, -1) on -2..2."""
    n = np.arange(-6, 7)
    sites, V = _quotient_potential(plateau_profile(n), n)
    keep = np.abs(V) >= 1e-14
    return CompactPotential.from_sites(sites[keep], V[keep])


def v2_values(n) -> np.ndarray:
    """V2 = 16 + V1 at sites ``n``.

    V2 equals 16 off supp V1, so it is not a CompactPotential; it only
    serves the identity (Delta^2 + V2) phi = 16 phi.
    """
    return 16.0 + v1().at(n)


def v3() -> CompactPotential:
    """V3 = 16 - (Delta^2 J phi)/(J phi) for the plateau profile, on -2..2."""
    n = np.arange(-6, 7)
    sites, V = _quotient_potential(parity(n) * plateau_profile(n), n, shift=16.0)
    keep = np.abs(V) >= 1e-14
    return CompactPotential.from_sites(sites[keep], V[keep])


def example2_profile(n, s: float = 1.0) -> np.ndarray:
    return (1.0 + np.asarray(n, dtype=float) ** 2) ** (-s)


def example2(s: float = 1.0, cutoff: float = EXAMPLE2_CUTOFF, scan: int = 20000):
    """-(Delta^2 phi)/phi for phi = (1 + n^2)^{-s}, truncated where |V| < cutoff.

    The potential decays like n^{-4}; every site out to the last one with
    |V| >= cutoff is kept, so the support is a symmetric interval. The values
    are averaged with their mirror image to remove rounding asymmetry.

    Returns
    -------
    V : CompactPotential
    radius : int
    """
    n = np.arange(-scan - 2, scan + 3)
    sites, V = _quotient_potential(example2_profile(n, s), n)
    big = np.nonzero(np.abs(V) >= cutoff)[0]
    radius = int(np.abs(sites[big]).max())
    if radius >= scan:
        raise ValueError("cutoff too small for the scan range")
    keep = np.abs(sites) <= radius
    V = V[keep]
    # Exact mirror symmetry lets the classifier split into parity sectors.
    V = 0.5 * (V + V[::-1])
    return CompactPotential.from_sites(sites[keep], V), radius


def random_potential(seed: int, amplitude: float = 0.1, radius: int = 2) -> CompactPotential:
    """Uniform(-amplitude, amplitude) values on -radius..radius."""
    rng = np.random.default_rng(seed)
    return CompactPotential(-radius, rng.uniform(-amplitude, amplitude, 2 * radius + 1))


def random_regular(seed: int = 0, amplitude: float = 0.1, radius: int = 2,
                   max_draws: int = 32) -> CompactPotential:
    """First draw (seeded stream) that is regular at both thresholds."""
    from .classify import classify_sixteen, classify_zero
    rng = np.random.default_rng(seed)
    for _ in range(max_draws):
        V = CompactPotential(-radius, rng.uniform(-amplitude, amplitude, 2 * radius + 1))
        if np.count_nonzero(V.values) < V.values.size:
            continue
        if classify_zero(V)[0] == "regular" and classify_sixteen(V)[0] == "regular":
            return V
    raise RuntimeError(f"no regular draw in {max_draws} attempts")


NAMED = {"v1": v1, "v3": v3}


def named(name: str) -> CompactPotential:
    if name == "example2":
        return example2()[0]
    try:
        return NAMED[name]()
    except KeyError:
        raise ValueError(f"unknown potential {name!r}") from None


__all__ = ["v1", "v2_values", "v3", "example2", "random_potential", "random_regular",
           "plateau_profile", "example2_profile", "named", "EXAMPLE2_CUTOFF"]
