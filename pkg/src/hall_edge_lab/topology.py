"""Lattice Chern numbers and the bulk Hall conductivity.

Orientation: (k1, k2) right-handed.  With the Berry connection
A_j = i<u|d_j u> and curvature F = d_1 A_2 - d_2 A_1, the Chern number is
C = (1/2pi) int F, and the Fermi-projector integral

    sigma_12 = i int d^2k / (2pi)^2  Tr P [d_1 P, d_2 P]

equals C / 2pi.  The plaquette product of link variables
U_j(k) = det <u(k)|u(k + delta_j)> has phase close to -F delta^2, hence the
minus sign in :func:`chern_from_vectors`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import GapClosed, ValidationError
from .lattice import TORUS, HaldaneParams, LatticeModel, bloch_hamiltonian_batch, build_haldane, k_grid
from .spectral import torus_counterpart

ORIENTATION = "(k1, k2) right-handed; C = (1/2pi) sum of plaquette Berry fluxes"


def filled_vectors(m: LatticeModel, mu: float, grid_n: int, gap_tol: float = 1e-9):
    """Occupied Bloch eigenvectors on a grid_n x grid_n grid: (n, n, M, n_filled)."""
    if grid_n < 6:
        raise ValidationError(f"grid_n must be at least 6, got {grid_n}")
    if m.boundary != TORUS:
        raise ValidationError("Chern numbers need a torus model")
    g = k_grid(grid_n)
    K1, K2 = np.meshgrid(g, g, indexing="ij")
    e, v = np.linalg.eigh(bloch_hamiltonian_batch(m, np.stack([K1, K2], -1)))
    dist = np.abs(e - mu)
    if dist.min() < gap_tol:
        i, j, _ = np.unravel_index(np.argmin(dist), dist.shape)
        raise GapClosed(f"level at mu={mu} for k=({g[i]:.6g}, {g[j]:.6g})", k=(g[i], g[j]))
    nf = (e < mu).sum(-1)
    if nf.min() != nf.max():
        i, j = np.unravel_index(np.argmax(nf != nf.flat[0]), nf.shape)
        raise GapClosed(f"filled-band count jumps at k=({g[i]:.6g}, {g[j]:.6g})", k=(g[i], g[j]))
    return v[..., : int(nf.flat[0])]


def chern_from_vectors(u: np.ndarray) -> int:
    """Link-variable Chern number from occupied vectors u of shape (n, n, M, nf)."""
    if u.shape[-1] == 0:
        return 0

    def link(axis):
        nb = np.roll(u, -1, axis=axis)
        d = np.linalg.det(np.einsum("ijar,ijas->ijrs", u.conj(), nb))
        return d / np.abs(d)

    U1, U2 = link(0), link(1)
    plaq = U1 * np.roll(U2, -1, axis=0) / (np.roll(U1, -1, axis=1) * U2)
    flux = np.angle(plaq)
    c = -flux.sum() / (2 * np.pi)
    ci = int(np.rint(c))
    if abs(c - ci) > 1e-6:
        raise GapClosed(f"non-integer lattice Chern number {c}")
    return ci


def chern_number(m: LatticeModel, mu: Optional[float] = None, grid_n: int = 60) -> list[int]:
    """Chern number of the filled bands, one entry per spin block."""
    mu = m.mu if mu is None else float(mu)
    blocks = m.spin_blocks() if m.spinful else [m]
    return [chern_from_vectors(filled_vectors(b, mu, grid_n)) for b in blocks]


@dataclass
class HallResult:
    C_per_spin: list
    sigma12: float
    sigma21: float
    grid: int
    refinement_delta: float
    orientation: str = ORIENTATION

    def as_dict(self):
        return {"C_per_spin": list(self.C_per_spin), "sigma12": self.sigma12,
                "sigma21": self.sigma21, "grid": self.grid,
                "refinement_delta": self.refinement_delta, "orientation": self.orientation}


def hall_conductivity(m: LatticeModel, mu: Optional[float] = None, grid_n: int = 60) -> HallResult:
    """sigma_12 = (sum of Chern numbers) / 2pi, with the delta against a doubled grid.

    Cylinder models are replaced by their torus counterpart.
    """
    t = m if m.boundary == TORUS else torus_counterpart(m)
    cs = chern_number(t, mu, grid_n)
    fine = chern_number(t, mu, 2 * grid_n)
    s = sum(cs) / (2 * np.pi)
    return HallResult(cs, s, -s, grid_n, sum(fine) / (2 * np.pi) - s)


def projector_integral(m: LatticeModel, mu: float, grid_n: int, h: float = 1e-5) -> float:
    """sigma_12 from i Tr P[d1 P, d2 P] with centred finite differences (spinless block)."""
    g = k_grid(grid_n)
    K1, K2 = np.meshgrid(g, g, indexing="ij")
    ks = np.stack([K1, K2], -1)

    def proj(shift):
        e, v = np.linalg.eigh(bloch_hamiltonian_batch(m, ks + shift))
        occ = (e < mu).astype(float)
        return np.einsum("...ar,...r,...br->...ab", v, occ, v.conj())

    P = proj(np.zeros(2))
    d1 = (proj(np.array([h, 0])) - proj(np.array([-h, 0]))) / (2 * h)
    d2 = (proj(np.array([0, h])) - proj(np.array([0, -h]))) / (2 * h)
    integrand = 1j * np.trace(P @ (d1 @ d2 - d2 @ d1), axis1=-2, axis2=-1)
    return float(integrand.real.mean())  # mean = int d^2k / (2pi)^2


def phase_sweep(t1: float, t2: float, phi: float, ratios: Sequence[float], grid_n: int = 60,
                mu: float = 0.0):
    """Rows (W, t2 sin phi, C) for W = ratio * t2 sin phi (spinless torus)."""
    rows = []
    s = t2 * np.sin(phi)
    for r in ratios:
        W = float(r) * s
        m = build_haldane(HaldaneParams(t1, t2, phi, W), 6, mu, False, TORUS)
        rows.append((W, s, chern_number(m, mu, grid_n)[0]))
    return rows
