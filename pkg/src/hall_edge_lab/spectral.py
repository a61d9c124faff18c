"""Band structures, edge-state detection and audits of the edge assumptions."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import AmbiguousBranch, EigensolverFailure, FlatBand, NoGap, ValidationError
from .lattice import (CYLINDER, TORUS, LatticeModel, bloch_hamiltonian_batch,
                      effective_1d_hamiltonian, k_grid)


def default_workers() -> int:
    env = os.environ.get("HALL_EDGE_LAB_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _eigh_one(m: LatticeModel, k1: float):
    idx = m.active_index
    H = effective_1d_hamiltonian(m, k1)[np.ix_(idx, idx)]
    try:
        e, v = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(f"eigensolver failed at k1={k1!r}: {exc}", k1=k1) from exc
    return e, _split_degenerate(m, e, v)


def _split_degenerate(m: LatticeModel, e: np.ndarray, v: np.ndarray, tol: float = 1e-9):
    """Inside clusters of (near) degenerate levels, diagonalize the row position.

    Edge states living on opposite boundaries can be degenerate to roundoff;
    this picks the basis localized on either side instead of whatever mixture
    the eigensolver returns.
    """
    x2 = np.repeat(m.active_rows.astype(float), m.M)
    i = 0
    n = len(e)
    while i < n:
        j = i + 1
        while j < n and e[j] - e[j - 1] < tol:
            j += 1
        if j - i > 1:
            sub = v[:, i:j]
            X = sub.conj().T @ (x2[:, None] * sub)
            _, R = np.linalg.eigh(X)
            v[:, i:j] = sub @ R
        i = j
    return v


def diagonalize_grid(m: LatticeModel, ks: Sequence[float], workers: Optional[int] = None):
    """Eigen-decompose the active effective operator at every k1.

    Returns ``(energies[nk, n], vectors[nk, n_active, n])``.  The k1 loop runs
    on a thread pool; results are collected in k1 order.
    """
    ks = np.asarray(ks, float)
    workers = workers or default_workers()
    if workers > 1 and len(ks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            res = list(pool.map(lambda k: _eigh_one(m, k), ks))
    else:
        res = [_eigh_one(m, k) for k in ks]
    return np.array([r[0] for r in res]), np.array([r[1] for r in res])


def embed(m: LatticeModel, vecs: np.ndarray) -> np.ndarray:
    """Lift active-row vectors (last-but-one axis) to the full M * n_rows space."""
    shape = list(vecs.shape)
    shape[-2] = m.dim
    out = np.zeros(shape, complex)
    out[..., m.active_index, :] = vecs
    return out


@dataclass
class EigenBranch:
    index: int
    spin: Optional[int]
    k: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray          # (nk, M * n_rows) on the block's own dof
    overlaps: np.ndarray         # |<v(k_i), v(k_{i+1})>|, length nk - 1
    ambiguous: bool = False


def link_branches(ks: np.ndarray, energies: np.ndarray, vectors: np.ndarray,
                  threshold: float = 0.5):
    """Follow eigenvalue branches across the grid by maximal eigenvector overlap.

    Returns (order[nk, n], overlap[nk-1, n]) with ``order[i, b]`` the column
    of branch ``b`` at grid point ``i``.  Ties are broken by eigenvalue
    proximity.
    """
    nk, n = energies.shape
    order = np.empty((nk, n), int)
    order[0] = np.arange(n)
    ovl = np.ones((max(nk - 1, 0), n))
    scale = max(np.ptp(energies), 1.0)
    for i in range(nk - 1):
        cur = order[i]
        O = np.abs(vectors[i][:, cur].conj().T @ vectors[i + 1])
        cost = -O + 1e-6 * np.abs(energies[i][cur][:, None] - energies[i + 1][None, :]) / scale
        rows, cols = linear_sum_assignment(cost)
        order[i + 1, rows] = cols
        ovl[i, rows] = O[rows, cols]
    return order, ovl


def band_structure(m: LatticeModel, grid: Sequence[float] | int | None = None,
                   workers: Optional[int] = None, threshold: float = 0.5) -> list[EigenBranch]:
    """Linked eigenvalue branches of the effective operator over a k1 grid.

    Spinful models are diagonalized per spin block; each branch then carries
    its spin label.  Branches whose linkage overlap drops below ``threshold``
    are marked ambiguous rather than silently re-ordered.
    """
    if grid is None:
        grid = m.L
    ks = k_grid(grid) if np.isscalar(grid) else np.asarray(grid, float)
    branches = []
    blocks = m.spin_blocks() if m.spinful else [m]
    for s, blk in enumerate(blocks):
        e, v = diagonalize_grid(blk, ks, workers)
        order, ovl = link_branches(ks, e, v, threshold)
        full = embed(blk, v)
        rows = np.arange(len(ks))
        for b in range(e.shape[1]):
            cols = order[:, b]
            branches.append(EigenBranch(
                index=len(branches),
                spin=s if m.spinful else None,
                k=ks,
                energies=e[rows, cols],
                vectors=full[rows, :, cols],
                overlaps=ovl[:, b],
                ambiguous=bool(np.any(ovl[:, b] < threshold)),
            ))
    return branches


# ---------------------------------------------------------------------------
# bulk reference and edge states


def torus_counterpart(m: LatticeModel) -> LatticeModel:
    """Torus model with the bulk kernel of ``m`` (taken from the middle row)."""
    if m.boundary == TORUS:
        return m
    mid = m.L // 2
    hop = np.broadcast_to(m.hop[:, mid:mid + 1], (3, m.L, 3, m.M, m.M)).copy()
    return LatticeModel(m.M, m.L, hop, m.mu, TORUS, None, m.spinful, m.label, m.params)


def bulk_window(m: LatticeModel, mu: float, grid_n: int = 96):
    """(highest bulk level below mu, lowest bulk level above mu) on a k grid."""
    t = torus_counterpart(m)
    g = k_grid(grid_n)
    K1, K2 = np.meshgrid(g, g, indexing="ij")
    e = np.linalg.eigvalsh(bloch_hamiltonian_batch(t, np.stack([K1, K2], -1))).ravel()
    below, above = e[e < mu], e[e > mu]
    if below.size == 0 or above.size == 0:
        raise NoGap(f"mu={mu} lies outside the bulk spectrum")
    lo, hi = float(below.max()), float(above.min())
    if min(mu - lo, hi - mu) < 1e-9:
        raise NoGap(f"mu={mu} touches the bulk spectrum")
    bands = e.reshape(grid_n * grid_n, -1)
    for b in range(bands.shape[1]):
        if bands[:, b].min() < mu < bands[:, b].max():
            raise NoGap(f"bulk band {b} crosses mu={mu}")
    return lo, hi


@dataclass
class EdgeState:
    label: tuple[int, Optional[int]]
    k_F: float
    k_F_refined: float
    v_e: float
    v_centered: float
    omega: int
    xi: np.ndarray
    decay_rate: float
    decay_residual: float
    side: int                    # 0 for x2 = 0, L for x2 = L
    energy_at_kF: float
    branch: EigenBranch = field(repr=False)
    grid_flag: str = "lattice"

    def as_dict(self):
        return {
            "label": [self.label[0], self.label[1]],
            "k_F": self.k_F,
            "k_F_refined": self.k_F_refined,
            "v_e": self.v_e,
            "v_centered": self.v_centered,
            "omega": self.omega,
            "decay_rate": self.decay_rate,
            "decay_residual": self.decay_residual,
            "side": self.side,
            "energy_at_kF": self.energy_at_kF,
            "grid": self.grid_flag,
        }


def fix_gauge(v: np.ndarray, rel: float = 1e-8) -> np.ndarray:
    """Make the first non-negligible component real and positive."""
    a = np.abs(v)
    idx = int(np.argmax(a > rel * a.max()))
    return v * (np.conj(v[idx]) / a[idx])


def row_density(m: LatticeModel, xi: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(xi.reshape(m.n_rows, -1)) ** 2, axis=1)


def fit_decay(m: LatticeModel, dens: np.ndarray, side: int, floor: float = 1e-24):
    """Log-linear fit of the row density away from ``side``.

    Window: distance 3 .. min(L/2, 23) from the edge; points under ``floor``
    (roundoff) are dropped.  Returns (c, rms residual) with density ~ e^{-2 c d}.
    """
    dmax = min(m.L // 2, 3 + 20)
    d = np.arange(3, dmax + 1)
    rows = d if side == 0 else m.L - d
    y = dens[rows]
    keep = y > floor
    if keep.sum() < 3:
        keep = np.zeros_like(keep)
        keep[:3] = True
    d, y = d[keep], np.log(np.maximum(y[keep], 1e-300))
    A = np.vstack([np.ones_like(d, dtype=float), d]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return float(-coef[1] / 2), float(np.sqrt(np.mean(res ** 2)))


def detect_edge_states(m: LatticeModel, mu: Optional[float] = None,
                       grid: Sequence[float] | int | None = None,
                       workers: Optional[int] = None, window: Optional[float] = None,
                       threshold: float = 0.5) -> list[EdgeState]:
    """All branches that enter the in-gap window around ``mu``.

    ``window`` defaults to half the distance from ``mu`` to the bulk spectrum.
    """
    if m.boundary != CYLINDER:
        raise ValidationError("edge detection needs a cylinder model")
    mu = m.mu if mu is None else float(mu)
    lo, hi = bulk_window(m, mu)
    if window is None:
        window = 0.5 * min(mu - lo, hi - mu)
    if grid is None:
        grid = m.L
    ks = k_grid(grid) if np.isscalar(grid) else np.asarray(grid, float)
    nk = len(ks)
    h = 2 * np.pi / nk
    flag = "lattice" if nk == m.L else "analysis"
    found = []
    blocks = m.spin_blocks() if m.spinful else [m]
    for s, blk in enumerate(blocks):
        for br in band_structure(blk, ks, workers, threshold):
            dist = np.abs(br.energies - mu)
            if dist.min() > window:
                continue
            i = int(np.argmin(dist))
            if br.ambiguous and np.any(br.overlaps[max(i - 2, 0):i + 2] < threshold):
                raise AmbiguousBranch(f"branch {br.index} linkage fails near k1={ks[i]:.6g}")
            e = br.energies
            ep, em = e[(i + 1) % nk], e[(i - 1) % nk]
            v_e = (ep - e[i]) / h
            v_c = (ep - em) / (2 * h)
            if abs(v_e) < 1e-6:
                raise FlatBand(f"edge branch at k1={ks[i]:.6g} has |v|={abs(v_e):.3g}")
            # quadratic through (i-1, i, i+1); root of e - mu nearest to the grid point
            a2 = (ep - 2 * e[i] + em) / (2 * h * h)
            a1 = (ep - em) / (2 * h)
            a0 = e[i] - mu
            if abs(a2) * h < 1e-14 * max(abs(a1), 1.0):
                delta = -a0 / a1
            else:
                roots = np.roots([a2, a1, a0])
                roots = roots[np.isreal(roots)].real
                delta = float(roots[np.argmin(np.abs(roots))]) if roots.size else -a0 / a1
            xi = fix_gauge(br.vectors[i])
            dens = row_density(blk, xi)
            half = blk.L // 2
            side = 0 if dens[:half + 1].sum() >= dens[half + 1:].sum() else blk.L
            c, res = fit_decay(blk, dens, side)
            found.append(EdgeState(
                label=(0, s if m.spinful else None),
                k_F=float(ks[i]), k_F_refined=float((ks[i] + delta) % (2 * np.pi)),
                v_e=float(v_e), v_centered=float(v_c), omega=int(np.sign(v_e)),
                xi=_lift_spin(m, s, xi), decay_rate=c, decay_residual=res, side=side,
                energy_at_kF=float(e[i]), branch=br, grid_flag=flag))
    # deterministic labels: per spin, ordered by side then k_F
    found.sort(key=lambda st: (st.label[1] if st.label[1] is not None else 0, st.side, st.k_F))
    counters: dict = {}
    for st in found:
        n = counters.get(st.label[1], 0)
        counters[st.label[1]] = n + 1
        st.label = (n + 1, st.label[1])
    return found


def _lift_spin(m: LatticeModel, s: int, xi_block: np.ndarray) -> np.ndarray:
    """Place a spin-block vector into the full (x2, r) space of ``m``."""
    if not m.spinful:
        return xi_block
    half = m.M // 2
    out = np.zeros((m.n_rows, m.M), complex)
    out[:, s * half:(s + 1) * half] = xi_block.reshape(m.n_rows, half)
    return out.ravel()


# ---------------------------------------------------------------------------
# assumption audit


@dataclass
class AssumptionVerdict:
    n_edge: int
    spin_degenerate: bool
    single_channel: bool
    fermi_points: list
    decay_checks: list
    failed: list

    def as_dict(self):
        return {
            "n_edge": self.n_edge,
            "spin_degenerate": self.spin_degenerate,
            "single_channel": self.single_channel,
            "fermi_points": self.fermi_points,
            "decay_checks": self.decay_checks,
            "failed": self.failed,
        }


def _decay_profile_fit(m: LatticeModel, prof: np.ndarray, side: int):
    c, res = fit_decay(m, prof ** 2, side)
    d = np.arange(m.n_rows) if side == 0 else m.L - np.arange(m.n_rows)
    C = float(np.max(prof * np.exp(c * d)))
    return c, C


def audit_assumptions(m: LatticeModel, mu: Optional[float] = None,
                      grid: Sequence[float] | int | None = None,
                      edges: Optional[list[EdgeState]] = None) -> AssumptionVerdict:
    """Check the edge-state assumptions on a cylinder model.

    The decay bounds are checked at derivative order 0 and 1 (forward
    difference in k1 of gauge-fixed eigenvectors); the fitted constants are
    reported rather than compared with fixed values.
    """
    mu = m.mu if mu is None else float(mu)
    if edges is None:
        edges = detect_edge_states(m, mu, grid)
    failed = []
    spin_deg = True
    if m.spinful:
        up = sorted((e for e in edges if e.label[1] == 0), key=lambda e: (e.side, e.k_F))
        dn = sorted((e for e in edges if e.label[1] == 1), key=lambda e: (e.side, e.k_F))
        if len(up) != len(dn):
            spin_deg = False
        else:
            for a, b in zip(up, dn):
                if abs(a.k_F - b.k_F) > 1e-12 or abs(a.v_e - b.v_e) > 1e-12:
                    spin_deg = False
    if not spin_deg:
        failed.append("spin_degeneracy")
    per_spin = {}
    for e in edges:
        per_spin.setdefault(e.label[1], []).append(e)
    single = bool(edges) and spin_deg and all(
        len(v) == 2 and {e.side for e in v} == {0, m.L} for v in per_spin.values())
    checks = []
    for e in edges:
        blk = m.spin_blocks()[e.label[1]] if m.spinful else m
        br = e.branch
        nk = len(br.k)
        i = int(np.argmin(np.abs(br.k - e.k_F)))
        v0 = fix_gauge(br.vectors[i])
        v1 = fix_gauge(br.vectors[(i + 1) % nk])
        v1 = v1 * np.exp(-1j * np.angle(np.vdot(v0, v1)))
        dv = (v1 - v0) * nk / (2 * np.pi)
        prof0 = np.max(np.abs(v0.reshape(blk.n_rows, -1)), axis=1)
        prof1 = np.max(np.abs(dv.reshape(blk.n_rows, -1)), axis=1)
        c0, C0 = _decay_profile_fit(blk, prof0, e.side)
        c1, C1 = _decay_profile_fit(blk, prof1, e.side)
        ok = c0 > 0 and c1 > 0 and e.decay_residual < 1e-2
        checks.append({"label": [e.label[0], e.label[1]], "side": e.side,
                       "c0": c0, "C0": C0, "c1": c1, "C1": C1, "ok": bool(ok)})
        if not ok:
            failed.append(f"decay[{e.label}]")
    if not single:
        failed.append("single_channel")
    fermi = [{"label": [e.label[0], e.label[1]], "k_F": e.k_F, "k_F_refined": e.k_F_refined,
              "v_e": e.v_e, "side": e.side} for e in edges]
    return AssumptionVerdict(len(edges), spin_deg, single, fermi, checks, failed)
