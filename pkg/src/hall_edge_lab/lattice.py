"""Finite-range tight-binding models on the torus and on the cylinder.

A model lives on cells ``x = (x1, x2)``, each carrying ``M`` internal degrees
of freedom.  The hopping kernel is translation invariant in ``x1`` and is
stored per row ``x2`` as

    hop[z1 + 1, x2, d + 1] = H(z1; x2, x2 + d)        (M x M block)

with ``z1 = x1 - y1`` and ``d = y2 - x2``, both in ``{-1, 0, 1}``.  Range
larger than one cell in either direction cannot be represented, so the
``sqrt(2)`` range restriction holds by construction.

Rows: on the torus ``x2`` runs over ``0..L-1`` and the row index is taken
mod ``L``.  On the cylinder ``x2`` runs over ``0..L`` and the rows ``0`` and
``L`` carry the Dirichlet condition, i.e. every block touching them is zero.

Internal degrees of freedom for spinful models are spin-major:
``r = sigma * (M // 2) + rbar`` with ``sigma = 0`` for spin up.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ValidationError

TORUS = "torus"
CYLINDER = "cylinder"
_BOUNDARIES = (TORUS, CYLINDER)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HaldaneParams:
    t1: float = 1.0
    t2: float = 0.5
    phi: float = np.pi / 2
    W: float = 0.0

    def __post_init__(self):
        vals = (self.t1, self.t2, self.phi, self.W)
        if not all(np.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite Haldane parameter in {vals}")
        if not self.t1 > 0:
            raise ValidationError(f"t1 must be positive, got {self.t1}")
        if self.t2 < 0:
            raise ValidationError(f"t2 must be non-negative, got {self.t2}")


@dataclass(frozen=True, eq=False)
class LatticeModel:
    """Immutable lattice model.  Arrays are stored read-only."""

    M: int
    L: int
    hop: np.ndarray
    mu: float = 0.0
    boundary: str = CYLINDER
    interaction: Optional[np.ndarray] = None
    spinful: bool = False
    label: str = "custom"
    params: Optional[HaldaneParams] = field(default=None)

    def __post_init__(self):
        if self.boundary not in _BOUNDARIES:
            raise ValidationError(f"unknown boundary {self.boundary!r}")
        if self.spinful and self.M % 2:
            raise ValidationError("spinful models need an even number of internal dof")
        shape = (3, self.n_rows, 3, self.M, self.M)
        if self.hop.shape != shape:
            raise ValidationError(f"hopping array has shape {self.hop.shape}, expected {shape}")
        object.__setattr__(self, "hop", _frozen(np.asarray(self.hop, dtype=complex)))
        if self.interaction is not None:
            w = np.asarray(self.interaction)
            if w.shape != shape:
                raise ValidationError(f"interaction array has shape {w.shape}, expected {shape}")
            if np.iscomplexobj(w):
                if np.max(np.abs(w.imag), initial=0.0) > 0:
                    raise ValidationError("interaction must be real")
                w = w.real
            object.__setattr__(self, "interaction", _frozen(w.astype(float)))

    # geometry -------------------------------------------------------------
    @property
    def n_rows(self) -> int:
        return self.L + 1 if self.boundary == CYLINDER else self.L

    @property
    def dim(self) -> int:
        return self.M * self.n_rows

    @property
    def active_rows(self) -> np.ndarray:
        """Rows on which the kernel may be nonzero."""
        if self.boundary == CYLINDER:
            return np.arange(1, self.L)
        return np.arange(self.L)

    @property
    def active_index(self) -> np.ndarray:
        """Flat (x2, r) indices of the active rows."""
        rows = self.active_rows
        return (rows[:, None] * self.M + np.arange(self.M)[None, :]).ravel()

    def neighbour_row(self, x2: int, d: int) -> Optional[int]:
        y2 = x2 + d
        if self.boundary == TORUS:
            return y2 % self.L
        if 0 <= y2 <= self.L:
            return y2
        return None

    def spin_sign(self) -> np.ndarray:
        """+1 on spin-up dof, -1 on spin-down dof (length M)."""
        if not self.spinful:
            raise ValidationError("spin sign requested for a spinless model")
        half = self.M // 2
        return np.concatenate([np.ones(half), -np.ones(half)])

    def spin_blocks(self) -> list["LatticeModel"]:
        """The decoupled spin sectors H_up, H_down as spinless models."""
        if not self.spinful:
            return [self]
        half = self.M // 2
        out = []
        for s in range(2):
            sl = slice(s * half, (s + 1) * half)
            w = None if self.interaction is None else self.interaction[..., sl, sl]
            out.append(LatticeModel(half, self.L, self.hop[..., sl, sl], self.mu, self.boundary,
                                    w, False, f"{self.label}[spin {s}]", self.params))
        return out

    def with_mu(self, mu: float) -> "LatticeModel":
        return LatticeModel(self.M, self.L, self.hop, mu, self.boundary, self.interaction,
                            self.spinful, self.label, self.params)

    def with_interaction(self, w: Optional[np.ndarray]) -> "LatticeModel":
        return LatticeModel(self.M, self.L, self.hop, self.mu, self.boundary, w,
                            self.spinful, self.label, self.params)

    def kernel(self, z1: int, x2: int, d: int) -> np.ndarray:
        """H(z1; x2, x2 + d) as an M x M block (zero outside the lattice)."""
        if not (-1 <= z1 <= 1 and -1 <= d <= 1):
            return np.zeros((self.M, self.M), complex)
        if self.boundary == CYLINDER and not 0 <= x2 <= self.L:
            return np.zeros((self.M, self.M), complex)
        return self.hop[z1 + 1, x2 % self.n_rows, d + 1]

    def hopping_terms(self) -> Iterable[tuple[int, int, int, np.ndarray]]:
        """Yield (z1, x2, d, block) for every nonzero block."""
        for zi in range(3):
            for x2 in range(self.n_rows):
                for di in range(3):
                    blk = self.hop[zi, x2, di]
                    if np.any(blk):
                        yield zi - 1, x2, di - 1, blk


# ---------------------------------------------------------------------------
# builders


def _translation_invariant(M: int, L: int, boundary: str,
                           blocks: dict[tuple[int, int], np.ndarray]) -> np.ndarray:
    """Place bulk blocks ``{(z1, d): H}`` on every row, applying the boundary."""
    n_rows = L + 1 if boundary == CYLINDER else L
    hop = np.zeros((3, n_rows, 3, M, M), complex)
    for (z1, d), blk in blocks.items():
        for x2 in range(n_rows):
            if boundary == CYLINDER:
                y2 = x2 + d
                if not (1 <= x2 <= L - 1 and 1 <= y2 <= L - 1):
                    continue
            hop[z1 + 1, x2, d + 1] = blk
    return hop


def haldane_blocks(p: HaldaneParams) -> dict[tuple[int, int], np.ndarray]:
    """Bulk Haldane blocks H(z1; x2, x2 + d) on the (A, B) basis.

    Read off from the Fourier series A(k1) = sum_z e^{i k1 z} H(z; x2, x2+1)
    and V(k1) = sum_z e^{i k1 z} H(z; x2, x2).
    """
    t1, t2, W = p.t1, p.t2, p.W
    ep, em = np.exp(1j * p.phi), np.exp(-1j * p.phi)
    b = {
        (0, 0): np.array([[W, -t1], [-t1, -W]], complex),
        (1, 0): np.array([[-t2 * ep, 0], [-t1, -t2 * em]], complex),
        (0, 1): np.array([[-t2 * em, 0], [-t1, -t2 * ep]], complex),
        (-1, 1): np.array([[-t2 * ep, 0], [0, -t2 * em]], complex),
    }
    b[(-1, 0)] = b[(1, 0)].conj().T
    b[(0, -1)] = b[(0, 1)].conj().T
    b[(1, -1)] = b[(-1, 1)].conj().T
    return b


def _spin_double(blocks: dict[tuple[int, int], np.ndarray]) -> dict[tuple[int, int], np.ndarray]:
    return {key: np.kron(np.eye(2), blk) for key, blk in blocks.items()}


def build_haldane(p: HaldaneParams, L: int, mu: float = 0.0, spinful: bool = False,
                  boundary: str = CYLINDER) -> LatticeModel:
    if not isinstance(L, (int, np.integer)) or L < 4:
        raise ValidationError(f"L must be an integer >= 4, got {L!r}")
    if not np.isfinite(mu):
        raise ValidationError("mu must be finite")
    if boundary not in _BOUNDARIES:
        raise ValidationError(f"unknown boundary {boundary!r}")
    blocks = haldane_blocks(p)
    M = 2
    if spinful:
        blocks = _spin_double(blocks)
        M = 4
    hop = _translation_invariant(M, int(L), boundary, blocks)
    return LatticeModel(M, int(L), hop, float(mu), boundary, None, spinful, "haldane", p)


def build_custom(M: int, L: int, records: Sequence[Sequence[float]], mu: float = 0.0,
                 boundary: str = CYLINDER, spinful: bool = False) -> LatticeModel:
    """Translation-invariant model from records (z1, d, r, r', re, im).

    Each record sets H(z1; x2, x2 + d)_{r r'}.  Records are taken literally;
    Hermiticity is the caller's responsibility and is checked by
    :func:`validate_model`.
    """
    if L < 2:
        raise ValidationError("L must be at least 2")
    blocks: dict[tuple[int, int], np.ndarray] = {}
    for rec in records:
        if len(rec) != 6:
            raise ValidationError(f"hopping record needs 6 entries, got {rec!r}")
        z1, d, r, rp = (int(v) for v in rec[:4])
        if not (-1 <= z1 <= 1 and -1 <= d <= 1):
            raise ValidationError(f"hopping record {rec!r} exceeds the sqrt(2) range")
        if not (0 <= r < M and 0 <= rp < M):
            raise ValidationError(f"hopping record {rec!r} has dof index out of range")
        amp = complex(float(rec[4]), float(rec[5]))
        if not np.isfinite(amp):
            raise ValidationError(f"hopping record {rec!r} is not finite")
        blk = blocks.setdefault((z1, d), np.zeros((M, M), complex))
        blk[r, rp] += amp
    hop = _translation_invariant(M, L, boundary, blocks)
    return LatticeModel(M, L, hop, float(mu), boundary, None, spinful, "custom")


def cell_interaction(m: LatticeModel, onsite: float = 1.0, neighbour: float = 0.0) -> np.ndarray:
    """Density-density kernel w, identical for every pair of internal dof.

    ``onsite`` couples all dof of the same cell, ``neighbour`` those of the
    four cells at distance one.  The result is real, symmetric and spin
    independent.
    """
    blocks = {(0, 0): onsite * np.ones((m.M, m.M))}
    if neighbour:
        for key in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            blocks[key] = neighbour * np.ones((m.M, m.M))
    return _translation_invariant(m.M, m.L, m.boundary, blocks).real


# ---------------------------------------------------------------------------
# one-body operators


def _half_kernel(m: LatticeModel, k1: float) -> np.ndarray:
    """K(k1) with H(k1) = K + K^dagger, built from one half of the bonds.

    Uses the blocks with d = +1, the (z1 = +1, d = 0) blocks and half of the
    on-site blocks.  Adding the conjugate transpose then gives a matrix that
    is Hermitian bit for bit.
    """
    M, n = m.M, m.n_rows
    e1 = np.exp(1j * k1)
    ph = {-1: e1.conjugate(), 0: 1.0, 1: e1}
    K = np.zeros((n * M, n * M), complex)
    for x2 in range(n):
        i = slice(x2 * M, (x2 + 1) * M)
        K[i, i] += 0.5 * m.hop[1, x2, 1] + ph[1] * m.hop[2, x2, 1]
        y2 = m.neighbour_row(x2, 1)
        if y2 is None:
            continue
        j = slice(y2 * M, (y2 + 1) * M)
        K[i, j] += ph[-1] * m.hop[0, x2, 2] + m.hop[1, x2, 2] + ph[1] * m.hop[2, x2, 2]
    return K


def effective_1d_hamiltonian(m: LatticeModel, k1: float) -> np.ndarray:
    """Full M * n_rows matrix of the effective one-dimensional operator."""
    K = _half_kernel(m, float(k1))
    return K + K.conj().T


def effective_1d_active(m: LatticeModel, k1: float) -> np.ndarray:
    """Restriction of the effective operator to the active rows."""
    idx = m.active_index
    return effective_1d_hamiltonian(m, k1)[np.ix_(idx, idx)]


def _check_bulk_rows(m: LatticeModel):
    if m.boundary != TORUS:
        raise ValidationError("Bloch Hamiltonian requires a torus model")
    ref = m.hop[:, :1]
    if not np.array_equal(m.hop, np.broadcast_to(ref, m.hop.shape)):
        raise ValidationError("Bloch Hamiltonian requires a kernel independent of x2")


def bloch_hamiltonian(m: LatticeModel, k: Sequence[float]) -> np.ndarray:
    """V(k1) + A(k1) e^{-i k2} + A(k1)^dagger e^{i k2}."""
    _check_bulk_rows(m)
    return bloch_hamiltonian_batch(m, np.atleast_2d(np.asarray(k, float)))[0]


def bloch_hamiltonian_batch(m: LatticeModel, ks: np.ndarray) -> np.ndarray:
    """Bloch matrices for an array of momenta of shape (..., 2)."""
    _check_bulk_rows(m)
    ks = np.asarray(ks, float)
    k1 = ks[..., 0][..., None, None]
    k2 = ks[..., 1][..., None, None]
    h = m.hop[:, 0]
    e1 = np.exp(1j * k1)
    e2m = np.exp(-1j * k2)
    # the plane wave e^{-i k2 x2} picks up e^{-i k2} from the row above
    K = 0.5 * h[1, 1] + e1 * h[2, 1]
    K = K + e2m * (e1.conj() * h[0, 2] + h[1, 2] + e1 * h[2, 2])
    return K + np.swapaxes(K.conj(), -1, -2)


def haldane_bands_formula(p: HaldaneParams, k1, k2):
    """Closed-form Haldane bands (e_-, e_+) for the kernel above.

    The closed form is written in a second momentum whose orientation is
    opposite to the one of the plane-wave ansatz, so it is evaluated at
    ``-k2``.  The off-diagonal magnitude is ``t1 |1 + e^{-ik1} + e^{-ik2}|``.
    """
    k1 = np.asarray(k1, float)
    q2 = -np.asarray(k2, float)
    t1, t2, phi, W = p.t1, p.t2, p.phi, p.W
    omega = 1 + np.exp(-1j * k1) + np.exp(-1j * q2)
    mass = W - 2 * t2 * np.sin(phi) * (np.sin(k1 - q2) + np.sin(q2) - np.sin(k1))
    mean = -2 * t2 * np.cos(phi) * (np.cos(k1 - q2) + np.cos(q2) + np.cos(k1))
    root = np.sqrt(mass ** 2 + t1 ** 2 * np.abs(omega) ** 2)
    return mean - root, mean + root


def haldane_mass_at_K(p: HaldaneParams) -> float:
    """Mass at the Dirac point that closes the gap: W - 3 sqrt(3) t2 sin(phi)."""
    return p.W - 3 * np.sqrt(3) * p.t2 * np.sin(p.phi)


def k_grid(n: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


# ---------------------------------------------------------------------------
# validation


@dataclass
class ModelReport:
    violations: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def as_dict(self):
        return dict(self.violations)


def validate_model(m: LatticeModel) -> ModelReport:
    """List every invariant violation with its max-norm size."""
    rep = ModelReport()
    herm = 0.0
    for zi in range(3):
        for x2 in range(m.n_rows):
            for di in range(3):
                y2 = m.neighbour_row(x2, di - 1)
                blk = m.hop[zi, x2, di]
                if y2 is None:
                    if np.any(blk):
                        rep.violations["range"] = max(rep.violations.get("range", 0.0),
                                                      float(np.max(np.abs(blk))))
                    continue
                partner = m.hop[2 - zi, y2, 2 - di]
                herm = max(herm, float(np.max(np.abs(blk - partner.conj().T))))
    if herm > 0:
        rep.violations["hermiticity"] = herm
    if not np.all(np.isfinite(m.hop)):
        rep.violations["finite"] = float("inf")
    if m.boundary == CYLINDER:
        edge = 0.0
        for x2 in range(m.n_rows):
            for di in range(3):
                y2 = m.neighbour_row(x2, di - 1)
                if x2 in (0, m.L) or y2 in (0, m.L):
                    edge = max(edge, float(np.max(np.abs(m.hop[:, x2, di]))))
        if edge > 0:
            rep.violations["dirichlet"] = edge
    if m.spinful:
        half = m.M // 2
        up, dn = m.hop[..., :half, :half], m.hop[..., half:, half:]
        mix = max(float(np.max(np.abs(m.hop[..., :half, half:]))),
                  float(np.max(np.abs(m.hop[..., half:, :half]))))
        if mix > 0:
            rep.violations["spin_blocks"] = mix
        diff = float(np.max(np.abs(up - dn)))
        if diff > 0:
            rep.violations["spin_degeneracy"] = diff
    if m.interaction is not None:
        w = m.interaction
        sym = 0.0
        for zi in range(3):
            for x2 in range(m.n_rows):
                for di in range(3):
                    y2 = m.neighbour_row(x2, di - 1)
                    if y2 is None:
                        continue
                    sym = max(sym, float(np.max(np.abs(w[zi, x2, di] - w[2 - zi, y2, 2 - di].T))))
        if sym > 0:
            rep.violations["interaction_symmetry"] = sym
        if m.spinful:
            half = m.M // 2
            spin = float(np.max(np.abs(w[..., :half, :half] - w[..., half:, half:])))
            spin = max(spin, float(np.max(np.abs(w[..., :half, :half] - w[..., :half, half:]))))
            spin = max(spin, float(np.max(np.abs(w[..., :half, half:] - w[..., half:, :half]))))
            if spin > 0:
                rep.violations["interaction_spin"] = spin
    return rep
