"""Exact diagonalization on tiny lattices.

Modes are (x1, x2, r) with x1 periodic over L1 cells and x2 running over the
active rows of the model.  Fermion operators use the Jordan-Wigner sign
convention with mode index order (x1, row, r).  The Hamiltonian

    H = sum a+ H a + lambda sum (rho - 1/2) w (rho - 1/2) - mu N

conserves the particle number, so it is diagonalized densely in each number
sector.  Operators are passed around as sparse matrices on the 2^n Fock space
and moved to the eigenbasis sector by sector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import TooLarge, ValidationError
from .lattice import CYLINDER, LatticeModel
from .response import (CHARGE, SPIN, OneBody, Term, current_operator, schwinger_operator,
                       snap_matsubara, ward_factors)

MAX_MODES = 14


def _annihilators(n: int) -> list[sp.csr_matrix]:
    dim = 1 << n
    states = np.arange(dim)
    ops = []
    for j in range(n):
        occ = (states >> j) & 1
        src = states[occ == 1]
        below = np.array([bin(s & ((1 << j) - 1)).count("1") for s in src])
        sign = np.where(below % 2, -1.0, 1.0)
        ops.append(sp.csr_matrix((sign, (src ^ (1 << j), src)), shape=(dim, dim)))
    return ops


@dataclass
class _Sector:
    N: int
    idx: np.ndarray
    E: np.ndarray
    U: np.ndarray


class FockSystem:
    """Many-body system with its full spectrum, organised by particle number."""

    def __init__(self, m: LatticeModel, lam: float, L1: int, beta: float,
                 L2: Optional[int] = None):
        rows = [int(r) for r in m.active_rows]
        if L2 is not None and L2 != len(rows):
            raise ValidationError(f"model has {len(rows)} active rows, requested L2={L2}")
        n = L1 * len(rows) * m.M
        if n > MAX_MODES:
            raise TooLarge(f"{n} modes exceed the cap of {MAX_MODES}")
        if L1 < 2:
            raise ValidationError("L1 must be at least 2")
        self.m, self.lam, self.L1, self.beta = m, float(lam), int(L1), float(beta)
        self.rows = rows
        self.n_modes = n
        self.dim = 1 << n
        self.c = _annihilators(n)
        self.cd = [a.T.tocsr() for a in self.c]
        self._pair_cache: dict = {}
        occ = ((np.arange(self.dim)[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
        self.occupation = occ
        self.number = occ.sum(1)
        self.H = self._hamiltonian()
        self.sectors = []
        for N in range(n + 1):
            idx = np.flatnonzero(self.number == N)
            h = self.H[idx][:, idx].toarray()
            E, U = np.linalg.eigh(h)
            self.sectors.append(_Sector(N, idx, E, U))
        self.E0 = min(s.E.min() for s in self.sectors)
        self._weights()

    # construction --------------------------------------------------------------
    def mode(self, x1: int, x2: int, r: int) -> int:
        i = self.rows.index(x2)
        return ((x1 % self.L1) * len(self.rows) + i) * self.m.M + r

    def one_body(self, op: OneBody, p1: float = 0.0) -> sp.csr_matrix:
        """sum_{x1} e^{i p1 x1} (terms of op) as a Fock-space matrix."""
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        M = self.m.M
        for t in op.terms:
            ru, rw = self.rows[t.iu], self.rows[t.iw]
            for x1 in range(self.L1):
                ph = np.exp(1j * p1 * x1)
                for r in range(M):
                    for rp in range(M):
                        k = t.K[r, rp]
                        if k == 0:
                            continue
                        i = self.mode(x1 + t.s1, ru, r)
                        j = self.mode(x1 + t.t1, rw, rp)
                        out = out + (ph * k) * self.hop_pair(i, j)
        return out.tocsr()

    def hop_pair(self, i: int, j: int) -> sp.csr_matrix:
        """a+_i a_j, cached."""
        key = (i, j)
        if key not in self._pair_cache:
            self._pair_cache[key] = (self.cd[i] @ self.c[j]).tocsr()
        return self._pair_cache[key]

    def _hamiltonian(self) -> sp.csr_matrix:
        m = self.m
        look = {r: i for i, r in enumerate(self.rows)}
        terms = []
        for z1, x2, d, blk in m.hopping_terms():
            y2 = m.neighbour_row(x2, d)
            if x2 not in look or y2 not in look:
                continue
            terms.append(Term(0, -z1, look[x2], look[y2], blk))
        H = self.one_body(OneBody(m, terms))
        diag = -m.mu * self.number
        if self.lam != 0 and m.interaction is not None:
            occ = self.occupation - 0.5
            inter = np.zeros(self.dim)
            for zi in range(3):
                for x2 in self.rows:
                    for di in range(3):
                        y2 = m.neighbour_row(x2, di - 1)
                        if y2 not in look:
                            continue
                        w = m.interaction[zi, x2, di]
                        if not np.any(w):
                            continue
                        for x1 in range(self.L1):
                            for r in range(m.M):
                                for rp in range(m.M):
                                    if w[r, rp] == 0:
                                        continue
                                    i = self.mode(x1, x2, r)
                                    j = self.mode(x1 - (zi - 1), y2, rp)
                                    inter += w[r, rp] * occ[:, i] * occ[:, j]
            diag = diag + self.lam * inter
        return (H + sp.diags(diag)).tocsr()

    def _weights(self):
        if np.isinf(self.beta):
            raise ValidationError("ED needs a finite beta")
        logw = [-self.beta * (s.E - self.E0) for s in self.sectors]
        Z = sum(np.exp(lw).sum() for lw in logw)
        self.Z = Z
        self.p = [np.exp(lw) / Z for lw in logw]

    def with_beta(self, beta: float) -> "FockSystem":
        other = object.__new__(FockSystem)
        other.__dict__.update(self.__dict__)
        other.beta = float(beta)
        other._weights()
        return other

    # eigenbasis helpers --------------------------------------------------------
    def blocks(self, A) -> dict:
        """{(i, j): U_i^dag A[sector i, sector j] U_j} for nonzero sector blocks."""
        A = sp.csr_matrix(A)
        out = {}
        for si in self.sectors:
            rowsA = A[si.idx]
            for sj in self.sectors:
                blk = rowsA[:, sj.idx]
                if blk.nnz == 0:
                    continue
                out[(si.N, sj.N)] = si.U.conj().T @ (blk @ sj.U)
        return out

    def expectation(self, A) -> complex:
        val = 0.0
        for (i, j), blk in self.blocks(A).items():
            if i == j:
                val += np.sum(self.p[i] * np.diag(blk))
        return complex(val)

    def gibbs_normalization(self) -> float:
        return float(sum(p.sum() for p in self.p))

    def spectrum(self) -> np.ndarray:
        return np.sort(np.concatenate([s.E for s in self.sectors]))


def build_fock_system(m: LatticeModel, lam: float, L1: int, L2: Optional[int] = None,
                      beta: float = 10.0) -> FockSystem:
    return FockSystem(m, lam, L1, beta, L2)


# ---------------------------------------------------------------------------
# correlators


def _pairs(sys: FockSystem, A, B):
    """Yield (E_m, E_n, p_m, p_n, A_mn * B_nm) for all sector pairs (m in i, n in j)."""
    Ab, Bb = sys.blocks(A), sys.blocks(B)
    for (i, j), a in Ab.items():
        b = Bb.get((j, i))
        if b is None:
            continue
        yield (sys.sectors[i].E, sys.sectors[j].E, sys.p[i], sys.p[j], a * b.T)


def ed_time_ordered(sys: FockSystem, A, B, x0: float, fermionic: bool = False) -> complex:
    """<T A(x0) B> for -beta < x0 < beta, with x0 = 0 read as 0^- for fermions."""
    beta, E0 = sys.beta, sys.E0
    if not -beta < x0 < beta:
        raise ValidationError("x0 must lie in (-beta, beta)")
    later = x0 > 0 or (x0 == 0 and not fermionic)
    total = 0.0
    if later:
        for Em, En, _, _, ab in _pairs(sys, A, B):
            ex = -(beta - x0) * (Em - E0)[:, None] - x0 * (En - E0)[None, :]
            total += np.sum(np.exp(ex) * ab) / sys.Z
        return complex(total)
    # x0 <= 0: -/+ <B A(x0)>
    s = -1.0 if fermionic else 1.0
    for Em, En, _, _, ba in _pairs(sys, B, A):
        # <B A(x0)> = sum p_m B_mn A_nm e^{x0 (E_n - E_m)}
        ex = -(beta + x0) * (Em - E0)[:, None] + x0 * (En - E0)[None, :]
        total += np.sum(np.exp(ex) * ba) / sys.Z
    return complex(s * total)


def ed_matsubara(sys: FockSystem, A, B, p0: float, connected: bool = True) -> complex:
    """int_0^beta dx0 e^{i p0 x0} <T A(x0) B> for bosonic (number-conserving) A, B."""
    beta = sys.beta
    total = 0.0
    for Em, En, pm, pn, ab in _pairs(sys, A, B):
        w = Em[:, None] - En[None, :]
        den = 1j * p0 + w
        deg = np.abs(den) < 1e-12
        num = pn[None, :] - pm[:, None]
        val = np.where(deg, beta * pm[:, None] * np.ones_like(w), num / np.where(deg, 1.0, den))
        total += np.sum(val * ab)
    if connected and p0 == 0:
        total -= beta * sys.expectation(A) * sys.expectation(B)
    return complex(total)


def ed_correlator(sys: FockSystem, mu_idx: int, nu_idx: int, eta: float, p1: float,
                  x2_rows, y2_rows, channel: str = CHARGE) -> complex:
    """Same normalization as the bubble: <T j_mu(p, x2); j_nu(-p, y2)> / (beta L1)."""
    eta_b = snap_matsubara(eta, sys.beta)
    A = sys.one_body(current_operator(sys.m, mu_idx, x2_rows, channel), p1)
    B = sys.one_body(current_operator(sys.m, nu_idx, y2_rows, channel), -p1)
    return ed_matsubara(sys, A, B, eta_b) / sys.L1


def ed_schwinger_term(sys: FockSystem, y2_rows, channel: str = CHARGE) -> float:
    op = OneBody(sys.m, [t for r in np.atleast_1d(y2_rows)
                         for t in schwinger_operator(sys.m, int(r), channel).terms])
    return float(sys.expectation(sys.one_body(op)).real / sys.L1)


def ed_ward_check(sys: FockSystem, p: Sequence[float], nu_idx: int, channel: str = CHARGE,
                  y2: Optional[int] = None) -> tuple[float, float]:
    """Residual of the summed Ward identity from ED correlators; returns (residual, scale)."""
    rows = sys.rows
    y2 = rows[len(rows) // 2] if y2 is None else y2
    eta_b = snap_matsubara(p[0], sys.beta)
    q = int(np.rint(p[1] * sys.L1 / (2 * np.pi)))
    p1 = 2 * np.pi * q / sys.L1
    f0, f1 = ward_factors(eta_b, p1)
    c0 = ed_correlator(sys, 0, nu_idx, eta_b, p1, rows, y2, channel)
    c1 = ed_correlator(sys, 1, nu_idx, eta_b, p1, rows, y2, channel)
    terms = [f0 * c0, f1 * c1]
    if nu_idx == 1:
        terms.append(f1 * ed_schwinger_term(sys, y2, channel))
    res = abs(sum(terms))
    scale = max(max(abs(t) for t in terms), abs(c0), abs(c1), 1e-300)
    return float(res), float(scale)


# ---------------------------------------------------------------------------
# Wick rotation


@dataclass
class WickResult:
    real_time_side: complex
    imaginary_time_side: complex
    error: float
    shape: float            # 1/(eta^2 beta) + e^{-eta T}
    bound: Optional[float]  # C * shape when C is known
    eta_beta: float


def wick_rotation_check(sys: FockSystem, A, B, T: float, eta: float,
                        C: Optional[float] = None) -> WickResult:
    """Real-time Kubo integral vs its Wick-rotated imaginary-time form.

    lhs = int_{-T}^0 dt e^{eta t} <[A(t), B]> / L1
    rhs = i int_0^beta dt e^{-i eta_beta t} <A(-it) B> / L1
    """
    if eta <= 0 or T <= 0:
        raise ValidationError("need eta > 0 and T > 0")
    beta = sys.beta
    eta_b = snap_matsubara(eta, beta)
    lhs = 0.0
    rhs = 0.0
    for Em, En, pm, pn, ab in _pairs(sys, A, B):
        w = Em[:, None] - En[None, :]
        z = eta + 1j * w
        lhs += np.sum(ab * (pm[:, None] - pn[None, :]) * (1 - np.exp(-z * T)) / z)
        den = w - 1j * eta_b
        deg = np.abs(den) < 1e-12
        val = np.where(deg, beta * pm[:, None] * np.ones_like(w),
                       (pn[None, :] - pm[:, None]) / np.where(deg, 1.0, den))
        rhs += 1j * np.sum(val * ab)
    lhs, rhs = complex(lhs) / sys.L1, complex(rhs) / sys.L1
    shape = 1 / (eta ** 2 * beta) + np.exp(-eta * T)
    return WickResult(lhs, rhs, abs(lhs - rhs), shape, None if C is None else C * shape, eta_b)


def wick_sweep(sys: FockSystem, A, B, eta: float, betas: Sequence[float], Ts: Sequence[float]):
    """Errors over a (beta, T) grid, the fitted constant C and the beta slope.

    The slope is the log-log fit of the error against beta at the largest T.
    """
    errs = np.zeros((len(betas), len(Ts)))
    shapes = np.zeros_like(errs)
    for i, b in enumerate(betas):
        s = sys.with_beta(b)
        for j, T in enumerate(Ts):
            r = wick_rotation_check(s, A, B, T, eta)
            errs[i, j] = r.error
            shapes[i, j] = r.shape
    C = float(np.max(errs / shapes))
    slope = float(np.polyfit(np.log(betas), np.log(errs[:, -1]), 1)[0])
    return {"errors": errs, "shapes": shapes, "C": C, "beta_slope": slope,
            "betas": list(map(float, betas)), "Ts": list(map(float, Ts))}


def quarter_offset_betas(eta: float, ns: Sequence[int]) -> list[float]:
    """beta values with eta beta / 2pi = n + 1/4, so |eta - eta_beta| = pi / (2 beta)."""
    return [2 * np.pi * (n + 0.25) / eta for n in ns]
