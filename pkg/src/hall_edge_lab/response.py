"""Currents, free Euclidean correlators, Schwinger terms, Ward residuals and
edge transport coefficients.

Fourier conventions follow the lattice model: a_x = (1/L) sum_k e^{-i k x1} a_k,
so that H(k1) = sum_z e^{i k1 z} H(z) and

    sum_{x1} e^{i p1 x1} a+_{x1+s} K a_{x1+t} = sum_k e^{i k s - i (k+p1) t} c+_k K c_{k+p1}

with c_k = a_k / sqrt(L).  A vertex J(k, p1) therefore maps momentum k + p1
to k.  Time-ordered correlators are normalized by beta * L1 and are
connected; frequencies are bosonic Matsubara frequencies eta_beta.

All computations run on the active rows of the model (the Dirichlet rows of
a cylinder carry no states).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from .errors import DegenerateAtFermi, NonConvergent, ValidationError
from .lattice import CYLINDER, LatticeModel
from .spectral import default_workers, diagonalize_grid

# (from-offset, to-offset, weight) of the bond currents making up j_{1,x}, j_{2,x}
CELL_BONDS = {
    1: [((0, 0), (1, 0), 1.0), ((0, 0), (1, -1), 0.5), ((0, 0), (1, 1), 0.5),
        ((0, -1), (1, 0), 0.5), ((0, 1), (1, 0), 0.5)],
    2: [((0, 0), (0, 1), 1.0), ((0, 0), (-1, 1), 0.5), ((0, 0), (1, 1), 0.5),
        ((-1, 0), (0, 1), 0.5), ((1, 0), (0, 1), 0.5)],
}
# bonds entering the Schwinger term: the e1 bond and the four diagonals, weight 1/2
SCHWINGER_BONDS = [((0, 0), (1, 0), 1.0), ((0, 0), (1, 1), 0.5), ((0, 0), (1, -1), 0.5),
                   ((0, 0), (-1, 1), 0.5), ((0, 0), (-1, -1), 0.5)]

CHARGE, SPIN = "charge", "spin"

RowSpec = Union[int, Sequence[int]]


def _rows_of(spec: RowSpec) -> tuple[int, ...]:
    if isinstance(spec, (int, np.integer)):
        return (int(spec),)
    return tuple(int(r) for r in spec)


def snap_matsubara(eta: float, beta: float) -> float:
    """Nearest bosonic Matsubara frequency 2 pi n / beta."""
    if not np.isfinite(beta):
        return float(eta)
    w = 2 * np.pi / beta
    return float(np.rint(eta / w) * w)


def snap_momentum(p1: float, L1: int) -> tuple[float, int]:
    q = int(np.rint(p1 * L1 / (2 * np.pi)))
    return 2 * np.pi * q / L1, q


# ---------------------------------------------------------------------------
# one-body operators as term lists


@dataclass(frozen=True)
class Term:
    """a+_{(x1 + s1, row_u)} K a_{(x1 + t1, row_w)} summed over x1 with e^{i p1 x1}."""

    s1: int
    t1: int
    iu: int          # active-row index of the created particle
    iw: int          # active-row index of the annihilated particle
    K: np.ndarray


class OneBody:
    """A translation-invariant (in x1) one-body operator given by terms."""

    def __init__(self, m: LatticeModel, terms: list[Term]):
        self.m = m
        self.terms = terms

    def matrix(self, ks: np.ndarray, p1: float) -> np.ndarray:
        """Kernel at momenta ks (array) and transfer p1: shape (nk, n, n)."""
        ks = np.atleast_1d(np.asarray(ks, float))
        M = self.m.M
        n = M * len(self.m.active_rows)
        out = np.zeros((len(ks), n, n), complex)
        for t in self.terms:
            ph = np.exp(1j * (ks * t.s1 - (ks + p1) * t.t1))
            out[:, t.iu * M:(t.iu + 1) * M, t.iw * M:(t.iw + 1) * M] += ph[:, None, None] * t.K
        return out


def _active_lookup(m: LatticeModel):
    rows = m.active_rows
    pos = {int(r): i for i, r in enumerate(rows)}

    def lookup(x2: int) -> Optional[int]:
        if m.boundary == CYLINDER:
            return pos.get(x2)
        return pos.get(x2 % m.L)

    return lookup


def bond_current_terms(m: LatticeModel, x2: int, bonds, weight_sign: np.ndarray,
                       kind: str = "current") -> list[Term]:
    """Terms of sum_b w_b j_{x+a_b, x+b_b} (kind="current") or tau (kind="tau")."""
    look = _active_lookup(m)
    terms = []
    for (a1, a2), (b1, b2), w in bonds:
        ua, ub = x2 + a2, x2 + b2
        ia, ib = look(ua), look(ub)
        if ia is None or ib is None:
            continue
        Hab = m.kernel(a1 - b1, ua, b2 - a2)   # H(x+a, x+b)
        Hba = m.kernel(b1 - a1, ub, a2 - b2)   # H(x+b, x+a)
        if kind == "current":
            c1, c2 = 1j * w, -1j * w
        else:
            c1, c2 = w, w
        K1 = c1 * Hab * weight_sign[:, None] if weight_sign is not None else c1 * Hab
        K2 = c2 * Hba * weight_sign[:, None] if weight_sign is not None else c2 * Hba
        if np.any(K1):
            terms.append(Term(a1, b1, ia, ib, K1))
        if np.any(K2):
            terms.append(Term(b1, a1, ib, ia, K2))
    return terms


def _channel_sign(m: LatticeModel, channel: str) -> Optional[np.ndarray]:
    if channel == CHARGE:
        return None
    if channel == SPIN:
        return m.spin_sign()
    raise ValidationError(f"unknown channel {channel!r}")


def current_operator(m: LatticeModel, mu_idx: int, rows: RowSpec, channel: str = CHARGE) -> OneBody:
    """sum over x2 in rows of j_{mu,(p1, x2)} (mu = 0 density, 1, 2 currents)."""
    sign = _channel_sign(m, channel)
    look = _active_lookup(m)
    terms: list[Term] = []
    for x2 in _rows_of(rows):
        if mu_idx == 0:
            i = look(x2)
            if i is None:
                continue
            K = np.eye(m.M, dtype=complex) if sign is None else np.diag(sign).astype(complex)
            terms.append(Term(0, 0, i, i, K))
        elif mu_idx in (1, 2):
            terms.extend(bond_current_terms(m, x2, CELL_BONDS[mu_idx], sign))
        else:
            raise ValidationError(f"current index must be 0, 1 or 2, got {mu_idx}")
    return OneBody(m, terms)


def schwinger_operator(m: LatticeModel, y2: int, channel: str = CHARGE) -> OneBody:
    """tau_{y,y+e1} + 1/2 sum over the diagonal neighbours of tau_{y,z}."""
    _channel_sign(m, channel)
    # in the spin channel the commutator [rho^s, j^s] carries sigma^2 = 1
    return OneBody(m, bond_current_terms(m, y2, SCHWINGER_BONDS, None, kind="tau"))


@dataclass
class CurrentVertex:
    """Kernels J_mu(k1, p1) on the full M (L+1) (cylinder) or M L (torus) space."""

    m: LatticeModel
    p1: float
    channel: str = CHARGE

    def matrix(self, mu_idx: int, k1: float, rows: Optional[RowSpec] = None) -> np.ndarray:
        rows = tuple(int(r) for r in self.m.active_rows) if rows is None else rows
        act = current_operator(self.m, mu_idx, rows, self.channel).matrix(np.array([k1]), self.p1)[0]
        full = np.zeros((self.m.dim, self.m.dim), complex)
        idx = self.m.active_index
        full[np.ix_(idx, idx)] = act
        return full


def build_current_vertex(m: LatticeModel, p1: float, channel: str = CHARGE) -> CurrentVertex:
    return CurrentVertex(m, float(p1), channel)


# ---------------------------------------------------------------------------
# free-fermion data


def fermi(e: np.ndarray, beta: float) -> np.ndarray:
    if np.isinf(beta):
        return np.where(e < 0, 1.0, np.where(e > 0, 0.0, 0.5))
    return expit(-beta * e)


class FreeSystem:
    """Eigen-decomposition of a model on an L1-point k1 grid, per spin block.

    Spinful models are handled block by block: H and every vertex are block
    diagonal in spin, so correlators add up over the blocks (with sign
    factors in the spin channel).
    """

    def __init__(self, m: LatticeModel, L1: int, workers: Optional[int] = None):
        if L1 < 2:
            raise ValidationError("L1 must be at least 2")
        self.m = m
        self.L1 = int(L1)
        self.ks = 2 * np.pi * np.arange(self.L1) / self.L1
        self.blocks = m.spin_blocks() if m.spinful else [m]
        self.signs = [1.0, -1.0] if m.spinful else [1.0]
        self.eig = [diagonalize_grid(b, self.ks, workers or default_workers()) for b in self.blocks]

    # correlators ---------------------------------------------------------------
    def bubble(self, mu: float, beta: float, eta_beta: float, q: int,
               ops_x: list[list[OneBody]], ops_y: list[list[OneBody]],
               chunk: int = 256) -> np.ndarray:
        """sum_blocks (1/L1) sum_k sum_{a,b} X_ba Y_ab F_ab for lists of operators.

        ``ops_x[s][i]`` is operator i on block s (mapping k + p to k); the Y
        operators are evaluated at (k + p, -p).  Returns an array (nx, ny).
        """
        L1 = self.L1
        p1 = 2 * np.pi * q / L1
        nx, ny = len(ops_x[0]), len(ops_y[0])
        out = np.zeros((nx, ny), complex)
        for s, (e, v) in enumerate(self.eig):
            eps = e - mu
            occ = fermi(eps, beta)
            partial = np.zeros((nx, ny), complex)
            for c0 in range(0, L1, chunk):
                idx = np.arange(c0, min(c0 + chunk, L1))
                idp = (idx + q) % L1
                kb = self.ks[idx]
                Vb, Va = v[idx], v[idp]
                eb, ea = eps[idx], eps[idp]
                nb, na = occ[idx], occ[idp]
                F = _pair_factor(eb, ea, nb, na, eta_beta, beta)
                Xs = [np.conj(np.swapaxes(Vb, 1, 2)) @ op.matrix(kb, p1) @ Va for op in ops_x[s]]
                Ys = [np.conj(np.swapaxes(Va, 1, 2)) @ op.matrix(kb + p1, -p1) @ Vb for op in ops_y[s]]
                for i, X in enumerate(Xs):
                    XF = X * F
                    for j, Y in enumerate(Ys):
                        partial[i, j] += np.einsum("kba,kab->", XF, Y)
            out += partial
        return out / L1

    def expectation(self, mu: float, beta: float, ops: list[list[OneBody]],
                    chunk: int = 256) -> np.ndarray:
        """<O> per x1-cell, summed over blocks, for a list of operators at p1 = 0."""
        out = np.zeros(len(ops[0]), complex)
        for s, (e, v) in enumerate(self.eig):
            occ = fermi(e - mu, beta)
            for c0 in range(0, self.L1, chunk):
                idx = np.arange(c0, min(c0 + chunk, self.L1))
                vb = v[idx]
                for i, op in enumerate(ops[s]):
                    KV = op.matrix(self.ks[idx], 0.0) @ vb
                    out[i] += np.sum(vb.conj() * KV * occ[idx][:, None, :])
        return out / self.L1


def _pair_factor(eb, ea, nb, na, eta, beta, tol=1e-10):
    """(n_a - n_b) / (i eta + e_b - e_a) with the eta = 0 degenerate limit."""
    de = eb[:, :, None] - ea[:, None, :]
    dn = na[:, None, :] - nb[:, :, None]
    if eta != 0:
        return dn / (1j * eta + de)
    deg = np.abs(de) < tol
    with np.errstate(divide="ignore", invalid="ignore"):
        F = np.where(deg, 0.0, dn / np.where(deg, 1.0, de))
    if np.any(deg):
        if np.isinf(beta):
            if np.any(deg & (np.abs(eb[:, :, None]) < 1e-12)):
                raise DegenerateAtFermi("degenerate pair at the Fermi level with beta = inf")
        else:
            nm = 0.5 * (nb[:, :, None] + na[:, None, :])
            F = np.where(deg, beta * nm * (1 - nm), F)
    return F.astype(complex)


# ---------------------------------------------------------------------------
# public correlator API


@dataclass
class CorrelatorResult:
    values: np.ndarray
    mu_idx: int
    nu_idx: int
    x2_set: list
    y2_set: list
    beta: float
    L1: int
    eta_raw: float
    eta_beta: float
    p1_raw: float
    p1: float
    channel: str

    def as_dict(self):
        return {"mu": self.mu_idx, "nu": self.nu_idx, "x2_set": self.x2_set, "y2_set": self.y2_set,
                "beta": self.beta, "L1": self.L1, "eta_raw": self.eta_raw,
                "eta_beta": self.eta_beta, "p1_raw": self.p1_raw, "p1": self.p1,
                "channel": self.channel,
                "re": self.values.real.tolist(), "im": self.values.imag.tolist()}


def _block_ops(fs: FreeSystem, mu_idx: int, specs, channel: str):
    """Operators per spin block; the spin channel carries the block sign."""
    ops = []
    for s, blk in enumerate(fs.blocks):
        row = []
        for spec in specs:
            op = current_operator(blk, mu_idx, spec, CHARGE)
            if channel == SPIN and fs.m.spinful:
                op = OneBody(blk, [Term(t.s1, t.t1, t.iu, t.iw, fs.signs[s] * t.K) for t in op.terms])
            elif channel == SPIN:
                raise ValidationError("spin channel needs a spinful model")
            row.append(op)
        ops.append(row)
    return ops


def bubble_correlator(m: LatticeModel, mu: float, beta: float, eta: float, p1: float,
                      mu_idx: int, nu_idx: int, channel: str = CHARGE,
                      x2_set: Optional[Sequence[RowSpec]] = None,
                      y2_set: Optional[Sequence[RowSpec]] = None,
                      L1: Optional[int] = None, system: Optional[FreeSystem] = None) -> CorrelatorResult:
    """<T j_mu(eta_beta, p1, x2); j_nu(-eta_beta, -p1, y2)> / (beta L1) at lambda = 0.

    Entries of ``x2_set``/``y2_set`` are rows or collections of rows (summed).
    ``eta`` is snapped to the Matsubara lattice and ``p1`` to the k1 grid.
    """
    fs = system if system is not None else FreeSystem(m, L1 or m.L)
    rows = [int(r) for r in m.active_rows]
    x2_set = [rows] if x2_set is None else list(x2_set)
    y2_set = [rows] if y2_set is None else list(y2_set)
    eta_b = snap_matsubara(eta, beta)
    p1s, q = snap_momentum(p1, fs.L1)
    ox = _block_ops(fs, mu_idx, x2_set, channel)
    oy = _block_ops(fs, nu_idx, y2_set, channel)
    vals = fs.bubble(mu, beta, eta_b, q, ox, oy)
    return CorrelatorResult(vals, mu_idx, nu_idx, [list(_rows_of(s)) for s in x2_set],
                            [list(_rows_of(s)) for s in y2_set], beta, fs.L1, float(eta), eta_b,
                            float(p1), p1s, channel)


def schwinger_term(m: LatticeModel, mu: float, beta: float, y2: RowSpec, L1: Optional[int] = None,
                   system: Optional[FreeSystem] = None, channel: str = CHARGE) -> float:
    """Delta_{1, y2} summed over the rows in ``y2``, from the free density matrix."""
    fs = system if system is not None else FreeSystem(m, L1 or m.L)
    ops = [[OneBody(b, [t for r in _rows_of(y2) for t in schwinger_operator(b, r).terms])]
           for b in fs.blocks]
    val = fs.expectation(mu, beta, ops)[0]
    return float(val.real)


def schwinger_2pt_free(m: LatticeModel, mu: float, beta: float, x: Sequence[float],
                       y: Sequence[float], L1: Optional[int] = None,
                       system: Optional[FreeSystem] = None) -> np.ndarray:
    """Free two-point function <T a_x a+_y> as an M x M matrix over (r, r').

    ``x = (x0, x1, x2)``.  The imaginary time difference is brought into
    (-beta, beta] with the antiperiodic extension; tau = 0 is read as 0^-.
    """
    fs = system if system is not None else FreeSystem(m, L1 or m.L)
    tau = float(x[0]) - float(y[0])
    sign = 1.0
    if np.isfinite(beta):
        while tau > beta:
            tau -= beta
            sign = -sign
        while tau <= -beta:
            tau += beta
            sign = -sign
    dx1 = int(x[1]) - int(y[1])
    look = _active_lookup(m)
    ix, iy = look(int(x[2])), look(int(y[2]))
    out = np.zeros((m.M, m.M), complex)
    if ix is None or iy is None:
        return out
    phase = np.exp(-1j * fs.ks * dx1)
    half = m.M // 2 if m.spinful else m.M
    for s, (e, v) in enumerate(fs.eig):
        eps = e - mu
        if tau > 0:
            g = np.exp(-tau * eps - np.logaddexp(0, -beta * eps))
        else:
            g = -np.exp(-tau * eps - np.logaddexp(0, beta * eps))
        Mb = fs.blocks[s].M
        vx = v[:, ix * Mb:(ix + 1) * Mb, :]
        vy = v[:, iy * Mb:(iy + 1) * Mb, :]
        blk = np.einsum("k,krb,kb,ksb->rs", phase, vx, g, vy.conj()) / fs.L1
        sl = slice(s * half, (s + 1) * half)
        out[sl, sl] = blk
    return sign * out


# ---------------------------------------------------------------------------
# Ward identity


def ward_factors(eta_beta: float, p1: float) -> tuple[complex, complex]:
    """(eta_0 p_0, eta_1 p_1) = (i eta, i (1 - e^{i p1}))."""
    return 1j * eta_beta, 1j * (1 - np.exp(1j * p1))


def ward_residual(m: LatticeModel, mu: float, beta: float, p: Sequence[float], nu_idx: int,
                  channel: str = CHARGE, y2: Optional[RowSpec] = None, L1: Optional[int] = None,
                  system: Optional[FreeSystem] = None) -> tuple[float, float]:
    """|sum_mu eta_mu p_mu sum_x2 C_{mu nu}(y2) + eta_nu p_nu Delta_{nu, y2}| and its scale."""
    fs = system if system is not None else FreeSystem(m, L1 or m.L)
    rows = [int(r) for r in m.active_rows]
    y2 = rows[len(rows) // 2] if y2 is None else y2
    eta_b = snap_matsubara(p[0], beta)
    p1s, q = snap_momentum(p[1], fs.L1)
    f0, f1 = ward_factors(eta_b, p1s)
    c0 = fs.bubble(mu, beta, eta_b, q, _block_ops(fs, 0, [rows], channel),
                   _block_ops(fs, nu_idx, [y2], channel))[0, 0]
    c1 = fs.bubble(mu, beta, eta_b, q, _block_ops(fs, 1, [rows], channel),
                   _block_ops(fs, nu_idx, [y2], channel))[0, 0]
    terms = [f0 * c0, f1 * c1]
    if nu_idx == 1:
        delta = schwinger_term(m, mu, beta, y2, system=fs)
        terms.append(f1 * delta)
    elif nu_idx != 0:
        raise ValidationError("Ward residual implemented for nu in {0, 1}")
    res = abs(sum(terms))
    scale = max(max(abs(t) for t in terms), abs(c0), abs(c1), 1e-300)
    return float(res), float(scale)


# ---------------------------------------------------------------------------
# edge transport


def edge_conductance_matrix(m: LatticeModel, mu: float, beta: float, a: int, a_prime: int,
                            eta: float, p1: float, channel: str = CHARGE,
                            L1: Optional[int] = None, system: Optional[FreeSystem] = None):
    """G^a_{mu nu}(eta_beta, p1) for mu, nu in {0, 1}; returns (2x2 array, metadata)."""
    if not a > a_prime >= 1:
        raise ValidationError(f"need a > a' >= 1, got a={a}, a'={a_prime}")
    if m.boundary != CYLINDER:
        raise ValidationError("edge conductances need a cylinder model")
    fs = system if system is not None else FreeSystem(m, L1 or m.L)
    xs = list(range(1, a + 1))
    ys = list(range(1, a_prime + 1))
    eta_b = snap_matsubara(eta, beta)
    p1s, q = snap_momentum(p1, fs.L1)
    ox = [_block_ops(fs, mu_i, [xs], channel) for mu_i in (0, 1)]
    oy = [_block_ops(fs, nu_i, [ys], channel) for nu_i in (0, 1)]
    # one bubble call with both operators on each side
    merged_x = [[ox[0][s][0], ox[1][s][0]] for s in range(len(fs.blocks))]
    merged_y = [[oy[0][s][0], oy[1][s][0]] for s in range(len(fs.blocks))]
    C = fs.bubble(mu, beta, eta_b, q, merged_x, merged_y)
    delta = schwinger_term(m, mu, beta, ys, system=fs)
    G = C.copy()
    G[1, 1] += delta
    G[1, :] *= -1
    meta = {"eta_raw": float(eta), "eta_beta": eta_b, "p1_raw": float(p1), "p1": p1s,
            "a": a, "a_prime": a_prime, "beta": beta, "L1": fs.L1, "channel": channel}
    return G, meta


def _reflected_average(m, mu, beta, a, a_prime, eta, p1, channel, fs):
    """Mean of G^a at (eta, p1) and (-eta, -p1).

    The leading edge terms depend on (eta, p1) only through v p1 / eta and
    are invariant under the joint reflection; the average removes the odd
    part of the remainder, which otherwise dominates at the coarse eps-paths.
    """
    Gp, meta = edge_conductance_matrix(m, mu, beta, a, a_prime, eta, p1, channel, system=fs)
    Gm, _ = edge_conductance_matrix(m, mu, beta, a, a_prime, -eta, -p1, channel, system=fs)
    meta = dict(meta, reflected=True, raw_plus=_pairs(Gp), raw_minus=_pairs(Gm))
    return 0.5 * (Gp + Gm), meta


def _pairs(G):
    return [[G[i, j].real, G[i, j].imag] for i in range(2) for j in range(2)]


@dataclass
class Coefficient:
    name: str
    limit: float
    error: float
    raw: list = field(default_factory=list)
    imag: float = 0.0


@dataclass
class TransportCoefficients:
    kappa: Coefficient
    D: Coefficient
    G: Coefficient
    Gtilde: Coefficient
    reversed_G00: Coefficient
    channel: str

    def as_dict(self):
        out = {"channel": self.channel}
        for c in (self.kappa, self.D, self.G, self.Gtilde, self.reversed_G00):
            out[c.name] = {"value": c.limit, "imag_residue": c.imag, "error": c.error, "raw": c.raw}
        return out


def richardson(x: Sequence[float], y: Sequence[complex]) -> tuple[complex, float]:
    """Polynomial extrapolation to x = 0.

    Uses the full polynomial through all points and the line through the two
    smallest x; their difference is the error estimate.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, complex)
    order = np.argsort(x)
    x, y = x[order], y[order]
    if len(x) == 1:
        return complex(y[0]), float("inf")
    def fit(xs, ys):
        V = np.vander(xs, len(xs))
        c = np.linalg.solve(V, ys)
        return c[-1]
    lin = fit(x[:2], y[:2])
    full = fit(x, y) if len(x) > 2 else lin
    return complex(full), float(abs(full - lin))


def transport_limits(m: LatticeModel, mu: float, beta: Union[float, Sequence[float]],
                     eps_seq: Sequence[float], a: Union[int, Sequence[int]],
                     a_prime: Union[int, Sequence[int]], channel: str = CHARGE,
                     L1: int = 2048, system: Optional[FreeSystem] = None,
                     tolerance: float = 0.1) -> TransportCoefficients:
    """kappa, G along eta = eps^2, p1 = eps; D, G~ along p1 = eps^2, eta = eps.

    Every point is the average over the joint reflection (eta, p1) -> (-eta, -p1).
    The kappa/G path is extrapolated in the snapped p1; the D/G~ path in the
    snapped ratio p1 / eta_beta, the variable its leading term depends on.
    The limits are real; the real part of the extrapolant is reported and the
    imaginary residue is kept as a diagnostic.
    ``beta``, ``a`` and ``a_prime`` may be scalars or sequences matched to
    ``eps_seq``.
    """
    eps = [float(e) for e in eps_seq]
    if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
        raise ValidationError("eps sequence must be strictly decreasing")
    n = len(eps)

    def seq(v):
        return [v] * n if np.isscalar(v) else list(v)

    betas, As, Aps = seq(beta), seq(a), seq(a_prime)
    if not (len(betas) == len(As) == len(Aps) == n):
        raise ValidationError("beta, a, a' sequences must match the eps sequence")
    if any(b2 < b1 for b1, b2 in zip(betas, betas[1:])) or any(x2 < x1 for x1, x2 in zip(As, As[1:])):
        raise ValidationError("beta and a sequences must be non-decreasing")
    fs = system if system is not None else FreeSystem(m, L1)
    raw = {k: [] for k in ("kappa", "G", "D", "Gtilde", "G00_reversed")}
    xs = {"kg": [], "dg": []}
    for e, b, aa, ap in zip(eps, betas, As, Aps):
        G1, meta1 = _reflected_average(m, mu, b, aa, ap, e * e, e, channel, fs)
        G2, meta2 = _reflected_average(m, mu, b, aa, ap, e, e * e, channel, fs)
        if meta2["eta_beta"] == 0:
            raise ValidationError(f"eta = {e} snaps to zero at beta = {b}; use a larger beta")
        xs["kg"].append(meta1["p1"])
        xs["dg"].append(meta2["p1"] / meta2["eta_beta"])
        for name, val, meta in (("kappa", G1[0, 0], meta1), ("G", G1[0, 1], meta1),
                                ("D", G2[1, 1], meta2), ("Gtilde", G2[1, 0], meta2),
                                ("G00_reversed", G2[0, 0], meta2)):
            raw[name].append({"eps": e, "eta_beta": meta["eta_beta"], "p1": meta["p1"],
                              "a": aa, "a_prime": ap, "beta": b, "re": val.real, "im": val.imag})
    out = {}
    for name, key in (("kappa", "kg"), ("G", "kg"), ("D", "dg"), ("Gtilde", "dg"),
                      ("G00_reversed", "dg")):
        vals = [r["re"] + 1j * r["im"] for r in raw[name]]
        lim, err = richardson(xs[key], vals)
        ref = max(abs(lim), abs(vals[-1]))
        if name != "G00_reversed" and err > tolerance * ref:
            raise NonConvergent(f"{name}: extrapolants disagree by {err:.3g} (limit {lim:.6g})")
        out[name] = Coefficient(name, lim.real, err, raw[name], lim.imag)
    return TransportCoefficients(out["kappa"], out["D"], out["G"], out["Gtilde"],
                                 out["G00_reversed"], channel)


def expected_noninteracting(edges, side: int = 0, spin_sum: bool = True) -> dict:
    """Closed-form lambda = 0 coefficients from edge data on one side."""
    sel = [e for e in edges if e.side == side]
    return {
        "kappa": sum(1 / (2 * np.pi * abs(e.v_e)) for e in sel),
        "D": sum(abs(e.v_e) / (2 * np.pi) for e in sel),
        "G": -sum(e.omega / (2 * np.pi) for e in sel),
        "Gtilde": -sum(e.omega / (2 * np.pi) for e in sel),
    }
