"""Closed-form chiral Luttinger reference model.

The reference model is a one-dimensional chiral fermion with velocity
``v_ref``, coupling ``lambda_ref`` and wave-function renormalization
``Z_ref``.  All quantities here are explicit formulas:

    tau = lambda_ref / (2 pi v_ref),   v_s = v_ref,   v_c = v_ref (1 + tau) / (1 - tau)

together with the transport coefficients of each channel, the density
correlators and the spin-charge separated propagator.  The lattice model
enters only through :func:`first_order_match`, which computes the overlap
coefficient ``A`` of an edge state with the interaction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AnomalyOutOfRange, OriginSingularity, PoleHit, ValidationError
from .lattice import LatticeModel

CHARGE = "charge"
SPIN = "spin"
CHANNELS = (CHARGE, SPIN)


@dataclass(frozen=True)
class RefModelParams:
    lambda_ref: float
    v_ref: float
    Z_ref: float = 1.0
    omega: int = 1

    def __post_init__(self):
        if not self.v_ref > 0:
            raise ValidationError(f"v_ref must be positive, got {self.v_ref}")
        if not self.Z_ref > 0:
            raise ValidationError(f"Z_ref must be positive, got {self.Z_ref}")
        if self.omega not in (1, -1):
            raise ValidationError(f"omega must be +1 or -1, got {self.omega}")
        tau = self.lambda_ref / (2 * np.pi * self.v_ref)
        if abs(tau) >= 1:
            raise AnomalyOutOfRange(f"|tau| = {abs(tau):.6g} >= 1")

    @property
    def tau(self) -> float:
        return self.lambda_ref / (2 * np.pi * self.v_ref)

    @property
    def v_s(self) -> float:
        return self.v_ref

    @property
    def v_c(self) -> float:
        t = self.tau
        return self.v_ref * (1 + t) / (1 - t)

    def velocity(self, channel: str) -> float:
        if channel == CHARGE:
            return self.v_c
        if channel == SPIN:
            return self.v_s
        raise ValidationError(f"unknown channel {channel!r}")


def anomaly_and_velocities(lambda_ref: float, v_ref: float) -> tuple[float, float, float]:
    """(tau, v_s, v_c)."""
    p = RefModelParams(lambda_ref, v_ref)
    return p.tau, p.v_s, p.v_c


def _D(omega: int, v: float, p0: float, p1: float) -> complex:
    return -1j * p0 + omega * v * p1


def density_correlator(params: RefModelParams, p: Sequence[float], channel: str = CHARGE,
                       w_hat: Optional[Callable[[float, float], float]] = None,
                       pole_tol: float = 1e-14) -> complex:
    """<n_p ; n_-p> of the given channel.

    ``w_hat`` defaults to the constant 1; pass a callable (p0, p1) -> w for
    the momentum-dependent version of the charge formula.
    """
    p0, p1 = float(p[0]), float(p[1])
    if p0 == 0 and p1 == 0:
        raise ValidationError("density correlator needs p != 0")
    om, v, Z = params.omega, params.v_ref, params.Z_ref
    pref = -1.0 / (2 * np.pi * v * Z ** 2)
    num = _D(-om, v, p0, p1)
    if channel == SPIN:
        den = _D(om, v, p0, p1)
        if abs(den) <= pole_tol * max(1.0, abs(p0), abs(p1)):
            raise PoleHit(f"spin pole at p = ({p0}, {p1})")
        return complex(pref * num / den)
    if channel != CHARGE:
        raise ValidationError(f"unknown channel {channel!r}")
    w = 1.0 if w_hat is None else float(w_hat(p0, p1))
    tw = params.tau * w
    if abs(1 - tw) < 1e-15:
        raise AnomalyOutOfRange("tau * w_hat(p) = 1")
    den = -1j * p0 + om * v * (1 + tw) / (1 - tw) * p1
    if abs(den) <= pole_tol * max(1.0, abs(p0), abs(p1)):
        raise PoleHit(f"charge pole at p = ({p0}, {p1})")
    return complex(pref * num / ((1 - tw) * den))


@dataclass(frozen=True)
class ChannelTransport:
    kappa: float
    D: float
    G: float
    Gtilde: float
    velocity: float

    def as_dict(self):
        return {"kappa": self.kappa, "D": self.D, "G": self.G, "Gtilde": self.Gtilde,
                "velocity": self.velocity}


def transport_closed_form(params: RefModelParams) -> dict[str, ChannelTransport]:
    """kappa = 1/(pi v), D = v/pi, G = Gtilde = -omega/pi for each channel."""
    out = {}
    for ch in CHANNELS:
        v = params.velocity(ch)
        g = -params.omega / np.pi
        out[ch] = ChannelTransport(1 / (np.pi * v), v / np.pi, g, g, v)
    return out


def transport_at_momentum(params: RefModelParams, eta: float, p1: float,
                          channel: str = CHARGE) -> ChannelTransport:
    """Finite-(eta, p1) leading forms; they reduce to the closed form in the right limits."""
    v, om = params.velocity(channel), params.omega
    den = -1j * eta + om * v * p1
    if den == 0:
        raise PoleHit("eta = p1 = 0")
    f_static = om * v * p1 / den
    f_dyn = -1j * eta / den
    return ChannelTransport(f_static / (np.pi * v), v / np.pi * f_dyn, -om / np.pi * f_static,
                            -om / np.pi * f_dyn, v)


# ---------------------------------------------------------------------------
# matching to the lattice model


def zero_momentum_kernel(m: LatticeModel, w: Optional[np.ndarray] = None) -> np.ndarray:
    """w_hat(0; x2, y2)_{r r'} as a dense (n_rows M) x (n_rows M) matrix."""
    w = m.interaction if w is None else np.asarray(w)
    if w is None:
        return np.zeros((m.dim, m.dim))
    n, M = m.n_rows, m.M
    W = np.zeros((n * M, n * M), dtype=w.dtype)
    for x2 in range(n):
        for di in range(3):
            y2 = m.neighbour_row(x2, di - 1)
            if y2 is None or not 0 <= y2 < n:
                continue
            W[x2 * M:(x2 + 1) * M, y2 * M:(y2 + 1) * M] += w[:, x2, di].sum(0)
    return W


def overlap_direct(m: LatticeModel, w: np.ndarray, xi: np.ndarray) -> float:
    """A by the explicit quadruple sum over (x2, y2, r, r')."""
    n, M = m.n_rows, m.M
    rho = np.abs(xi.reshape(n, M)) ** 2
    total = 0.0
    for x2 in range(n):
        for di in range(3):
            y2 = m.neighbour_row(x2, di - 1)
            if y2 is None or not 0 <= y2 < n:
                continue
            blk = w[:, x2, di].sum(0)
            for r in range(M):
                for rp in range(M):
                    total += blk[r, rp] * rho[x2, r] * rho[y2, rp]
    return float(np.real(total))


def overlap_quadratic(m: LatticeModel, w: np.ndarray, xi: np.ndarray) -> float:
    """A as the quadratic form rho^T W rho with rho = |xi|^2."""
    rho = np.abs(xi) ** 2
    return float(np.real(rho @ zero_momentum_kernel(m, w) @ rho))


@dataclass(frozen=True)
class FirstOrderMatch:
    A: float
    lambda_ref: float
    v_c: float
    v_s: float

    def as_dict(self):
        return {"A": self.A, "lambda_ref": self.lambda_ref, "v_c": self.v_c, "v_s": self.v_s}


def first_order_match(m: LatticeModel, edge, lam: float, w: Optional[np.ndarray] = None,
                      norm_tol: float = 1e-10) -> FirstOrderMatch:
    """Overlap A, the coupling lambda_ref = A lambda and the leading velocities.

    v_c is |v_e| at this order; v_s = |v_e| - (A / pi) lambda.
    """
    xi = np.asarray(edge.xi if hasattr(edge, "xi") else edge)
    if abs(np.linalg.norm(xi) - 1) > norm_tol:
        raise ValidationError(f"edge vector is not normalized (norm {np.linalg.norm(xi):.12g})")
    w = m.interaction if w is None else np.asarray(w)
    A = 0.0 if w is None else overlap_quadratic(m, w, xi)
    v = abs(edge.v_e) if hasattr(edge, "v_e") else 1.0
    return FirstOrderMatch(A, A * lam, v, v - A * lam / np.pi)


def splitting_check(A: float, v: float, lam: float) -> tuple[float, float]:
    """(exact v_c - v_s at lambda_ref = A lam, its relative error against A lam / pi)."""
    p = RefModelParams(A * lam, v)
    exact = p.v_c - p.v_s
    lead = A * lam / np.pi
    return exact, abs(exact - lead) / abs(lead)


# ---------------------------------------------------------------------------
# propagator


def spin_charge_propagator(params: RefModelParams, dx: Sequence[float], Z: Optional[float] = None) -> complex:
    """1 / (Z sqrt((v_s dx0 + i w dx1)(v_c dx0 + i w dx1))).

    Each factor takes the principal square root.  For dx1 != 0 neither
    factor crosses the negative real axis as dx0 varies, and on the dx1 = 0
    ray the product of the two roots is sqrt(v_s v_c) dx0, so the result is
    continuous along dx0 and odd under dx -> -dx.
    """
    d0, d1 = float(dx[0]), float(dx[1])
    if d0 == 0 and d1 == 0:
        raise OriginSingularity("propagator evaluated at coinciding points")
    Z = params.Z_ref if Z is None else Z
    om = params.omega
    a = complex(params.v_s * d0, om * d1)
    b = complex(params.v_c * d0, om * d1)
    return complex(1.0 / (Z * np.sqrt(a) * np.sqrt(b)))


# ---------------------------------------------------------------------------
# report


def reference_report(params: RefModelParams) -> dict:
    tr = transport_closed_form(params)
    checks = {}
    for ch, t in tr.items():
        checks[f"D_minus_kappa_v2_{ch}"] = t.D - t.kappa * t.velocity ** 2
        checks[f"G_plus_omega_over_pi_{ch}"] = t.G + params.omega / np.pi
    return {
        "tau": params.tau, "v_s": params.v_s, "v_c": params.v_c,
        "kappa": {ch: t.kappa for ch, t in tr.items()},
        "D": {ch: t.D for ch, t in tr.items()},
        "G": {ch: t.G for ch, t in tr.items()},
        "Gtilde": {ch: t.Gtilde for ch, t in tr.items()},
        "checks": checks,
    }
