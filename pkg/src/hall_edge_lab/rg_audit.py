"""Bookkeeping audits for the multiscale expansion.

Four independent pieces:

* scaling dimensions of tree vertices with and without the gain from
  renormalization;
* enumeration of scale-labelled trees, streamed lazily;
* the flow of the running couplings (Z, v, nu, lambda) under a
  user-supplied beta function whose envelope is checked scale by scale;
* the fixed-point problem that fixes the counterterm sequence nu_k.

Trees.  An unlabelled shape is a plane tree whose endpoints are the leaves
and whose inner vertices have at least two children.  Shapes are nested
tuples: ``()`` is an endpoint, ``(s1, s2, ...)`` an inner vertex.  A
labelling assigns a scale to every inner vertex: the top one sits at or
above h + 1, every other one strictly above its parent, all at most 0.
The vertex v0 at scale h + 1 follows the root; when the top inner vertex is
labelled h + 1 it is v0 itself.  Endpoints sit one scale above their parent.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import BetaBoundViolated, NoContraction, NonConvergent, TooLarge, ValidationError

MAX_ENDPOINTS = 8
MIN_ROOT_SCALE = -12


# ---------------------------------------------------------------------------
# scaling dimensions


def dimensional_gain(nPsi: int, nPhi: int = 0, nA: int = 0) -> int:
    if nPhi == 0 and nA == 0:
        return {2: 2, 4: 1}.get(nPsi, 0)
    if (nPsi, nPhi, nA) == (2, 0, 1):
        return 1
    return 0


def scaling_dimension(nPsi: int, nPhi: int = 0, nA: int = 0, renormalized: bool = True) -> int:
    """D = nPsi/2 + nPhi/2 + nA - 2 + z, with z = 0 unless renormalized."""
    for name, v in (("nPsi", nPsi), ("nPhi", nPhi), ("nA", nA)):
        if int(v) != v or v < 0:
            raise ValidationError(f"{name} must be a non-negative integer, got {v}")
    if nPsi % 2:
        raise ValidationError(f"nPsi must be even, got {nPsi}")
    if nPhi % 2:
        raise ValidationError(f"nPhi must be even for an integer dimension, got {nPhi}")
    z = dimensional_gain(nPsi, nPhi, nA) if renormalized else 0
    return nPsi // 2 + nPhi // 2 + nA - 2 + z


def dimension_table(max_fields: int = 10, renormalized: bool = True) -> dict:
    """{(nPsi, nPhi, nA): D} over all admissible multi-indices with total <= max_fields."""
    out = {}
    for nPsi in range(0, max_fields + 1, 2):
        for nPhi in range(0, max_fields - nPsi + 1, 2):
            for nA in range(0, max_fields - nPsi - nPhi + 1):
                out[(nPsi, nPhi, nA)] = scaling_dimension(nPsi, nPhi, nA, renormalized)
    return out


# ---------------------------------------------------------------------------
# trees


Shape = tuple


def _compositions(n: int, parts_min: int = 2) -> Iterator[tuple[int, ...]]:
    """Ordered compositions of n into at least parts_min positive parts."""
    for k in range(parts_min, n + 1):
        for cuts in itertools.combinations(range(1, n), k - 1):
            bounds = (0,) + cuts + (n,)
            yield tuple(bounds[i + 1] - bounds[i] for i in range(k))


@lru_cache(maxsize=None)
def unlabeled_shapes(n: int) -> tuple[Shape, ...]:
    """All plane shapes with n endpoints and inner vertices of degree >= 2."""
    if n < 1:
        raise ValidationError("a tree needs at least one endpoint")
    if n == 1:
        return ((),)
    out = []
    for comp in _compositions(n):
        for kids in itertools.product(*(unlabeled_shapes(c) for c in comp)):
            out.append(tuple(kids))
    return tuple(out)


def inner_vertices(shape: Shape, path: tuple = ()) -> list[tuple]:
    """Paths (child-index tuples) of the inner vertices, parents before children."""
    if shape == ():
        return []
    out = [path]
    for i, s in enumerate(shape):
        out.extend(inner_vertices(s, path + (i,)))
    return out


def endpoints(shape: Shape, path: tuple = ()) -> list[tuple]:
    if shape == ():
        return [path]
    out = []
    for i, s in enumerate(shape):
        out.extend(endpoints(s, path + (i,)))
    return out


def n_endpoints(shape: Shape) -> int:
    return 1 if shape == () else sum(n_endpoints(s) for s in shape)


@dataclass(frozen=True)
class GNTree:
    shape: Shape
    h_root: int
    scales: Mapping[tuple, int]        # inner-vertex path -> scale

    @property
    def n(self) -> int:
        return n_endpoints(self.shape)

    def scale(self, path: tuple) -> int:
        """Scale of any vertex; endpoints sit one above their parent."""
        if path in self.scales:
            return self.scales[path]
        if path == ():                 # single-endpoint tree
            return self.h_root + 2
        return self.scales[path[:-1]] + 1

    def parent_scale(self, path: tuple) -> int:
        if path == ():
            # the top vertex hangs below v0, unless it is v0 itself
            top = self.scales.get(())
            return self.h_root if top == self.h_root + 1 else self.h_root + 1
        return self.scale(path[:-1])


def _labelings(shape: Shape, path: tuple, lower: int, top: int) -> Iterator[dict]:
    if shape == ():
        yield {}
        return
    for h in range(lower, top + 1):
        child_iters = [list(_labelings(s, path + (i,), h + 1, top)) for i, s in enumerate(shape)]
        if not all(child_iters):
            continue
        for combo in itertools.product(*child_iters):
            d = {path: h}
            for c in combo:
                d.update(c)
            yield d


def _check_caps(n: int, h_root: int):
    if n > MAX_ENDPOINTS:
        raise TooLarge(f"n = {n} exceeds the cap of {MAX_ENDPOINTS} endpoints")
    if h_root < MIN_ROOT_SCALE:
        raise TooLarge(f"h_root = {h_root} is below the cap {MIN_ROOT_SCALE}")
    if h_root > -1:
        raise ValidationError("h_root must be at most -1")


def scale_labelings(shape: Shape, h_root: int) -> Iterator[GNTree]:
    _check_caps(n_endpoints(shape), h_root)
    for d in _labelings(shape, (), h_root + 1, 0):
        yield GNTree(shape, h_root, d)


@lru_cache(maxsize=None)
def _count_from(shape: Shape, lower: int) -> int:
    if shape == ():
        return 1
    total = 0
    for h in range(lower, 1):
        prod = 1
        for c in shape:
            prod *= _count_from(c, h + 1)
        total += prod
    return total


def count_labelings(shape: Shape, h_root: int) -> int:
    """Number of labellings by recursion over subtrees (no enumeration)."""
    return _count_from(shape, h_root + 1)


@dataclass
class TreeCensus:
    n: int
    h_root: int
    unlabeled: int
    labeled: int
    bound: int

    def as_dict(self):
        return {"n": self.n, "h_root": self.h_root, "unlabeled": self.unlabeled,
                "labeled": self.labeled, "bound_4_pow_n": self.bound}


def enumerate_trees(n: int, h_root: int) -> tuple[Iterator[GNTree], TreeCensus]:
    """Lazy stream of all labelled trees, plus the counts."""
    _check_caps(n, h_root)
    shapes = unlabeled_shapes(n)
    if len(shapes) > 4 ** n:
        raise NonConvergent(f"{len(shapes)} unlabeled shapes exceed 4^{n}")
    census = TreeCensus(n, h_root, len(shapes), sum(count_labelings(s, h_root) for s in shapes), 4 ** n)

    def stream():
        for s in shapes:
            yield from scale_labelings(s, h_root)

    return stream(), census


# ---------------------------------------------------------------------------
# dimensional bound


FieldCount = tuple  # (nPsi, nPhi, nA)


@dataclass
class BoundAudit:
    log2_factor: float                  # sum of -(h_v - h_v') D_v over inner vertices
    dims: dict
    summable: bool
    log2_factor_bare: float
    dims_bare: dict
    summable_bare: bool

    @property
    def factor(self) -> float:
        return 2.0 ** self.log2_factor

    def as_dict(self):
        return {"log2_factor": self.log2_factor, "summable": self.summable,
                "log2_factor_bare": self.log2_factor_bare, "summable_bare": self.summable_bare,
                "dims": {str(k): v for k, v in self.dims.items()},
                "dims_bare": {str(k): v for k, v in self.dims_bare.items()}}


def _check_fields(tree: GNTree, P: Mapping[tuple, FieldCount]):
    for ep in endpoints(tree.shape):
        if ep not in P:
            raise ValidationError(f"missing field counts for endpoint {ep}")
    for v in sorted(inner_vertices(tree.shape), key=len, reverse=True):
        if v not in P:
            raise ValidationError(f"missing field counts for vertex {v}")
        kids = [v + (i,) for i in range(len(_subshape(tree.shape, v)))]
        avail = np.sum([P[k] for k in kids], axis=0)
        if np.any(np.asarray(P[v]) > avail):
            raise ValidationError(f"external fields of {v} exceed those of its children")


def _subshape(shape: Shape, path: tuple) -> Shape:
    for i in path:
        shape = shape[i]
    return shape


def dimensional_bound_audit(tree: GNTree, P: Mapping[tuple, FieldCount]) -> BoundAudit:
    """Product of 2^{-(h_v - h_v') D_v} over inner vertices, with and without gains."""
    _check_fields(tree, P)
    out = {}
    for renorm in (True, False):
        dims, total = {}, 0.0
        for v in inner_vertices(tree.shape):
            D = scaling_dimension(*P[v], renormalized=renorm)
            dims[v] = D
            total -= (tree.scale(v) - tree.parent_scale(v)) * D
        out[renorm] = (total, dims, all(D >= 1 for D in dims.values()))
    r, b = out[True], out[False]
    return BoundAudit(r[0], r[1], r[2], b[0], b[1], b[2])


def chain_tree(depth: int, h_root: int) -> GNTree:
    """A binary comb with ``depth`` inner vertices on consecutive scales."""
    shape: Shape = ((), ())
    for _ in range(depth - 1):
        shape = (shape, ())
    scales = {}
    path: tuple = ()
    for i in range(depth):
        scales[path] = h_root + 1 + i
        path = path + (0,)
    if h_root + depth > 0:
        raise ValidationError("chain does not fit below scale 0")
    return GNTree(shape, h_root, scales)


# ---------------------------------------------------------------------------
# flow of the running couplings

COUPLINGS = ("z", "v", "nu", "lam")
# power of |lambda| in the declared envelope of each beta function
ENVELOPE_POWER = {"z": 2, "v": 1, "nu": 1, "lam": 2}


@dataclass
class BetaModel:
    """Beta functions beta^c_k(state) with declared envelopes C |lambda|^p 2^{theta k}."""

    funcs: Mapping[str, Callable[[int, dict], float]]
    C: float
    theta: float
    lam: float

    def envelope(self, name: str, k: int) -> float:
        return self.C * abs(self.lam) ** ENVELOPE_POWER[name] * 2.0 ** (self.theta * k)

    def __call__(self, k: int, state: dict) -> dict:
        out = {}
        for name in COUPLINGS:
            f = self.funcs.get(name)
            val = 0.0 if f is None else float(f(k, state))
            env = self.envelope(name, k)
            if abs(val) > env * (1 + 1e-12):
                raise BetaBoundViolated(f"beta^{name} at scale {k}: |{val:.6g}| > {env:.6g}")
            out[name] = val
        return out


def geometric_beta(lam: float, theta: float, C: float = 1.0, which: Sequence[str] = ("lam",),
                   sign: float = 1.0) -> BetaModel:
    """beta^c_k = sign C |lambda|^p 2^{theta k} for the couplings in ``which``."""

    def make(name):
        p = ENVELOPE_POWER[name]
        return lambda k, s: sign * C * abs(lam) ** p * 2.0 ** (theta * k)

    return BetaModel({w: make(w) for w in which}, C, theta, lam)


@dataclass
class FlowTrajectory:
    scales: list
    Z: list
    v: list
    nu: list
    lam: list
    betas: list = field(repr=False)
    model: BetaModel = field(repr=False)

    def as_dict(self):
        return {"scales": self.scales, "Z": self.Z, "v": self.v, "nu": self.nu, "lam": self.lam}

    def envelope_report(self) -> dict:
        """Drifts of Z, v, lambda against C' |lambda|^p with C' = C / (1 - 2^{-theta})."""
        m = self.model
        geo = 1.0 / (1.0 - 2.0 ** (-m.theta))
        drift = {
            "Z": max(abs(np.log(z / self.Z[0])) for z in self.Z),
            "v": max(abs(x - self.v[0]) for x in self.v),
            "lam": max(abs(x - self.lam[0]) for x in self.lam),
        }
        bound = {
            "Z": m.C * abs(m.lam) ** 2 * geo,
            "v": m.C * abs(m.lam) * geo,
            "lam": m.C * abs(m.lam) ** 2 * geo,
        }
        return {"drift": drift, "bound": bound,
                "within": {k: drift[k] <= bound[k] * (1 + 1e-12) for k in drift}}

    def speed_report(self) -> dict:
        """max_h |lam_{h_min} - lam_h| / (C |lambda|^2 2^{theta h})."""
        m = self.model
        end = self.lam[-1]
        ratios = [abs(end - l) / (m.C * m.lam ** 2 * 2.0 ** (m.theta * h)) if m.lam else 0.0
                  for h, l in zip(self.scales, self.lam)]
        geo = 1.0 / (1.0 - 2.0 ** (-m.theta))
        return {"max_ratio": max(ratios), "geometric_constant": geo,
                "within": max(ratios) <= geo * (1 + 1e-12)}


def flow_iterate(initial: Mapping[str, float], beta_model: BetaModel, h_min: int) -> FlowTrajectory:
    """Iterate the recursions from scale 0 down to h_min.

    Z_{k-1} = Z_k (1 + beta^z_k),  v_{k-1} = v_k + beta^v_k,
    nu_{k-1} = 2 nu_k + 2 beta^nu_k,  lam_{k-1} = lam_k + beta^lam_k.
    """
    if h_min > 0:
        raise ValidationError("h_min must be <= 0")
    state = {"Z": float(initial.get("Z", 1.0)), "v": float(initial.get("v", 1.0)),
             "nu": float(initial.get("nu", 0.0)), "lam": float(initial.get("lam", beta_model.lam))}
    traj = FlowTrajectory([0], [state["Z"]], [state["v"]], [state["nu"]], [state["lam"]], [], beta_model)
    for k in range(0, h_min, -1):
        b = beta_model(k, dict(state))
        state = {"Z": state["Z"] * (1 + b["z"]), "v": state["v"] + b["v"],
                 "nu": 2 * state["nu"] + 2 * b["nu"], "lam": state["lam"] + b["lam"]}
        traj.scales.append(k - 1)
        traj.Z.append(state["Z"])
        traj.v.append(state["v"])
        traj.nu.append(state["nu"])
        traj.lam.append(state["lam"])
        traj.betas.append(b)
    return traj


def geometric_lambda_drift(lam: float, theta: float, h: int) -> float:
    """lam^2 sum_{k=h+1}^{0} 2^{theta k} in closed form."""
    return lam ** 2 * (1 - 2.0 ** (theta * h)) / (1 - 2.0 ** (-theta))


# ---------------------------------------------------------------------------
# counterterm fixed point


def weighted_norm(nu: np.ndarray, scales: np.ndarray, theta: float) -> float:
    return float(np.max(np.abs(nu) / 2.0 ** (theta * scales)))


def _fixpt_map(nu: np.ndarray, scales: np.ndarray, theta: float, beta_nu) -> np.ndarray:
    """nu_k = -sum_{j=h}^{k} 2^{j-k+1} 2^{theta j} beta_{j+1}(nu)."""
    h = scales[0]
    b = np.array([beta_nu(j, nu) for j in scales])            # beta_{j+1}, j = h..0
    w = 2.0 ** (theta * scales) * 2.0 ** (scales + 1) * b
    return -np.cumsum(w) / 2.0 ** scales


def constant_beta_nu(b: float):
    return lambda j, nu: b


def linear_beta_nu(lam: float):
    """beta_{j+1} = lam (1 + nu_{j+1}), with nu_1 = 0."""

    def f(j, nu):
        # nu[i] holds scale i + h with h = 1 - len(nu)
        nxt = 0.0 if j + 1 > 0 else nu[j + len(nu)]
        return lam * (1.0 + nxt)

    return f


@dataclass
class NuFixedPoint:
    scales: np.ndarray
    nu: np.ndarray
    iterations: int
    contraction: float
    envelope_C: float
    within_envelope: bool

    def as_dict(self):
        return {"scales": self.scales.tolist(), "nu": self.nu.tolist(),
                "iterations": self.iterations, "contraction": self.contraction,
                "envelope_C": self.envelope_C, "within_envelope": self.within_envelope}


def nu_fixed_point(beta_nu: Optional[Callable] = None, theta: float = 0.5, h_min: int = -20,
                   lam: float = 0.1, C: Optional[float] = None, tol: float = 1e-14,
                   max_iter: int = 500) -> NuFixedPoint:
    """Banach iteration of the counterterm map in the weighted sup norm.

    The contraction factor is the largest ratio of successive update norms.
    The envelope |nu_k| <= C 2^{theta k} |lam| is checked on the output with
    C defaulting to 2 / (1 - 2^{-(1 + theta)}).
    """
    if h_min > 0:
        raise ValidationError("h_min must be <= 0")
    beta_nu = linear_beta_nu(lam) if beta_nu is None else beta_nu
    scales = np.arange(h_min, 1)
    nu = np.zeros(len(scales))
    prev_step = None
    factor = 0.0
    for it in range(1, max_iter + 1):
        new = _fixpt_map(nu, scales, theta, beta_nu)
        step = weighted_norm(new - nu, scales, theta)
        nu = new
        if prev_step is not None and prev_step > 1e-300 and step > 1e-13 * weighted_norm(nu, scales, theta):
            factor = max(factor, step / prev_step)
            if factor >= 1:
                raise NoContraction(f"update ratio {factor:.3g} >= 1 at iteration {it}")
        if step <= tol * max(weighted_norm(nu, scales, theta), 1e-300):
            break
        prev_step = step
    else:
        raise NoContraction(f"no convergence after {max_iter} iterations")
    Cenv = 2.0 / (1.0 - 2.0 ** (-(1 + theta))) if C is None else C
    env = Cenv * 2.0 ** (theta * scales) * abs(lam)
    return NuFixedPoint(scales, nu, it, factor, Cenv, bool(np.all(np.abs(nu) <= env * (1 + 1e-12))))


def nu_closed_form_constant(b: float, theta: float, h_min: int) -> np.ndarray:
    """nu_k for constant beta = b by direct summation."""
    scales = np.arange(h_min, 1)
    return np.array([-sum(2.0 ** (j - k + 1) * 2.0 ** (theta * j) * b for j in range(h_min, k + 1))
                     for k in scales])
