"""Command-line front end.

A run is described by a JSON config::

    {"model": {...}, "task": "chern", "params": {...},
     "output": "out", "workers": 1, "seed": 0}

Command-line flags override the file.  Every artifact carries a metadata
header with the package version, the config hash and the grid sizes used.
Exit codes: 0 on success, 2 for invalid input, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import __version__
from .errors import HallEdgeLabError, NumericalError, ValidationError

TASKS = ("bands", "edge", "chern", "correlators", "transport", "ward", "refmodel",
         "rgflow", "rgtrees", "ed-check")

MODEL_DEFAULTS = {
    "model": "haldane", "t1": 1.0, "t2": 0.5, "phi": math.pi / 2, "W": 0.0, "mu": 0.0,
    "L": 40, "spinful": True, "boundary": "cylinder", "M": None, "hoppings": None,
    "interaction": None,
}
INTERACTION_KEYS = {"onsite", "neighbour"}

TASK_DEFAULTS: dict[str, dict[str, Any]] = {
    "bands": {"grid": 128},
    "edge": {"grid": 40, "window": None},
    "chern": {"grid_n": 60, "sweep_ratios": None},
    "correlators": {"beta": 50.0, "eta": 0.1, "p1": 0.1, "mu_idx": 0, "nu_idx": 0,
                    "channel": "charge", "L1": 256, "x2": None, "y2": None},
    "transport": {"beta": 200.0, "eps_seq": [0.2, 0.1, 0.05], "a": 16, "a_prime": 8,
                  "channel": "charge", "L1": 2048, "edge_grid": 2048, "chern_grid": 60},
    "ward": {"beta": 20.0, "samples": 20, "L1": 64, "nu_idx": [0, 1], "channel": "charge"},
    "refmodel": {"lambda_ref": 0.5, "v_ref": 1.0, "Z_ref": 1.0, "omega": 1},
    "rgflow": {"lam": 0.1, "theta": 0.5, "C": 1.0, "h_min": -40, "which": ["z", "v", "lam"]},
    "rgtrees": {"n": 4, "h_root": -6, "max_fields": 10},
    "ed-check": {"lambda": [0.0, 0.1, 0.3], "beta": 3.0, "geometry": "2x3", "spinful": False,
                 "onsite": 1.0, "neighbour": 0.5,
                 "momenta": [[1.0, 3.141592653589793], [2.0, 3.141592653589793]]},
}
TOP_KEYS = {"model", "task", "params", "output", "workers", "seed"}


# ---------------------------------------------------------------------------
# config


@dataclass
class RunConfig:
    model: dict
    task: str
    params: dict
    output: str = "out"
    workers: int = 1
    seed: int = 0
    grids: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        return {"model": self.model, "task": self.task, "params": self.params,
                "workers": self.workers, "seed": self.seed}

    def hash(self) -> str:
        return hashlib.sha256(dumps(self.canonical()).encode()).hexdigest()


def _reject_unknown(block: dict, allowed, where: str):
    for k in block:
        if k not in allowed:
            raise ValidationError(f"unknown key {k!r} in {where}")


def parse_config(raw: dict) -> RunConfig:
    """Validate and fill defaults; raises ValidationError naming the bad key."""
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    _reject_unknown(raw, TOP_KEYS, "config")
    task = raw.get("task")
    if task not in TASKS:
        raise ValidationError(f"task must be one of {', '.join(TASKS)}; got {task!r}")
    model_in = raw.get("model", {}) or {}
    if not isinstance(model_in, dict):
        raise ValidationError("model must be an object")
    _reject_unknown(model_in, MODEL_DEFAULTS, "model")
    model = copy.deepcopy(MODEL_DEFAULTS)
    model.update(model_in)
    if model["model"] not in ("haldane", "custom"):
        raise ValidationError(f"model.model must be 'haldane' or 'custom', got {model['model']!r}")
    if model["boundary"] not in ("cylinder", "torus"):
        raise ValidationError(f"model.boundary must be 'cylinder' or 'torus'")
    if model["interaction"] is not None:
        if not isinstance(model["interaction"], dict):
            raise ValidationError("model.interaction must be an object")
        _reject_unknown(model["interaction"], INTERACTION_KEYS, "model.interaction")
    if model["model"] == "custom" and (model["hoppings"] is None or model["M"] is None):
        raise ValidationError("custom models need 'M' and 'hoppings'")
    params_in = raw.get("params", {}) or {}
    if not isinstance(params_in, dict):
        raise ValidationError("params must be an object")
    _reject_unknown(params_in, TASK_DEFAULTS[task], f"params for task {task}")
    params = copy.deepcopy(TASK_DEFAULTS[task])
    params.update(params_in)
    workers = raw.get("workers", 1)
    seed = raw.get("seed", 0)
    for name, v in (("workers", workers), ("seed", seed)):
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise ValidationError(f"{name} must be a non-negative integer")
    if workers == 0:
        raise ValidationError("workers must be positive")
    return RunConfig(model, task, params, str(raw.get("output", "out")), workers, seed)


def build_model(cfg: dict):
    from .lattice import HaldaneParams, build_custom, build_haldane, cell_interaction

    if cfg["model"] == "haldane":
        p = HaldaneParams(float(cfg["t1"]), float(cfg["t2"]), float(cfg["phi"]), float(cfg["W"]))
        m = build_haldane(p, int(cfg["L"]), float(cfg["mu"]), bool(cfg["spinful"]), cfg["boundary"])
    else:
        m = build_custom(int(cfg["M"]), int(cfg["L"]), cfg["hoppings"], float(cfg["mu"]),
                         cfg["boundary"], bool(cfg["spinful"]))
    if cfg.get("interaction"):
        w = cfg["interaction"]
        m = m.with_interaction(cell_interaction(m, float(w.get("onsite", 1.0)),
                                                float(w.get("neighbour", 0.0))))
    return m


# ---------------------------------------------------------------------------
# emission


def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    if x == int(x) and abs(x) < 1e15:
        return repr(float(x))
    return format(x, ".17g")


def _encode(obj, out: list):
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_num(obj))
    elif isinstance(obj, (complex, np.complexfloating)):
        _encode({"re": obj.real, "im": obj.imag}, out)
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, k in enumerate(sorted(obj, key=str)):
            if i:
                out.append(", ")
            out.append(json.dumps(str(k)))
            out.append(": ")
            _encode(obj[k], out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(list(obj)):
            if i:
                out.append(", ")
            _encode(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits."""
    out: list[str] = []
    _encode(obj, out)
    return "".join(out)


def _meta(cfg: RunConfig, grids: dict) -> dict:
    return {"version": __version__, "config_hash": cfg.hash(), "task": cfg.task, "grids": grids}


def write_json(path: str, cfg: RunConfig, grids: dict, result: dict):
    doc = {"meta": _meta(cfg, grids), "config": cfg.canonical(), "result": result}
    with open(path, "w") as f:
        f.write(dumps(doc) + "\n")


def write_csv(path: str, cfg: RunConfig, grids: dict, header: list, rows):
    with open(path, "w") as f:
        f.write(f"# version={__version__} config_hash={cfg.hash()} task={cfg.task} "
                f"grids={dumps(grids)}\n")
        f.write(",".join(header) + "\n")
        for r in rows:
            f.write(",".join(_num(v) if isinstance(v, (float, np.floating)) else str(v) for v in r) + "\n")


# ---------------------------------------------------------------------------
# tasks


def _task_bands(cfg: RunConfig, out: str):
    from .lattice import validate_model
    from .spectral import band_structure

    m = build_model(cfg.model)
    report = validate_model(m)
    if not report.ok:
        raise ValidationError(f"model checks failed: {report.as_dict()}")
    grid = int(cfg.params["grid"])
    branches = band_structure(m, grid, cfg.workers)
    rows = []
    for b in branches:
        for k, e in zip(b.k, b.energies):
            rows.append((float(k), b.index, "" if b.spin is None else b.spin, float(e)))
    grids = {"k1": grid}
    write_csv(os.path.join(out, "bands.csv"), cfg, grids, ["k1", "branch", "spin", "energy"], rows)
    write_json(os.path.join(out, "bands.json"), cfg, grids,
               {"branches": len(branches), "ambiguous": sum(b.ambiguous for b in branches),
                "model_checks": report.as_dict()})


def _task_edge(cfg: RunConfig, out: str):
    from .spectral import audit_assumptions, detect_edge_states

    m = build_model(cfg.model)
    grid = int(cfg.params["grid"])
    edges = detect_edge_states(m, grid=grid, workers=cfg.workers, window=cfg.params["window"])
    verdict = audit_assumptions(m, grid=grid, edges=edges)
    rows = [(f"{e.label[0]}:{e.label[1]}", e.k_F, e.v_e, e.decay_rate, e.side) for e in edges]
    grids = {"k1": grid}
    write_csv(os.path.join(out, "edges.csv"), cfg, grids, ["label", "k_F", "v_e", "c", "side"], rows)
    write_json(os.path.join(out, "edge.json"), cfg, grids,
               {"states": [e.as_dict() for e in edges], "audit": verdict.as_dict()})


def _task_chern(cfg: RunConfig, out: str):
    from .topology import hall_conductivity, phase_sweep

    m = build_model(cfg.model)
    n = int(cfg.params["grid_n"])
    res = hall_conductivity(m, None, n).as_dict()
    grids = {"k": n, "refinement": 2 * n}
    ratios = cfg.params["sweep_ratios"]
    if ratios:
        mp = cfg.model
        rows = phase_sweep(float(mp["t1"]), float(mp["t2"]), float(mp["phi"]), ratios, n, float(mp["mu"]))
        write_csv(os.path.join(out, "phase.csv"), cfg, grids, ["W", "t2sinphi", "C"], rows)
        res["sweep"] = [list(r) for r in rows]
    write_json(os.path.join(out, "chern.json"), cfg, grids, res)


def _task_correlators(cfg: RunConfig, out: str):
    from .response import bubble_correlator

    m = build_model(cfg.model)
    p = cfg.params
    rows_all = [int(r) for r in m.active_rows]
    x2 = rows_all if p["x2"] is None else p["x2"]
    y2 = [rows_all[len(rows_all) // 2]] if p["y2"] is None else p["y2"]
    res = bubble_correlator(m, m.mu, float(p["beta"]), float(p["eta"]), float(p["p1"]),
                            int(p["mu_idx"]), int(p["nu_idx"]), p["channel"], x2, y2, int(p["L1"]))
    grids = {"L1": int(p["L1"])}
    d = res.as_dict()
    rows = []
    for i, xs in enumerate(res.x2_set):
        for j, ys in enumerate(res.y2_set):
            v = res.values[i, j]
            rows.append((str(xs), str(ys), float(v.real), float(v.imag)))
    write_csv(os.path.join(out, "correlators.csv"), cfg, grids, ["x2", "y2", "re", "im"], rows)
    write_json(os.path.join(out, "correlators.json"), cfg, grids, d)


def _task_transport(cfg: RunConfig, out: str):
    from .response import FreeSystem, expected_noninteracting, transport_limits
    from .spectral import detect_edge_states
    from .topology import hall_conductivity

    m = build_model(cfg.model)
    p = cfg.params
    L1 = int(p["L1"])
    fs = FreeSystem(m, L1, cfg.workers)
    res = transport_limits(m, m.mu, p["beta"], p["eps_seq"], p["a"], p["a_prime"],
                           p["channel"], L1, fs)
    edges = detect_edge_states(m, grid=int(p["edge_grid"]), workers=cfg.workers)
    expected = expected_noninteracting(edges, side=0)
    hall = hall_conductivity(m, None, int(p["chern_grid"]))
    d = res.as_dict()
    rel = {k: abs(d[k]["value"] - expected[k]) / abs(expected[k]) for k in expected}
    result = {
        "limits": {k: d[k]["value"] for k in ("kappa", "D", "G", "Gtilde")},
        "details": d,
        "expected": expected,
        "relative_error": rel,
        "reversed_G00_over_kappa": abs(d["G00_reversed"]["value"]) / abs(d["kappa"]["value"]),
        "bulk_edge": {"G": d["G"]["value"], "sigma21": hall.sigma21,
                      "relative_difference": abs(d["G"]["value"] - hall.sigma21) / abs(hall.sigma21)},
        "edge_states": [e.as_dict() for e in edges],
    }
    grids = {"L1": L1, "edge_grid": int(p["edge_grid"]), "chern_grid": int(p["chern_grid"])}
    rows = []
    for name in ("kappa", "G", "D", "Gtilde", "G00_reversed"):
        for r in d[name]["raw"]:
            rows.append((name, r["eps"], r["eta_beta"], r["p1"], r["beta"], r["a"], r["a_prime"],
                         r["re"], r["im"]))
    write_csv(os.path.join(out, "transport_raw.csv"), cfg, grids,
              ["coefficient", "eps", "eta_beta", "p1", "beta", "a", "a_prime", "re", "im"], rows)
    write_json(os.path.join(out, "transport.json"), cfg, grids, result)


def _task_ward(cfg: RunConfig, out: str):
    from .response import FreeSystem, snap_matsubara, ward_residual

    m = build_model(cfg.model)
    p = cfg.params
    beta, L1 = float(p["beta"]), int(p["L1"])
    fs = FreeSystem(m, L1, cfg.workers)
    rng = np.random.default_rng(cfg.seed)
    samples = []
    for _ in range(int(p["samples"])):
        n0 = int(rng.integers(1, 20))
        q = int(rng.integers(1, L1))
        eta = 2 * math.pi * n0 / beta * (1 if rng.random() < 0.5 else -1)
        p1 = 2 * math.pi * q / L1
        for nu in p["nu_idx"]:
            r, s = ward_residual(m, m.mu, beta, (eta, p1), int(nu), p["channel"], system=fs)
            samples.append({"eta_beta": snap_matsubara(eta, beta), "p1": p1, "nu": int(nu),
                            "residual": r, "scale": s, "relative": r / s})
    worst = max(s["relative"] for s in samples) if samples else 0.0
    write_json(os.path.join(out, "ward.json"), cfg, {"L1": L1},
               {"samples": samples, "max_relative": worst})


def _task_refmodel(cfg: RunConfig, out: str):
    from .reference_model import RefModelParams, reference_report

    p = cfg.params
    params = RefModelParams(float(p["lambda_ref"]), float(p["v_ref"]), float(p["Z_ref"]), int(p["omega"]))
    write_json(os.path.join(out, "refmodel.json"), cfg, {}, reference_report(params))


def _task_rgflow(cfg: RunConfig, out: str):
    from .rg_audit import flow_iterate, geometric_beta, nu_fixed_point

    p = cfg.params
    model = geometric_beta(float(p["lam"]), float(p["theta"]), float(p["C"]), p["which"])
    traj = flow_iterate({"lam": float(p["lam"])}, model, int(p["h_min"]))
    nu = nu_fixed_point(theta=float(p["theta"]), h_min=int(p["h_min"]), lam=float(p["lam"]))
    rows = list(zip(traj.scales, traj.Z, traj.v, traj.nu, traj.lam))
    grids = {"h_min": int(p["h_min"])}
    write_csv(os.path.join(out, "rgflow.csv"), cfg, grids, ["h", "Z", "v", "nu", "lam"], rows)
    write_json(os.path.join(out, "rgflow.json"), cfg, grids,
               {"trajectory": traj.as_dict(), "envelope": traj.envelope_report(),
                "speed": traj.speed_report(), "nu_fixed_point": nu.as_dict()})


def _task_rgtrees(cfg: RunConfig, out: str):
    from .rg_audit import dimension_table, enumerate_trees

    p = cfg.params
    _, census = enumerate_trees(int(p["n"]), int(p["h_root"]))
    table = dimension_table(int(p["max_fields"]))
    write_json(os.path.join(out, "rgtrees.json"), cfg, {"n": int(p["n"])},
               {"census": census.as_dict(),
                "dimensions": [[k[0], k[1], k[2], v] for k, v in sorted(table.items())]})


def _task_ed_check(cfg: RunConfig, out: str):
    from .ed_oracle import build_fock_system, ed_ward_check
    from .lattice import cell_interaction

    p = cfg.params
    try:
        L1, L2 = (int(s) for s in str(p["geometry"]).lower().split("x"))
    except ValueError:
        raise ValidationError(f"geometry must look like '2x3', got {p['geometry']!r}") from None
    mcfg = dict(cfg.model, L=L2 + 1, boundary="cylinder", interaction=None,
                spinful=bool(p["spinful"]))
    m = build_model(mcfg)
    m = m.with_interaction(cell_interaction(m, float(p["onsite"]), float(p["neighbour"])))
    lams = p["lambda"] if isinstance(p["lambda"], list) else [p["lambda"]]
    report = []
    for lam in lams:
        sys_ = build_fock_system(m, float(lam), L1, L2, float(p["beta"]))
        for eta, p1 in p["momenta"]:
            for nu in (0, 1):
                r, s = ed_ward_check(sys_, (float(eta), float(p1)), nu)
                report.append({"lambda": float(lam), "eta": float(eta), "p1": float(p1), "nu": nu,
                               "residual": r, "scale": s, "relative": r / s})
    write_json(os.path.join(out, "ed_check.json"), cfg, {"L1": L1, "L2": L2},
               {"residuals": report, "max_relative": max(x["relative"] for x in report)})


DISPATCH = {
    "bands": _task_bands, "edge": _task_edge, "chern": _task_chern,
    "correlators": _task_correlators, "transport": _task_transport, "ward": _task_ward,
    "refmodel": _task_refmodel, "rgflow": _task_rgflow, "rgtrees": _task_rgtrees,
    "ed-check": _task_ed_check,
}


def run(cfg: RunConfig) -> int:
    """Run one task; returns the exit code and reports errors on stderr."""
    try:
        os.makedirs(cfg.output, exist_ok=True)
        DISPATCH[cfg.task](cfg, cfg.output)
    except ValidationError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hall-edge-lab", description=__doc__.splitlines()[0])
    ap.add_argument("task_pos", nargs="?", metavar="TASK", help="task name (same as --task)")
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--task", choices=TASKS)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--seed", type=int)
    # task-specific overrides
    ap.add_argument("--beta", type=float)
    ap.add_argument("--eps-seq", help="comma-separated, decreasing")
    ap.add_argument("--a", type=int)
    ap.add_argument("--a-prime", type=int)
    ap.add_argument("--channel", choices=("charge", "spin"))
    ap.add_argument("--lambda", dest="lam", type=float)
    ap.add_argument("--geometry")
    return ap


def _overrides(args, raw: dict) -> dict:
    raw = copy.deepcopy(raw)
    task = args.task or args.task_pos or raw.get("task")
    if task is not None:
        raw["task"] = task
    if args.out is not None:
        raw["output"] = args.out
    if args.workers is not None:
        raw["workers"] = args.workers
    elif "workers" not in raw and os.environ.get("HALL_EDGE_LAB_WORKERS"):
        try:
            raw["workers"] = int(os.environ["HALL_EDGE_LAB_WORKERS"])
        except ValueError:
            raise ValidationError("HALL_EDGE_LAB_WORKERS must be an integer") from None
    if args.seed is not None:
        raw["seed"] = args.seed
    params = dict(raw.get("params", {}) or {})
    if args.beta is not None:
        params["beta"] = args.beta
    if args.eps_seq is not None:
        try:
            params["eps_seq"] = [float(s) for s in args.eps_seq.split(",")]
        except ValueError:
            raise ValidationError(f"bad --eps-seq {args.eps_seq!r}") from None
    if args.a is not None:
        params["a"] = args.a
    if args.a_prime is not None:
        params["a_prime"] = args.a_prime
    if args.channel is not None:
        params["channel"] = args.channel
    if args.lam is not None:
        params["lambda"] = args.lam
    if args.geometry is not None:
        params["geometry"] = args.geometry
    if params:
        raw["params"] = params
    return raw


def main(argv: Optional[list[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        raw: dict = {}
        if args.config:
            try:
                with open(args.config) as f:
                    raw = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                raise ValidationError(f"cannot read config: {e}") from None
        cfg = parse_config(_overrides(args, raw))
    except HallEdgeLabError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
