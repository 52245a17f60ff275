"""Config-driven experiment runner.

Usage::

    rhtail run CONFIG.json [--out DIR] [--seed S]
    rhtail schema
    rhtail defaults DIR

Each run writes ``report.json`` (resolved config, results and one entry per
assertion), CSV tables and a ``run.log`` holding the wall-clock data, so that
the report itself is reproducible bit for bit.  Exit codes: 0 when every
assertion passes, 1 when one fails, 2 for an invalid config.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import fracops, fracpde, gehring, homspace, tails, weights

KINDS = ("ops-selftest", "gehring-verify", "weights-check", "seq-transforms",
         "pde-solve", "pde-rh", "metrize")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer", "minimum": 1}
_nums = {"type": "array", "items": _num, "minItems": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_space = _obj({"dim": {"enum": [1, 2]}, "cells": {"type": "integer", "minimum": 4},
               "period": _pos})
_field = {"type": "object", "required": ["kind"],
          "properties": {"kind": {"enum": ["constant", "power", "bandlimited", "indicator"]}}}
_weight = {"type": "object", "required": ["kind"],
           "properties": {"kind": {"enum": ["constant", "power", "bump", "left_half"]}}}
_tail = _obj({"ratio": _pos, "alpha0": _pos, "base": {"type": "number", "exclusiveMinimum": 1},
              "values": _nums})
_family = _obj({"centers_per_axis": _int, "random": _int, "r_min": _pos, "r_max": _pos})
_coeffs = _obj({"kind": {"enum": ["identity", "checkerboard"]}, "low": _pos, "high": _pos,
                "blocks": _int, "lam": _pos, "scale": _pos}, ["kind"])
_pde = {"a": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "coefficients": _coeffs, "F": {"enum": ["zero", "bandlimited"]},
        "f": {"enum": ["zero", "bandlimited"]}, "tol": _pos, "max_iters": _int,
        "method": {"enum": ["auto", "cg", "richardson", "gmres"]}}

PARAMS = {
    "ops-selftest": _obj({
        "cells": _int, "dim": {"enum": [1, 2, 3]}, "a_values": _nums, "n_fields": _int, "tol": _pos,
        "quadrature": _obj({"cells": _int, "a": _pos, "points": _int, "kmax": _int, "tol": _pos})}),
    "gehring-verify": _obj({
        "field": _field, "q": {"type": "number", "exclusiveMinimum": 1}, "s": _pos, "tail": _tail,
        "beta": {"type": "number", "minimum": 0}, "family": _family, "p_grid": _nums,
        "C_max": _pos, "expect": _obj({"A_best_max": _num, "A_best_equals": _num,
                                       "p_hat_min": _num, "rtol": _pos})}),
    "weights-check": _obj({
        "corpus": {"type": "array", "items": _weight, "minItems": 1},
        "cells": {"type": "array", "items": _int, "minItems": 2}, "q_grid": _nums, "p_grid": _nums,
        "centers_per_axis": _int, "cp_p": _nums}),
    "seq-transforms": _obj({
        "cases": {"type": "array", "minItems": 1,
                  "items": {"type": "array", "items": _pos, "minItems": 3, "maxItems": 3}},
        "terms": _int, "instances": _int, "cells": _int, "bases": _nums, "tail": _tail}),
    "pde-solve": _obj(dict(_pde)),
    "pde-rh": _obj({**_pde, "rho": _pos, "family": _family, "p_grid": _nums, "C_max": _pos,
                    "enlarge": {"type": "boolean"}}),
    "metrize": _obj({"clouds": {"type": "array", "minItems": 1, "items": _obj({
        "kind": {"enum": ["random", "matrix", "csv"]}, "n_points": _int, "dim": _int,
        "exponent": _pos, "quasi_constant": {"type": "number", "minimum": 1},
        "D": {"type": "array", "items": _nums}, "path": {"type": "string"},
        "name": {"type": "string"}}, ["kind"])}}),
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "rhtail experiment config",
    "type": "object",
    "required": ["kind", "seed"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(KINDS)},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "space": _space,
        "params": {"type": "object"},
    },
    "allOf": [{"if": {"properties": {"kind": {"const": k}}},
               "then": {"properties": {"params": PARAMS[k]}}} for k in KINDS],
}

TWO_PI = 2 * math.pi

DEFAULTS = {
    "ops-selftest": {"params": {"cells": 64, "dim": 2, "a_values": [0.3, 0.5, 0.7], "n_fields": 10,
                                "tol": 1e-10, "quadrature": {"cells": 256, "a": 0.5, "points": 10,
                                                             "kmax": 8, "tol": 0.05}}},
    "gehring-verify": {"space": {"dim": 1, "cells": 1024, "period": 1.0},
                       "params": {"field": {"kind": "power", "a": 0.5}, "q": 1.5, "s": 1.0,
                                  "tail": {"ratio": 0.5, "alpha0": 1.0, "base": 2.0}, "beta": 0.0,
                                  "family": {"centers_per_axis": 64},
                                  "p_grid": [1.55, 1.6, 1.7, 1.8, 1.9, 1.95, 2.0, 2.1, 2.25, 2.5],
                                  "C_max": 100.0, "expect": {}}},
    "weights-check": {"params": {"corpus": [{"kind": "constant"}, {"kind": "power", "a": 0.5},
                                            {"kind": "bump"}, {"kind": "left_half"}],
                                 "cells": [512, 1024], "q_grid": [1.1, 1.25, 1.5],
                                 "p_grid": [2.0, 4.0, 8.0], "centers_per_axis": 16,
                                 "cp_p": [1.5, 2.0, 3.0]}},
    "seq-transforms": {"params": {"cases": [[2, 2, 0.5], [3, 2, 0.5], [8, 2, 1.0], [10, 3, 0.3],
                                            [16, 4, 0.7]],
                                  "terms": 64, "instances": 50, "cells": 256, "bases": [3, 4, 8, 1.5],
                                  "tail": {"ratio": 0.5, "alpha0": 1.0, "base": 2.0}}},
    "pde-solve": {"space": {"dim": 2, "cells": 64, "period": TWO_PI},
                  "params": {"a": 0.5, "coefficients": {"kind": "checkerboard", "low": 0.2,
                                                        "high": 5.0, "blocks": 4, "lam": 0.2},
                             "F": "bandlimited", "f": "zero", "tol": 1e-8, "max_iters": 10000,
                             "method": "auto"}},
    "pde-rh": {"space": {"dim": 2, "cells": 64, "period": TWO_PI},
               "params": {"a": 0.5, "coefficients": {"kind": "checkerboard", "low": 0.2,
                                                     "high": 5.0, "blocks": 4, "lam": 0.2},
                          "F": "bandlimited", "f": "bandlimited", "tol": 1e-8, "max_iters": 10000,
                          "method": "auto", "rho": 1.5, "family": {"random": 300},
                          "p_grid": [round(2 + 0.05 * k, 10) for k in range(1, 21)],
                          "C_max": 50.0, "enlarge": True}},
    "metrize": {"params": {"clouds": [
        {"name": "squared-euclidean", "kind": "random", "n_points": 50, "dim": 2, "exponent": 2.0,
         "quasi_constant": 2.0},
        {"name": "three-point", "kind": "matrix", "D": [[0, 1, 3.3], [1, 0, 2], [3.3, 2, 0]]}]}},
}


class ConfigError(Exception):
    """Invalid config, with the line it points to."""

    def __init__(self, path, line: int | None, message: str):
        self.path, self.line, self.message = path, line, message
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {message}")


def _locate(text: str, path) -> int:
    """Best-effort line of a JSON path, found by scanning for the keys in order."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            i = text.find(f'"{key}"', pos)
            if i >= 0:
                pos = i
    return text.count("\n", 0, pos) + 1


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path, seed: int | None = None) -> dict:
    """Parse, validate and resolve a config (defaults filled, seed override applied)."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(path, exc.lineno, f"invalid JSON: {exc.msg}") from None
    errs = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(raw),
                  key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errs:
        e = max(errs, key=lambda e: len(e.absolute_path))
        loc = "/".join(map(str, e.absolute_path)) or "<root>"
        raise ConfigError(path, _locate(text, list(e.absolute_path)), f"{loc}: {e.message}")
    cfg = _merge({"space": {}, "params": {}, **DEFAULTS[raw["kind"]]}, raw)
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


# --------------------------------------------------------------------------
# helpers

def _clean(x):
    """Convert to plain JSON types; non-finite floats become strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return gehring._num(float(x))
    if isinstance(x, complex):
        return [_clean(x.real), _clean(x.imag)]
    return x


class Checks:
    def __init__(self):
        self.items: list = []

    def add(self, name: str, passed: bool, value=None, bound=None) -> None:
        self.items.append({"name": name, "passed": bool(passed), "value": value, "bound": bound})

    @property
    def ok(self) -> bool:
        return all(c["passed"] for c in self.items)


def _write_rows(path: Path, rows: list) -> None:
    if not rows:
        return
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([repr(float(r[k])) if isinstance(r[k], (float, np.floating)) else r[k]
                        for k in keys])


def _grid(cfg: dict) -> homspace.PeriodicGrid:
    s = cfg["space"]
    return homspace.PeriodicGrid(s.get("dim", 1), s.get("cells", 256), s.get("period", 1.0))


def _tail(spec: dict) -> tails.TailWeights:
    base = spec.get("base", 2.0)
    if "values" in spec:
        return tails.TailWeights.explicit(spec["values"], base=base)
    return tails.TailWeights.geometric(spec.get("ratio", 0.5), spec.get("alpha0", 1.0), base)


def _family(space, spec: dict, seed: int, base: float = 2.0) -> list:
    if "random" in spec:
        return homspace.random_ball_family(space, spec["random"], seed=seed,
                                           r_min=spec.get("r_min"), r_max=spec.get("r_max"))
    return homspace.ball_family(space, centers_per_axis=spec.get("centers_per_axis", 16), base=base,
                                r_min=spec.get("r_min"), r_max=spec.get("r_max"))


# --------------------------------------------------------------------------
# experiments

def _ops_selftest(cfg, rng, out: Path, checks: Checks) -> dict:
    p = cfg["params"]
    suite = fracops.identity_suite(seed=int(rng.integers(2**31)), cells=p["cells"], dim=p["dim"],
                                   a_values=tuple(p["a_values"]), n_fields=p["n_fields"])
    suite.pop("seconds")
    for key in ("D_vs_R_fraclap", "D_vs_grad_potential", "RstarR", "adjoint", "plancherel",
                "realness", "constant"):
        checks.add(f"identity {key}", suite[key] <= p["tol"], suite[key], p["tol"])
    qp = p["quadrature"]
    sp = homspace.PeriodicGrid(1, qp["cells"], TWO_PI)
    u = homspace.make_test_field(sp, "bandlimited", seed=int(rng.integers(2**31)), kmax=qp["kmax"])
    spec = fracops.apply_symbol(sp, u, fracops.frac_laplacian(qp["a"])).ravel()
    idx = np.sort(rng.choice(sp.n_points, size=qp["points"], replace=False))
    rows = []
    for i in idx:
        quad = fracops.frac_laplacian_quadrature(sp, u, int(i), qp["a"])
        rows.append({"index": int(i), "spectral": float(spec[i]), "quadrature": quad,
                     "rel_error": abs(quad - spec[i]) / abs(spec[i])})
    _write_rows(out / "quadrature.csv", rows)
    worst = max(r["rel_error"] for r in rows)
    checks.add("quadrature vs spectral", worst <= qp["tol"], worst, qp["tol"])
    return {"identities": suite, "quadrature": {"max_rel_error": worst, "points": rows,
                                                "constant": fracops.calibrated_constant(1, qp["a"]),
                                                "closed_form": fracops.closed_form_constant(1, qp["a"])}}


def _gehring_verify(cfg, rng, out: Path, checks: Checks) -> dict:
    p = cfg["params"]
    sp = _grid(cfg)
    fs = dict(p["field"])
    kind = fs.pop("kind")
    if kind == "bandlimited":
        fs.setdefault("seed", int(rng.integers(2**31)))
    u = homspace.make_test_field(sp, kind, **fs)
    if kind == "bandlimited":
        u = np.abs(u)
    tw = _tail(p["tail"])
    inst = gehring.RHInstance(sp, u, p["q"], p["s"], tw, beta=p["beta"])
    fam = _family(sp, p["family"], int(rng.integers(2**31)), base=tw.base)
    hyp = gehring.hypothesis_constant(inst, fam)
    hyp.write_csv(out / "hypothesis.csv")
    res = {"hypothesis": hyp.summary(), "alpha_total": tw.total}
    checks.add("A_best finite", math.isfinite(hyp.constant), hyp.constant)
    grid = [x for x in p["p_grid"] if x > p["q"]]
    if grid:
        gain = gehring.estimate_gain(inst, fam, grid, p["C_max"])
        gain.write_csv(out / "gain.csv")
        res["gain"] = gain.summary()
    ex = p.get("expect", {})
    rtol = ex.get("rtol", 1e-12)
    if "A_best_max" in ex:
        checks.add("A_best <= bound", hyp.constant <= ex["A_best_max"], hyp.constant, ex["A_best_max"])
    if "A_best_equals" in ex:
        checks.add("A_best value", abs(hyp.constant - ex["A_best_equals"]) <= rtol * abs(ex["A_best_equals"]),
                   hyp.constant, ex["A_best_equals"])
    if "p_hat_min" in ex:
        ph = res.get("gain", {}).get("p_hat")
        checks.add("p_hat >= bound", ph is not None and ph >= ex["p_hat_min"], ph, ex["p_hat_min"])
    return res


def _weights_check(cfg, rng, out: Path, checks: Checks) -> dict:
    p = cfg["params"]
    res = []
    for spec in p["corpus"]:
        agg = weights.class_agreement(spec, cells=tuple(p["cells"]), q_grid=tuple(p["q_grid"]),
                                      p_grid=tuple(p["p_grid"]), centers_per_axis=p["centers_per_axis"])
        name = json.dumps(spec, sort_keys=True)
        checks.add(f"class agreement {name}", agg["agree"], [agg["vw_ainfty"], agg["rh_some_q"],
                                                            agg["condition_some_p"]])
        sp = homspace.PeriodicGrid(1, p["cells"][-1])
        w = weights.weight_from_spec(sp, spec)
        fam = homspace.ball_family(sp, centers_per_axis=p["centers_per_axis"])
        cp = {}
        for q in p["cp_p"]:
            r = np.array([weights.cp_tail(sp, w, b, q, "integral") / weights.cp_tail(sp, w, b, q, "dyadic")
                          for b in fam])
            bound = 2.0 ** (sp.dim * (q + 2))
            cp[f"{q:g}"] = {"min": float(r.min()), "max": float(r.max()), "bound": bound}
            checks.add(f"cp_tail agreement {name} p={q:g}",
                       r.max() <= bound and r.min() >= 1 / bound, [float(r.min()), float(r.max())], bound)
        res.append({**agg, "cp_tail_ratio": cp})
    return {"corpus": res}


def _seq_transforms(cfg, rng, out: Path, checks: Checks) -> dict:
    p = cfg["params"]
    comp = []
    for m, n, g in p["cases"]:
        c = tails.geometric_comparability(m, n, g, p["terms"])
        comp.append(c)
        checks.add(f"stretch comparability m={m:g} n={n:g} gamma={g:g}", c["stretch"]["holds"],
                   [c["stretch"]["min"], c["stretch"]["max"]], [c["stretch"]["lower"], c["stretch"]["upper"]])
        checks.add(f"regroup comparability m={m:g} n={n:g} gamma={g:g}", c["regroup"]["holds"],
                   [c["regroup"]["min"], c["regroup"]["max"]], [c["regroup"]["lower"], c["regroup"]["upper"]])
    sp = homspace.PeriodicGrid(1, p["cells"])
    tw = _tail(p["tail"])
    rows = []
    for i in range(p["instances"]):
        u = np.exp(homspace.make_test_field(sp, "bandlimited", seed=int(rng.integers(2**31))))
        c = int(rng.integers(sp.n_points))
        r = float(np.exp(rng.uniform(math.log(4 * sp.spacing), math.log(sp.diameter / 2))))
        M = p["bases"][i % len(p["bases"])]
        rep = tails.dilation_change_check(sp, u, homspace.Ball(c, r), tw, M)
        rows.append({"center": c, "radius": r, "M": M, "lhs": rep.lhs, "rhs": rep.rhs, "ratio": rep.ratio,
                     "constant": rep.constant, "doubling_bound": rep.doubling_bound,
                     "passed": rep.passed})
    _write_rows(out / "dilation.csv", rows)
    worst = max(r["ratio"] / r["constant"] for r in rows)
    checks.add("dilation change ratio <= volume-ratio constant", all(r["passed"] for r in rows), worst, 1.0)
    checks.add("volume-ratio constant <= doubling bound",
               all(r["constant"] <= r["doubling_bound"] * (1 + 1e-12) for r in rows))
    return {"comparability": comp, "dilation": {"instances": len(rows), "max_ratio_over_constant": worst}}


def _pde_problem(cfg, rng) -> fracpde.PDEProblem:
    p = cfg["params"]
    sp = _grid(cfg)
    cs = p["coefficients"]
    if cs["kind"] == "identity":
        co = fracpde.Coefficients.identity(sp, cs.get("scale", 1.0))
    else:
        co = fracpde.Coefficients.checkerboard(sp, cs.get("low", 0.2), cs.get("high", 5.0),
                                               cs.get("blocks", 4), cs.get("lam"))
    seeds = [int(s) for s in rng.integers(2**31, size=sp.dim + 1)]
    F = None
    if p["F"] == "bandlimited":
        F = np.stack([homspace.make_test_field(sp, "bandlimited", seed=s) for s in seeds[:sp.dim]])
    f = homspace.make_test_field(sp, "bandlimited", seed=seeds[-1]) if p["f"] == "bandlimited" else None
    return fracpde.PDEProblem(sp, co, p["a"], F, f, tol=p["tol"], max_iters=p["max_iters"],
                              method=p["method"])


def _solve_and_save(cfg, rng, out: Path, checks: Checks):
    pr = _pde_problem(cfg, rng)
    res = fracpde.solve(pr)
    fracops.save_field_raw(out / "u.f8", pr.space, res.u)
    _write_rows(out / "history.csv", [{"iteration": i, "residual": r} for i, r in enumerate(res.history)])
    checks.add("solver converged", res.converged, res.residual, pr.tol)
    summary = res.summary()
    if cfg["params"]["coefficients"]["kind"] == "identity":
        scale = cfg["params"]["coefficients"].get("scale", 1.0)
        o = fracpde.oracle_solve_identity(pr.space, pr.a, pr.F, pr.f) / scale
        err = float(np.linalg.norm(res.u - o) / max(np.linalg.norm(o), 1e-300))
        summary["oracle_rel_error"] = err
        checks.add("matches closed-form solution", err <= 1e-8, err, 1e-8)
    return pr, res, summary


def _pde_solve(cfg, rng, out: Path, checks: Checks) -> dict:
    _, _, summary = _solve_and_save(cfg, rng, out, checks)
    return {"solve": summary}


def _pde_rh(cfg, rng, out: Path, checks: Checks) -> dict:
    p = cfg["params"]
    pr, res, summary = _solve_and_save(cfg, rng, out, checks)
    fseed = int(rng.integers(2**31))
    fam = _family(pr.space, p["family"], fseed)
    rep = fracpde.solution_rh_report(res, pr, fam, rho=p["rho"], p_grid=p["p_grid"], C_max=p["C_max"])
    _write_rows(out / "balls.csv", rep.rows)
    rep.gain.write_csv(out / "gain.csv")
    out_ = {"solve": summary, "rh": rep.summary()}
    checks.add("eps_hat > 0", rep.eps_hat is not None and rep.eps_hat > 0, rep.eps_hat, 0.0)
    if p["enlarge"] and "random" in p["family"]:
        big = _family(pr.space, {**p["family"], "random": 2 * p["family"]["random"]}, fseed)
        rep2 = fracpde.solution_rh_report(res, pr, big, rho=p["rho"], p_grid=p["p_grid"], C_max=p["C_max"])
        C1 = rep.constant_at_gain
        C2 = None if rep.eps_hat is None else dict(rep2.gain.curve)[2 + rep.eps_hat]
        out_["enlarged"] = {"family": rep2.family, "eps_hat": rep2.eps_hat, "constant_at_gain": C2,
                            "growth": None if C1 in (None, 0) or C2 is None else C2 / C1 - 1}
    return out_


def _metrize(cfg, rng, out: Path, checks: Checks) -> dict:
    res = []
    for i, spec in enumerate(cfg["params"]["clouds"]):
        name = spec.get("name", f"cloud{i}")
        if spec["kind"] == "random":
            pts = rng.random((spec.get("n_points", 50), spec.get("dim", 2)))
            e = spec.get("exponent", 1.0)
            diff = pts[:, None, :] - pts[None, :, :]
            D = np.sqrt(np.sum(diff**2, axis=-1)) ** e
            cloud = homspace.PointCloud(pts, distance_matrix=D, quasi_constant=spec.get("quasi_constant"))
        elif spec["kind"] == "matrix":
            cloud = homspace.PointCloud(distance_matrix=spec["D"], quasi_constant=spec.get("quasi_constant"))
        else:
            cloud = homspace.load_point_cloud_csv(spec["path"], quasi_constant=spec.get("quasi_constant"))
        before = homspace.triangle_violations(cloud.D)
        cm = homspace.chain_metric(cloud)
        after = homspace.triangle_violations(cm.metric**cm.delta)
        res.append({"name": name, "n_points": cloud.n_points, "quasi_constant": cloud.quasi_constant,
                    "quasi_constant_method": cloud.quasi_constant_method, "delta": cm.delta,
                    "defect": cm.defect, "violations_before": before, "violations_after": after})
        checks.add(f"{name}: triangle inequality after metrization", after == 0, after, 0)
    return {"clouds": res}


RUNNERS = {"ops-selftest": _ops_selftest, "gehring-verify": _gehring_verify,
           "weights-check": _weights_check, "seq-transforms": _seq_transforms,
           "pde-solve": _pde_solve, "pde-rh": _pde_rh, "metrize": _metrize}


def run(cfg: dict, out: Path) -> dict:
    """Run a resolved config, write the report files and return the report."""
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg["seed"])
    checks = Checks()
    t0 = time.time()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        results = RUNNERS[cfg["kind"]](cfg, rng, out, checks)
    msgs = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    report = _clean({"kind": cfg["kind"], "config": cfg, "results": results,
                     "assertions": checks.items, "passed": checks.ok, "warnings": msgs})
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    with open(out / "run.log", "a") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} kind={cfg['kind']} seed={cfg['seed']} "
                 f"seconds={time.time() - t0:.3f} passed={checks.ok}\n")
    return report


def default_config(kind: str) -> dict:
    return json.loads(resources.files("rhtail").joinpath("configs", f"{kind}.json").read_text())


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="rhtail", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory (default: config 'out' or ./out/KIND)")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_parser("schema", help="print the config JSON schema")
    d = sub.add_parser("defaults", help="write the default configs to a directory")
    d.add_argument("dir")
    args = ap.parse_args(argv)
    if args.cmd == "schema":
        print(json.dumps(SCHEMA, indent=2, sort_keys=True))
        return 0
    if args.cmd == "defaults":
        dest = Path(args.dir)
        dest.mkdir(parents=True, exist_ok=True)
        for k in KINDS:
            (dest / f"{k}.json").write_text(json.dumps(default_config(k), indent=2) + "\n")
        print(f"wrote {len(KINDS)} configs to {dest}")
        return 0
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out or cfg.get("out") or Path("out") / cfg["kind"])
    report = run(cfg, out)
    for c in report["assertions"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
    print(f"report: {out / 'report.json'}")
    return 0 if report["passed"] else 1
