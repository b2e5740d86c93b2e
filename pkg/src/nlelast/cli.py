"""Command line front end.

A run is described by a single JSON document with blocks for the kernel,
the domain, the material tensor, the load, the solver, and the output
directory.  Unknown keys anywhere in the document are rejected before any
computation starts, every numeric report embeds the sha256 digest of the
effective configuration, and all floating point output is printed with 17
significant digits so that reruns diff bit for bit.

Exit codes: 0 on success, 2 for configuration problems, 3 when a kernel
hypothesis, ellipticity, or compatibility gate fails (including failed
verification checks), 4 when an iterative solve breaks down.
"""

from __future__ import annotations

import argparse
import ast
import hashlib
import json
import math
import os
import sys

import numpy as np

from .errors import (AdmissibilityError, ConfigError, QuadratureError,
                     SolveError)
from .kernels import (Kernel, ScaledProfile, check_hypotheses,
                      fractional_constant, kernel_mass, make_constant,
                      make_fractional, make_truncated_fractional, q_hat,
                      q_profile, rescale)
from .grid import (Field, TorusGrid, build_domain, field_meta, field_to_csv,
                   interpolate)
from .elasticity import check_admissible, tensor_from_config
from .operators import (build_stencil, leibniz_remainder, nonlocal_divergence,
                        nonlocal_gradient, spectral_divergence,
                        spectral_gradient, spectral_laplacian)
from .solve import (jacobi_diagonal, min_ritz_value, solve_dirichlet,
                    solve_neumann)
from .eringen import compare_forms, scalar_identity_gap
from . import localize


# ---------------------------------------------------------------------------
# configuration schema
# ---------------------------------------------------------------------------


_KERNEL_DEFAULTS = {
    "truncated_fractional": {
        "family": "truncated_fractional",
        "s": 0.5,
        "delta": 0.25,
        "b0": 0.5,
        "scale": 1.0,
    },
    "fractional": {"family": "fractional", "s": 0.5, "amplitude": None,
                   "scale": 1.0},
    "constant": {"family": "constant", "radius": 0.25, "scale": 1.0},
}

_TENSOR_DEFAULTS = {
    "isotropic": {"type": "isotropic", "mu": 1.0, "lambda": 0.3},
    "general": {"type": "general"},
}

_DEFAULT_CONFIG = {
    "kernel": _KERNEL_DEFAULTS["truncated_fractional"],
    "domain": {"box": [[0.0, 1.0]], "h": 1.0 / 256, "delta": None,
               "collar_mult": 1},
    "tensor": _TENSOR_DEFAULTS["isotropic"],
    "load": {"expression": "10*sin(3.141592653589793*x1)"},
    "solver": {"tol": 1e-10, "maxiter": None, "preconditioner": False,
               "project_load": False},
    "output": {"directory": "nlelast-out"},
    "seed": 0,
    "eringen": {"resolutions": [128, 256, 512], "trials": 8},
    "localize": {},
}

_TOP_KEYS = tuple(_DEFAULT_CONFIG)


def _as_map(value, path):
    if not isinstance(value, dict):
        raise ConfigError("%s must be a JSON object" % path)
    return value


def _reject_unknown(block, allowed, path):
    extra = sorted(set(block) - set(allowed))
    if extra:
        raise ConfigError("unknown key%s under %s: %s"
                          % ("s" if len(extra) > 1 else "", path,
                             ", ".join(extra)))


def _num(block, key, path, *, lo=None, hi=None, open_ends=False):
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError("%s.%s must be a number" % (path, key))
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError("%s.%s must be finite" % (path, key))
    if lo is not None and (v <= lo if open_ends else v < lo):
        raise ConfigError("%s.%s must be %s %.17g"
                          % (path, key, ">" if open_ends else ">=", lo))
    if hi is not None and (v >= hi if open_ends else v > hi):
        raise ConfigError("%s.%s must be %s %.17g"
                          % (path, key, "<" if open_ends else "<=", hi))
    block[key] = v
    return v


def _intval(block, key, path, *, lo=None):
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError("%s.%s must be an integer" % (path, key))
    if lo is not None and v < lo:
        raise ConfigError("%s.%s must be >= %d" % (path, key, lo))
    return v


def _boolval(block, key, path):
    if not isinstance(block[key], bool):
        raise ConfigError("%s.%s must be true or false" % (path, key))
    return block[key]


def _merge(default, user, path):
    merged = dict(default)
    merged.update(_as_map(user, path))
    return merged


def _validate_kernel(block):
    block = _as_map(block, "kernel")
    family = block.get("family", "truncated_fractional")
    if family not in _KERNEL_DEFAULTS:
        raise ConfigError("kernel.family must be one of %s"
                          % ", ".join(sorted(_KERNEL_DEFAULTS)))
    merged = _merge(_KERNEL_DEFAULTS[family], block, "kernel")
    merged["family"] = family
    _reject_unknown(merged, _KERNEL_DEFAULTS[family], "kernel")
    if family in ("truncated_fractional", "fractional"):
        _num(merged, "s", "kernel", lo=0.0, hi=1.0, open_ends=True)
    if family == "truncated_fractional":
        _num(merged, "delta", "kernel", lo=0.0, open_ends=True)
        _num(merged, "b0", "kernel", lo=0.0, hi=1.0, open_ends=True)
    if family == "fractional" and merged["amplitude"] is not None:
        _num(merged, "amplitude", "kernel", lo=0.0, open_ends=True)
    if family == "constant":
        _num(merged, "radius", "kernel", lo=0.0, open_ends=True)
    _num(merged, "scale", "kernel", lo=0.0, open_ends=True)
    return merged


def _validate_domain(block):
    merged = _merge(_DEFAULT_CONFIG["domain"], block, "domain")
    _reject_unknown(merged, _DEFAULT_CONFIG["domain"], "domain")
    box = merged["box"]
    if (not isinstance(box, list) or not 1 <= len(box) <= 2
            or not all(isinstance(p, list) and len(p) == 2 for p in box)):
        raise ConfigError(
            "domain.box must be a list of one or two [lo, hi] pairs")
    clean = []
    for i, (lo, hi) in enumerate(box):
        if any(isinstance(v, bool) or not isinstance(v, (int, float))
               for v in (lo, hi)):
            raise ConfigError("domain.box[%d] must contain numbers" % i)
        lo, hi = float(lo), float(hi)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ConfigError("domain.box[%d] needs lo < hi" % i)
        clean.append([lo, hi])
    merged["box"] = clean
    _num(merged, "h", "domain", lo=0.0, open_ends=True)
    if merged["delta"] is not None:
        _num(merged, "delta", "domain", lo=0.0)
    merged["collar_mult"] = _intval(merged, "collar_mult", "domain", lo=1)
    return merged


def _validate_tensor(block):
    block = _as_map(block, "tensor")
    kind = block.get("type", "isotropic")
    if kind not in _TENSOR_DEFAULTS:
        raise ConfigError("tensor.type must be isotropic or general")
    merged = _merge(_TENSOR_DEFAULTS[kind], block, "tensor")
    merged["type"] = kind
    # tensor_from_config re-validates keys and moduli per type
    return merged


def _validate_load(block):
    block = _as_map(block, "load")
    if "expression" in block or "csv" in block:
        merged = dict(block)
    else:
        merged = dict(_DEFAULT_CONFIG["load"])
        merged.update(block)
    _reject_unknown(merged, ("expression", "csv"), "load")
    if ("expression" in merged) == ("csv" in merged):
        raise ConfigError("load needs exactly one of expression or csv")
    if "csv" in merged and not (isinstance(merged["csv"], str)
                                and merged["csv"]):
        raise ConfigError("load.csv must be a file path")
    if "expression" in merged:
        e = merged["expression"]
        ok = isinstance(e, str) or (isinstance(e, list)
                                    and all(isinstance(c, str) for c in e))
        if not ok:
            raise ConfigError(
                "load.expression must be a string or list of strings")
    return merged


def _validate_solver(block):
    merged = _merge(_DEFAULT_CONFIG["solver"], block, "solver")
    _reject_unknown(merged, _DEFAULT_CONFIG["solver"], "solver")
    _num(merged, "tol", "solver", lo=0.0, open_ends=True)
    if merged["maxiter"] is not None:
        merged["maxiter"] = _intval(merged, "maxiter", "solver", lo=1)
    _boolval(merged, "preconditioner", "solver")
    _boolval(merged, "project_load", "solver")
    return merged


def _validate_output(block):
    merged = _merge(_DEFAULT_CONFIG["output"], block, "output")
    _reject_unknown(merged, _DEFAULT_CONFIG["output"], "output")
    if not (isinstance(merged["directory"], str) and merged["directory"]):
        raise ConfigError("output.directory must be a nonempty path")
    return merged


def _validate_eringen(block):
    merged = _merge(_DEFAULT_CONFIG["eringen"], block, "eringen")
    _reject_unknown(merged, _DEFAULT_CONFIG["eringen"], "eringen")
    res = merged["resolutions"]
    if (not isinstance(res, list) or not res
            or any(isinstance(n, bool) or not isinstance(n, int) or n < 4
                   for n in res)):
        raise ConfigError(
            "eringen.resolutions must be a nonempty list of integers >= 4")
    merged["trials"] = _intval(merged, "trials", "eringen", lo=1)
    return merged


def _validate_localize(block):
    block = _as_map(block, "localize")
    allowed = ("deltas", "s_values", "s", "delta", "h", "tol")
    _reject_unknown(block, allowed, "localize")
    merged = dict(block)
    for key in ("deltas", "s_values"):
        if key in merged:
            vals = merged[key]
            if (not isinstance(vals, list) or len(vals) < 2
                    or any(isinstance(v, bool) or not isinstance(v, (int, float))
                           or not 0.0 < float(v) for v in vals)):
                raise ConfigError(
                    "localize.%s must list at least two positive numbers" % key)
            merged[key] = [float(v) for v in vals]
    for key in ("s", "delta", "h", "tol"):
        if key in merged:
            hi = 1.0 if key == "s" else None
            _num(merged, key, "localize", lo=0.0, hi=hi, open_ends=True)
    return merged


def effective_config(raw) -> dict:
    """Merge a user document over the defaults, validating every block."""
    raw = _as_map(raw, "config")
    _reject_unknown(raw, _TOP_KEYS, "the top level")
    cfg = {
        "kernel": _validate_kernel(raw.get("kernel", {})),
        "domain": _validate_domain(raw.get("domain", {})),
        "tensor": _validate_tensor(raw.get("tensor", {})),
        "load": _validate_load(raw.get("load", {})),
        "solver": _validate_solver(raw.get("solver", {})),
        "output": _validate_output(raw.get("output", {})),
        "seed": raw.get("seed", 0),
        "eringen": _validate_eringen(raw.get("eringen", {})),
        "localize": _validate_localize(raw.get("localize", {})),
    }
    cfg["seed"] = _intval(cfg, "seed", "config", lo=0)
    return cfg


def read_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc))
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config %s is not valid JSON: %s" % (path, exc))


# ---------------------------------------------------------------------------
# load expressions
# ---------------------------------------------------------------------------


_EXPR_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_EXPR_OPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.UAdd, ast.USub)


def compile_expression(text: str, dim: int):
    """Compile a load component over x1 (and x2 in 2-D) to a coords callable.

    The grammar is deliberately tiny: numbers, the coordinate names, the
    four arithmetic operators, powers, and the functions sin, cos, exp.
    Anything richer belongs in a CSV load file.
    """
    if not isinstance(text, str):
        raise ConfigError("load expressions must be strings")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError("load expression %r does not parse: %s"
                          % (text, exc.msg))
    names = {"x1"} | ({"x2"} if dim == 2 else set())
    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.Load) + _EXPR_OPS):
            continue
        if isinstance(node, (ast.BinOp, ast.UnaryOp)):
            if isinstance(node.op, _EXPR_OPS):
                continue
        elif isinstance(node, ast.Call):
            if (isinstance(node.func, ast.Name)
                    and node.func.id in _EXPR_FUNCS
                    and len(node.args) == 1 and not node.keywords):
                continue
            raise ConfigError(
                "load expressions may only call sin, cos, and exp")
        elif isinstance(node, ast.Name):
            if node.id in names or node.id in _EXPR_FUNCS:
                continue
            raise ConfigError("unknown name %r in load expression (use %s)"
                              % (node.id, ", ".join(sorted(names))))
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, (int, float)) \
                    and not isinstance(node.value, bool):
                continue
        raise ConfigError("load expression %r uses disallowed syntax (%s)"
                          % (text, type(node).__name__))
    code = compile(tree, "<load>", "eval")

    def evaluate(coords):
        env = dict(_EXPR_FUNCS)
        env["x1"] = coords[:, 0]
        if dim == 2:
            env["x2"] = coords[:, 1]
        try:
            out = eval(code, {"__builtins__": {}}, env)
        except (ZeroDivisionError, OverflowError) as exc:
            raise ConfigError("load expression %r failed to evaluate: %s"
                              % (text, exc))
        out = np.broadcast_to(np.asarray(out, dtype=float),
                              (coords.shape[0],))
        if not np.all(np.isfinite(out)):
            raise ConfigError(
                "load expression %r produced non-finite values" % text)
        return np.array(out)

    return evaluate


def build_load(load_cfg, dom) -> np.ndarray:
    if "expression" in load_cfg:
        expr = load_cfg["expression"]
        parts = [expr] if isinstance(expr, str) else list(expr)
        if len(parts) != dom.dim:
            raise ConfigError("the load needs %d expression component%s"
                              % (dom.dim, "" if dom.dim == 1 else "s"))
        cols = [compile_expression(p, dom.dim)(dom.coords) for p in parts]
        return np.column_stack(cols)
    path = load_cfg["csv"]
    try:
        vals = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ConfigError("cannot read load CSV %s: %s" % (path, exc))
    except ValueError as exc:
        raise ConfigError("load CSV %s is not numeric: %s" % (path, exc))
    if vals.shape != (dom.nnodes, dom.dim):
        raise ConfigError(
            "load CSV %s has shape %s; the lattice needs (%d, %d)"
            % (path, vals.shape, dom.nnodes, dom.dim))
    if not np.all(np.isfinite(vals)):
        raise ConfigError("load CSV %s contains non-finite values" % path)
    return vals


# ---------------------------------------------------------------------------
# builders and gates
# ---------------------------------------------------------------------------


def build_kernel(cfg, dim: int) -> Kernel:
    kc = cfg["kernel"]
    family = kc["family"]
    if family == "truncated_fractional":
        k = make_truncated_fractional(dim, kc["s"], kc["delta"], kc["b0"])
    elif family == "fractional":
        k = make_fractional(dim, kc["s"], kc["amplitude"])
    else:
        k = make_constant(dim, kc["radius"])
    if kc["scale"] != 1.0:
        # an off-unit scale deliberately breaks the mass calibration
        k = Kernel(dim, ScaledProfile(k.profile, 1.0, kc["scale"]),
                   k.support_radius, k.frac_lower, k.frac_upper,
                   normalized=False, hyp_window=k.hyp_window)
    return k


def gate_kernel(k: Kernel):
    """Hypothesis gate: structural checks always, fractional ones if declared."""
    rep = check_hypotheses(k)
    required = [rep.h0, rep.h1, rep.h2]
    if k.frac_upper is not None:
        required.append(rep.h3)
    if k.frac_lower is not None:
        required.append(rep.h4)
    if not all(required):
        raise AdmissibilityError(
            "kernel failed its hypothesis checks: "
            + ("; ".join(rep.notes) if rep.notes else "see the probe report"))
    return rep


def build_box(cfg):
    return tuple(tuple(pair) for pair in cfg["domain"]["box"])


def resolve_delta(cfg, k: Kernel) -> float:
    dc = cfg["domain"]
    if dc["delta"] is not None:
        return dc["delta"]
    if not math.isfinite(k.support_radius):
        raise ConfigError(
            "the kernel has unbounded support; set domain.delta to the "
            "truncation radius explicitly")
    return k.support_radius


def build_run_domain(cfg, k: Kernel):
    dc = cfg["domain"]
    return build_domain(build_box(cfg), resolve_delta(cfg, k), dc["h"],
                        collar_mult=dc["collar_mult"])


def _material(cfg, dim: int):
    tensor = tensor_from_config(dim, cfg["tensor"])
    check_admissible(tensor)
    return tensor


# ---------------------------------------------------------------------------
# deterministic emission
# ---------------------------------------------------------------------------


def _encode_json(value, out, sort_keys):
    if value is None:
        out.append("null")
    elif isinstance(value, bool):
        out.append("true" if value else "false")
    elif isinstance(value, (int, np.integer)):
        out.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        v = float(value)
        out.append("%.17g" % v if math.isfinite(v) else json.dumps(str(v)))
    elif isinstance(value, str):
        out.append(json.dumps(value))
    elif isinstance(value, (list, tuple, np.ndarray)):
        out.append("[")
        items = value.tolist() if isinstance(value, np.ndarray) else value
        for i, item in enumerate(items):
            if i:
                out.append(", ")
            _encode_json(item, out, sort_keys)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        keys = sorted(value) if sort_keys else list(value)
        for i, key in enumerate(keys):
            if i:
                out.append(", ")
            out.append(json.dumps(str(key)) + ": ")
            _encode_json(value[key], out, sort_keys)
        out.append("}")
    else:
        raise TypeError("cannot serialize %r" % type(value).__name__)


def dumps_17g(value, sort_keys=False) -> str:
    """JSON text with every float at 17 significant digits."""
    out = []
    _encode_json(value, out, sort_keys)
    return "".join(out) + "\n"


def config_digest(cfg) -> str:
    return hashlib.sha256(
        dumps_17g(cfg, sort_keys=True).encode("utf-8")).hexdigest()


def base_report(command: str, cfg) -> dict:
    return {"command": command, "config_sha256": config_digest(cfg)}


def write_outputs(cfg, files: dict) -> list:
    outdir = cfg["output"]["directory"]
    os.makedirs(outdir, exist_ok=True)
    written = []
    for name, text in files.items():
        path = os.path.join(outdir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        written.append(path)
    return written


def rows_to_csv(rows, columns) -> str:
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            v = row[col]
            cells.append(str(int(v)) if isinstance(v, (int, np.integer))
                         else "%.17g" % float(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _report_of(rep) -> dict:
    return {
        "converged": bool(rep.converged),
        "iterations": int(rep.iterations),
        "residual": float(rep.residual),
        "energy": float(rep.energy),
        "ndof": int(rep.ndof),
        "diagnostics": dict(rep.diagnostics),
    }


# ---------------------------------------------------------------------------
# solve subcommands
# ---------------------------------------------------------------------------


def cmd_solve_dirichlet(cfg, args) -> int:
    dim = len(cfg["domain"]["box"])
    tensor = _material(cfg, dim)
    k = build_kernel(cfg, dim)
    hyp = gate_kernel(k)
    dom = build_run_domain(cfg, k)
    fvals = build_load(cfg["load"], dom)
    sc = cfg["solver"]
    precond = jacobi_diagonal(tensor, k, dom) if sc["preconditioner"] else None
    u, rep = solve_dirichlet(tensor, k, dom, fvals, tol=sc["tol"],
                             maxiter=sc["maxiter"], precond=precond)
    report = base_report("solve-dirichlet", cfg)
    report["hypotheses"] = hyp.as_dict()
    report["solver"] = _report_of(rep)
    report["field"] = field_meta(u)
    report["config"] = cfg
    paths = write_outputs(cfg, {"solution.csv": field_to_csv(u),
                                "report.json": dumps_17g(report)})
    print("solved the constrained problem on %d nodes "
          "(%d iterations, energy %.17g)"
          % (dom.nnodes, rep.iterations, rep.energy))
    for p in paths:
        print("wrote", p)
    return 0


def _require_core_load(dom, fvals):
    """The physical load must vanish on and past the interaction collar."""
    margin = dom.delta
    eps = 1e-6 * dom.h
    inside = np.ones(dom.nnodes, dtype=bool)
    for d in range(dom.dim):
        inside &= (dom.coords[:, d] >= dom.lo[d] + margin - eps) \
            & (dom.coords[:, d] <= dom.hi[d] - margin + eps)
    scale = float(np.abs(fvals).max())
    if scale == 0.0:
        return
    spill = float(np.abs(fvals[~inside]).max()) if (~inside).any() else 0.0
    if spill > 1e-12 * scale:
        raise ConfigError(
            "the load must vanish outside the retracted core (found "
            "%.17g at distance < delta from the boundary); shrink its "
            "support or supply compatible data" % spill)


def cmd_solve_neumann(cfg, args) -> int:
    dim = len(cfg["domain"]["box"])
    tensor = _material(cfg, dim)
    k = build_kernel(cfg, dim)
    hyp = gate_kernel(k)
    dom = build_run_domain(cfg, k)
    fvals = build_load(cfg["load"], dom)
    _require_core_load(dom, fvals)
    sc = cfg["solver"]
    precond = jacobi_diagonal(tensor, k, dom, neumann=True) \
        if sc["preconditioner"] else None
    u, rep = solve_neumann(tensor, k, dom, fvals, tol=sc["tol"],
                           maxiter=sc["maxiter"],
                           project_load=sc["project_load"], precond=precond)
    report = base_report("solve-neumann", cfg)
    report["hypotheses"] = hyp.as_dict()
    report["solver"] = _report_of(rep)
    report["field"] = field_meta(u)
    report["config"] = cfg
    paths = write_outputs(cfg, {"solution.csv": field_to_csv(u),
                                "report.json": dumps_17g(report)})
    print("solved the unconstrained problem on %d nodes "
          "(%d iterations, compatibility defect %.17g)"
          % (dom.nnodes, rep.iterations,
             rep.diagnostics["compatibility_defect"]))
    for p in paths:
        print("wrote", p)
    return 0


# ---------------------------------------------------------------------------
# eringen comparison
# ---------------------------------------------------------------------------


def cmd_eringen_compare(cfg, args) -> int:
    dim = len(cfg["domain"]["box"])
    tensor = _material(cfg, dim)
    k = build_kernel(cfg, dim)
    gate_kernel(k)
    box = build_box(cfg)
    widths = {hi - lo for lo, hi in box}
    if len(widths) != 1:
        raise ConfigError("eringen-compare needs a box with equal side lengths")
    width = widths.pop()
    delta = resolve_delta(cfg, k)
    rows = []
    for n in cfg["eringen"]["resolutions"]:
        h = width / n
        dom = build_domain(box, delta, h)
        rep = compare_forms(k, tensor, dom, cfg["eringen"]["trials"],
                            cfg["seed"])
        rows.append({"resolution": int(n), "h": h,
                     "max_discrepancy": rep.max_discrepancy,
                     "mercer_min": rep.mercer_min})
    worst = min(row["mercer_min"] for row in rows)
    if worst <= 0.0:
        raise AdmissibilityError(
            "the attenuation Gram lost positivity (smallest sampled "
            "quadratic form %.17g)" % worst)
    report = base_report("eringen-compare", cfg)
    report["resolutions"] = [row["resolution"] for row in rows]
    report["discrepancies"] = [row["max_discrepancy"] for row in rows]
    report["mercer_min"] = [row["mercer_min"] for row in rows]
    report["config"] = cfg
    table = rows_to_csv(rows, ("resolution", "h", "max_discrepancy",
                               "mercer_min"))
    paths = write_outputs(cfg, {"table.csv": table,
                                "report.json": dumps_17g(report)})
    for row in rows:
        print("N=%d  discrepancy %.17g  mercer_min %.17g"
              % (row["resolution"], row["max_discrepancy"],
                 row["mercer_min"]))
    for p in paths:
        print("wrote", p)
    return 0


# ---------------------------------------------------------------------------
# localization studies
# ---------------------------------------------------------------------------


def _localize_kwargs(cfg, keys) -> dict:
    """Optional overrides shared with the study runners."""
    lc = cfg["localize"]
    out = {}
    for key in keys:
        if key in lc:
            val = lc[key]
            out[key] = tuple(val) if isinstance(val, list) else val
    out.setdefault("tol", cfg["solver"]["tol"])
    return out


def cmd_localize(cfg, args) -> int:
    dim = len(cfg["domain"]["box"])
    tensor = _material(cfg, dim)
    box = build_box(cfg)
    kc = cfg["kernel"]
    if kc["scale"] != 1.0:
        raise ConfigError(
            "limit studies need a mass-calibrated kernel; set kernel.scale "
            "to 1")
    s = kc.get("s", 0.5)
    b0 = kc.get("b0", 0.5)
    regime = args.regime
    if regime == localize.HORIZON_TO_ZERO:
        # the study rescales a unit-support base itself
        if kc["family"] == "constant":
            base = make_constant(dim, 1.0)
        elif kc["family"] == "truncated_fractional":
            base = make_truncated_fractional(dim, s, 1.0, b0)
        else:
            raise ConfigError(
                "the vanishing-horizon study needs a compactly supported "
                "kernel family")
        kw = _localize_kwargs(cfg, ("deltas", "h"))
        study = localize.run_horizon_to_zero(
            base, tensor, localize.smooth_sine_load, box=box, **kw)
    elif regime == localize.HORIZON_TO_INFINITY:
        if kc["family"] == "truncated_fractional":
            base = make_truncated_fractional(dim, s, 2.0, b0)
        elif kc["family"] == "fractional":
            base = make_fractional(dim, s, kc["amplitude"])
        else:
            base = make_constant(dim, 2.0)
        kw = _localize_kwargs(cfg, ("deltas", "h"))
        study = localize.run_horizon_to_infinity(
            base, tensor, localize.smooth_sine_load, box=box, **kw)
    elif regime == localize.S_TO_ONE:
        kw = _localize_kwargs(cfg, ("s_values", "delta", "h"))
        study = localize.run_s_to_one(
            tensor, localize.smooth_sine_load, box=box, **kw)
    elif regime == localize.NEUMANN_HORIZON_TO_ZERO:
        kw = _localize_kwargs(cfg, ("deltas", "h", "s"))
        kw.setdefault("s", s)
        study = localize.run_neumann_horizon_to_zero(
            tensor, localize.balanced_bump_load, box=box, **kw)
    else:
        raise ConfigError("unknown regime %r" % regime)

    rows = localize.study_rows(study)
    columns = list(rows[0])
    errs = np.asarray(study.errors)
    nonincreasing = bool(np.all(errs[1:] <= 1.05 * errs[:-1]))
    report = base_report("localize", cfg)
    report["regime"] = study.regime
    report["parameters"] = [float(p) for p in study.parameters]
    report["L2_errors"] = [float(e) for e in study.errors]
    report["reference_energy"] = float(study.reference_report.energy)
    report["member_energies"] = [float(r.energy)
                                 for r in study.member_reports]
    report["nonincreasing"] = nonincreasing
    report["final_over_initial"] = (float(errs[-1] / errs[0])
                                    if errs[0] > 0.0 else 0.0)
    report["diagnostics"] = {key: val for key, val
                             in study.diagnostics.items()}
    report["config"] = cfg
    paths = write_outputs(cfg, {"table.csv": rows_to_csv(rows, columns),
                                "report.json": dumps_17g(report)})
    for row in rows:
        print("  ".join("%s=%.17g" % (c, row[c]) for c in columns))
    print("errors %s along the sequence"
          % ("shrink monotonically" if nonincreasing
             else "do NOT shrink monotonically"))
    for p in paths:
        print("wrote", p)
    return 0


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------


def _check(name, tolerance, fn, checks, note=""):
    try:
        measured, passed = fn()
    except (ConfigError, AdmissibilityError, QuadratureError,
            SolveError) as exc:
        measured, passed, note = math.inf, False, str(exc)
    entry = {"name": name, "measured": float(measured),
             "tolerance": float(tolerance), "passed": bool(passed)}
    if note:
        entry["note"] = note
    checks.append(entry)


def verify_suite(cfg) -> list:
    """Run the operator, inequality, and equivalence checks for a config.

    Every check reports its measured value next to the tolerance it is
    held to; the caller turns any failure into a nonzero exit.
    """
    dim = len(cfg["domain"]["box"])
    tensor = _material(cfg, dim)
    k = build_kernel(cfg, dim)
    gate_kernel(k)
    dom = build_run_domain(cfg, k)
    seed = cfg["seed"]
    s_here = cfg["kernel"].get("s", 0.5)
    checks = []

    def affine():
        rng = np.random.default_rng(seed)
        A = rng.uniform(-1.0, 1.0, (dim, dim)) + 2.0 * np.eye(dim)
        b = rng.uniform(-1.0, 1.0, dim)
        u = interpolate(dom, lambda x: x @ A.T + b)
        grad = nonlocal_gradient(k, u).values
        om = dom.omega_closed_index()
        measured = float(np.abs(grad[om] - A).max())
        return measured, measured <= 1e-5

    _check("affine_exactness", 1e-5, affine, checks)

    def duality():
        st = build_stencil(k, dom)
        measured = 0.0
        for B in st.mats:
            gap = (B + B.T).tocoo()
            if gap.data.size:
                measured = max(measured, float(np.abs(gap.data).max()))
        return measured, measured <= 1e-14

    _check("duality_adjointness", 1e-14, duality, checks)

    def trace():
        rng = np.random.default_rng(seed + 1)
        v = Field(dom, rng.standard_normal((dom.nnodes, dim)))
        grad = nonlocal_gradient(k, v).values
        div = nonlocal_divergence(k, v).values
        measured = float(np.abs(np.trace(grad, axis1=1, axis2=2) - div).max())
        return measured, measured <= 1e-12

    _check("trace_identity", 1e-12, trace, checks)

    grid = TorusGrid(dim, 64)

    def grad_div():
        rng = np.random.default_rng(seed + 2)
        v = rng.standard_normal(grid.shape + (dim,))
        v -= v.mean(axis=tuple(range(dim)))
        one = spectral_gradient(k, grid, spectral_divergence(k, grid, v))
        Dv = spectral_gradient(k, grid, v)
        other = spectral_divergence(k, grid, np.swapaxes(Dv, -1, -2))
        measured = float(np.abs(one - other).max())
        return measured, measured <= 1e-12

    _check("grad_div_identity", 1e-12, grad_div, checks)

    def laplacian():
        rng = np.random.default_rng(seed + 3)
        u = rng.standard_normal(grid.shape)
        u -= u.mean()
        comp = -spectral_divergence(k, grid, spectral_gradient(k, grid, u))
        measured = float(np.abs(comp - spectral_laplacian(k, grid, u)).max())
        return measured, measured <= 1e-10

    _check("laplacian_composition", 1e-10, laplacian, checks)

    def leibniz():
        rng = np.random.default_rng(seed + 4)
        phi = Field(dom, rng.standard_normal(dom.nnodes))
        Phi = Field(dom, rng.standard_normal((dom.nnodes, dim, dim)))
        prod = Field(dom, phi.values[:, None, None] * Phi.values)
        lhs = nonlocal_divergence(k, prod).values
        mid = phi.values[:, None] * nonlocal_divergence(k, Phi).values
        rem = leibniz_remainder(k, phi, Phi).values
        scale = max(float(np.abs(lhs).max()), 1.0)
        measured = float(np.abs(lhs - mid - rem).max()) / scale
        return measured, measured <= 1e-6

    _check("leibniz_consistency", 1e-6, leibniz, checks)

    def korn():
        rng = np.random.default_rng(seed + 5)
        worst = math.inf
        for _ in range(20):
            v = rng.standard_normal(grid.shape + (dim,))
            v -= v.mean(axis=tuple(range(dim)))
            g = spectral_gradient(k, grid, v)
            sym = 0.5 * (g + np.swapaxes(g, -1, -2))
            full = float(np.sum(g * g))
            if full == 0.0:
                continue
            worst = min(worst, float(np.sum(sym * sym)) / full)
        return worst, worst >= 0.5 - 1e-9

    _check("korn_ratio", 0.5, korn, checks)

    def poincare():
        lam = min_ritz_value(tensor, k, dom)
        measured = 1.0 / math.sqrt(lam) if lam > 0.0 else math.inf
        return measured, measured <= 1e3

    _check("poincare_ratio", 1e3, poincare, checks)

    def scaling():
        # a non-dyadic horizon keeps the two quadratures from sharing bits
        base = make_truncated_fractional(dim, s_here, 1.0)
        shrunk = rescale(base, 0.4, "vanishing")
        measured = 0.0
        for xi in (0.3, 1.7, 6.0):
            want = float(q_hat(base, 0.4 * xi))
            got = float(q_hat(shrunk, xi))
            measured = max(measured, abs(got - want) / abs(want))
        return measured, measured <= 1e-6

    _check("fourier_scaling", 1e-6, scaling, checks)

    def eringen_identity():
        if dim == 1:
            k1, d1 = k, dom
        else:
            k1 = build_kernel(cfg, 1)
            if not math.isfinite(k1.support_radius):
                raise QuadratureError(
                    "the scalar identity needs compact support")
            d1 = build_domain(((0.0, 1.0),), k1.support_radius,
                              k1.support_radius / 32.0)
        _, _, gap = scalar_identity_gap(k1, d1)
        return gap, gap <= 1e-12

    _check("eringen_scalar_identity", 1e-12, eringen_identity, checks)
    return checks


def cmd_verify(cfg, args) -> int:
    checks = verify_suite(cfg)
    all_passed = all(c["passed"] for c in checks)
    report = base_report("verify", cfg)
    report["checks"] = checks
    report["all_passed"] = all_passed
    report["config"] = cfg
    paths = write_outputs(cfg, {"report.json": dumps_17g(report)})
    for c in checks:
        line = "%s %s  measured=%.17g  tolerance=%.17g" % (
            "PASS" if c["passed"] else "FAIL", c["name"], c["measured"],
            c["tolerance"])
        if "note" in c:
            line += "  (%s)" % c["note"]
        print(line)
    for p in paths:
        print("wrote", p)
    if not all_passed:
        print("verification FAILED", file=sys.stderr)
        return 3
    print("all %d checks passed" % len(checks))
    return 0


# ---------------------------------------------------------------------------
# kernel info
# ---------------------------------------------------------------------------


def cmd_kernel_info(cfg, args) -> int:
    dim = len(cfg["domain"]["box"])
    k = build_kernel(cfg, dim)
    rep = check_hypotheses(k)
    mass = kernel_mass(k)
    kc = cfg["kernel"]

    print("family:            %s" % kc["family"])
    print("dimension:         %d" % dim)
    print("support radius:    %.17g" % k.support_radius)
    print("normalized:        %s" % ("yes" if k.normalized else "no"))
    print("mass:              %.17g" % mass)
    c_ns = None
    if k.frac_upper is not None:
        c_ns = fractional_constant(dim, k.frac_upper)
        print("c(n, s) at s=%.17g: %.17g" % (k.frac_upper, c_ns))
    flags = " ".join("%s=%s" % (h, "ok" if getattr(rep, h) else "FAIL")
                     for h in ("h0", "h1", "h2", "h3", "h4"))
    print("hypotheses:        %s" % flags)
    for note in rep.notes:
        print("  note: %s" % note)

    prof = q_profile(k)
    head_r = prof.radii[:8]
    head_q = prof.values[:8]
    print("potential head (r, Q):")
    for r, q in zip(head_r, head_q):
        print("  %.17g  %.17g" % (r, q))
    xis = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    samples = [float(q_hat(k, xi)) for xi in xis]
    print("transform samples (xi, q_hat):")
    for xi, v in zip(xis, samples):
        print("  %.17g  %.17g" % (xi, v))

    report = base_report("kernel-info", cfg)
    report["family"] = kc["family"]
    report["dim"] = dim
    report["support_radius"] = float(k.support_radius)
    report["normalized"] = bool(k.normalized)
    report["mass"] = float(mass)
    if c_ns is not None:
        report["c_ns"] = float(c_ns)
    report["hypotheses"] = rep.as_dict()
    report["potential_head"] = {"r": [float(v) for v in head_r],
                                "Q": [float(v) for v in head_q]}
    report["transform_samples"] = {"xi": list(xis), "q_hat": samples}
    report["config"] = cfg
    paths = write_outputs(cfg, {"report.json": dumps_17g(report)})
    for p in paths:
        print("wrote", p)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


_COMMANDS = {
    "solve-dirichlet": cmd_solve_dirichlet,
    "solve-neumann": cmd_solve_neumann,
    "eringen-compare": cmd_eringen_compare,
    "localize": cmd_localize,
    "verify": cmd_verify,
    "kernel-info": cmd_kernel_info,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlelast",
        description="nonlocal vector calculus and linearized nonlocal "
                    "elasticity on uniform lattices")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve-dirichlet": "solve the volume-constrained problem",
        "solve-neumann": "solve the unconstrained zero-mean problem",
        "eringen-compare": "compare the double-sum and gradient energies",
        "localize": "run a localization limit study",
        "verify": "run the structural verification suite",
        "kernel-info": "print kernel constants, potential, and transform",
    }
    for name in _COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", default=None,
                        help="JSON run configuration (defaults are used "
                             "when omitted)")
        sp.add_argument("--output", default=None,
                        help="override the output directory")
        if name == "localize":
            sp.add_argument("--regime", required=True,
                            choices=list(localize.REGIMES),
                            help="which limit to take")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 2
    try:
        cfg = effective_config(read_config(args.config))
        if args.output is not None:
            cfg["output"]["directory"] = args.output
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except QuadratureError as exc:
        print("config error (quadrature): %s" % exc, file=sys.stderr)
        return 2
    except AdmissibilityError as exc:
        print("hypothesis failure: %s" % exc, file=sys.stderr)
        return 3
    except SolveError as exc:
        print("solver failure: %s" % exc, file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
