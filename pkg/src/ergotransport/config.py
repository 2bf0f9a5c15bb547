"""JSON run configurations: parsing, validation and defaults.

A config is one JSON object.  Recognised keys (all others are rejected):

    problem      "p1" | "p2" | "eo" | "zeta-p1" | "zeta-p2" | "certify"
    d            alphabet size (default 2)
    depth        cylinder depth k (default 6); p2 also accepts kx / ky
    lambda       metric base (default 0.5)
    tol          certificate tolerance (default 1e-9)
    mu           [[point-or-label, mass], ...]; a string containing "|" is a point
    cost         tagged cost record, see ``cost.cost_from_dict``
    zeta         {"betas", "ns", "period_mode", "objective", "margin", "report_depth", "bracket"}
    eo           {"n_max", "x"}
    certify      {"system": "p1" | "p2", "input": path of a solve report}
    caps         {"fix": max d**n for orbit enumeration, "max_iter": simplex cap}
    perturb      {"scale": r}: add r * U(0, 1) noise to the lo costs (seeded by --seed)
    outputs      {"report", "plan_csv", "table_csv"}; relative paths resolve against the config file
    report       {"timings": bool}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cost import Affine, CostSpec, XCells, cost_from_dict
from .errors import ConfigError, PositivityError
from .measures import MASS_TOL, FiniteMeasure
from .shift import DEFAULT_FIX_CAP, DEFAULT_LAMBDA, Cylinder, Point

PROBLEMS = ("p1", "p2", "eo", "zeta-p1", "zeta-p2", "certify")
DEFAULT_DEPTH = 6
DEFAULT_TOL = 1e-9
DEFAULT_MARGIN = 1.0

_TOP_KEYS = {"problem", "d", "depth", "kx", "ky", "lambda", "tol", "mu", "cost", "zeta", "eo",
             "certify", "caps", "perturb", "outputs", "report"}
_ZETA_KEYS = {"betas", "ns", "period_mode", "objective", "margin", "report_depth", "bracket"}


@dataclass
class ZetaConfig:
    betas: list
    ns: list
    period_mode: str = "dividing"
    objective: str = "min"
    margin: float = DEFAULT_MARGIN
    report_depth: int | None = None
    bracket: bool = True
    flip_shift: float | None = None   # c' = flip_shift - c when objective is "min"


@dataclass
class Config:
    problem: str
    d: int = 2
    depth: int = DEFAULT_DEPTH
    kx: int = DEFAULT_DEPTH
    ky: int = DEFAULT_DEPTH
    lam: float = DEFAULT_LAMBDA
    tol: float = DEFAULT_TOL
    mu: FiniteMeasure | None = None
    cost: CostSpec | None = None
    zeta: ZetaConfig | None = None
    eo_n_max: int = 8
    eo_x: str | None = None
    certify_system: str | None = None
    certify_input: Path | None = None
    fix_cap: int = DEFAULT_FIX_CAP
    max_iter: int | None = None
    perturb_scale: float = 0.0
    outputs: dict = field(default_factory=dict)
    timings: bool = False
    base_dir: Path = field(default_factory=Path)
    raw: dict = field(default_factory=dict)

    @property
    def mode(self) -> str:
        """'p1' or 'p2': the LP family behind the problem."""
        if self.problem == "certify":
            return self.certify_system
        return "p2" if self.problem in ("p2", "zeta-p2") else "p1"

    def output_path(self, key: str):
        p = self.outputs.get(key)
        return None if p is None else (self.base_dir / p)

    def echo(self) -> dict:
        """The raw config with defaults filled in (goes into reports)."""
        out = dict(self.raw)
        out.setdefault("d", self.d)
        out.setdefault("lambda", self.lam)
        out.setdefault("tol", self.tol)
        if self.mode == "p2":
            out.setdefault("kx", self.kx)
            out.setdefault("ky", self.ky)
        else:
            out.setdefault("depth", self.depth)
        if self.zeta is not None:
            z = self.zeta
            out["zeta"] = {"betas": z.betas, "ns": z.ns, "period_mode": z.period_mode,
                           "objective": z.objective, "margin": z.margin,
                           "report_depth": z.report_depth, "bracket": z.bracket}
            if z.flip_shift is not None:
                out["zeta"]["flip_shift"] = z.flip_shift
        return out


def _get(rec, key, typ, default, field_name):
    if key not in rec:
        return default
    val = rec[key]
    if typ is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise ConfigError(f"expected a finite number, got {val!r}", field_name)
        return float(val)
    if typ is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"expected an integer, got {val!r}", field_name)
        return val
    if not isinstance(val, typ):
        raise ConfigError(f"expected {typ.__name__}, got {val!r}", field_name)
    return val


def _positive_int(rec, key, default, name, low=1):
    val = _get(rec, key, int, default, name)
    if val is not None and val < low:
        raise ConfigError(f"must be >= {low}, got {val}", name)
    return val


def _parse_mu(entries, d) -> FiniteMeasure:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("expected a nonempty list of [point-or-label, mass] pairs", "mu")
    atoms = []
    for i, item in enumerate(entries):
        name = f"mu[{i}]"
        if not (isinstance(item, list) and len(item) == 2 and isinstance(item[0], str)):
            raise ConfigError("expected [point-or-label, mass]", name)
        key, mass = item
        if isinstance(mass, bool) or not isinstance(mass, (int, float)) or not mass >= 0:
            raise ConfigError(f"mass must be a number >= 0, got {mass!r}", name)
        if "|" in key:
            try:
                key = Point.parse(key, d)
            except ValueError as exc:
                raise ConfigError(str(exc), name) from None
        atoms.append((key, float(mass)))
    keys = [k for k, _ in atoms]
    if len(set(keys)) != len(keys):
        raise ConfigError("duplicate atoms", "mu")
    total = math.fsum(m for _, m in atoms)
    if abs(total - 1.0) > MASS_TOL:
        raise ConfigError(f"masses sum to {total!r}, not 1", "mu")
    return FiniteMeasure(tuple(atoms))


def _parse_zeta(rec) -> ZetaConfig:
    if not isinstance(rec, dict):
        raise ConfigError("expected an object", "zeta")
    unknown = set(rec) - _ZETA_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", "zeta")
    out = {}
    for key in ("betas", "ns"):
        vals = rec.get(key)
        if not isinstance(vals, list) or not vals:
            raise ConfigError("expected a nonempty list", f"zeta.{key}")
        for v in vals:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"expected numbers, got {v!r}", f"zeta.{key}")
        out[key] = vals
    if any(not (b >= 0 and math.isfinite(b)) for b in out["betas"]):
        raise ConfigError("betas must be finite and >= 0", "zeta.betas")
    if any(not isinstance(n, int) or n < 1 for n in out["ns"]):
        raise ConfigError("ns must be positive integers", "zeta.ns")
    mode = _get(rec, "period_mode", str, "dividing", "zeta.period_mode")
    if mode not in ("dividing", "exact"):
        raise ConfigError(f"expected 'dividing' or 'exact', got {mode!r}", "zeta.period_mode")
    objective = _get(rec, "objective", str, "min", "zeta.objective")
    if objective not in ("min", "max"):
        raise ConfigError(f"expected 'min' or 'max', got {objective!r}", "zeta.objective")
    margin = _get(rec, "margin", float, DEFAULT_MARGIN, "zeta.margin")
    if margin <= 0:
        raise ConfigError("margin must be > 0", "zeta.margin")
    report_depth = _positive_int(rec, "report_depth", None, "zeta.report_depth", low=2)
    bracket = _get(rec, "bracket", bool, True, "zeta.bracket")
    return ZetaConfig([float(b) for b in out["betas"]], list(out["ns"]), mode, objective,
                      margin, report_depth, bracket)


def _zeta_grid(cfg: Config):
    depth = cfg.zeta.report_depth
    if cfg.problem == "zeta-p1":
        return XCells.atoms(cfg.mu.keys, cfg.d), depth
    return XCells.cylinders(depth, cfg.d), depth


def _prepare_zeta_cost(cfg: Config):
    """Flip a minimisation cost to a positive maximisation one, or check positivity."""
    z = cfg.zeta
    xcells, ky = _zeta_grid(cfg)
    lo, hi = cfg.cost.bracket_grid(xcells, ky, cfg.lam)
    if z.objective == "min":
        z.flip_shift = float(hi.max()) + z.margin
        cfg.cost = Affine(cfg.cost, -1.0, z.flip_shift)
        return
    bad = np.argwhere(lo <= 0)
    if bad.size:
        i, j = (int(t) for t in bad[0])
        u, v = xcells.cell(i), Cylinder.from_index(j, ky, cfg.d)
        raise PositivityError(
            f"zeta with objective 'max' needs c > 0; lower bound {float(lo[i, j])!r} on cell ({u}, {v})",
            (u, v))


def parse_config(text: str, base_dir=None, overrides: dict | None = None) -> Config:
    """Parse and validate a JSON config; raises ConfigError (or PositivityError).

    ``overrides`` replaces top-level keys after decoding (command-line flags).
    """
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    if not isinstance(rec, dict):
        raise ConfigError("the config must be a JSON object", line=1)
    if overrides:
        rec = {**rec, **overrides}
    unknown = set(rec) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", sorted(unknown)[0])
    problem = rec.get("problem")
    if problem not in PROBLEMS:
        raise ConfigError(f"expected one of {PROBLEMS}, got {problem!r}", "problem")

    cfg = Config(problem, raw=rec, base_dir=Path(base_dir) if base_dir is not None else Path())
    cfg.d = _positive_int(rec, "d", 2, "d", low=2)
    cfg.depth = _positive_int(rec, "depth", DEFAULT_DEPTH, "depth", low=2)
    cfg.kx = _positive_int(rec, "kx", cfg.depth, "kx", low=2)
    cfg.ky = _positive_int(rec, "ky", cfg.depth, "ky", low=2)
    cfg.lam = _get(rec, "lambda", float, DEFAULT_LAMBDA, "lambda")
    if not 0 < cfg.lam < 1:
        raise ConfigError(f"must lie in (0, 1), got {cfg.lam}", "lambda")
    cfg.tol = _get(rec, "tol", float, DEFAULT_TOL, "tol")
    if cfg.tol <= 0:
        raise ConfigError("must be > 0", "tol")

    caps = _get(rec, "caps", dict, {}, "caps")
    cfg.fix_cap = _positive_int(caps, "fix", DEFAULT_FIX_CAP, "caps.fix")
    cfg.max_iter = _positive_int(caps, "max_iter", None, "caps.max_iter")
    cfg.perturb_scale = _get(_get(rec, "perturb", dict, {}, "perturb"), "scale", float, 0.0, "perturb.scale")
    outputs = _get(rec, "outputs", dict, {}, "outputs")
    for key, val in outputs.items():
        if key not in ("report", "plan_csv", "table_csv") or not isinstance(val, str):
            raise ConfigError(f"unknown output {key!r} or non-string path", f"outputs.{key}")
    cfg.outputs = dict(outputs)
    cfg.timings = _get(_get(rec, "report", dict, {}, "report"), "timings", bool, False, "report.timings")

    if problem == "certify":
        cert = _get(rec, "certify", dict, None, "certify")
        if cert is None:
            raise ConfigError("certify runs need a 'certify' object", "certify")
        system = cert.get("system")
        if system not in ("p1", "p2"):
            raise ConfigError(f"expected 'p1' or 'p2', got {system!r}", "certify.system")
        if not isinstance(cert.get("input"), str):
            raise ConfigError("path of a solve report required", "certify.input")
        cfg.certify_system = system
        cfg.certify_input = cfg.base_dir / cert["input"]

    if "cost" not in rec:
        raise ConfigError("a cost record is required", "cost")
    if not isinstance(rec["cost"], dict):
        raise ConfigError("expected a tagged record object", "cost")
    try:
        cfg.cost = cost_from_dict(rec["cost"], cfg.d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid cost record: {exc}", "cost") from None

    needs_mu = problem in ("p1", "zeta-p1") or (problem == "certify" and cfg.certify_system == "p1")
    if needs_mu:
        if "mu" not in rec:
            raise ConfigError("this problem needs a measure mu", "mu")
        cfg.mu = _parse_mu(rec["mu"], cfg.d)
        try:
            cfg.cost.bracket_grid(XCells.atoms(cfg.mu.keys, cfg.d), 1, cfg.lam)
        except ValueError as exc:
            raise ConfigError(f"cost does not cover mu: {exc}", "mu") from None

    if problem == "eo":
        eo = _get(rec, "eo", dict, {}, "eo")
        cfg.eo_n_max = _positive_int(eo, "n_max", 8, "eo.n_max")
        cfg.eo_x = _get(eo, "x", str, None, "eo.x")

    if problem.startswith("zeta"):
        if "zeta" not in rec:
            raise ConfigError("zeta runs need a 'zeta' object", "zeta")
        cfg.zeta = _parse_zeta(rec["zeta"])
        if cfg.zeta.report_depth is None:
            cfg.zeta.report_depth = cfg.depth if problem == "zeta-p1" else cfg.ky
        _prepare_zeta_cost(cfg)
    return cfg


def load_config(path, overrides: dict | None = None) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except UnicodeDecodeError:
        raise ConfigError("config is not valid UTF-8") from None
    return parse_config(text, base_dir=path.parent, overrides=overrides)
