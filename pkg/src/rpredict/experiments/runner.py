"""Config-driven experiment runs with CSV output and a JSON metadata sidecar."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .. import __version__, minimax, regression, riskinfo, sfrl
from ..probkit import FiniteJoint, Kernel, LossMatrix, Pmf
from . import classification as cls

E_UNKNOWN_EXPERIMENT = "E_UNKNOWN_EXPERIMENT"
E_INVALID_PARAMETER = "E_INVALID_PARAMETER"
E_CONFIG_SCHEMA = "E_CONFIG_SCHEMA"
E_IO = "E_IO"


class ExperimentError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message

    def to_dict(self) -> dict:
        return {"error": self.code, "message": self.message}


# --- schemas ---------------------------------------------------------------------

_POS = {"type": "number", "exclusiveMinimum": 0}
_LAMBDAS = {"oneOf": [{"type": "array", "items": _POS, "minItems": 1}, {"type": "null"}]}
_VEC = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}}]}
_MAT = {"oneOf": [{"type": "number"},
                  {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}]}
_LOSS = {"oneOf": [{"enum": ["zero-one", "log"]},
                   {"type": "string", "pattern": "^matrix:"},
                   {"type": "object", "properties": {"matrix": _MAT}, "required": ["matrix"],
                    "additionalProperties": False}]}
_SOURCE = {"oneOf": [{"type": "string"}, {"type": "object"}]}


def _params(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


PARAM_SCHEMAS = {
    "fig3": _params({
        "mu_x": _VEC, "mu_y": {"type": "number"}, "sigma_x2": _MAT, "sigma_y2": _POS,
        "cxy": _VEC, "lambdas": _LAMBDAS, "n_mc": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
        "source": {"enum": ["gaussian", "uniform"]},
    }),
    "fig4": _params({
        "k1": {"type": "integer", "minimum": 1}, "k2": {"type": "integer", "minimum": 1},
        "q1": {"type": "number", "minimum": 0, "maximum": 1}, "lambdas": _LAMBDAS,
    }),
    "riskinfo": _params({
        "joint": _SOURCE, "loss": _LOSS, "lambdas": _LAMBDAS, "tol": _POS,
        "ncluster": {"type": "integer", "minimum": 1},
    }, required=("joint", "lambdas")),
    "minimax": _params({
        "gamma": _SOURCE, "loss": _LOSS, "lambdas": _LAMBDAS, "tol": _POS,
        "max_iter": {"type": "integer", "minimum": 1},
    }, required=("gamma", "lambdas")),
    "sfrl-validate": _params({
        "channels": {"type": "integer", "minimum": 1},
        "max_alphabet": {"type": "integer", "minimum": 2},
        "trials": {"type": "integer", "minimum": 2},
        "chi2_channels": {"type": "integer", "minimum": 0},
        "chi2_trials": {"type": "integer", "minimum": 10},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    }),
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "experiment": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "params": {"type": "object"},
    },
    "required": ["experiment"],
    "additionalProperties": False,
}

EXPERIMENTS = tuple(PARAM_SCHEMAS)


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self):
        if self.experiment not in PARAM_SCHEMAS:
            raise ExperimentError(E_UNKNOWN_EXPERIMENT,
                                  f"unknown experiment {self.experiment!r}; "
                                  f"expected one of {', '.join(EXPERIMENTS)}")
        _validate(self.params, PARAM_SCHEMAS[self.experiment], "params")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ExperimentError(E_CONFIG_SCHEMA, "seed must be a nonnegative integer")

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> ExperimentConfig:
        _validate(d, CONFIG_SCHEMA, "config")
        return cls(d["experiment"], dict(d.get("params", {})), d.get("seed", 0),
                   d.get("output"), Path(base_dir) if base_dir else Path.cwd())

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except OSError as exc:
            raise ExperimentError(E_IO, f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ExperimentError(E_CONFIG_SCHEMA, f"{path} is not valid JSON: {exc}") from None
        return cls.from_dict(d, path.parent)

    def resolve(self, p: str) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _validate(obj, schema, what: str) -> None:
    try:
        jsonschema.validate(obj, schema)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ExperimentError(E_CONFIG_SCHEMA, f"{what} at {loc}: {exc.message}") from None


# --- output ---------------------------------------------------------------------

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise ExperimentError(E_IO, f"cannot write {path}: {exc}") from None


# --- shared parsing ---------------------------------------------------------------

def _load_json(cfg: ExperimentConfig, src) -> dict:
    if isinstance(src, dict):
        return dict(src)
    try:
        return json.loads(cfg.resolve(src).read_text())
    except OSError as exc:
        raise ExperimentError(E_IO, f"cannot read {src}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ExperimentError(E_INVALID_PARAMETER, f"{src} is not valid JSON: {exc}") from None


def _invalid(fn, *args):
    try:
        return fn(*args)
    except (ValueError, KeyError, TypeError) as exc:
        raise ExperimentError(E_INVALID_PARAMETER, str(exc)) from None


def parse_loss(cfg: ExperimentConfig, spec, ny: int):
    """'zero-one', 'log', 'matrix:<file>' or {'matrix': [[...]]}. Returns a LossMatrix or 'log'."""
    if spec == "log":
        return "log"
    if spec == "zero-one":
        return LossMatrix.zero_one(ny)
    if isinstance(spec, str) and spec.startswith("matrix:"):
        d = _load_json(cfg, spec[len("matrix:"):])
        d.pop("type", None)
        L = _invalid(LossMatrix.from_dict, d)
    else:
        L = _invalid(LossMatrix, spec["matrix"])
    if L.ny != ny:
        raise ExperimentError(E_INVALID_PARAMETER,
                              f"loss matrix has {L.ny} target columns, data has {ny}")
    return L


def load_joint(cfg: ExperimentConfig, src) -> FiniteJoint:
    d = _load_json(cfg, src)
    d.pop("type", None)
    return _invalid(FiniteJoint.from_dict, d)


def load_gamma(cfg: ExperimentConfig, src) -> minimax.HullSet:
    G = _invalid(minimax.ambiguity_from_dict, _load_json(cfg, src))
    if not isinstance(G, minimax.HullSet):
        raise ExperimentError(E_INVALID_PARAMETER,
                              "moment sets are solved in closed form; use the fig3 experiment")
    return G


def moment_set(p: dict) -> minimax.MomentSet:
    cxy = np.atleast_1d(np.asarray(p.get("cxy", 0.95), dtype=float))
    d = cxy.size
    sx = np.asarray(p.get("sigma_x2", 1.0), dtype=float)
    if sx.ndim == 0:
        sx = sx * np.eye(d)
    mu_x = np.asarray(p.get("mu_x", 0.0), dtype=float) * np.ones(d)
    return _invalid(minimax.MomentSet, mu_x, p.get("mu_y", 0.0), sx, p.get("sigma_y2", 1.0),
                    cxy)


# --- experiments -------------------------------------------------------------------

@dataclass
class RunResult:
    csv_path: Path
    meta_path: Path
    extra_paths: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def _run_fig3(cfg: ExperimentConfig):
    p = cfg.params
    G = moment_set(p)
    chosen = {}
    lambdas = p.get("lambdas")
    if lambdas is None:
        lambdas = regression.default_lambda_grid(G).tolist()
        chosen["lambdas"] = "log-spaced from 0.01 to the degenerate threshold (our choice)"
    n_mc = p.get("n_mc")
    if n_mc is None:
        n_mc = 100_000
        chosen["n_mc"] = "100000 Monte Carlo rounds per lambda (our choice)"
    source = regression.GaussianSource(G, p.get("source", "gaussian"))
    pts = regression.figure3_sweep(G, lambdas, n_mc, cfg.seed, source, p.get("workers", 1))
    text = csv_text(regression.Fig3Point.CSV_HEADER, [pt.csv_row() for pt in pts])
    resolved = {**p, "lambdas": list(map(float, lambdas)), "n_mc": n_mc}
    return text, {}, resolved, chosen


def _run_fig4(cfg: ExperimentConfig):
    p = cfg.params
    q1 = p.get("q1", 2.0 / 3.0)
    spec = _invalid(cls.TwoSourceSpec, p.get("k1", 2 ** 32), p.get("k2", 2), q1, 1.0 - q1)
    lambdas = p.get("lambdas")
    chosen = {}
    if lambdas is None:
        lambdas = cls.default_fig4_lambdas().tolist()
        chosen["lambdas"] = "log-spaced 0.005..100, 81 points (our choice)"
    rows = cls.figure4_sweep(spec, lambdas)
    resolved = {"k1": spec.k1, "k2": spec.k2, "q1": spec.q1, "lambdas": list(map(float, lambdas))}
    return csv_text(cls.FIG4_HEADER, rows), {}, resolved, chosen


def _run_riskinfo(cfg: ExperimentConfig):
    p = cfg.params
    P = load_joint(cfg, p["joint"])
    loss = parse_loss(cfg, p.get("loss", "zero-one"), P.ny)
    tol = p.get("tol", riskinfo.DEFAULT_TOL)
    rows, sols = [], []
    for lam in p["lambdas"]:
        if loss == "log":
            r = riskinfo.ib_cost(P, lam, p.get("ncluster", P.nx), tol=tol)
            rows.append((lam, r.value, r.value - lam * r.info_xu, r.info_xu, None))
            sols.append({"lambda": lam, "value": r.value, "encoder": r.encoder.rows.tolist(),
                         "decoder": r.decoder.rows.tolist(), "info_xu": r.info_xu,
                         "info_yu": r.info_yu})
        else:
            s = riskinfo.minimize_kernel(P, loss, lam, tol=tol)
            rows.append((lam, s.value, s.risk, s.info, s.converged))
            sols.append({"lambda": lam, **s.to_dict()})
    header = ("lambda", "value", "risk", "info_bits", "converged")
    return csv_text(header, rows), {"solutions": sols}, dict(p), {}


def _run_minimax(cfg: ExperimentConfig):
    p = cfg.params
    G = load_gamma(cfg, p["gamma"])
    L = parse_loss(cfg, p.get("loss", "zero-one"), G.vertices[0].ny)
    if L == "log":
        raise ExperimentError(E_INVALID_PARAMETER, "minimax needs a finite loss matrix")
    tol = p.get("tol", minimax.DEFAULT_GAP_TOL)
    rows, saddles = [], []
    for lam in p["lambdas"]:
        sp = minimax.worst_case_value(G, L, lam, tol, p.get("max_iter", 500))
        rows.append((lam, sp.value, sp.gap, sp.iterations, sp.gap <= tol,
                     *sp.weights.mass.tolist()))
        saddles.append({"lambda": lam, **sp.to_dict()})
    header = ("lambda", "value", "gap", "iterations", "certified",
              *(f"w{v}" for v in range(G.size)))
    return csv_text(header, rows), {"saddles": saddles}, dict(p), {}


def sfrl_validation_rows(seed: int, channels=50, max_alphabet=8, trials=10_000,
                         chi2_channels=20, chi2_trials=100_000, alpha=1e-3):
    """Rows (check, channel, x, statistic, threshold, passed) for random discrete channels.

    ``elogk`` rows compare Monte Carlo E[log2 K] against D + 1.6 + 3 stderr at
    every input. ``chi2`` rows test decoded outputs against the target row.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for c in range(channels):
        nx, ny = rng.integers(1, max_alphabet + 1), rng.integers(2, max_alphabet + 1)
        ch = sfrl.DiscreteChannel(Kernel(rng.dirichlet(np.ones(ny), nx)),
                                  Pmf(rng.dirichlet(np.ones(ny))))
        for x in range(nx):
            chk = sfrl.verify_elogk_bound(ch, x, trials, seed * 1_000_003 + c * 101 + x)
            bound = chk.kl + 1.6 + 3 * chk.stderr
            rows.append(("elogk", c, x, chk.elogk, bound, chk.elogk <= bound))
    for c in range(chi2_channels):
        nx, ny = rng.integers(1, max_alphabet + 1), rng.integers(2, max_alphabet + 1)
        ch = sfrl.DiscreteChannel(Kernel(rng.dirichlet(np.ones(ny), nx)),
                                  Pmf(rng.dirichlet(np.ones(ny))))
        x = int(rng.integers(nx))
        pv = sfrl.exactness_pvalue(ch, x, chi2_trials, seed * 7_919 + c)
        rows.append(("chi2", c, x, pv, alpha, pv >= alpha))
    return rows


SFRL_HEADER = ("check", "channel", "x", "statistic", "threshold", "passed")


def _run_sfrl_validate(cfg: ExperimentConfig):
    rows = sfrl_validation_rows(cfg.seed, **cfg.params)
    return csv_text(SFRL_HEADER, rows), {}, dict(cfg.params), {}


_DISPATCH = {
    "fig3": _run_fig3,
    "fig4": _run_fig4,
    "riskinfo": _run_riskinfo,
    "minimax": _run_minimax,
    "sfrl-validate": _run_sfrl_validate,
}


def run_config(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Run one experiment and write ``<output>`` plus ``<output>.meta.json``.

    Extra structured results (kernels, saddle points) go to
    ``<stem>.<name>.json`` next to the CSV.
    """
    out_dir = Path(out_dir) if out_dir is not None else Path.cwd()
    name = cfg.output or f"{cfg.experiment}.csv"
    csv_path = Path(name) if Path(name).is_absolute() else out_dir / name
    t0 = time.perf_counter()
    text, extras, resolved, chosen = _DISPATCH[cfg.experiment](cfg)
    wall = time.perf_counter() - t0
    atomic_write(csv_path, text)
    extra_paths = []
    for key, obj in extras.items():
        path = csv_path.with_name(f"{csv_path.stem}.{key}.json")
        atomic_write(path, json.dumps(obj, indent=1) + "\n")
        extra_paths.append(path)
    meta = {"experiment": cfg.experiment, "seed": cfg.seed, "params": resolved,
            "version": __version__, "wall_time_s": wall, "output": csv_path.name,
            "defaults_chosen": chosen}
    meta_path = csv_path.with_name(csv_path.name + ".meta.json")
    atomic_write(meta_path, json.dumps(meta, indent=1, default=_jsonable) + "\n")
    return RunResult(csv_path, meta_path, extra_paths, meta)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
