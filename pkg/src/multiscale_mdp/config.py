"""Experiment configuration: a YAML key tree with dotted-path overrides.

Every run is described by one tree.  :func:`load_config` merges the
defaults, the file and ``--set`` overrides, then checks all cross-field
guards before anything is simulated.  :func:`dump_config` writes the
canonical form (sorted keys), so ``dump(load(dump(load(x))))`` equals
``dump(load(x))``.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional

import yaml

from .averaging import KhasminskiiParams
from .levy import LevyModel
from .model import GAUSS_OU_DEFAULTS, CoefficientSet, ConfigurationError, builtin_gauss_ou
from .segment import InitialDatum, Segment

DEFAULTS: dict[str, Any] = {
    "model": {"name": "gauss_ou", "params": dict(GAUSS_OU_DEFAULTS)},
    "levy": {"kind": "gauss_light", "alpha": 2.0, "dim": 1, "truncation": 0.0, "alpha_prime": 1.0, "radial_count": 2},
    "integrator": {
        "epsilon": 0.01,
        "dt": 0.0005,
        "T": 1.0,
        "tau": 1.0,
        "seed": 0,
        "paths": 1,
        "localization_radius": None,
        "allow_coarse_dt": False,
    },
    "initial": {"chi": 1.0, "y0": 0.0},
    "validate": {"probes": 10000, "attach_probes": 200},
    "averaging": {
        "zeta": 1.0,
        "y0": 1.0,
        "dt": 0.001,
        "T_run": 200.0,
        "burn_in": 10.0,
        "replicas": 20,
        "T_grid": [1.0, 2.0, 4.0, 8.0],
        "mixing_replicas": 2000,
        "mixing_dt": 0.01,
    },
    "khasminskii": {"theta": 0.75, "gamma": 0.1, "p": 1.0, "q": 4.0, "eps_grid": [0.01, 0.001], "n_paths": 100, "dt_ratio": 10.0},
    "deviations": {
        "dt": 0.005,
        "skeleton": {"f": 1.0, "lam": 0.0},
        "targets": [{"id": "linear", "coeffs": [1.0]}],
        "bruteforce": True,
        "mark_nodes": 32,
    },
    "sweep": {"eps_grid": [0.1, 0.02, 0.004], "delta": 0.3, "delta_avg": 0.2, "n_paths": 2000, "dt_ratio": 20.0},
    "run": {"workers": 1},
    "outputs": {"dir": "out", "formats": ["csv", "json"]},
}


def _merge(base: dict, upd: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in upd.items():
        where = f"{path}{key}"
        if key not in out:
            raise ConfigurationError(f"unknown config key {where!r}")
        if isinstance(out[key], dict) and key != "params":
            if not isinstance(val, dict):
                raise ConfigurationError(f"{where!r} must be a mapping")
            out[key] = _merge(out[key], val, where + ".")
        elif isinstance(out[key], dict):
            out[key] = {**out[key], **(val or {})}
        else:
            out[key] = val
    return out


def set_dotted(tree: dict, assignment: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigurationError(f"override {assignment!r} is not key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = tree
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigurationError(f"unknown config key {key!r}")
        node = node[part]
    leaf = parts[-1]
    if leaf not in node and not (parts[:-1] and parts[-2] == "params"):
        raise ConfigurationError(f"unknown config key {key!r}")
    node[leaf] = yaml.safe_load(raw)


@dataclass
class ExperimentConfig:
    tree: dict

    # ---- accessors -------------------------------------------------------

    def __getitem__(self, key: str) -> Any:
        return self.tree[key]

    @property
    def seed(self) -> int:
        return int(self.tree["integrator"]["seed"])

    @property
    def workers(self) -> int:
        return int(self.tree["run"]["workers"])

    def levy(self) -> LevyModel:
        lv = self.tree["levy"]
        return LevyModel(
            kind=lv["kind"],
            dim=int(lv["dim"]),
            alpha=float(lv["alpha"]),
            alpha_prime=float(lv["alpha_prime"]),
            radial_count=int(lv["radial_count"]),
            truncation=float(lv["truncation"]),
        )

    def model(self) -> CoefficientSet:
        m = self.tree["model"]
        if m["name"] != "gauss_ou":
            raise ConfigurationError(f"unknown built-in model {m['name']!r}")
        return builtin_gauss_ou(m["params"], levy=self.levy(), tau=float(self.tree["integrator"]["tau"]))

    def khasminskii(self) -> KhasminskiiParams:
        k = self.tree["khasminskii"]
        return KhasminskiiParams(theta=float(k["theta"]), gamma=float(k["gamma"]), p=float(k["p"]), q=float(k["q"]))

    def chi(self) -> InitialDatum:
        return InitialDatum.constant([float(self.tree["initial"]["chi"])])

    def y0(self):
        return [float(self.tree["initial"]["y0"])]

    def zeta(self) -> Segment:
        return Segment.constant([float(self.tree["averaging"]["zeta"])], float(self.tree["integrator"]["tau"]))

    # ---- serialisation ---------------------------------------------------

    def dump(self) -> str:
        return dump_config(self.tree)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.tree, sort_keys=True).encode()).hexdigest()


def dump_config(tree: dict) -> str:
    return yaml.safe_dump(tree, sort_keys=True, default_flow_style=False)


def _is_multiple(x: float, dt: float) -> bool:
    r = x / dt
    return abs(r - round(r)) < 1e-9 * max(1.0, abs(r)) and round(r) > 0


def validate_tree(tree: dict) -> None:
    """All cross-field guards; raises :class:`ConfigurationError`."""
    it = tree["integrator"]
    eps, dt, T, tau = (float(it[k]) for k in ("epsilon", "dt", "T", "tau"))
    if not (eps > 0 and dt > 0 and T > 0 and tau > 0):
        raise ConfigurationError("epsilon, dt, T and tau must be positive")
    if dt > eps / 10 * (1 + 1e-12) and not it["allow_coarse_dt"]:
        raise ConfigurationError(f"dt={dt} violates dt <= epsilon/10 (set integrator.allow_coarse_dt to override)")
    if not (_is_multiple(T, dt) and _is_multiple(tau, dt)):
        raise ConfigurationError("T and tau must be whole multiples of dt")
    if int(it["paths"]) < 1:
        raise ConfigurationError("integrator.paths must be at least 1")
    r = it["localization_radius"]
    if r is not None and not float(r) > 0:
        raise ConfigurationError("localization_radius must be positive")
    k = tree["khasminskii"]
    KhasminskiiParams(theta=float(k["theta"]), gamma=float(k["gamma"]), p=float(k["p"]), q=float(k["q"]))
    for name in ("khasminskii", "sweep"):
        grid = [float(e) for e in tree[name]["eps_grid"]]
        if not grid or any(e <= 0 or e >= 1 for e in grid):
            raise ConfigurationError(f"{name}.eps_grid values must lie in (0, 1)")
        if any(b >= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError(f"{name}.eps_grid must be strictly decreasing")
        if float(tree[name]["dt_ratio"]) < 10 and not it["allow_coarse_dt"]:
            raise ConfigurationError(f"{name}.dt_ratio below 10 violates dt <= epsilon/10")
        if int(tree[name]["n_paths"]) < 1:
            raise ConfigurationError(f"{name}.n_paths must be at least 1")
    sw = tree["sweep"]
    if not (float(sw["delta"]) > 0 and float(sw["delta_avg"]) > 0):
        raise ConfigurationError("sweep.delta and sweep.delta_avg must be positive")
    av = tree["averaging"]
    for key in ("dt", "mixing_dt"):
        if not float(av[key]) > 0:
            raise ConfigurationError(f"averaging.{key} must be positive")
    if not _is_multiple(float(av["T_run"]), float(av["dt"])):
        raise ConfigurationError("averaging.T_run must be a multiple of averaging.dt")
    if any(not _is_multiple(float(t), float(av["mixing_dt"])) for t in av["T_grid"]):
        raise ConfigurationError("averaging.T_grid entries must be multiples of averaging.mixing_dt")
    dv = tree["deviations"]
    if not (_is_multiple(T, float(dv["dt"])) and _is_multiple(tau, float(dv["dt"]))):
        raise ConfigurationError("deviations.dt must divide T and tau")
    if int(tree["validate"]["probes"]) < 100:
        raise ConfigurationError("validate.probes must be at least 100")
    if int(tree["run"]["workers"]) < 1:
        raise ConfigurationError("run.workers must be at least 1")
    for t in dv["targets"]:
        if "id" not in t or not isinstance(t.get("coeffs"), list):
            raise ConfigurationError("each deviations target needs an id and a coeffs list")
    bad = set(tree["outputs"]["formats"]) - {"csv", "json"}
    if bad:
        raise ConfigurationError(f"unsupported output formats {sorted(bad)}")
    # the model and measure constructors carry their own checks
    cfg = ExperimentConfig(tree)
    try:
        cfg.model()
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    if not math.isfinite(cfg.levy().effective_mass):
        raise ConfigurationError("the jump measure needs a truncation with finite effective mass")


def load_config(path: Optional[str | Path] = None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """Defaults, then the YAML file, then ``key=value`` overrides; validated."""
    tree = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a mapping")
        tree = _merge(tree, data)
    for item in overrides:
        set_dotted(tree, item)
    validate_tree(tree)
    return ExperimentConfig(tree)


def default_config_path() -> Path:
    return Path(__file__).with_name("configs") / "default.yaml"
