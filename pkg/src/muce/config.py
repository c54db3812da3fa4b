"""Run configuration: one YAML/JSON document per run, strictly validated.

The document carries a payload per subcommand plus common settings (seed,
output directory, format). Parsing validates every domain invariant up
front by constructing the corresponding domain objects, reports violations
with a field path, and rejects unknown keys outright so a misspelled
hyperparameter cannot silently fall back to a default. The parsed RunConfig
stores plain data (no arrays), so serialize(parse(file)) round-trips.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import yaml

from .comparators import BbhmHyper, ExnexHyper, SimonDesign
from .model import HYPER_SETTINGS, Hyperparameters, McmcConfig, TrialDataset, TrialLayout
from .trial import DesignSpec, Scenario, scenario_by_name


class ConfigError(ValueError):
    """Configuration problem, annotated with the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def _check_keys(mapping: dict, path: str, allowed: set[str], required: set[str]):
    if not isinstance(mapping, dict):
        raise ConfigError(path, f"expected a mapping, got {type(mapping).__name__}")
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(path, f"unknown keys: {sorted(unknown)}")
    missing = required - set(mapping)
    if missing:
        raise ConfigError(path, f"missing required keys: {sorted(missing)}")


def _build(path: str, ctor, *args, **kwargs):
    try:
        return ctor(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from exc


def _parse_layout(node, path) -> TrialLayout:
    _check_keys(node, path, {"n_indications", "n_doses", "pi0", "max_n",
                             "interim_schedule"},
                {"n_indications", "n_doses", "pi0", "max_n"})
    return _build(path, TrialLayout,
                  n_indications=node["n_indications"],
                  n_doses=node["n_doses"],
                  pi0=tuple(node["pi0"]),
                  max_n=node["max_n"],
                  interim_schedule=tuple(node.get("interim_schedule", ())))


def _parse_mcmc(node, path, seed) -> McmcConfig:
    if node is None:
        node = {}
    _check_keys(node, path, {"burn_in", "n_keep", "thin", "seed",
                             "proposal_scale", "adapt"}, set())
    kwargs = dict(node)
    kwargs.setdefault("seed", seed if seed is not None else 0)
    return _build(path, McmcConfig, **kwargs)


_HYPER_FIELDS = {"gamma", "mu_xi0", "mu_eta0", "sigma0_sq", "sigma_xi_sq",
                 "sigma_eta_sq", "sigma_xi0_sq", "sigma_eta0_sq"}


def _parse_muce_hyper(node, path) -> Hyperparameters:
    if isinstance(node, str):
        if node.lower().replace("_", "").replace("-", "") not in HYPER_SETTINGS:
            raise ConfigError(path, f"unknown hyperparameter setting {node!r}")
        from .model import hyper_setting

        return hyper_setting(node)
    _check_keys(node, path, _HYPER_FIELDS, set())
    return _build(path, Hyperparameters, **node)


def _parse_method_hyper(method, node, path):
    if method == "muce":
        if node is None:
            return Hyperparameters()
        return _parse_muce_hyper(node, path)
    if method == "bbhm":
        if node is None:
            return BbhmHyper()
        _check_keys(node, path, {"theta0_mean", "theta0_var", "ig_shape",
                                 "ig_rate", "sigma2_fixed"}, set())
        return _build(path, BbhmHyper, **node)
    if method == "exnex":
        if node is None:
            return ExnexHyper()
        _check_keys(node, path, {"weights", "ex_loc", "ex_loc_var",
                                 "ex_sigma_sq", "nex_mean", "nex_sigma_sq"}, set())
        kwargs = dict(node)
        for key in ("weights", "ex_loc", "ex_loc_var", "ex_sigma_sq"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return _build(path, ExnexHyper, **kwargs)
    return None


def _parse_simon(node, path) -> SimonDesign:
    _check_keys(node, path, {"r1", "n1", "r", "N"}, {"r1", "n1", "r", "N"})
    return _build(path, SimonDesign, r1=node["r1"], n1=node["n1"],
                  r=node["r"], N=node["N"])


def _parse_design(node, path, seed) -> DesignSpec:
    _check_keys(node, path, {"method", "layout", "phi1", "phi2", "hyper",
                             "mcmc", "simon", "pi1"}, {"method", "layout"})
    method = node["method"]
    layout = _parse_layout(node["layout"], f"{path}.layout")
    kwargs: dict[str, Any] = {
        "method": method,
        "layout": layout,
        "phi1": node.get("phi1", 0.0),
        "phi2": node.get("phi2", 1.0),
        "mcmc": _parse_mcmc(node.get("mcmc"), f"{path}.mcmc", seed),
    }
    if "hyper" in node or method in ("muce", "bbhm", "exnex"):
        kwargs["hyper"] = _parse_method_hyper(method, node.get("hyper"),
                                              f"{path}.hyper")
    if "simon" in node:
        kwargs["simon"] = _parse_simon(node["simon"], f"{path}.simon")
    if "pi1" in node and node["pi1"] is not None:
        kwargs["pi1"] = tuple(node["pi1"])
    return _build(path, DesignSpec, **kwargs)


def _parse_scenario(node, path, layout: TrialLayout | None) -> Scenario:
    if isinstance(node, str):
        try:
            scenario = scenario_by_name(node)
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from exc
    else:
        _check_keys(node, path, {"label", "true_p"}, {"true_p"})
        scenario = _build(path, Scenario, true_p=node["true_p"],
                          label=node.get("label", "custom"))
    if layout is not None and scenario.true_p.shape != (layout.n_indications,
                                                        layout.n_doses):
        raise ConfigError(path, "scenario shape does not match the design layout")
    return scenario


def _parse_data(node, path, layout: TrialLayout) -> TrialDataset:
    _check_keys(node, path, {"n", "y"}, {"n", "y"})
    dataset = _build(path, TrialDataset, n=node["n"], y=node["y"])
    if dataset.shape != (layout.n_indications, layout.n_doses):
        raise ConfigError(path, "data shape does not match the layout")
    return dataset


@dataclass
class RunConfig:
    """Validated run document; raw payloads stay as plain data for echoing."""

    raw: dict
    source: str
    seed: int | None
    out_dir: str
    format: str
    jobs: int

    def payload(self, command: str) -> dict:
        key = command.replace("-", "_")
        node = self.raw.get(key)
        if node is None:
            raise ConfigError(key, f"config has no payload for subcommand {command!r}")
        return node

    def to_dict(self) -> dict:
        return self.raw

    def with_overrides(self, seed=None, reps=None, out_dir=None, fmt=None,
                       jobs=None) -> "RunConfig":
        raw = yaml.safe_load(yaml.safe_dump(self.raw))  # deep copy, plain data
        if seed is not None:
            raw["seed"] = int(seed)
        if out_dir is not None:
            raw["out_dir"] = str(out_dir)
        if fmt is not None:
            raw["format"] = fmt
        if jobs is not None:
            raw["jobs"] = int(jobs)
        if reps is not None:
            for key in ("simulate", "calibrate"):
                if key in raw and raw[key] is not None:
                    raw[key]["n_reps"] = int(reps)
        return validate_config(raw, self.source)


_TOP_KEYS = {"seed", "out_dir", "format", "jobs", "analyze", "simulate",
             "calibrate", "design_simon", "correlations"}


def validate_config(raw: dict, source: str = "<dict>") -> RunConfig:
    _check_keys(raw, "", _TOP_KEYS, set())
    seed = raw.get("seed")
    if seed is not None and (not isinstance(seed, int) or not 0 <= seed < 2 ** 64):
        raise ConfigError("seed", "seed must be a 64-bit unsigned integer")
    fmt = raw.get("format", "table")
    if fmt not in ("table", "records"):
        raise ConfigError("format", f"format must be 'table' or 'records', got {fmt!r}")
    jobs = raw.get("jobs", 1)
    if not isinstance(jobs, int) or jobs < 1:
        raise ConfigError("jobs", "jobs must be a positive integer")

    cfg = RunConfig(raw=raw, source=source, seed=seed,
                    out_dir=raw.get("out_dir", "."), format=fmt, jobs=jobs)
    # eager validation of whichever payloads are present
    if "analyze" in raw:
        resolve_analyze(cfg)
    if "simulate" in raw:
        resolve_simulate(cfg)
    if "calibrate" in raw:
        resolve_calibrate(cfg)
    if "design_simon" in raw:
        resolve_design_simon(cfg)
    if "correlations" in raw:
        resolve_correlations(cfg)
    return cfg


def parse_config(path: str) -> RunConfig:
    """Load and validate a run document; errors carry line info or a field path."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("", f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError("", f"could not parse {path}{where}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("", "config document must be a mapping")
    return validate_config(raw, source=path)


def _require_seed(cfg: RunConfig) -> int:
    if cfg.seed is None:
        raise ConfigError("seed", "a seed is required (wall-clock seeding is "
                          "not supported); set it in the config or pass --seed")
    return cfg.seed


def resolve_analyze(cfg: RunConfig):
    node = cfg.payload("analyze")
    path = "analyze"
    _check_keys(node, path, {"layout", "hyper", "mcmc", "data", "phi2",
                             "rate_estimator"}, {"layout", "data"})
    layout = _parse_layout(node["layout"], f"{path}.layout")
    hyper = _parse_muce_hyper(node.get("hyper", "setting1"), f"{path}.hyper")
    mcmc = _parse_mcmc(node.get("mcmc"), f"{path}.mcmc", _require_seed(cfg))
    if mcmc.n_keep < 1000:
        raise ConfigError(f"{path}.mcmc.n_keep",
                          "reported analyses need at least 1000 retained draws")
    data = _parse_data(node["data"], f"{path}.data", layout)
    phi2 = node.get("phi2")
    if phi2 is not None and not 0.0 <= phi2 <= 1.0:
        raise ConfigError(f"{path}.phi2", "phi2 must lie in [0, 1]")
    estimator = node.get("rate_estimator", "logit_mean")
    if estimator not in ("logit_mean", "mean", "median"):
        raise ConfigError(f"{path}.rate_estimator",
                          f"unknown rate estimator {estimator!r}")
    return layout, hyper, mcmc, data, phi2, estimator


def resolve_simulate(cfg: RunConfig):
    node = cfg.payload("simulate")
    path = "simulate"
    _check_keys(node, path, {"design", "scenario", "n_reps"},
                {"design", "scenario", "n_reps"})
    design = _parse_design(node["design"], f"{path}.design", _require_seed(cfg))
    scenario = _parse_scenario(node["scenario"], f"{path}.scenario", design.layout)
    n_reps = node["n_reps"]
    if not isinstance(n_reps, int) or n_reps < 1:
        raise ConfigError(f"{path}.n_reps", "n_reps must be a positive integer")
    return design, scenario, n_reps, _require_seed(cfg)


def resolve_calibrate(cfg: RunConfig):
    node = cfg.payload("calibrate")
    path = "calibrate"
    _check_keys(node, path, {"quantity", "target", "design", "scenario",
                             "n_reps"}, {"quantity", "target", "design",
                                         "scenario", "n_reps"})
    quantity = node["quantity"]
    if quantity not in ("phi1", "phi2"):
        raise ConfigError(f"{path}.quantity",
                          f"quantity must be 'phi1' or 'phi2', got {quantity!r}")
    design = _parse_design(node["design"], f"{path}.design", _require_seed(cfg))
    scenario = _parse_scenario(node["scenario"], f"{path}.scenario", design.layout)
    target = node["target"]
    if not isinstance(target, (int, float)):
        raise ConfigError(f"{path}.target", "target must be numeric")
    n_reps = node["n_reps"]
    if not isinstance(n_reps, int) or n_reps < 1:
        raise ConfigError(f"{path}.n_reps", "n_reps must be a positive integer")
    return quantity, float(target), design, scenario, n_reps, _require_seed(cfg)


def resolve_design_simon(cfg: RunConfig):
    node = cfg.payload("design-simon")
    path = "design_simon"
    _check_keys(node, path, {"p0", "p1", "alpha", "beta", "criterion", "n_max"},
                {"p0", "p1", "alpha", "beta"})
    criterion = node.get("criterion", "optimal")
    if criterion not in ("optimal", "minimax"):
        raise ConfigError(f"{path}.criterion",
                          f"criterion must be 'optimal' or 'minimax', got {criterion!r}")
    n_max = node.get("n_max", 100)
    if not isinstance(n_max, int) or n_max < 2:
        raise ConfigError(f"{path}.n_max", "n_max must be an integer >= 2")
    for key in ("p0", "p1", "alpha", "beta"):
        v = node[key]
        if not isinstance(v, (int, float)) or not 0.0 < v < 1.0:
            raise ConfigError(f"{path}.{key}", f"{key} must lie strictly in (0, 1)")
    return (float(node["p0"]), float(node["p1"]), float(node["alpha"]),
            float(node["beta"]), criterion, n_max)


def resolve_correlations(cfg: RunConfig):
    node = cfg.payload("correlations")
    _check_keys(node, "correlations", {"hyper"}, {"hyper"})
    return _parse_muce_hyper(node["hyper"], "correlations.hyper")
