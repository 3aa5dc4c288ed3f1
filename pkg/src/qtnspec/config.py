"""Experiment configuration: TOML documents merged over explicit defaults and validated."""
from __future__ import annotations

import copy
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

DEFAULTS: dict = {
    "seed": None,
    "output_dir": "results",
    "model": {"L": 8, "S": 0.5, "J": 1.0, "D": 0.0, "g": 2.0, "B": [0.0, 0.0, 0.0], "periodic": True},
    "solver": {"chi_max": 8, "n_states": 10, "variance_tol": 1e-8, "penalty_weight": 0.0,
               "max_sweeps": 20, "min_sweeps": 2, "warmup_sweeps": 2},
    "oracle": {"enabled": True, "n_states": 10},
    "compiler": {"mode": "compiled", "eps_C": 5e-4, "delta": 1e-10, "support": "nonzero", "beam_width": 4, "max_gates": 120,
                 "optimizer": "lbfgs", "restarts": 3, "maxiter": 200, "menu": ["so4", "cnot_ry"],
                 "left_states": [], "right_states": []},
    "energy": {"states": [0], "n_shots": 10000, "scaling_shots": [], "scaling_state": 0},
    "overlap": {"pairs": [], "n_shots": 10000},
    "dipole": {"methods": [], "p": 1, "alpha": "x", "n_shots": 10000, "swap_mode": "trajectory"},
    "spectrum": {"enabled": False, "source": "oracle", "states": [1, 2, 3],
                 "q_min": 0.1, "q_max": 2.5, "n_q": 25, "q_direction": [1.0, 0.0, 0.0],
                 "omega_min": 0.0, "omega_max": 1.5, "n_omega": 301, "fwhm": 0.05,
                 "radius": 2.95, "second_rotation_deg": 22.5, "include_prefactor": False,
                 "swap_shots": 5000, "swap_mode": "marginal"},
    "field_scan": {"enabled": False, "B_max": 5.0, "n_B": 11, "direction": [0.0, 0.0, 1.0], "n_levels": 4},
}

BUNDLED = ("spin_half_zero_field", "spin_half_field_B3", "cr8")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def _merge(base: dict, over: dict, path: str, errors: list) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        p = f"{path}{k}"
        if k not in base:
            errors.append(f"{p}: unknown key")
            continue
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                errors.append(f"{p}: expected a table")
                continue
            out[k] = _merge(base[k], v, p + ".", errors)
        else:
            out[k] = v
    return out


def _check_types(base: dict, cfg: dict, path: str, errors: list):
    for k, ref in base.items():
        v = cfg[k]
        p = f"{path}{k}"
        if isinstance(ref, dict):
            _check_types(ref, v, p + ".", errors)
        elif ref is None:
            continue
        elif isinstance(ref, bool):
            if not isinstance(v, bool):
                errors.append(f"{p}: expected true/false")
        elif isinstance(ref, (int, float)) and not isinstance(ref, bool):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                errors.append(f"{p}: expected a number")
            elif isinstance(ref, int) and not isinstance(ref, bool) and isinstance(v, float) and k not in ("J", "D", "g", "S"):
                if not float(v).is_integer():
                    errors.append(f"{p}: expected an integer")
        elif isinstance(ref, str) and not isinstance(v, str):
            errors.append(f"{p}: expected a string")
        elif isinstance(ref, list) and not isinstance(v, list):
            errors.append(f"{p}: expected a list")


def _semantic(cfg: dict, errors: list):
    if cfg["seed"] is None:
        errors.append("seed: missing (every experiment needs an explicit global seed)")
    elif not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        errors.append("seed: expected an integer")
    m = cfg["model"]
    if m["S"] not in (0.5, 1.5):
        errors.append("model.S: only S = 1/2 and 3/2 map onto whole qubits")
    if not isinstance(m["L"], int) or m["L"] < 2:
        errors.append("model.L: need at least 2 sites")
    if len(m["B"]) != 3:
        errors.append("model.B: expected three components")
    chi = cfg["solver"]["chi_max"]
    if isinstance(chi, int) and (chi < 1 or chi & (chi - 1)):
        errors.append(f"solver.chi_max: {chi} is not a power of two; the bond register uses log2(chi) qubits")
    n = cfg["solver"]["n_states"]
    for section, key in (("compiler", "left_states"), ("compiler", "right_states"), ("energy", "states")):
        for s in cfg[section][key]:
            if not isinstance(s, int) or not 0 <= s < n:
                errors.append(f"{section}.{key}: state id {s} does not refer to a solved state (0..{n - 1})")
    for pair in cfg["overlap"]["pairs"]:
        if len(pair) != 2 or not all(isinstance(s, int) and 0 <= s < n for s in pair):
            errors.append(f"overlap.pairs: {pair} must be two solved state ids")
    if cfg["compiler"]["mode"] not in ("compiled", "exact"):
        errors.append("compiler.mode: expected 'compiled' or 'exact'")
    if cfg["compiler"]["optimizer"] not in ("lbfgs", "simplex"):
        errors.append("compiler.optimizer: expected 'lbfgs' or 'simplex'")
    if cfg["compiler"]["support"] not in ("nonzero", "columns"):
        errors.append("compiler.support: expected 'nonzero' or 'columns'")
    d = cfg["dipole"]
    for meth in d["methods"]:
        if meth not in ("fourier", "swap"):
            errors.append(f"dipole.methods: unknown method {meth!r}")
    if d["methods"] and not 0 < d["p"] < n:
        errors.append(f"dipole.p: state id {d['p']} does not refer to a solved excited state")
    if "fourier" in d["methods"] and m["S"] != 0.5:
        errors.append("dipole.methods: the Fourier method needs spin-1/2")
    if d["alpha"] not in ("x", "y", "z"):
        errors.append("dipole.alpha: expected x, y or z")
    sp = cfg["spectrum"]
    if sp["source"] not in ("oracle", "qtn", "both"):
        errors.append("spectrum.source: expected 'oracle', 'qtn' or 'both'")
    if sp["enabled"]:
        for s in sp["states"]:
            if not isinstance(s, int) or not 0 < s < max(n, cfg["oracle"]["n_states"]):
                errors.append(f"spectrum.states: {s} is not an excited state id")
    if cfg["oracle"]["n_states"] > 64:
        errors.append("oracle.n_states: at most 64")


@dataclass
class ExperimentConfig:
    data: dict
    name: str = ""

    def __getitem__(self, k):
        return self.data[k]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])


def validate_dict(raw: dict, name: str = "") -> tuple[ExperimentConfig | None, list[str]]:
    errors: list[str] = []
    merged = _merge(DEFAULTS, raw, "", errors)
    _check_types(DEFAULTS, merged, "", errors)
    if not errors:
        _semantic(merged, errors)
    return (None if errors else ExperimentConfig(merged, name)), errors


def resolve_path(ref: str) -> Path | None:
    p = Path(ref)
    if p.exists():
        return p
    if ref in BUNDLED:
        return Path(str(resources.files("qtnspec") / "configs" / f"{ref}.toml"))
    return None


def load_config(ref: str) -> ExperimentConfig:
    """Load a TOML path or a bundled config name; raises ConfigError listing every problem."""
    path = resolve_path(ref)
    if path is None:
        raise ConfigError([f"{ref}: no such file or bundled config ({', '.join(BUNDLED)})"])
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    cfg, errors = validate_dict(raw, path.stem)
    if errors:
        raise ConfigError(errors)
    return cfg


def reference_toml() -> str:
    """Every key with its default value."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return f'"{v}"'
        if isinstance(v, list):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)

    lines = ["seed = 0", f'output_dir = "{DEFAULTS["output_dir"]}"']
    for sec, vals in DEFAULTS.items():
        if not isinstance(vals, dict):
            continue
        lines += ["", f"[{sec}]"]
        lines += [f"{k} = {fmt(v)}" for k, v in vals.items()]
    return "\n".join(lines) + "\n"
