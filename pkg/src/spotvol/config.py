"""Experiment configuration: INI files, named presets and their resolution.

A configuration is a set of sections of ``key = value`` strings::

    [model]           ModelSpec fields
    [experiment]      n_paths, seed, eps_truth, tau_first, tau_last, grids
    [estimator.NAME]  one section per estimator

Presets produce the same sections, so a preset, a file and the config echoed
in a report are interchangeable.  Unknown keys are rejected with the closest
valid name.
"""
from __future__ import annotations

import configparser
import difflib
import math
from dataclasses import fields
from pathlib import Path

from .estimate import CFTuning, EstimatorConfig, ThresholdRule
from .harness import ESTIMATOR_KINDS, EstimatorSpec, ExperimentConfig, default_grid
from .kernels import BUILTIN_KERNELS, get_kernel, load_kernel_csv
from .sim import ModelSpec

__all__ = [
    "ConfigError",
    "PRESETS",
    "preset_sections",
    "load_ini",
    "parse_ini_text",
    "merge_sections",
    "apply_overrides",
    "resolve",
    "sections_to_ini",
    "parse_grid",
]


class ConfigError(ValueError):
    """Invalid configuration (bad key, value or combination)."""


MODEL_KEYS = tuple(f.name for f in fields(ModelSpec))
EXPERIMENT_KEYS = ("n_paths", "seed", "eps_truth", "tau_first", "tau_last",
                   "pilot_paths", "zeta_grid", "p_grid", "lambda_grid")
ESTIMATOR_KEYS = ("kind", "stage", "kernel", "m_power", "m_scale", "threshold", "alpha", "v0",
                  "zeta", "p", "signs", "sign_mode", "clamp_negative",
                  "h_power", "u_power", "lam")

# Tunings found by the published pilot grid searches, by jump index
# (stage-1 zeta, p; stage-2 zeta pair, p pair; CF lambda, p).
_LIU2018_TUNINGS = {
    0.8: {"exp": ("1.8", "0.6", "1.7,1.8", "0.5,0.85"),
          "unif": ("1.85", "0.85", "1.6,1.9", "0.5,0.9"), "cf": ("1.6", "0.9")},
    1.2: {"exp": ("1.7", "0.85", "1.9,1.25", "0.5,0.65"),
          "unif": ("1.65", "0.8", "1.9,1.25", "0.6,0.15"), "cf": ("1.25", "0.2")},
    1.6: {"exp": ("1.75", "0.75", "1.9,1.75", "0.7,0.25"),
          "unif": ("1.9", "0.65", "1.9,1.9", "0.6,0.15"), "cf": ("1.9", "0.1")},
    1.75: {"exp": ("1.65", "0.1", "1.8,1.55", "0.2,0.35"),
           "unif": ("1.8", "0.1", "1.9,1.9", "0.1,0.2"), "cf": ("1.9", "0.25")},
}

# realistic design: keyed by jump index, then by k in v0 = dt^(k/48)
_REALISTIC_TUNINGS = {
    1.6: {19: ("1.4", "0.2", "1.4,1.9", "0.3,0.2"),
          20: ("1.9", "0.9", "1.9,1.7", "0.8,0.2"),
          21: ("1.7", "0.9", "1.5,1.2", "0.9,0.4"),
          22: ("1.8", "0.8", "1.8,1.9", "0.7,0.9"),
          "cf": ("1.9", "0.35")},
    1.75: {19: ("1.5", "0.3", "1.5,1.9", "0.3,0.2"),
           20: ("1.7", "0.3", "1.7,1.9", "0.2,0.2"),
           21: ("1.6", "0.9", "1.7,1.9", "0.8,0.2"),
           22: ("1.8", "0.8", "1.9,1.2", "0.9,0.6"),
           "cf": ("1.9", "0.1")},
}


def _nearest(table: dict, y: float):
    return table[min(table, key=lambda k: (abs(k - y), k))]


def _cf_sections(lam: str, p: str) -> dict:
    return {
        "estimator.sigma_hat": {"kind": "cf", "kernel": "quartic_k3",
                                "h_power": "0.51", "u_power": "0.0025"},
        "estimator.sigma_tilde": {"kind": "cf_debiased", "kernel": "quartic_k3",
                                  "h_power": "0.51", "u_power": "0.0025",
                                  "lam": lam, "p": p},
    }


def _truncated_sections(suffix: str, kernel: str, tunings, threshold: dict) -> dict:
    z1, p1, z2, p2 = tunings
    common = {"kernel": kernel, "m_power": "0.5", **threshold}
    return {
        f"estimator.c0{suffix}": {"kind": "truncated", **common},
        f"estimator.c1{suffix}": {"kind": "practical", "stage": "1", "zeta": z1, "p": p1, **common},
        f"estimator.c2{suffix}": {"kind": "practical", "stage": "2", "zeta": z2, "p": p2, **common},
    }


def _liu2018(y: float) -> dict:
    """One-month design with 5-minute sampling around the clock.

    The Heston rate parameters are annual figures; on the one-month time unit
    used here they become ``kappa = 0.03 / 12`` and ``xi = 1.5 / sqrt(12)``.
    The variance starts at its long-run level.
    """
    t = _nearest(_LIU2018_TUNINGS, y)
    threshold = {"threshold": "power", "alpha": repr(5 / 12)}
    sections = {
        "model": {"x0": "1", "v0": "1", "drift_b": "1", "kappa": repr(0.03 / 12), "theta": "1",
                  "xi": repr(1.5 / math.sqrt(12)), "rho": "0", "jump_y": repr(float(y)),
                  "jump_scale": "1", "jump_cap": "none", "horizon_T": "1", "n_steps": "8580"},
        "experiment": _experiment_defaults(),
    }
    sections.update(_cf_sections(*t["cf"]))
    sections.update(_truncated_sections("_exp", "exponential", t["exp"], threshold))
    sections.update(_truncated_sections("_unif", "uniform2", t["unif"], threshold))
    return sections


def _liu2018_literal(y: float) -> dict:
    """The one-month design with every number read literally (``V0 = 0``)."""
    sections = _liu2018(y)
    sections["model"].update({"v0": "0", "kappa": "0.03", "xi": "1.5"})
    return sections


def _realistic(y: float, v0_k: int = 20) -> dict:
    """Three months of 5-minute data, 6.5-hour days, capped stable jumps.

    The threshold is ``sqrt(BV) * dt^(k/48)`` with ``k = v0_k``.
    """
    t = _nearest(_REALISTIC_TUNINGS, y)
    if v0_k not in t:
        raise ConfigError(f"realistic preset has tunings for v0 exponents {sorted(k for k in t if k != 'cf')}/48")
    dt = 1.0 / (252 * 6.5 * 12)
    threshold = {"threshold": "power", "alpha": repr(v0_k / 48)}
    sections = {
        "model": {"x0": "0", "v0": "0.16", "drift_b": "0", "kappa": "5", "theta": "0.16",
                  "xi": "0.5", "rho": "-0.5", "jump_y": repr(float(y)), "jump_scale": "0.5",
                  "jump_cap": "0.005", "horizon_T": repr(4914 * dt), "n_steps": "4914"},
        "experiment": _experiment_defaults(),
    }
    sections.update(_cf_sections(*t["cf"]))
    sections.update(_truncated_sections("", "exponential", t[v0_k], threshold))
    return sections


def _experiment_defaults() -> dict:
    return {"n_paths": "1000", "seed": "0", "eps_truth": "1e-12", "tau_first": "10",
            "tau_last": "90", "pilot_paths": "100", "zeta_grid": "1.1:1.9:0.05",
            "p_grid": "0.1:0.9:0.05", "lambda_grid": "1.1:1.9:0.05"}


PRESETS = {"liu2018": _liu2018, "liu2018_literal": _liu2018_literal, "realistic": _realistic}


def preset_sections(name: str, y: float, **kwargs) -> dict:
    """Sections of preset ``name`` at jump index ``y``.

    Tunings come from the nearest tabulated jump index.
    """
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ConfigError(_unknown("preset", name, PRESETS)) from None
    return builder(y, **kwargs)


# ----------------------------------------------------------------------------
# INI handling

def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    p.optionxform = str
    return p


def parse_ini_text(text: str) -> dict:
    p = _parser()
    try:
        p.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    return {s: dict(p.items(s)) for s in p.sections()}


def load_ini(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_ini_text(path.read_text())


def sections_to_ini(sections: dict) -> str:
    p = _parser()
    for name, body in sections.items():
        p[name] = {k: str(v) for k, v in body.items()}
    lines = []
    for name in p.sections():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in p[name].items())
        lines.append("")
    return "\n".join(lines)


def merge_sections(base: dict, extra: dict) -> dict:
    """Section-wise update; an ``estimator.X`` section with ``kind = none`` removes X."""
    out = {k: dict(v) for k, v in base.items()}
    for name, body in extra.items():
        if name.startswith("estimator.") and str(body.get("kind", "")).lower() == "none":
            out.pop(name, None)
            continue
        out.setdefault(name, {}).update({k: str(v) for k, v in body.items()})
    return out


def apply_overrides(sections: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings (``estimator.c2_exp.zeta=1.5,1.6``)."""
    out = {k: dict(v) for k, v in sections.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        if "." not in lhs:
            raise ConfigError(f"override must name a section: {item!r}")
        section, key = lhs.strip().rsplit(".", 1)
        out.setdefault(section, {})[key] = value.strip()
    return out


def _unknown(what: str, name: str, valid) -> str:
    near = difflib.get_close_matches(name, list(valid), n=1, cutoff=0.0)
    hint = f"; did you mean {near[0]!r}?" if near else ""
    return f"unknown {what} {name!r}{hint}"


def _check_keys(section: str, body: dict, valid) -> None:
    for key in body:
        if key not in valid:
            raise ConfigError(f"[{section}] " + _unknown("key", key, valid))


def _float(section, key, raw):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from None


def _int(section, key, raw):
    try:
        val = float(raw)
    except (TypeError, ValueError):
        val = math.nan
    if not val.is_integer():
        raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}")
    return int(val)


def _floats(section, key, raw):
    return tuple(_float(section, key, tok) for tok in str(raw).split(",") if tok.strip())


def _bool(section, key, raw):
    s = str(raw).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")


def parse_grid(raw) -> tuple[float, ...]:
    """``lo:hi:step`` (inclusive) or a comma list."""
    s = str(raw).strip()
    if ":" in s:
        parts = s.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid must be lo:hi:step, got {raw!r}")
        lo, hi, step = (_float("experiment", "grid", x) for x in parts)
        if step <= 0 or hi < lo:
            raise ConfigError(f"bad grid {raw!r}")
        return default_grid(lo, hi, step)
    vals = _floats("experiment", "grid", s)
    if not vals:
        raise ConfigError("grid must not be empty")
    return vals


def _kernel(section, raw):
    s = str(raw).strip()
    if s.endswith(".csv"):
        try:
            return load_kernel_csv(s)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"[{section}] kernel: cannot load {s!r}: {exc}") from exc
    try:
        return get_kernel(s)
    except ValueError:
        raise ConfigError(f"[{section}] " + _unknown("kernel", s, BUILTIN_KERNELS)) from None


def _model(body: dict) -> ModelSpec:
    _check_keys("model", body, MODEL_KEYS)
    kw = {}
    for key, raw in body.items():
        if key == "n_steps":
            kw[key] = _int("model", key, raw)
        elif key == "jump_cap":
            kw[key] = None if str(raw).strip().lower() in ("none", "") else _float("model", key, raw)
        else:
            kw[key] = _float("model", key, raw)
    try:
        return ModelSpec(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _estimator(section: str, body: dict) -> EstimatorSpec:
    _check_keys(section, body, ESTIMATOR_KEYS)
    name = section.split(".", 1)[1]
    kind = str(body.get("kind", "truncated")).strip()
    if kind not in ESTIMATOR_KINDS:
        raise ConfigError(f"[{section}] " + _unknown("kind", kind, ESTIMATOR_KINDS))
    g = body.get
    try:
        if kind in ("cf", "cf_debiased"):
            cf = CFTuning(kernel=_kernel(section, g("kernel", "quartic_k3")),
                          h_power=_float(section, "h_power", g("h_power", 0.51)),
                          u_power=_float(section, "u_power", g("u_power", 0.0025)),
                          lam=_float(section, "lam", g("lam", 1.9)),
                          p=_float(section, "p", g("p", 0.25)))
            cfg = EstimatorConfig(m_power=_float(section, "m_power", g("m_power", 0.5)),
                                  m_scale=_float(section, "m_scale", g("m_scale", 1.0)), cf=cf)
        else:
            rule_kind = str(g("threshold", "power")).strip()
            if rule_kind == "power":
                rule = ThresholdRule("power", alpha=_float(section, "alpha", g("alpha", 5 / 12)))
            else:
                rule = ThresholdRule(rule_kind, v0=_float(section, "v0", g("v0", "nan")))
            cfg = EstimatorConfig(
                kernel=_kernel(section, g("kernel", "exponential")),
                m_power=_float(section, "m_power", g("m_power", 0.5)),
                m_scale=_float(section, "m_scale", g("m_scale", 1.0)),
                v_rule=rule,
                zeta=_floats(section, "zeta", g("zeta", "")),
                p_scalers=_floats(section, "p", g("p", "")),
                signs=_floats(section, "signs", g("signs", "1,-1")),
                sign_mode=str(g("sign_mode", "flip")).strip(),
                clamp_negative=_bool(section, "clamp_negative", g("clamp_negative", "false")),
            )
        return EstimatorSpec(name, kind, cfg, _int(section, "stage", g("stage", 0)))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[{section}] {exc}") from exc


def resolve(sections: dict):
    """Build ``(ExperimentConfig, search grids)`` from sections."""
    for name in sections:
        if name not in ("model", "experiment") and not name.startswith("estimator."):
            raise ConfigError(_unknown("section", name, ["model", "experiment", "estimator.<name>"]))
    if "model" not in sections:
        raise ConfigError("missing [model] section")
    model = _model(sections["model"])
    exp = dict(_experiment_defaults())
    _check_keys("experiment", sections.get("experiment", {}), EXPERIMENT_KEYS)
    exp.update(sections.get("experiment", {}))
    estimators = [_estimator(name, body) for name, body in sections.items()
                  if name.startswith("estimator.")]
    if not estimators:
        raise ConfigError("no [estimator.<name>] sections")
    try:
        config = ExperimentConfig(
            model=model, estimators=tuple(estimators),
            n_paths=_int("experiment", "n_paths", exp["n_paths"]),
            seed=_int("experiment", "seed", exp["seed"]),
            eps_truth=_float("experiment", "eps_truth", exp["eps_truth"]),
            tau_first=_int("experiment", "tau_first", exp["tau_first"]),
            tau_last=_int("experiment", "tau_last", exp["tau_last"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    grids = {
        "pilot_paths": _int("experiment", "pilot_paths", exp["pilot_paths"]),
        "zeta_grid": parse_grid(exp["zeta_grid"]),
        "p_grid": parse_grid(exp["p_grid"]),
        "lambda_grid": parse_grid(exp["lambda_grid"]),
    }
    return config, grids


def resolved_sections(sections: dict) -> dict:
    """Sections with experiment defaults filled in, for embedding in reports."""
    out = {k: dict(v) for k, v in sections.items()}
    exp = dict(_experiment_defaults())
    exp.update(out.get("experiment", {}))
    out["experiment"] = exp
    return out
