"""Run configuration: flat key-value sections, documented defaults,
and a deterministic echo written next to every output.

The seed fully determines all randomness of a run; commands overwrite
their output files in place so identical configurations produce
byte-identical results.
"""

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .spectrum import ModeSpectrum


@dataclass
class ExperimentConfig:
    # [spectrum]
    spectrum_kind: str = "k^2"
    modes: int = 3
    delta: float = 0.25
    eigenvalues: tuple = ()
    # [chaos]
    degree: int = 8
    quad_level: int | None = None
    # [drift] / [drift_b]
    drift: str = "sign"
    drift_params: dict = field(default_factory=lambda: {"bound": 1.0})
    drift_b: str | None = None
    drift_b_params: dict = field(default_factory=dict)
    bounds: tuple = (0.5, 1.0, 2.0)  # sup-norm sweep for reweighting runs
    # [lambda]
    lambda_policy: str = "2x_lambda0"
    # [grid]
    horizon: float = 1.0
    steps: int = 64
    t_min: float = 1e-3
    t_max: float = 10.0
    t_points: int = 9
    # [montecarlo]
    paths: int = 10_000
    samples: int = 20_000
    bundles: int = 200
    cloud: int = 512
    smoothing_index: int = 16
    trials: int = 100_000
    # [truncation]
    radii: tuple = (1.0, 2.0, 4.0, 8.0)
    # [run]
    seed: int = 12345
    out: str = "runs"
    workers: int = 1

    def build_spectrum(self):
        if self.spectrum_kind == "k^2":
            return ModeSpectrum.k_squared(self.modes)
        if self.spectrum_kind == "list":
            if not self.eigenvalues:
                raise ConfigError("spectrum", "kind 'list' needs an eigenvalues entry")
            return ModeSpectrum(np.asarray(self.eigenvalues, dtype=float))
        raise ConfigError("spectrum", f"unknown kind {self.spectrum_kind!r} (use k^2 or list)")

    def resolved_quad_level(self):
        return self.degree + 2 if self.quad_level is None else self.quad_level

    def validate(self):
        if self.modes < 1:
            raise ConfigError("spectrum", "modes must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("spectrum", "delta must lie in (0, 1)")
        self.build_spectrum()
        if self.degree < 0:
            raise ConfigError("chaos", "degree must be >= 0")
        if self.horizon <= 0:
            raise ConfigError("grid", "horizon must be > 0")
        if self.steps < 1:
            raise ConfigError("grid", "steps must be >= 1")
        if self.t_min <= 0 or self.t_max <= 0:
            raise ConfigError("grid", "t_min and t_max must be > 0")
        if self.t_min > self.t_max:
            raise ConfigError("grid", "t_min must not exceed t_max")
        if self.t_points < 1:
            raise ConfigError("grid", "t_points must be >= 1")
        for name in ("paths", "samples", "bundles", "cloud", "smoothing_index", "trials"):
            if getattr(self, name) < 1:
                raise ConfigError("montecarlo", f"{name} must be >= 1")
        if any(r <= 0 for r in self.radii):
            raise ConfigError("truncation", "radii must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("run", "seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ConfigError("run", "workers must be >= 1")
        return self


def _parse_scalar(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_tuple(text, kind=float):
    items = [t for t in text.replace(";", ",").split(",") if t.strip()]
    return tuple(kind(t) for t in items)


_SECTION_FIELDS = {
    "spectrum": {"kind": "spectrum_kind", "modes": "modes", "delta": "delta",
                 "eigenvalues": "eigenvalues"},
    "chaos": {"degree": "degree", "quad_level": "quad_level"},
    "lambda": {"policy": "lambda_policy"},
    "grid": {"horizon": "horizon", "steps": "steps", "t_min": "t_min",
             "t_max": "t_max", "t_points": "t_points"},
    "montecarlo": {"paths": "paths", "samples": "samples", "bundles": "bundles",
                   "cloud": "cloud", "smoothing_index": "smoothing_index",
                   "trials": "trials"},
    "truncation": {"radii": "radii"},
    "run": {"seed": "seed", "out": "out", "workers": "workers"},
}

_INT_FIELDS = {"modes", "degree", "quad_level", "steps", "t_points", "paths",
               "samples", "bundles", "cloud", "smoothing_index", "trials",
               "seed", "workers"}
_FLOAT_FIELDS = {"delta", "horizon", "t_min", "t_max"}
_TUPLE_FIELDS = {"eigenvalues", "radii"}


def load_config(path=None):
    """Parse an INI-style config file into an :class:`ExperimentConfig`.

    Unknown keys in the drift sections are forwarded to the drift
    factory; unknown keys elsewhere are configuration errors.
    """
    cfg = ExperimentConfig()
    if path is None:
        return cfg.validate()
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as err:
        raise ConfigError("run", f"cannot read config file: {err}") from err
    except configparser.Error as err:
        raise ConfigError("run", f"malformed config file: {err}") from err

    for section, mapping in _SECTION_FIELDS.items():
        if not parser.has_section(section):
            continue
        for key, value in parser.items(section):
            if key not in mapping:
                raise ConfigError(section, f"unknown key {key!r}")
            name = mapping[key]
            try:
                if name in _TUPLE_FIELDS:
                    parsed = _parse_tuple(value)
                elif name in _INT_FIELDS:
                    parsed = int(value)
                elif name in _FLOAT_FIELDS:
                    parsed = float(value)
                else:
                    parsed = value.strip()
            except ValueError as err:
                raise ConfigError(section, f"bad value for {key}: {value!r}") from err
            setattr(cfg, name, parsed)

    for section, name_attr, params_attr in (
        ("drift", "drift", "drift_params"),
        ("drift_b", "drift_b", "drift_b_params"),
    ):
        if not parser.has_section(section):
            continue
        params = {}
        for key, value in parser.items(section):
            if key == "name":
                setattr(cfg, name_attr, value.strip())
            elif key == "bounds":
                cfg.bounds = _parse_tuple(value)
            else:
                params[key] = _parse_scalar(value)
        setattr(cfg, params_attr, params)
    return cfg.validate()


def resolve_lambda(policy, threshold):
    """Turn a shift policy into a concrete value.

    ``policy`` is either a number (absolute shift) or ``"<m>x_lambda0"``
    for a multiple of the contraction threshold.
    """
    if isinstance(policy, (int, float)):
        return float(policy)
    text = str(policy).strip().lower()
    if text.endswith("x_lambda0"):
        try:
            mult = float(text[: -len("x_lambda0")])
        except ValueError as err:
            raise ConfigError("lambda", f"bad policy {policy!r}") from err
        return mult * threshold
    try:
        return float(text)
    except ValueError as err:
        raise ConfigError(
            "lambda", f"policy must be a number or '<m>x_lambda0', got {policy!r}"
        ) from err


def echo_config(cfg, path):
    """Write the fully resolved configuration next to the outputs."""
    parser = configparser.ConfigParser()
    for section, mapping in _SECTION_FIELDS.items():
        parser[section] = {}
        for key, name in mapping.items():
            value = getattr(cfg, name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = ", ".join(repr(float(v)) for v in value)
            parser[section][key] = str(value)
    parser["drift"] = {"name": cfg.drift,
                       "bounds": ", ".join(repr(float(b)) for b in cfg.bounds)}
    for key, value in cfg.drift_params.items():
        parser["drift"][key] = str(value)
    if cfg.drift_b:
        parser["drift_b"] = {"name": cfg.drift_b}
        for key, value in cfg.drift_b_params.items():
            parser["drift_b"][key] = str(value)
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def with_overrides(cfg, seed=None, out=None, workers=None):
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if out is not None:
        updates["out"] = out
    if workers is not None:
        updates["workers"] = workers
    return replace(cfg, **updates).validate() if updates else cfg
