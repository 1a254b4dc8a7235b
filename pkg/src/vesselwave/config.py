"""Experiment configuration: a small sectioned ``key = value`` text format.

Grammar::

    # comment lines start with '#'
    [section]
    key = value

Values are JSON literals (numbers, ``true``/``false``, ``null``, quoted
strings, lists); a bare word such as ``constant`` is read as a string.
Keys given before the first section header belong to ``[run]``.  Every
key must appear in :data:`SCHEMA`; unknown keys, duplicate keys, type
mismatches and out-of-range values raise :class:`ConfigParseError` naming
the key and line.

The canonical form lists every section and key in sorted order with all
defaults filled in; the config hash is the SHA-256 of that text with
``[run] out`` blanked, so the output location does not change it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .errors import ConfigurationError
from .evolve import IntegratorConfig, analytic_state, powerlaw_state, scale_to_energy
from .model import InverseOperatorConfig, ModelParams, State
from .spectral import PeriodicGrid, SpectralField


class ConfigParseError(ConfigurationError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key, self.line = key, line


@dataclass(frozen=True)
class Field:
    kind: str  # float, int, str, bool, optfloat, floats, ints
    default: Any
    check: Callable[[Any], bool] | None = None
    rule: str = ""
    choices: tuple = ()


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


SCHEMA: dict[str, dict[str, Field]] = {
    "run": {
        "model": Field("str", "constant", choices=("constant", "general", "mollified")),
        "seed": Field("int", 0, _nonneg, "must be >= 0"),
        "out": Field("str", "results"),
    },
    "grid": {
        "n_points": Field("int", 256, lambda n: n >= 8 and n % 2 == 0, "must be an even integer >= 8"),
        "period": Field("float", 2 * math.pi, _pos, "must be positive"),
    },
    "model": {
        "r0": Field("float", 1.0, _pos, "must be positive"),
        "r0_eps": Field("float", 0.0, _nonneg, "must be >= 0"),
        "alpha_bar": Field("float", 1.0, _pos, "must be positive"),
        "beta_bar": Field("float", 1.0, _pos, "must be positive"),
        "kappa": Field("float", 0.0, _nonneg, "must be >= 0"),
        "gamma": Field("float", 0.0, _nonneg, "must be >= 0"),
        "viscous_form": Field("str", "eq2", choices=("eq2", "f2")),
        "epsilon": Field("float", 0.1, _pos, "must be positive"),
    },
    "integrator": {
        "dt": Field("float", 1e-3, _pos, "must be positive"),
        "t_final": Field("float", 1.0, _pos, "must be positive"),
        "record_stride": Field("int", 1, lambda n: n >= 1, "must be >= 1"),
        "s": Field("int", 2, lambda n: n >= 2, "must be >= 2"),
    },
    "inverse": {
        "c0": Field("optfloat", None, _pos, "must be positive or null"),
        "rho0": Field("float", 0.1, _nonneg, "must be >= 0"),
        "max_terms": Field("int", 200, lambda n: n >= 1, "must be >= 1"),
        "tolerance": Field("float", 1e-13, _pos, "must be positive"),
    },
    "initial": {
        "profile": Field("str", "cosine", choices=("zero", "cosine", "powerlaw", "analytic")),
        "eta_amplitude": Field("float", 0.01),
        "u_amplitude": Field("float", 0.01),
        "mode": Field("int", 1, lambda n: n >= 1, "must be >= 1"),
        "exponent": Field("float", 4.0, _pos, "must be positive"),
        "n_modes": Field("int", 64, lambda n: n >= 1, "must be >= 1"),
        "energy": Field("optfloat", None, _pos, "must be positive or null"),
        "analytic_b": Field("float", 1.25, lambda b: b > 1, "must exceed 1"),
    },
    "experiment": {
        "epsilons": Field("floats", [0.2, 0.1, 0.05, 0.025], lambda v: all(x > 0 for x in v), "entries must be positive"),
        "deltas": Field("floats", [1e-2, 1e-4, 1e-6], lambda v: all(x > 0 for x in v), "entries must be positive"),
        "rhos": Field("floats", [0.0, 0.1, 0.3], lambda v: all(x >= 0 for x in v), "entries must be >= 0"),
        "fit_band": Field("ints", [2, 30], lambda v: len(v) == 2 and 0 <= v[0] < v[1], "must be [k_min, k_max] with k_min < k_max"),
        "truncations": Field("ints", [32, 64, 128], lambda v: all(x >= 1 for x in v), "entries must be >= 1"),
        "variable_eps": Field("float", 0.05, _pos, "must be positive"),
        "growth_k": Field("ints", [1, 2, 4, 8, 16], lambda v: all(x >= 1 for x in v), "entries must be >= 1"),
        "growth_t_final": Field("float", 8.0, _pos, "must be positive"),
        "growth_dt": Field("float", 1e-2, _pos, "must be positive"),
        "k0": Field("int", 1, lambda n: n >= 1, "must be >= 1"),
        "n_modes": Field("int", 64, lambda n: n >= 2, "must be >= 2"),
        "amplitudes": Field("floats", [1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 3e-2, 4e-2, 5e-2],
                            lambda v: all(x >= 0 for x in v) and all(b > a for a, b in zip(v, v[1:])),
                            "entries must be >= 0 and strictly increasing"),
        "translation_dt": Field("float", 1e-2, _pos, "must be positive"),
        "convergence_checks": Field("bool", True),
        "bandwidth": Field("int", 32, lambda n: n >= 1, "must be >= 1"),
        "s_prime": Field("float", 1.0, _pos, "must be positive"),
        "neumann_samples": Field("int", 20, lambda n: n >= 1, "must be >= 1"),
    },
}


def _coerce(spec: Field, value, key: str, line: int | None):
    def fail(msg):
        raise ConfigParseError(msg, key, line)

    def is_num(x):
        return isinstance(x, (int, float)) and not isinstance(x, bool)

    kind = spec.kind
    if kind == "float":
        if not is_num(value):
            fail(f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            fail("value must be finite")
    elif kind == "optfloat":
        if value is not None:
            if not is_num(value):
                fail(f"expected a number or null, got {value!r}")
            value = float(value)
    elif kind == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            fail(f"expected an integer, got {value!r}")
    elif kind == "bool":
        if not isinstance(value, bool):
            fail(f"expected true or false, got {value!r}")
    elif kind == "str":
        if not isinstance(value, str):
            fail(f"expected a string, got {value!r}")
        if spec.choices and value not in spec.choices:
            fail(f"must be one of {list(spec.choices)}, got {value!r}")
    elif kind in ("floats", "ints"):
        if not isinstance(value, list) or not value:
            fail(f"expected a non-empty list, got {value!r}")
        if kind == "floats":
            if not all(is_num(x) for x in value):
                fail("list entries must be numbers")
            value = [float(x) for x in value]
        else:
            if not all(isinstance(x, int) and not isinstance(x, bool) for x in value):
                fail("list entries must be integers")
    if spec.check is not None and value is not None and not spec.check(value):
        fail(f"out of range: {spec.rule}")
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated configuration, every key present."""

    sections: dict

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    def get(self, section: str, key: str):
        return self.sections[section][key]

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls({s: {k: f.default for k, f in keys.items()} for s, keys in SCHEMA.items()})

    def replace(self, section: str, **values) -> "ExperimentConfig":
        new = {s: dict(v) for s, v in self.sections.items()}
        for key, value in values.items():
            if key not in SCHEMA[section]:
                raise ConfigParseError("unknown key", f"{section}.{key}")
            new[section][key] = _coerce(SCHEMA[section][key], value, f"{section}.{key}", None)
        return ExperimentConfig(new)

    # canonical form ------------------------------------------------------
    def canonical_text(self) -> str:
        return emit_config(self)

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical text, ignoring the output location."""
        return hashlib.sha256(self.replace("run", out="").canonical_text().encode("utf-8")).hexdigest()

    # builders ------------------------------------------------------------
    @property
    def model(self) -> str:
        return self.get("run", "model")

    def grid(self) -> PeriodicGrid:
        g = self["grid"]
        return PeriodicGrid(g["n_points"], g["period"])

    def params(self, grid: PeriodicGrid | None = None, r0_eps: float | None = None) -> ModelParams:
        grid = grid or self.grid()
        m = self["model"]
        eps = m["r0_eps"] if r0_eps is None else r0_eps
        if eps and self.model != "general" and r0_eps is None:
            raise ConfigParseError(f"variable r0 requires model = general, got {self.model!r}",
                                   "model.r0_eps")
        if eps >= m["r0"]:
            raise ConfigParseError("r0_eps must be smaller than r0 to keep r0 positive", "model.r0_eps")
        return ModelParams.sine_family(grid, m["r0"], eps, m["alpha_bar"], m["beta_bar"],
                                       m["kappa"], m["gamma"], m["viscous_form"])

    def integrator(self) -> IntegratorConfig:
        i = self["integrator"]
        return IntegratorConfig(dt=i["dt"], t_final=i["t_final"], record_stride=i["record_stride"], s=i["s"])

    def inverse(self) -> InverseOperatorConfig:
        i = self["inverse"]
        return InverseOperatorConfig(i["c0"], i["rho0"], i["max_terms"], i["tolerance"])

    def initial_state(self, grid: PeriodicGrid | None = None) -> State:
        grid = grid or self.grid()
        ini = self["initial"]
        profile = ini["profile"]
        if profile == "zero":
            state = State.zeros(grid)
        elif profile == "cosine":
            if ini["mode"] >= grid.nyquist:
                raise ConfigParseError("mode not resolved on the grid", "initial.mode")
            k = ini["mode"] * grid.scale
            state = State(
                SpectralField.from_function(grid, lambda x: ini["eta_amplitude"] * np.cos(k * x)),
                SpectralField.from_function(grid, lambda x: ini["u_amplitude"] * np.cos(k * x)),
            )
        elif profile == "powerlaw":
            state = powerlaw_state(grid, self.get("run", "seed"), ini["exponent"], ini["n_modes"],
                                   ini["eta_amplitude"], ini["u_amplitude"])
        else:
            state = analytic_state(grid, ini["eta_amplitude"], ini["analytic_b"])
        if ini["energy"] is not None:
            state = scale_to_energy(state, ini["energy"], self.get("integrator", "s"))
        return state


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        if raw and all(ch.isalnum() or ch in "_-." for ch in raw):
            return raw
        raise


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text; missing keys take defaults."""
    cfg = ExperimentConfig.defaults().sections
    seen: set = set()
    section = "run"
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigParseError(f"malformed section header {stripped!r}", line=lineno)
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigParseError(f"unknown section [{section}]", section, lineno)
            continue
        if "=" not in stripped:
            raise ConfigParseError(f"expected 'key = value', got {stripped!r}", line=lineno)
        key, raw = (part.strip() for part in stripped.split("=", 1))
        full = f"{section}.{key}"
        if key not in SCHEMA[section]:
            raise ConfigParseError("unknown key", full, lineno)
        if full in seen:
            raise ConfigParseError("duplicate key", full, lineno)
        seen.add(full)
        try:
            value = _parse_value(raw)
        except json.JSONDecodeError:
            raise ConfigParseError(f"cannot parse value {raw!r}", full, lineno) from None
        cfg[section][key] = _coerce(SCHEMA[section][key], value, full, lineno)
    return ExperimentConfig(cfg)


def emit_config(cfg: ExperimentConfig) -> str:
    """Canonical text: sorted sections and keys, JSON values, LF line ends."""
    lines = []
    for section in sorted(cfg.sections):
        lines.append(f"[{section}]")
        for key in sorted(cfg.sections[section]):
            lines.append(f"{key} = {json.dumps(cfg.sections[section][key])}")
        lines.append("")
    return "\n".join(lines)
