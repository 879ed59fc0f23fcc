"""JSON experiment configuration.

Schema (all keys optional except ``model``)::

    {
      "model": "gbm" | "cir",
      "scheme": "euler" | "milstein",                 default "milstein"
      "functional": "terminal" | "discounted_call"
                    | {"kind": "discounted_call", "strike": 1.0, "rate": 0.05},
                                                      default: gbm -> discounted_call(1, 0.05),
                                                               cir -> terminal
      "estimator": "unbiased" | "mlmc",               default "unbiased"
      "gamma": float,                                 default 1.5
      "ire_list": [percent, ...],                     default [25, 10, 5, 2, 1, 0.5]
      "meta_reps": int,                               default 100
      "n_min": int,                                   default 100
      "mlmc_initial_samples": int,                    default 100
      "master_seed": int in [0, 2**64),               default 1
      "output": path or null,
      "override_gamma_check": bool                    default false
    }
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .models import DiscountedCall, Problem, Scheme, TerminalValue, cir, gbm
from .unbiased import DEFAULT_GAMMA, validate_gamma

DEFAULT_IRE = (25.0, 10.0, 5.0, 2.0, 1.0, 0.5)
MODELS = ("gbm", "cir")
SCHEMES = ("euler", "milstein")
ESTIMATORS = ("unbiased", "mlmc")
FUNCTIONALS = ("terminal", "discounted_call")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class FunctionalSpec:
    kind: str = "terminal"
    strike: float = 1.0
    rate: float = 0.05

    def build(self, horizon: float = 1.0):
        if self.kind == "terminal":
            return TerminalValue()
        return DiscountedCall(self.strike, self.rate, horizon)

    def to_json(self):
        if self.kind == "terminal":
            return {"kind": "terminal"}
        return {"kind": self.kind, "strike": self.strike, "rate": self.rate}


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    scheme: str = "milstein"
    functional: FunctionalSpec = field(default_factory=FunctionalSpec)
    estimator: str = "unbiased"
    gamma: float = DEFAULT_GAMMA
    ire_list: tuple[float, ...] = DEFAULT_IRE
    meta_reps: int = 100
    n_min: int = 100
    mlmc_initial_samples: int = 100
    master_seed: int = 1
    output: str | None = None
    override_gamma_check: bool = False

    def problem(self) -> Problem:
        model = gbm() if self.model == "gbm" else cir()
        return Problem(model, Scheme[self.scheme.upper()], self.functional.build())

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["functional"] = self.functional.to_json()
        d["ire_list"] = list(self.ire_list)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _choice(doc, key, options, default=None):
    value = doc.get(key, default)
    if value not in options:
        raise ConfigError(key, f"expected one of {', '.join(options)}, got {value!r}")
    return value


def _number(doc, key, default, *, lo=None, hi=None, lo_open=False, integer=False):
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise ConfigError(key, f"must be {'>' if lo_open else '>='} {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(key, f"must be <= {hi}, got {value!r}")
    return int(value) if integer else float(value)


def _functional(doc, model):
    raw = doc.get("functional")
    if raw is None:
        return FunctionalSpec("discounted_call") if model == "gbm" else FunctionalSpec("terminal")
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, dict):
        raise ConfigError("functional", f"expected a string or object, got {raw!r}")
    unknown = set(raw) - {"kind", "strike", "rate"}
    if unknown:
        raise ConfigError("functional", f"unknown keys {sorted(unknown)}")
    kind = _choice(raw, "kind", FUNCTIONALS)
    if kind == "terminal":
        if set(raw) - {"kind"}:
            raise ConfigError("functional", "terminal takes no strike/rate")
        return FunctionalSpec("terminal")
    strike = _number(raw, "strike", 1.0, lo=0.0)
    rate = _number(raw, "rate", 0.05)
    return FunctionalSpec(kind, strike, rate)


def config_from_dict(doc: dict, *, override_gamma_check: bool = False) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = set(doc) - _KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    if "model" not in doc:
        raise ConfigError("model", "required")
    model = _choice(doc, "model", MODELS)
    scheme = _choice(doc, "scheme", SCHEMES, "milstein")
    estimator = _choice(doc, "estimator", ESTIMATORS, "unbiased")
    gamma = _number(doc, "gamma", DEFAULT_GAMMA, lo=0.0, lo_open=True)
    ire = doc.get("ire_list", list(DEFAULT_IRE))
    if not isinstance(ire, list) or not ire:
        raise ConfigError("ire_list", "expected a nonempty list of percents")
    ire_list = tuple(_number({"ire_list": v}, "ire_list", None, lo=0.0, lo_open=True, hi=100.0) for v in ire)
    override = doc.get("override_gamma_check", False)
    if not isinstance(override, bool):
        raise ConfigError("override_gamma_check", f"expected true/false, got {override!r}")
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", f"expected a path string or null, got {output!r}")
    cfg = ExperimentConfig(
        model=model,
        scheme=scheme,
        functional=_functional(doc, model),
        estimator=estimator,
        gamma=gamma,
        ire_list=ire_list,
        meta_reps=_number(doc, "meta_reps", 100, lo=2, integer=True),
        n_min=_number(doc, "n_min", 100, lo=2, integer=True),
        mlmc_initial_samples=_number(doc, "mlmc_initial_samples", 100, lo=2, integer=True),
        master_seed=_number(doc, "master_seed", 1, lo=0, hi=2 ** 64 - 1, integer=True),
        output=output,
        override_gamma_check=override,
    )
    if estimator == "unbiased" and not (override or override_gamma_check):
        check = validate_gamma(gamma, Scheme[scheme.upper()].strong_order)
        if not check.ok:
            raise ConfigError("gamma", "; ".join(check.violations)
                              + f" (default for {scheme} is {check.default_gamma}; "
                              "set override_gamma_check to run anyway)")
    return cfg


def parse_config(text: str, *, override_gamma_check: bool = False) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"invalid JSON: {exc}") from None
    return config_from_dict(doc, override_gamma_check=override_gamma_check)
