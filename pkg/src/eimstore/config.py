"""JSON model and contract documents, time-unit conversion and run manifests.

Internally every rate is per year. Documents may carry ``"time_unit": "day"``
or ``"year"``; without it the caller's default applies.
"""

from __future__ import annotations

import hashlib
import json
import math
import platform
import time
from importlib import metadata
from pathlib import Path
from typing import Optional, Union

from .diffusion import BrownianMotion, DiffusionModel, NegGBM, OU, ShiftedExpStack
from .payoff import ContractParams

DAYS_PER_YEAR = 365.25
UNITS = ("day", "year")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration document."""


def per_year(unit: str) -> float:
    """Multiplier turning a rate per ``unit`` into a rate per year."""
    if unit not in UNITS:
        raise ConfigError(f"time_unit must be one of {UNITS}, got {unit!r}")
    return DAYS_PER_YEAR if unit == "day" else 1.0


def _num(doc: dict, key: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise ConfigError(f"missing field {key!r}")
        return default
    try:
        return float(doc[key])
    except (TypeError, ValueError):
        raise ConfigError(f"field {key!r} must be a number, got {doc[key]!r}") from None


def model_from_dict(doc: dict, default_unit: str = "day") -> DiffusionModel:
    """Build a model with per-year parameters from a JSON-style dict."""
    k = per_year(doc.get("time_unit", default_unit))
    kind = doc.get("type")
    if kind == "ou":
        return OU(_num(doc, "theta") * k, _num(doc, "mu"), _num(doc, "sigma") * math.sqrt(k))
    if kind == "neg_gbm":
        return NegGBM(_num(doc, "mu") * k, _num(doc, "sigma") * math.sqrt(k))
    if kind == "stack":
        inner_doc = doc.get("inner")
        if not isinstance(inner_doc, dict):
            raise ConfigError("stack model needs an 'inner' object")
        b = _num(doc, "b")
        if inner_doc.get("type") == "bm":
            # W at time k*t equals sqrt(k) times a standard Brownian motion at t
            return ShiftedExpStack(_num(doc, "D"), _num(doc, "d"), b * math.sqrt(k), BrownianMotion())
        if inner_doc.get("type") == "ou":
            inner = OU(_num(inner_doc, "theta") * k, _num(inner_doc, "mu", 0.0),
                       _num(inner_doc, "sigma", 1.0) * math.sqrt(k))
            return ShiftedExpStack(_num(doc, "D"), _num(doc, "d"), b, inner)
        raise ConfigError(f"unknown inner process {inner_doc.get('type')!r}")
    raise ConfigError(f"unknown model type {kind!r}")


def model_to_dict(model: DiffusionModel) -> dict:
    """Per-year JSON representation."""
    if isinstance(model, OU):
        return {"type": "ou", "theta": model.theta, "mu": model.mu, "sigma": model.sigma, "time_unit": "year"}
    if isinstance(model, NegGBM):
        return {"type": "neg_gbm", "mu": model.mu, "sigma": model.sigma, "time_unit": "year"}
    if isinstance(model, ShiftedExpStack):
        inner = ({"type": "bm"} if isinstance(model.inner, BrownianMotion)
                 else {"type": "ou", "theta": model.inner.theta, "mu": model.inner.mu, "sigma": model.inner.sigma})
        return {"type": "stack", "D": model.D, "d": model.d, "b": model.b, "inner": inner, "time_unit": "year"}
    raise ConfigError(f"cannot serialise {model!r}")


def contract_from_dict(doc: dict, default_unit: str = "day", model_doc: Optional[dict] = None,
                       force: bool = False) -> ContractParams:
    """Contract with its rate converted to per year.

    The rate may sit in the contract or the model document; if both give
    one they must agree after unit conversion. ``force`` lifts the
    premium sign and ``p_c + K_c < x_star`` checks.
    """
    rates = []
    if "rate" in doc:
        rates.append(_num(doc, "rate") * per_year(doc.get("time_unit", default_unit)))
    if model_doc and "rate" in model_doc:
        rates.append(_num(model_doc, "rate") * per_year(model_doc.get("time_unit", default_unit)))
    if not rates:
        raise ConfigError("no discount rate given in contract or model")
    if len(rates) == 2 and not math.isclose(rates[0], rates[1], rel_tol=1e-12):
        raise ConfigError(f"contract and model rates disagree: {rates[0]} vs {rates[1]} per year")
    return ContractParams(_num(doc, "x_star"), _num(doc, "p_c"), _num(doc, "K_c"), rates[0],
                          _num(doc, "A", 0.9999), strict=not force)


def contract_to_dict(c: ContractParams) -> dict:
    return {"x_star": c.x_star, "p_c": c.p_c, "K_c": c.K_c, "rate": c.r, "A": c.A, "time_unit": "year"}


def load_json(path: Union[str, Path]) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return doc


def file_digest(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def run_manifest(command: str, config: dict, inputs: Optional[dict] = None) -> dict:
    """Resolved configuration plus provenance for one CLI run."""
    return {
        "command": command,
        "config": config,
        "tool_version": tool_version(),
        "python": platform.python_version(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "inputs": {name: {"path": str(p), "sha256": file_digest(p)} for name, p in (inputs or {}).items()},
    }


def dumps(doc) -> str:
    """Deterministic strict JSON text; non-finite floats become ``"inf"``, ``"-inf"`` or ``"nan"``."""
    return json.dumps(_finite(doc), indent=2, sort_keys=True, default=_default, allow_nan=False) + "\n"


def _finite(o):
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    if hasattr(o, "item") and not isinstance(o, (str, bytes)):
        o = o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("inf" if o > 0 else "-inf")
    return o


def _default(o):
    if hasattr(o, "item"):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")
