"""Experiment configuration: a flat key-value document mirroring the CLI flags."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

_U64 = 1 << 64
FORMATS = ("json", "csv")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


def coerce(value, default):
    """Convert ``value`` to the type of ``default``.

    Integers accept scientific notation when it is integral (``1e6``), lists
    accept comma-separated strings.
    """
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes"):
                return True
            if value.lower() in ("0", "false", "no"):
                return False
            raise ConfigError(f"not a boolean: {value!r}")
        return bool(value)
    if isinstance(default, int):
        if isinstance(value, bool):
            raise ConfigError(f"not an integer: {value!r}")
        try:
            f = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"not an integer: {value!r}") from None
        if not f.is_integer():
            raise ConfigError(f"not an integer: {value!r}")
        return int(f) if abs(f) < 2**53 else int(value)
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"not a number: {value!r}") from None
    if isinstance(default, list):
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"not a list: {value!r}")
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError):
            raise ConfigError(f"not a list of numbers: {value!r}") from None
    if isinstance(default, str):
        return str(value)
    raise ConfigError(f"unsupported parameter type for {value!r}")


@dataclass
class ExperimentConfig:
    """One experiment run.

    ``params`` holds the experiment-specific parameters, already merged with
    the experiment defaults.  ``threads``, ``output_path`` and ``format``
    only affect execution and output, not results, so they are left out of
    :meth:`identity` and of the config hash.
    """

    experiment: str
    params: dict = field(default_factory=dict)
    master_seed: int = 1
    threads: int = 1
    output_path: str | None = None
    format: str = "json"

    def validate(self) -> "ExperimentConfig":
        if not 0 <= int(self.master_seed) < _U64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if int(self.threads) < 1:
            raise ConfigError("threads must be >= 1")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        for key, value in self.params.items():
            if key == "replicas" or key.endswith("_replicas"):
                if value < 1:
                    raise ConfigError(f"{key} must be >= 1")
            if key.startswith("tol") or key == "swallow_tol":
                vals = value if isinstance(value, list) else [value]
                if not all(v > 0 for v in vals):
                    raise ConfigError(f"{key} must be positive")
        return self

    def identity(self) -> dict:
        """The part of the config that determines the results."""
        return {"experiment": self.experiment, "seed": int(self.master_seed),
                "params": dict(sorted(self.params.items()))}

    def config_hash(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_flat(self) -> dict:
        """Flat document with the same keys as the CLI flags."""
        out = {"experiment": self.experiment, "seed": int(self.master_seed),
               "threads": int(self.threads), "format": self.format}
        if self.output_path is not None:
            out["out"] = self.output_path
        out.update(self.params)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_flat(), sort_keys=True)

    @classmethod
    def from_flat(cls, doc: dict, defaults: dict | None = None,
                  experiment: str | None = None) -> "ExperimentConfig":
        """Build from a flat document; ``defaults`` fixes the allowed parameters."""
        doc = dict(doc)
        name = experiment or doc.pop("experiment", None)
        doc.pop("experiment", None)
        if not name:
            raise ConfigError("no experiment named")
        seed = coerce(doc.pop("seed", 1), 0)
        threads = coerce(doc.pop("threads", 1), 0)
        out = doc.pop("out", None)
        fmt = doc.pop("format", "json")
        if defaults is None:
            params = doc
        else:
            unknown = sorted(set(doc) - set(defaults))
            if unknown:
                raise ConfigError(f"unknown parameters for {name}: {', '.join(unknown)}")
            params = {k: coerce(doc[k], v) if k in doc else v for k, v in defaults.items()}
        return cls(name, params, seed, threads, out, fmt).validate()

    @classmethod
    def from_json(cls, text: str, defaults: dict | None = None) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a flat JSON object")
        return cls.from_flat(doc, defaults)
