"""Experiment config files: flat INI-style sections [meta], [instance],
[procedure], [harness], [pool].

Validation is strict: unknown sections or keys are rejected, required keys
must be present, and every error names the offending ``section.key`` path.
"""

from __future__ import annotations

import configparser

from .harness import PROCEDURES

__all__ = ["ConfigError", "load_config", "SCHEMA_VERSION"]

SCHEMA_VERSION = "1"


class ConfigError(ValueError):
    """Invalid config file; ``path`` is the offending section.key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _float(section, key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"expected a number, got {raw!r}") from None


def _int(section, key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"expected an integer, got {raw!r}") from None


def _floats(section, key, raw):
    try:
        return [float(x) for x in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{section}.{key}",
                          f"expected comma-separated numbers, got {raw!r}") from None


def _str(section, key, raw):
    return raw.strip()


_INSTANCE_KEYS = {
    "kind": _str, "k": _int, "delta": _float, "spacing": _float,
    "sigma2": _float, "means": _floats, "variances": _floats,
    "iz_delta": _float,
}

_INSTANCE_REQUIRED = {
    "explicit": {"means"},
    "slippage": {"k", "delta"},
    "monotone": {"k", "spacing"},
    "equal": {"k"},
}

_PROCEDURE_KEYS = {
    "name": _str, "alpha": _float, "delta": _float, "n0": _int,
    "lambda": _float, "budget_cap": _int, "fhn_variance_update": _str,
    "total": _int, "tau": _int, "sigma2": _float,
    "prior_mean": _floats, "prior_variance": _floats,
    "m": _int, "g": _int,
}

# required / allowed-beyond-required procedure parameters
_PROCEDURE_SCHEMA = {
    "bechhofer": ({"alpha", "delta"}, {"sigma2"}),
    "rinott": ({"alpha", "delta"}, {"n0"}),
    "paulson": ({"alpha", "delta"}, {"lambda", "sigma2", "budget_cap"}),
    "kn": ({"alpha", "delta"}, {"n0", "budget_cap"}),
    "fhn": ({"alpha"}, {"n0", "budget_cap", "fhn_variance_update"}),
    "ocba": ({"total"}, {"tau", "n0"}),
    "equal": ({"total"}, set()),
    "evi": ({"total"}, {"tau", "n0"}),
    "kg": ({"total"}, {"sigma2", "prior_mean", "prior_variance"}),
    "aps": ({"alpha", "delta", "m"}, {"n0"}),
    "kt_plus": ({"alpha", "delta", "m"}, {"n0", "g", "lambda"}),
}

_HARNESS_KEYS = {"replications": _int, "seed": _int, "pgs_delta": _float}

_POOL_KEYS = {"backend": _str, "delay": _str}

_SECTIONS = {"meta", "instance", "procedure", "harness", "pool"}


def _parse_section(parser, name, keyspec) -> dict:
    out = {}
    if not parser.has_section(name):
        return out
    for key, raw in parser.items(name):
        if key not in keyspec:
            raise ConfigError(f"{name}.{key}", "unknown key")
        out[key] = keyspec[key](name, key, raw)
    return out


def load_config(path: str) -> dict:
    """Parse and validate a config file into typed section dicts."""
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigError("file", f"cannot read config file {path!r}")
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(section, "unknown section")

    meta = _parse_section(parser, "meta", {"schema_version": _str})
    if "schema_version" not in meta:
        raise ConfigError("meta.schema_version", "missing required key")
    if meta["schema_version"] != SCHEMA_VERSION:
        raise ConfigError("meta.schema_version",
                          f"unsupported schema version {meta['schema_version']!r} "
                          f"(this build reads {SCHEMA_VERSION})")

    instance = _parse_section(parser, "instance", _INSTANCE_KEYS)
    if not instance:
        raise ConfigError("instance", "missing required section")
    kind = instance.get("kind", "explicit")
    if kind not in _INSTANCE_REQUIRED:
        raise ConfigError("instance.kind", f"unknown instance kind {kind!r}")
    for key in _INSTANCE_REQUIRED[kind]:
        if key not in instance:
            raise ConfigError(f"instance.{key}",
                              f"missing required key for kind={kind}")

    procedure = _parse_section(parser, "procedure", _PROCEDURE_KEYS)
    if not procedure:
        raise ConfigError("procedure", "missing required section")
    name = procedure.get("name")
    if name is None:
        raise ConfigError("procedure.name", "missing required key")
    if name not in PROCEDURES:
        raise ConfigError("procedure.name",
                          f"unknown procedure {name!r}; expected one of "
                          f"{sorted(PROCEDURES)}")
    required, optional = _PROCEDURE_SCHEMA[name]
    for key in required:
        if key not in procedure:
            raise ConfigError(f"procedure.{key}",
                              f"missing required key for procedure {name}")
    allowed = required | optional | {"name"}
    for key in procedure:
        if key not in allowed:
            raise ConfigError(f"procedure.{key}",
                              f"key not accepted by procedure {name}")

    harness = _parse_section(parser, "harness", _HARNESS_KEYS)
    pool = _parse_section(parser, "pool", _POOL_KEYS)
    if "backend" in pool and pool["backend"] not in ("simulated", "threads"):
        raise ConfigError("pool.backend",
                          f"expected 'simulated' or 'threads', got {pool['backend']!r}")
    return {"meta": meta, "instance": instance, "procedure": procedure,
            "harness": harness, "pool": pool}
