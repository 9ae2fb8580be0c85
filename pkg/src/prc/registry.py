"""Scheme lookup by name and the JSON key-file envelope."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from prc.core import AmplifiedScheme, PerfectScheme, UniformScheme, ZeroBitScheme
from prc.errors import ConfigError, ParameterError
from prc.hyperloop import HyperloopScheme
from prc.ssr import SsrScheme
from prc.warmup import WarmupScheme
from prc.weakxor import MulticheckParams, MulticheckScheme, WeakXorScheme

SCHEMES: dict[str, type] = {
    "warmup": WarmupScheme,
    "hyperloop": HyperloopScheme,
    "weakxor": WeakXorScheme,
    "ssr": SsrScheme,
    "multicheck": MulticheckScheme,
    "uniform": UniformScheme,
    "perfect": PerfectScheme,
}

AMPLIFY_FIELDS = ("t", "alpha", "delta")


def make_base(name: str, params: dict[str, Any]) -> ZeroBitScheme:
    if name not in SCHEMES:
        raise ConfigError(f"unknown scheme {name!r}; expected one of {sorted(SCHEMES)}")
    cls = SCHEMES[name]
    try:
        if cls is MulticheckScheme:
            return cls(MulticheckParams(**params))
        return cls.from_json(params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from exc


def make_scheme(name: str, params: dict[str, Any], amplify: dict[str, Any] | None = None) -> ZeroBitScheme:
    """Base scheme, wrapped by the amplifier when ``amplify`` holds ``t``, ``alpha``, ``delta``."""
    base = make_base(name, params)
    if not amplify:
        return base
    missing = [f for f in AMPLIFY_FIELDS if f not in amplify]
    if missing:
        raise ConfigError(f"amplify block lacks {missing}")
    return AmplifiedScheme(base, int(amplify["t"]), float(amplify["alpha"]), float(amplify["delta"]))


def key_envelope(scheme: ZeroBitScheme, sk: Any, pk: Any) -> dict[str, Any]:
    """JSON-ready key file.  Amplified keys add ``t``, ``theta``, ``shifts``, ``perm``."""
    base = scheme.base if isinstance(scheme, AmplifiedScheme) else scheme
    out: dict[str, Any] = {"scheme": base.name, "n": base.security_parameter(), "params": base.params_json()}
    if isinstance(scheme, AmplifiedScheme):
        out.update(scheme.key_to_json(sk))
    else:
        out["base_key"] = base.key_to_json(sk, pk)
    return out


def load_envelope(obj: dict[str, Any]) -> tuple[ZeroBitScheme, Any, Any]:
    """Rebuild ``(scheme, sk, pk)`` from :func:`key_envelope` output."""
    try:
        name, params = obj["scheme"], obj["params"]
        amplify = {f: obj[f] for f in AMPLIFY_FIELDS} if "t" in obj else None
        scheme = make_scheme(name, params, amplify)
        if amplify:
            sk, pk = scheme.key_from_json(obj)
            if int(obj["theta"]) != scheme.theta:
                raise ParameterError("stored theta does not match t, alpha, delta")
        else:
            sk, pk = scheme.key_from_json(obj["base_key"])
    except KeyError as exc:
        raise ConfigError(f"key file lacks field {exc}") from exc
    return scheme, sk, pk


def save_key(path: str | Path, scheme: ZeroBitScheme, sk: Any, pk: Any) -> None:
    Path(path).write_text(json.dumps(key_envelope(scheme, sk, pk)) + "\n")


def load_key(path: str | Path) -> tuple[ZeroBitScheme, Any, Any]:
    return load_envelope(json.loads(Path(path).read_text()))
