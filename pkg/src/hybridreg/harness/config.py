"""Flat ``section.key = value`` configuration.

Every key maps to a field of one of the section dataclasses below, and every
key can be overridden from the command line with ``--section.key VALUE``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Optional

from ..patch_matching import MatchConfig
from ..point_matching import PointConfig
from ..registration import RegConfig
from ..sampler import SamplerConfig
from ..spectral import SMConfig


@dataclass(frozen=True)
class GridConfig:
    p1: float = 0.025
    p2: float = 0.05
    p3: float = 0.10
    dense: int = 2


@dataclass(frozen=True)
class FeatureConfig:
    radius: float = 0.30
    bins: int = 11
    normal_radius: float = 0.10
    aggregate: bool = True
    support: int = 3


@dataclass(frozen=True)
class EvalConfig:
    ir_tau: float = 0.10
    fmr_tau: float = 0.05
    rmse_thresh: float = 0.20
    max_corr: int = 1000
    step: float = 0.03


# lengths that scale with the scene when a scale multiplier is applied
_LENGTH_KEYS = {
    "grid": ("p1", "p2", "p3"),
    "sampler": ("r", "nms_radius", "sigma"),
    "features": ("radius", "normal_radius"),
    "sm": ("tau",),
    "reg": ("accept_radius", "ransac_threshold"),
    "eval": ("ir_tau", "rmse_thresh", "step"),
}


@dataclass(frozen=True)
class Config:
    grid: GridConfig = field(default_factory=GridConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    match: MatchConfig = field(default_factory=lambda: MatchConfig(temperature=0.01))
    sm: SMConfig = field(default_factory=SMConfig)
    point: PointConfig = field(default_factory=PointConfig)
    reg: RegConfig = field(default_factory=lambda: RegConfig(refine_iters=20))
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_flat(self) -> Dict[str, object]:
        out = {}
        for sec in fields(self):
            sub = getattr(self, sec.name)
            for f in fields(sub):
                out[f"{sec.name}.{f.name}"] = getattr(sub, f.name)
        return out

    def override(self, flat: Dict[str, object]) -> "Config":
        updates: Dict[str, dict] = {}
        for key, raw in flat.items():
            if raw is None:
                continue
            sec, _, name = key.partition(".")
            sub = getattr(self, sec, None)
            if sub is None or not dataclasses.is_dataclass(sub) or name not in {f.name for f in fields(sub)}:
                raise KeyError(f"unknown config key {key!r}")
            cur = getattr(sub, name)
            updates.setdefault(sec, {})[name] = _coerce(raw, type(cur), key)
        new = self
        for sec, vals in updates.items():
            new = replace(new, **{sec: replace(getattr(new, sec), **vals)})
        return new

    def scaled(self, factor: float) -> "Config":
        """Multiply every length-valued key by ``factor`` (e.g. 20 for outdoor scans)."""
        flat = self.to_flat()
        upd = {f"{s}.{k}": flat[f"{s}.{k}"] * factor for s, keys in _LENGTH_KEYS.items() for k in keys}
        return self.override(upd)

    @classmethod
    def keys(cls):
        return list(cls().to_flat())

    @classmethod
    def load(cls, path, base: Optional["Config"] = None) -> "Config":
        return (base or cls()).override(parse_flat(open(path).read(), str(path)))

    def dump(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_flat().items())


def _coerce(raw, typ, key):
    if isinstance(raw, typ) and not (typ is int and isinstance(raw, bool)):
        return raw
    try:
        if typ is bool:
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(float(raw)) if float(raw).is_integer() else int(raw)
        return typ(raw)
    except (TypeError, ValueError):
        raise ValueError(f"config key {key!r}: cannot read {raw!r} as {typ.__name__}") from None


def parse_flat(text: str, source: str = "<config>") -> Dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ValueError(f"{source}: line {lineno}: expected key = value")
        k, v = (x.strip() for x in s.split("=", 1))
        out[k] = v
    return out
