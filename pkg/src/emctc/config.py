"""Flat ``key = value`` configuration files.

Keys are the field names of the dataclasses they feed (GenSpec,
TrainConfig, LrSchedule, DecoderConfig, HeadConfig) plus a few run-level
settings. Blank lines and ``#`` comments are ignored. Later assignments
override earlier ones, and command-line ``--set`` values override files.
"""

from __future__ import annotations

import dataclasses
import math

from .corpus import GenSpec
from .decoder import DecoderConfig
from .model import HeadConfig, LrSchedule
from .train import TrainConfig


class ConfigError(ValueError):
    pass


def _int(s: str) -> int:
    return int(s)


def _float(s: str) -> float:
    return math.inf if s.lower() in ("inf", "infinity") else float(s)


def _opt_count(s: str):
    return None if s.lower() in ("none", "inf", "all") else int(s)


def _int_pair(s: str) -> tuple[int, int]:
    lo, hi = (int(x) for x in s.split(","))
    return lo, hi


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _opt_float(s: str):
    return None if s.lower() in ("none", "auto") else float(s)


def _str(s: str) -> str:
    return s


_TYPES = {int: _int, float: _float, "int | None": _opt_count, "tuple[int, int]": _int_pair}

# run-level keys that belong to no single dataclass
EXTRA = {
    "count": (_int, 2000),  # utterances written by gen
    "heldout_fraction": (_float, 0.05),
    "num_hyps": (_int, 1),
    "hidden": (_int_list, (64, 64)),
    "context": (_int, 2),
    "duration_init": (_opt_float, None),  # None: mean training duration
    "init_seed": (_int, 1),
    "lm": (_str, "none"),  # none | uniform | bigram
    "lm_corpus": (_str, ""),
    "lm_smoothing": (_float, 0.5),
    "hist_bin_ms": (_float, 20.0),
}

# desk-scale training schedule; the dataclass defaults describe production runs
DEFAULTS = {"p1": 100, "p2": 700, "gamma_decay": 200, "peak": 0.008, "epochs": 15}

SECTIONS = {"gen": GenSpec, "train": TrainConfig, "schedule": LrSchedule, "decoder": DecoderConfig,
            "heads": HeadConfig}


def _registry():
    reg = {}
    for cls in SECTIONS.values():
        for f in dataclasses.fields(cls):
            conv = _TYPES.get(f.type) or _TYPES.get(getattr(f.type, "__name__", None))
            if conv is None:
                conv = {"int": _int, "float": _float, "bool": lambda s: s.lower() in ("1", "true", "yes")}.get(f.type)
            if conv is None:
                raise TypeError(f"no parser for {cls.__name__}.{f.name}: {f.type!r}")
            if f.name in reg and reg[f.name][0] is not conv:
                raise TypeError(f"key {f.name!r} has conflicting types")
            reg[f.name] = (conv, f.default)
    for k, v in EXTRA.items():
        reg[k] = v
    return reg


REGISTRY = _registry()


class Config:
    def __init__(self, values: dict | None = None):
        self.values = {k: v[1] for k, v in REGISTRY.items()}
        self.values.update(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in REGISTRY:
            raise ConfigError(f"unknown configuration key {key!r}")
        if isinstance(value, str):
            try:
                value = REGISTRY[key][0](value.strip())
            except ValueError:
                raise ConfigError(f"bad value for {key!r}: {value!r}") from None
        self.values[key] = value

    def __getitem__(self, key: str):
        return self.values[key]

    def build(self, cls):
        kwargs = {f.name: self.values[f.name] for f in dataclasses.fields(cls) if f.init}
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {cls.__name__} settings: {exc}") from None

    def update_text(self, text: str, source: str = "<config>") -> None:
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, value = (x.strip() for x in line.split("=", 1))
            try:
                self.set(key, value)
            except ConfigError as exc:
                raise ConfigError(f"{source}:{lineno}: {exc}") from None

    def update_pairs(self, pairs) -> None:
        for p in pairs or ():
            if "=" not in p:
                raise ConfigError(f"--set expects key=value, got {p!r}")
            k, v = p.split("=", 1)
            self.set(k.strip(), v)

    def dump(self) -> str:
        def fmt(v):
            if isinstance(v, tuple):
                return ",".join(str(x) for x in v)
            return "none" if v is None else str(v)
        return "".join(f"{k} = {fmt(self.values[k])}\n" for k in sorted(self.values))


def load_config(path=None, overrides=None) -> Config:
    cfg = Config()
    if path is not None:
        with open(path) as fh:
            cfg.update_text(fh.read(), str(path))
    cfg.update_pairs(overrides)
    return cfg
