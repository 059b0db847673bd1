"""File-first ``key=value`` run configuration with command-line overrides."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable

import numpy as np

from .datasets import resolve_dataset
from .errors import ConfigError
from .models import ModelKind
from .sampling import Fallback, SamplerConfig, Variant
from .training import TrainConfig

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    dataset: str = "synthetic50"
    out_dir: str = "runs/default"
    model: str = "transe"
    dim: int = 16
    gamma: float = 9.0
    transe_norm: int = 1
    dtype: str = "float32"
    batch_size: int = 1000
    steps: int = 1000
    learning_rate: float = 5e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    negatives: int = 128
    sampler: str = "uniform"
    adversarial: bool = False
    adv_temperature: float = 1.0
    k: int = 2
    omega: int = 3000
    neighborhood: str = ""
    fallback: str = "uniform"
    filter: str = "all"
    eval_every: int = 0
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        try:
            ModelKind(self.model)
            Variant(self.sampler)
            Fallback(self.fallback)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.filter not in ("all", "train"):
            raise ConfigError("filter must be 'all' or 'train'")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self.transe_norm not in (1, 2):
            raise ConfigError("transe_norm must be 1 or 2")
        if self.dim < 1 or self.negatives < 1 or self.threads < 1:
            raise ConfigError("dim, negatives and threads must be positive")

    # -- parsing ----------------------------------------------------------

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]], base: "RunConfig | None" = None) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = dataclasses.asdict(base) if base is not None else {}
        for key, raw in pairs:
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, raw.strip(), types[key])
        return cls(**values)

    @classmethod
    def from_text(cls, text: str, overrides: Iterable[str] = ()) -> "RunConfig":
        pairs = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            pairs.append((key.strip(), value))
        cfg = cls.from_pairs(pairs)
        return cfg.with_overrides(overrides)

    @classmethod
    def from_file(cls, path: str | os.PathLike, overrides: Iterable[str] = ()) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, overrides)

    def with_overrides(self, overrides: Iterable[str]) -> "RunConfig":
        pairs = []
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            key, value = item.split("=", 1)
            pairs.append((key.strip(), value))
        return type(self).from_pairs(pairs, base=self) if pairs else self

    def dump(self) -> str:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            out.append(f"{f.name}={v}")
        return "\n".join(out) + "\n"

    # -- derived objects --------------------------------------------------

    def resolved(self) -> "RunConfig":
        """Resolve every path up front; fails before any long computation."""
        dataset = str(resolve_dataset(self.dataset))
        nb = self.neighborhood
        if Variant(self.sampler) is not Variant.UNIFORM:
            if not nb:
                raise ConfigError(f"sampler {self.sampler} requires neighborhood=<file from `preprocess`>")
            if not Path(nb).is_file():
                raise ConfigError(f"neighborhood file not found: {nb}")
            nb = str(Path(nb).resolve())
        out_dir = str(Path(self.out_dir).resolve())
        return dataclasses.replace(self, dataset=dataset, out_dir=out_dir, neighborhood=nb)

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            variant=self.sampler,
            adversarial=self.adversarial,
            n=self.negatives,
            k=self.k,
            omega=self.omega,
            adv_temperature=self.adv_temperature,
            fallback=self.fallback,
            seed=self.seed + 1,
            train_only_filter=self.filter == "train",
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            steps=self.steps,
            learning_rate=self.learning_rate,
            sampler=self.sampler_config(),
            eval_every=self.eval_every,
            seed=self.seed,
            beta1=self.adam_beta1,
            beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
        )


def _coerce(key: str, raw: str, typ):
    typ = {"int": int, "float": float, "bool": bool, "str": str}.get(typ, typ)
    try:
        if typ is bool:
            low = raw.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(raw)
        if typ is int:
            return int(float(raw)) if "e" in raw.lower() and float(raw).is_integer() else int(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
