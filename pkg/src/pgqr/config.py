"""Versioned JSON run configuration with every default written out."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .cde import DEFAULT_TAUS
from .simulate import MC_DRAWS, normalize_kind
from .trainer import TrainConfig

CONFIG_FORMAT = "pgqr-config/1"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by every CLI stage.

    ``pit_draws`` is the number of quantile levels per validation point used
    to choose lambda; ``samples`` the number of generated responses per test
    point. ``sims``, ``n`` and ``replicates`` drive the benchmark report.
    """

    train: TrainConfig = field(default_factory=TrainConfig)
    pit_draws: int = 1000
    samples: int = 1000
    level: float = 0.95
    taus: tuple[float, ...] = DEFAULT_TAUS
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    sims: tuple[str, ...] = ("1", "2", "3")
    n: int = 2000
    replicates: int = 5
    oracle_draws: int = MC_DRAWS
    seed: int = 0

    def __post_init__(self):
        if len(self.split) != 3 or any(f <= 0 for f in self.split) or abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be three positive numbers summing to 1, got {self.split}")
        if self.pit_draws < 1 or self.samples < 2:
            raise ConfigError("pit_draws must be >= 1 and samples >= 2")
        if not 0 < self.level < 1:
            raise ConfigError(f"level must lie in (0, 1), got {self.level}")
        if self.replicates < 1 or self.n < 1 or self.oracle_draws < 2:
            raise ConfigError("replicates and n must be positive, oracle_draws at least 2")
        taus = tuple(float(t) for t in self.taus)
        if not taus or any(not 0 < t < 1 for t in taus) or any(b <= a for a, b in zip(taus, taus[1:])):
            raise ConfigError("taus must be strictly ascending values inside (0, 1)")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "split", tuple(float(f) for f in self.split))
        object.__setattr__(self, "sims", tuple(normalize_kind(s) for s in self.sims))

    def to_dict(self) -> dict:
        return {
            "format": CONFIG_FORMAT,
            "seed": self.seed,
            "train": self.train.to_dict(),
            "pit_draws": self.pit_draws,
            "samples": self.samples,
            "level": self.level,
            "taus": list(self.taus),
            "split": list(self.split),
            "sims": list(self.sims),
            "n": self.n,
            "replicates": self.replicates,
            "oracle_draws": self.oracle_draws,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        fmt = d.pop("format", CONFIG_FORMAT)
        if fmt != CONFIG_FORMAT:
            raise ConfigError(f"unsupported config format {fmt!r}; expected {CONFIG_FORMAT!r}")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "train" in d:
                d["train"] = TrainConfig.from_dict(d["train"])
            for key in ("taus", "split", "sims"):
                if key in d:
                    d[key] = tuple(d[key])
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, train=replace(self.train, seed=seed))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())


def load_config(path=None) -> RunConfig:
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return RunConfig.from_dict(raw)
