"""Plain-text experiment configs: one ``key = value`` per line, JSON values.

Blank lines and lines starting with ``#`` are ignored. A value that is not
valid JSON is taken as a bare string, so ``family = complete`` works.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

SUITES = ("duality", "generators", "meeting", "sweep", "atomic")
FAMILIES = ("complete", "cycle", "torus2d", "weighted_er")
DEFAULT_TIME_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 3.0)
REQUIRED = ("suite", "family", "sizes", "replicas")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    suite: str
    family: str
    sizes: tuple
    replicas: int
    family_params: dict = field(default_factory=dict)
    types: dict = field(default_factory=lambda: {"metric": "discrete", "start": "distinct"})
    mutation: dict = field(default_factory=lambda: {"target": 0.0})
    time_grid: tuple = DEFAULT_TIME_GRID
    seed: int | None = None
    out: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ConfigError(f"unknown suite {self.suite!r}; expected one of {', '.join(SUITES)}")
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("sizes must be a nonempty strictly increasing list")
        if int(self.replicas) < 1:
            raise ConfigError("replicas must be at least 1")
        grid = tuple(float(t) for t in self.time_grid)
        if any(t < 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("time_grid must be nonnegative and strictly increasing")
        if float(self.mutation.get("target", 0.0)) < 0:
            raise ConfigError("mutation target must be nonnegative")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "time_grid", grid)
        object.__setattr__(self, "replicas", int(self.replicas))

    def option(self, key: str, default):
        return self.options.get(key, default)

    def semantic(self) -> dict:
        """Content that determines results (output location excluded)."""
        d = asdict(self)
        d.pop("out")
        d.pop("seed")
        d["sizes"] = list(d["sizes"])
        d["time_grid"] = list(d["time_grid"])
        return d

    def config_hash(self) -> str:
        canon = json.dumps(self.semantic(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


_FIELDS = {
    "suite", "family", "sizes", "replicas", "family_params", "types", "mutation",
    "time_grid", "seed", "out",
}


def parse_text(text: str) -> ExperimentConfig:
    values: dict = {}
    options: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in values or key in options:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            parsed = json.loads(val)
        except json.JSONDecodeError as exc:
            if val[:1] in "[{\"":
                raise ConfigError(f"line {lineno}: malformed JSON for {key!r}: {exc.msg}") from None
            parsed = val
        (values if key in _FIELDS else options)[key] = parsed
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key: {', '.join(missing)}")
    try:
        return ExperimentConfig(**values, options=options)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path) -> ExperimentConfig:
    return parse_text(Path(path).read_text(encoding="utf-8"))
