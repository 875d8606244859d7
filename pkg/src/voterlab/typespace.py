"""Finite metric type spaces and parent-independent mutation measures."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "TypeSpace",
    "MutationMeasure",
    "normalize",
    "mollifier",
    "line_space",
    "discrete_space",
]

_METRIC_TOL = 1e-12


@dataclass(frozen=True)
class TypeSpace:
    """A finite metric space of types.

    ``dist`` is validated on construction: symmetric, zero diagonal,
    strictly positive off the diagonal and satisfying the triangle
    inequality for every triple.
    """

    labels: tuple
    dist: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        dist = np.array(self.dist, dtype=float)
        m = len(labels)
        if m == 0:
            raise ValueError("type space must contain at least one type")
        if len(set(labels)) != m:
            raise ValueError("type labels must be distinct")
        if dist.shape != (m, m):
            raise ValueError(f"dist must be {m}x{m}, got {dist.shape}")
        if not np.all(np.isfinite(dist)):
            raise ValueError("dist has non-finite entries")
        if np.any(np.diag(dist) != 0.0):
            raise ValueError("dist must vanish on the diagonal")
        if not np.array_equal(dist, dist.T):
            raise ValueError("dist must be symmetric")
        off = ~np.eye(m, dtype=bool)
        if np.any(dist[off] <= 0.0):
            raise ValueError("distinct types must be at positive distance")
        # d[i,k] <= d[i,j] + d[j,k] for all triples
        for j in range(m):
            if np.any(dist > dist[:, j, None] + dist[None, j, :] + _METRIC_TOL):
                raise ValueError("dist violates the triangle inequality")
        dist.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dist", dist)

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        return self.labels.index(label)

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "dist": self.dist.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "TypeSpace":
        return cls(tuple(obj["labels"]), np.asarray(obj["dist"], dtype=float))


@dataclass(frozen=True)
class MutationMeasure:
    """Finite nonnegative measure on a :class:`TypeSpace`."""

    space: TypeSpace
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.space.size,):
            raise ValueError(
                f"mutation weights must have length {self.space.size}, got {w.shape}"
            )
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("mutation weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def scaled(self, c: float) -> "MutationMeasure":
        if c < 0:
            raise ValueError("scale factor must be nonnegative")
        return MutationMeasure(self.space, self.weights * c)

    @classmethod
    def zero(cls, space: TypeSpace) -> "MutationMeasure":
        return cls(space, np.zeros(space.size))

    def to_dict(self) -> dict:
        d = self.space.to_dict()
        d["weights"] = self.weights.tolist()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "MutationMeasure":
        return cls(TypeSpace.from_dict(obj), np.asarray(obj["weights"], dtype=float))


def normalize(mu: MutationMeasure):
    """Return mu / mu(1), mapping the zero measure to itself."""
    from .measures import FiniteMeasure

    total = mu.total
    if total == 0.0:
        return FiniteMeasure(mu.space, np.zeros(mu.space.size))
    return FiniteMeasure(mu.space, mu.weights / total)


def mollifier(r):
    """J(r) = (1 - r)^+ ; accepts scalars or arrays of nonnegative reals."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or np.any(np.isnan(r_arr)):
        raise ValueError("mollifier argument must be nonnegative")
    out = np.maximum(0.0, 1.0 - r_arr)
    if out.ndim == 0:
        return float(out)
    return out


def line_space(m: int, labels: Sequence | None = None) -> TypeSpace:
    """m points equally spaced in [0, 1] with Euclidean distance."""
    if m < 1:
        raise ValueError("need at least one type")
    pts = np.linspace(0.0, 1.0, m) if m > 1 else np.zeros(1)
    dist = np.abs(pts[:, None] - pts[None, :])
    return TypeSpace(tuple(labels) if labels is not None else tuple(range(m)), dist)


def discrete_space(m: int, labels: Sequence | None = None) -> TypeSpace:
    """m types, all pairwise at distance 1."""
    if m < 1:
        raise ValueError("need at least one type")
    dist = 1.0 - np.eye(m)
    return TypeSpace(tuple(labels) if labels is not None else tuple(range(m)), dist)
