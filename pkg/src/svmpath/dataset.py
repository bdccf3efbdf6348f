"""Training data ingestion, feature scaling and the dual Hessian ``Q``."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import BinaryIO, TextIO

import numpy as np

from .errors import DatasetError, InputError, ParseError

DEFAULT_JITTER = 1e-6


@dataclass(frozen=True)
class Dataset:
    """Labelled points; ``x`` is dense ``(n, p)``, ``y`` holds -1/+1."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.array(self.x, dtype=float, ndmin=2)
        y = np.array(self.y, dtype=float).ravel()
        if x.shape[0] != y.shape[0]:
            raise DatasetError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
        if x.shape[0] == 0:
            raise DatasetError("no data points")
        if x.shape[1] == 0:
            raise DatasetError("no features")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise DatasetError("labels must be -1 or +1")
        if x.shape[0] < 2 or np.all(y == y[0]):
            raise DatasetError("single class: both labels are required")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


def parse_libsvm(source: bytes | str | BinaryIO | TextIO) -> Dataset:
    """Read LIBSVM sparse text (``<label> <idx>:<val> ...`` per line).

    Any positive label becomes +1, everything else -1. Indices are 1-based and
    must be strictly increasing within a line; missing entries are zero.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    labels: list[float] = []
    rows: list[dict[int, float]] = []
    p = 0
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        entries: dict[int, float] = {}
        last = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"expected idx:val, got {tok!r}", lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"bad feature {tok!r}", lineno) from None
            if idx <= last:
                raise ParseError(f"feature index {idx} not strictly increasing / 1-based", lineno)
            last = idx
            entries[idx] = val
        p = max(p, last)
        labels.append(1.0 if label > 0 else -1.0)
        rows.append(entries)

    if not rows:
        raise DatasetError("no data points")
    x = np.zeros((len(rows), p))
    for i, entries in enumerate(rows):
        for idx, val in entries.items():
            x[i, idx - 1] = val
    return Dataset(x, np.array(labels))


def scale_features(d: Dataset) -> Dataset:
    """Map every column affinely onto [0, 1]; constant columns become 0."""
    x = d.x
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (x - lo) / safe, 0.0)
    return Dataset(scaled, d.y)


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float | None = None  # None -> 1/p of the data it is applied to
    jitter: float = DEFAULT_JITTER

    def __post_init__(self) -> None:
        if self.kind not in ("rbf", "linear"):
            raise InputError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and self.gamma is not None and not self.gamma > 0:
            raise InputError("RBF gamma must be positive")
        if not self.jitter >= 0:
            raise InputError("jitter must be nonnegative")

    def resolved_gamma(self, p: int) -> float:
        return self.gamma if self.gamma is not None else 1.0 / p


def kernel(xi: np.ndarray, xj: np.ndarray, spec: KernelSpec) -> float:
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    if xi.shape != xj.shape:
        raise InputError(f"dimension mismatch {xi.shape} vs {xj.shape}")
    if spec.kind == "linear":
        return float(xi @ xj)
    diff = xi - xj
    return float(np.exp(-spec.resolved_gamma(xi.size) * (diff @ diff)))


@dataclass(frozen=True)
class QMatrix:
    """``Q_ij = y_i y_j K(x_i, x_j) + jitter [i == j]``, stored dense."""

    values: np.ndarray
    y: np.ndarray
    spec: KernelSpec = field(default_factory=KernelSpec)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def gram(x: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix with the upper triangle mirrored, so it is exactly symmetric."""
    if spec.kind == "linear":
        k = x @ x.T
    else:
        sq = np.einsum("ij,ij->i", x, x)
        dist = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.maximum(dist, 0.0, out=dist)
        np.fill_diagonal(dist, 0.0)
        k = np.exp(-spec.resolved_gamma(x.shape[1]) * dist)
    return np.triu(k) + np.triu(k, 1).T


def build_q(d: Dataset, spec: KernelSpec | None = None) -> QMatrix:
    spec = spec or KernelSpec()
    q = gram(d.x, spec) * np.outer(d.y, d.y)
    q[np.diag_indices_from(q)] += spec.jitter
    q.setflags(write=False)
    return QMatrix(q, d.y, spec)
