"""Exact simulation of fBm, mixed fBm and drifted paths; variation sums."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.linalg import cholesky, toeplitz

from .errors import DomainError, InputError, NumericalError
from .kernels import _check_H
from .solver import Grid

LABELS = ("B", "BH", "X", "Y")


def fgn_autocov(H: float, h: float, n: int) -> np.ndarray:
    """Autocovariance of fBm increments over panels of width h, lags 0..n-1."""
    k = np.arange(n, dtype=float)
    e = 2 * H
    return 0.5 * h**e * (np.abs(k + 1) ** e - 2 * k**e + np.abs(k - 1) ** e)


@lru_cache(maxsize=16)
def fgn_cholesky(H: float, n: int, t_end: float) -> np.ndarray:
    """Lower Cholesky factor of the fGn covariance, cached per (H, grid)."""
    C = toeplitz(fgn_autocov(H, t_end / n, n))
    try:
        L = cholesky(C, lower=True)
    except np.linalg.LinAlgError:
        try:
            L = cholesky(C + 1e-12 * np.eye(n), lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("fGn covariance is not positive definite") from exc
    L.setflags(write=False)
    return L


def circulant_fgn(H: float, n: int, t_end: float, z: np.ndarray) -> np.ndarray:
    """fGn by circulant embedding from 2n standard normals per row of ``z``.

    Optional fast path; raises if the embedding has negative eigenvalues.
    """
    gam = fgn_autocov(H, t_end / n, n + 1)
    row = np.concatenate([gam, gam[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise NumericalError("circulant embedding is not nonnegative definite")
    lam = np.clip(lam, 0, None)
    m = len(row)
    z = np.atleast_2d(z)
    if z.shape[1] != m:
        raise InputError(f"circulant embedding needs {m} normals per path")
    # real construction from m real normals (symmetric complex pairs)
    half = m // 2
    w = np.zeros(z.shape, dtype=complex)
    w[:, 0] = np.sqrt(lam[0]) * z[:, 0]
    w[:, half] = np.sqrt(lam[half]) * z[:, half]
    re = z[:, 1:half]
    im = z[:, half + 1 :][:, ::-1]
    c = np.sqrt(lam[1:half] / 2)
    w[:, 1:half] = c * (re + 1j * im)
    w[:, half + 1 :] = np.conj(w[:, 1:half][:, ::-1])
    out = np.fft.fft(w, axis=1).real / np.sqrt(m)
    return out[:, :n]


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for one path; the path index selects the stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class PathSample:
    """Sampled trajectories on a grid; each array has shape (n_paths, n+1)."""

    grid: Grid
    H: float
    seed: int
    values: Dict[str, np.ndarray]
    theta: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @property
    def labels(self):
        return tuple(k for k in LABELS if k in self.values)

    @property
    def n_paths(self) -> int:
        return next(iter(self.values.values())).shape[0]

    def __getitem__(self, label: str) -> np.ndarray:
        return self.values[label]


def _normals(seed, n_paths, n, first=0):
    z = np.empty((n_paths, 2 * n))
    for p in range(n_paths):
        z[p] = path_rng(seed, first + p).standard_normal(2 * n)
    return z


def simulate(
    H: float,
    grid: Grid,
    n_paths: int,
    seed: int,
    theta: Optional[float] = None,
    method: str = "cholesky",
    components: Sequence[str] = ("B", "BH"),
) -> PathSample:
    """Simulate B, B^H, X = B + B^H and Y = theta t + X on ``grid``.

    ``components`` selects which noises enter X: ("BH",) gives pure fBm
    paths and ("B",) pure Brownian ones, as reference measures require.
    Path p uses its own generator stream, so any subset of paths can be
    replayed.
    """
    H = _check_H(H)
    if n_paths < 1:
        raise DomainError("n_paths must be at least 1")
    if not set(components) <= {"B", "BH"} or not components:
        raise InputError("components must be a nonempty subset of {'B', 'BH'}")
    n = grid.n
    h = grid.h
    z = _normals(seed, n_paths, n)
    if H == 1.0:
        dBH = h * z[:, :1] * np.ones((1, n))
    elif method == "cholesky":
        dBH = z[:, :n] @ fgn_cholesky(H, n, grid.t_end).T
    elif method == "circulant":
        m = 2 * n
        extra = np.empty((n_paths, m))
        for p in range(n_paths):
            extra[p] = path_rng(seed, p).standard_normal(2 * n + m)[2 * n :]
        dBH = circulant_fgn(H, n, grid.t_end, extra)
    else:
        raise InputError(f"unknown simulation method {method!r}")
    dB = np.sqrt(h) * z[:, n:]
    zero = np.zeros((n_paths, 1))
    B = np.hstack([zero, np.cumsum(dB, axis=1)])
    BH = np.hstack([zero, np.cumsum(dBH, axis=1)])
    X = (B if "B" in components else 0.0) + (BH if "BH" in components else 0.0)
    values = {"B": B, "BH": BH, "X": np.asarray(X)}
    if theta is not None:
        values["Y"] = theta * grid.nodes[None, :] + values["X"]
    for v in values.values():
        v.setflags(write=False)
    return PathSample(grid, H, int(seed), values, theta,
                      meta={"method": method, "components": list(components)})


@dataclass(frozen=True)
class VariationReport:
    """p-variation sums over dyadic partitions; ``sums`` averages over paths."""

    p: float
    levels: np.ndarray
    sums: np.ndarray
    per_path: np.ndarray


def variation_diagnostic(path, p: float, max_level: int, min_level: int = 1) -> VariationReport:
    """sum |X(t_{k+1}) - X(t_k)|^p over the dyadic partitions of the grid.

    ``path`` holds one or more rows of node values; its panel count must be
    divisible by 2^max_level.
    """
    if p <= 0:
        raise DomainError("p must be positive")
    x = np.atleast_2d(np.asarray(path, float))
    n = x.shape[1] - 1
    if n % (2**max_level):
        raise InputError(f"{n} panels cannot hold dyadic level {max_level}")
    levels = np.arange(min_level, max_level + 1)
    per = np.empty((x.shape[0], len(levels)))
    for k, lev in enumerate(levels):
        step = n // 2**lev
        per[:, k] = np.sum(np.abs(np.diff(x[:, ::step], axis=1)) ** p, axis=1)
    return VariationReport(float(p), levels, per.mean(axis=0), per)
