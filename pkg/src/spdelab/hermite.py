"""Hermite chaos bookkeeping: multi-indices, orthonormal polynomial
tables, and tensorized Gauss-Hermite quadrature.

The chaos basis is the product of normalized probabilists' Hermite
polynomials in the standardized coordinates ``x_k / s_k``, where
``s_k^2 = 1 / (2 lambda_k)`` is the stationary per-mode variance. The
basis is orthonormal for the stationary product Gaussian and
diagonalizes the linear-dynamics generator.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .errors import ParameterError


@dataclass(frozen=True)
class MultiIndexSet:
    """All multi-indices with total degree at most ``degree``.

    Ordered by (total degree, lexicographic); contains the zero index
    first and is closed under decrementing any coordinate. The size is
    ``binomial(modes + degree, degree)``.
    """

    modes: int
    degree: int
    indices: np.ndarray  # (size, modes) int

    @classmethod
    def total_degree(cls, modes, degree):
        if modes < 1 or degree < 0:
            raise ParameterError("need modes >= 1 and degree >= 0")
        combos = [
            alpha
            for alpha in product(range(degree + 1), repeat=modes)
            if sum(alpha) <= degree
        ]
        combos.sort(key=lambda a: (sum(a), a))
        return cls(modes, degree, np.array(combos, dtype=np.intp))

    @property
    def size(self):
        return self.indices.shape[0]

    def position(self, alpha):
        return _position_map(self)[tuple(int(a) for a in alpha)]

    def lowering_map(self, k):
        """Index pairs realizing one derivative in coordinate ``k``.

        Returns ``(src, dst, order)``: positions of indices with
        ``alpha_k > 0``, the positions of ``alpha - e_k``, and the
        corresponding ``alpha_k`` values.
        """
        alpha_k = self.indices[:, k]
        src = np.flatnonzero(alpha_k > 0)
        pos = _position_map(self)
        dst = np.empty(src.size, dtype=np.intp)
        for i, s in enumerate(src):
            beta = self.indices[s].copy()
            beta[k] -= 1
            dst[i] = pos[tuple(beta)]
        return src, dst, alpha_k[src]


@lru_cache(maxsize=32)
def _cached_index_set(modes, degree):
    return MultiIndexSet.total_degree(modes, degree)


def index_set(modes, degree):
    """Shared total-degree index set (cached)."""
    return _cached_index_set(modes, degree)


def _position_map(iset):
    key = (iset.modes, iset.degree)
    cached = _POSITIONS.get(key)
    if cached is None:
        cached = {tuple(map(int, a)): i for i, a in enumerate(iset.indices)}
        _POSITIONS[key] = cached
    return cached


_POSITIONS: dict = {}


def hermite_table(u, degree):
    """Normalized probabilists' Hermite values ``h_j(u)``, j = 0..degree.

    ``h_j = He_j / sqrt(j!)`` with the three-term recurrence
    ``h_{j+1} = (u h_j - sqrt(j) h_{j-1}) / sqrt(j+1)``; orthonormal for
    the standard Gaussian. Output shape is ``u.shape + (degree + 1,)``.
    """
    u = np.asarray(u, dtype=float)
    table = np.empty(u.shape + (degree + 1,))
    table[..., 0] = 1.0
    if degree >= 1:
        table[..., 1] = u
    for j in range(1, degree):
        table[..., j + 1] = (u * table[..., j] - np.sqrt(j) * table[..., j - 1]) / np.sqrt(
            j + 1
        )
    return table


def basis_matrix(iset, u):
    """Evaluate every basis function at standardized points ``u``.

    ``u`` has shape ``(..., modes)``; the result has shape
    ``(..., size)`` with one column per multi-index.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != iset.modes:
        raise ParameterError("points and index set disagree on mode count")
    tables = hermite_table(u, iset.degree)  # (..., modes, degree+1)
    out = np.ones(u.shape[:-1] + (iset.size,))
    for k in range(iset.modes):
        out *= tables[..., k, iset.indices[:, k]]
    return out


@dataclass(frozen=True)
class TensorQuadrature:
    """Tensorized Gauss-Hermite rule for the standard product Gaussian.

    ``points`` are standardized nodes of shape ``(level^modes, modes)``;
    ``weights`` sum to 1. Exact for polynomials of per-coordinate degree
    up to ``2 * level - 1``.
    """

    level: int
    points: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=64)
def tensor_rule(modes, level):
    if level < 1:
        raise ParameterError("quadrature level must be >= 1")
    nodes, w = hermegauss(level)
    w = w / np.sqrt(2.0 * np.pi)
    grids = np.meshgrid(*([nodes] * modes), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([w] * modes), indexing="ij")
    weights = np.ones(points.shape[0])
    for g in wgrids:
        weights *= g.ravel()
    return TensorQuadrature(level, points, weights)
