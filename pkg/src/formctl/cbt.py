"""Centroid based transformation for robots partitioned into groups.

Positions of n robots in m groups are mapped to

* intra-group Jacobi vectors (n_i - 1 per group),
* inter-group Jacobi vectors over the group centroids (m - 1),
* the overall centroid (1),

by a single invertible n x n coefficient matrix ``Phi`` that acts
identically on x and y.  Stacked planar quantities are handled as ``(k, 2)``
arrays whose rows match the rows of ``Phi``; ``arr.ravel()`` gives the
length-2k stacking ``[v_1^T, ..., v_k^T]^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from formctl.errors import ConfigError

FloatArray = NDArray[np.float64]

BLOCKS = ("intra", "inter", "centroid")


def jacobi_rows(k: int, weights: Sequence[float] | None = None) -> FloatArray:
    """Coefficient rows of the k-point Jacobi vectors.

    Row j maps ``(p_1, ..., p_k)`` to ``w_j * (p_{j+1} - mean(p_1, ..., p_j))``.

    Args:
        k: Number of points, at least 2.
        weights: Optional ``k - 1`` row weights.  Defaults to ``1/sqrt(2)``
            for the first vector and 1 for the rest.

    Returns:
        ``(k - 1, k)`` array; every row sums to zero.
    """
    if int(k) != k or k < 2:
        raise ConfigError(f"a group needs at least 2 robots to define a shape vector, got {k}")
    k = int(k)
    if weights is None:
        weights = [1.0 / np.sqrt(2.0)] + [1.0] * (k - 2)
    if len(weights) != k - 1 or not all(np.isfinite(w) and w != 0 for w in weights):
        raise ConfigError(f"expected {k - 1} nonzero finite Jacobi weights, got {weights!r}")
    rows = np.zeros((k - 1, k))
    for j in range(k - 1):
        rows[j, : j + 1] = -1.0 / (j + 1)
        rows[j, j + 1] = 1.0
        rows[j] *= weights[j]
    return rows


@dataclass(frozen=True)
class GroupPartition:
    group_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(self.group_sizes)
        if not sizes:
            raise ConfigError("partition needs at least one group", "partition")
        for i, k in enumerate(sizes):
            if int(k) != k or k < 2:
                raise ConfigError(
                    f"group {i} has {k} robot(s); every group needs at least 2",
                    f"partition[{i}]",
                )
        object.__setattr__(self, "group_sizes", tuple(int(k) for k in sizes))

    @property
    def m(self) -> int:
        return len(self.group_sizes)

    @property
    def n(self) -> int:
        return sum(self.group_sizes)

    def group_of(self) -> NDArray[np.int64]:
        """Group index of every robot, in stacking order."""
        return np.repeat(np.arange(self.m), self.group_sizes)

    def columns(self, group: int) -> slice:
        start = sum(self.group_sizes[:group])
        return slice(start, start + self.group_sizes[group])


@dataclass(frozen=True, eq=False)
class CbtTransform:
    """The n x n coefficient matrix together with its row partition.

    Rows are ordered ``[Phi_1; ...; Phi_m; Phi_r; Phi_c]``.
    """

    partition: GroupPartition
    matrix: FloatArray
    inverse: FloatArray = field(repr=False)

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def m(self) -> int:
        return self.partition.m

    @property
    def intra(self) -> slice:
        return slice(0, self.n - self.m)

    @property
    def inter(self) -> slice:
        return slice(self.n - self.m, self.n - 1)

    @property
    def centroid(self) -> slice:
        return slice(self.n - 1, self.n)

    def block(self, name: str) -> slice:
        try:
            return {"intra": self.intra, "inter": self.inter, "centroid": self.centroid}[name]
        except KeyError:
            raise ValueError(f"unknown block {name!r}; expected one of {BLOCKS}") from None

    def group_rows(self, group: int) -> slice:
        """Rows of ``Phi_group`` (the intra shape vectors of one group)."""
        start = sum(k - 1 for k in self.partition.group_sizes[:group])
        return slice(start, start + self.partition.group_sizes[group] - 1)

    def stacked(self) -> FloatArray:
        """``Phi (x) I_2``: the 2n x 2n map on stacked coordinates."""
        return np.kron(self.matrix, np.eye(2))

    def stacked_inverse(self) -> FloatArray:
        return np.kron(self.inverse, np.eye(2))

    def apply(self, points: FloatArray) -> FloatArray:
        return self.matrix @ points

    def invert(self, coords: FloatArray) -> FloatArray:
        return self.inverse @ coords


def build_cbt(
    partition: GroupPartition | Sequence[int],
    intra_weights: Sequence[Sequence[float]] | None = None,
    inter_weights: Sequence[float] | None = None,
) -> CbtTransform:
    """Construct the hierarchical Jacobi transform for a group partition.

    The first inter-group vector is ``(mu_1 - mu_2) / sqrt(2)``, i.e. the
    negated Jacobi row, so the 3 x 3 case reproduces the standard worked
    example term for term.
    """
    if not isinstance(partition, GroupPartition):
        partition = GroupPartition(tuple(partition))
    n, m = partition.n, partition.m
    phi = np.zeros((n, n))

    row = 0
    for g, k in enumerate(partition.group_sizes):
        w = None if intra_weights is None else intra_weights[g]
        phi[row : row + k - 1, partition.columns(g)] = jacobi_rows(k, w)
        row += k - 1

    if m > 1:
        inter = jacobi_rows(m, inter_weights)
        inter[0] = -inter[0]
        sizes = np.asarray(partition.group_sizes, dtype=float)
        # mu_g = mean of group g's positions, so each centroid coefficient is
        # spread as coefficient / n_g over the group's columns
        phi[row : row + m - 1] = np.repeat(inter / sizes, partition.group_sizes, axis=1)
        row += m - 1

    phi[row] = 1.0 / n

    cond = np.linalg.cond(phi)
    if not np.isfinite(cond) or cond > 1e12:
        raise ArithmeticError(f"centroid based transform is numerically singular (cond={cond:.3g})")
    inverse = np.linalg.solve(phi, np.eye(n))
    return CbtTransform(partition=partition, matrix=phi, inverse=inverse)


@dataclass(frozen=True, eq=False)
class ShapeCoordinates:
    """Intra shape, inter shape and centroid coordinates as (k, 2) arrays."""

    intra: FloatArray
    inter: FloatArray
    centroid: FloatArray

    def concatenate(self) -> FloatArray:
        return np.vstack((self.intra, self.inter, self.centroid))

    def ravel(self) -> FloatArray:
        return self.concatenate().ravel()


def _as_points(values: FloatArray, n: int, what: str) -> FloatArray:
    arr = np.asarray(values, dtype=float)
    if arr.size != 2 * n:
        raise ConfigError(f"{what} must have {2 * n} entries for n = {n}, got {arr.size}")
    return arr.reshape(n, 2)


def to_shape(transform: CbtTransform, X: FloatArray) -> ShapeCoordinates:
    Z = transform.apply(_as_points(X, transform.n, "position vector"))
    return ShapeCoordinates(
        intra=Z[transform.intra], inter=Z[transform.inter], centroid=Z[transform.centroid]
    )


def from_shape(transform: CbtTransform, Z: ShapeCoordinates | FloatArray) -> FloatArray:
    """Inverse map; returns the length-2n stacked position vector."""
    if isinstance(Z, ShapeCoordinates):
        Z = Z.concatenate()
    return transform.invert(_as_points(Z, transform.n, "shape vector")).ravel()


@dataclass(frozen=True, eq=False)
class TransformedDynamics:
    """``P = Phi A Phi^-1`` and ``R = Phi C`` on stacked coordinates."""

    transform: CbtTransform
    P: FloatArray
    R: FloatArray

    def rows(self, block: str) -> slice:
        b = self.transform.block(block)
        return slice(2 * b.start, 2 * b.stop)

    @property
    def P_s(self) -> FloatArray:
        return self.P[self.rows("intra")]

    @property
    def P_r(self) -> FloatArray:
        return self.P[self.rows("inter")]

    @property
    def P_c(self) -> FloatArray:
        return self.P[self.rows("centroid")]

    @property
    def R_s(self) -> FloatArray:
        return self.R[self.rows("intra")]

    @property
    def R_r(self) -> FloatArray:
        return self.R[self.rows("inter")]

    @property
    def R_c(self) -> FloatArray:
        return self.R[self.rows("centroid")]


def transform_dynamics(transform: CbtTransform, A: FloatArray, C: FloatArray) -> TransformedDynamics:
    phi = transform.stacked()
    P = phi @ A @ transform.stacked_inverse()
    R = phi @ np.asarray(C, dtype=float)
    return TransformedDynamics(transform=transform, P=P, R=R)
