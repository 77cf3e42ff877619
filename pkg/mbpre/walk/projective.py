"""
Projective action of nonnegative matrices on the simplex and the log-norm cocycle
"""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

NORM_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    """L1 正規化された非負ベクトル（単体上の点）"""
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or x.shape[0] < 1:
            raise ValueError("a projective point must be a nonempty vector")
        if np.any(x < 0):
            raise ValueError("projective points must have nonnegative coordinates")
        if abs(x.sum() - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"|x| = {x.sum()!r}, expected 1 within 1e-12")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @classmethod
    def normalized(cls, v: Sequence[float]) -> "ProjectivePoint":
        v = np.asarray(v, dtype=float)
        total = v.sum()
        if total <= 0:
            raise ValueError("cannot normalize a vector with zero L1 norm")
        return cls(v / total)

    @classmethod
    def uniform(cls, p: int) -> "ProjectivePoint":
        return cls(np.full(p, 1.0 / p))

    @classmethod
    def vertex(cls, p: int, i: int) -> "ProjectivePoint":
        """0 始まりの i 番目の頂点 e_i"""
        if not 0 <= i < p:
            raise ValueError(f"vertex index {i} out of range for p = {p}")
        x = np.zeros(p)
        x[i] = 1.0
        return cls(x)

    @property
    def p(self) -> int:
        return self.x.shape[0]


PointLike = Union[ProjectivePoint, Sequence[float], np.ndarray]


def as_point(x: PointLike) -> np.ndarray:
    if isinstance(x, ProjectivePoint):
        return x.x
    return ProjectivePoint(x).x


def _row_product(x: np.ndarray, A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != x.shape[0] or A.shape[0] != A.shape[1]:
        raise ValueError("A must be a square matrix matching the dimension of x")
    if np.any(A < 0):
        raise ValueError("A must have nonnegative entries")
    y = x @ A
    if y.sum() <= 0:
        raise ValueError("|xA| = 0: matrix annihilates x")
    return y


def projective_action(x: PointLike, A: np.ndarray) -> ProjectivePoint:
    """x·A = xA / |xA|"""
    y = _row_product(as_point(x), A)
    return ProjectivePoint(y / y.sum())


def cocycle(x: PointLike, A: np.ndarray) -> float:
    """ρ(x, A) = ln|xA|"""
    return float(np.log(_row_product(as_point(x), A).sum()))


def explicit_log_norm(x: PointLike, matrices: Sequence[np.ndarray]) -> float:
    """明示的な積 R_n = M_0 ... M_{n-1} から ln|x R_n| を計算（n が小さいときの検算用）"""
    x = as_point(x)
    product = np.eye(x.shape[0])
    for matrix in matrices:
        product = product @ np.asarray(matrix, dtype=float)
    return float(np.log((x @ product).sum()))


def min_log_norm(A: np.ndarray) -> float:
    """min_{x∈単体} ln|xA| = ln(最小行和)"""
    return float(np.log(np.asarray(A, dtype=float).sum(axis=1).min()))


def ratio_constant(A: np.ndarray) -> float:
    """
    行列の成分比 max m_ij / min m_kl（零成分があれば inf）

    全成分が正なら 1 <= 値 < inf。
    """
    A = np.asarray(A, dtype=float)
    smallest = A.min()
    if smallest <= 0:
        return float("inf")
    return float(A.max() / smallest)


__all__ = [
    "NORM_TOLERANCE",
    "ProjectivePoint",
    "as_point",
    "projective_action",
    "cocycle",
    "explicit_log_norm",
    "min_log_norm",
    "ratio_constant",
]
