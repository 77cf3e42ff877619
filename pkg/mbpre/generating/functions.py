"""
Evaluation of multivariate offspring generating functions and the derived
quantities Δ₂, H(z) and ψ
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ..environment.offspring import EnvironmentComponent, FractionalLinearForm, OffspringLaw


@dataclass(frozen=True, eq=False)
class GfHandle:
    """
    生成関数ハンドル

    有限台の法則（定義式の和で評価）か、分数線形の閉形式のどちらかで評価する。
    閉形式があれば打ち切りなしで厳密に評価する。
    """
    laws: Tuple[OffspringLaw, ...]
    closed_form: Optional[FractionalLinearForm] = None
    mean_matrix: Optional[np.ndarray] = None
    hessians: Optional[np.ndarray] = None

    @classmethod
    def from_component(cls, component: EnvironmentComponent) -> "GfHandle":
        return cls(
            laws=component.laws,
            closed_form=component.closed_form,
            mean_matrix=component.mean_matrix,
            hessians=component.hessians,
        )

    @classmethod
    def from_laws(cls, laws) -> "GfHandle":
        laws = tuple(laws)
        means = np.vstack([law.mean() for law in laws])
        hessians = np.stack([law.factorial_moments() for law in laws])
        return cls(laws=laws, mean_matrix=means, hessians=hessians)

    @classmethod
    def from_form(cls, form: FractionalLinearForm) -> "GfHandle":
        return cls(laws=(), closed_form=form, mean_matrix=form.mean_matrix(), hessians=form.hessians())

    @property
    def p(self) -> int:
        return self.closed_form.p if self.closed_form is not None else len(self.laws)

    def evaluate(self, s: np.ndarray) -> np.ndarray:
        if self.closed_form is not None:
            return self.closed_form.evaluate(s)
        return np.stack([law.generate(s) for law in self.laws], axis=-1)

    def complement(self, q: np.ndarray) -> np.ndarray:
        """1 - f(1 - q) を桁落ちなしで評価"""
        if self.closed_form is not None:
            return self.closed_form.complement(q)
        q = np.asarray(q, dtype=float)
        return np.stack([law.complement(q) for law in self.laws], axis=-1)


HandleLike = Union[GfHandle, EnvironmentComponent]


def as_handle(obj: HandleLike) -> GfHandle:
    if isinstance(obj, GfHandle):
        return obj
    if isinstance(obj, EnvironmentComponent):
        return GfHandle.from_component(obj)
    if isinstance(obj, FractionalLinearForm):
        return GfHandle.from_form(obj)
    return GfHandle.from_laws(obj)


def _check_cube(s: np.ndarray, p: int, name: str = "s") -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != p:
        raise ValueError(f"{name} must have {p} coordinates, got {s.shape[-1]}")
    if np.any(s < 0) or np.any(s > 1) or np.any(np.isnan(s)):
        raise ValueError(f"{name} must lie in the unit cube")
    return s


def _check_matrix(A: np.ndarray, p: int) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[-1] != p or np.any(A < 0):
        raise ValueError(f"A must be a nonnegative matrix with {p} columns")
    if A.sum() <= 0:
        raise ValueError("|A| = 0")
    return A


def evaluate(handle: HandleLike, s: np.ndarray) -> np.ndarray:
    """f(s) を評価。成分 i は Σ_z F^{(i)}({z}) s^z"""
    handle = as_handle(handle)
    s = _check_cube(s, handle.p)
    return np.clip(handle.evaluate(s), 0.0, 1.0)


def delta2(handle: HandleLike, s: np.ndarray) -> np.ndarray:
    """Δ₂(s)_i = (1-s)^T B^{(i)} (1-s)"""
    handle = as_handle(handle)
    q = 1.0 - _check_cube(s, handle.p)
    return np.einsum("k,ikl,l->i", q, handle.hessians, q)


def h_of_z(handle: HandleLike, A: np.ndarray, s: np.ndarray, z: float) -> float:
    """H(z) = |A f(s + z(1-s))| / |A|"""
    handle = as_handle(handle)
    A = _check_matrix(A, handle.p)
    s = _check_cube(s, handle.p)
    if not 0.0 <= z <= 1.0:
        raise ValueError("z must lie in [0, 1]")
    q = (1.0 - z) * (1.0 - s)
    value = A @ (1.0 - handle.complement(q))
    return float(value.sum() / A.sum())


def h_derivatives(handle: HandleLike, A: np.ndarray, s: np.ndarray) -> Tuple[float, float]:
    """(H'(1), H''(1)) = (|AM(1-s)|/|A|, |AΔ₂(s)|/|A|)"""
    handle = as_handle(handle)
    A = _check_matrix(A, handle.p)
    q = 1.0 - _check_cube(s, handle.p)
    first = (A @ (handle.mean_matrix @ q)).sum() / A.sum()
    second = (A @ delta2(handle, s)).sum() / A.sum()
    return float(first), float(second)


def one_minus_h(handle: HandleLike, A: np.ndarray, s: np.ndarray, z: float) -> float:
    """1 - H(z) を桁落ちなしで計算"""
    handle = as_handle(handle)
    A = _check_matrix(A, handle.p)
    q = (1.0 - z) * (1.0 - _check_cube(s, handle.p))
    return float((A @ handle.complement(q)).sum() / A.sum())


def kozlov_gap(handle: HandleLike, A: np.ndarray, s: np.ndarray, z: float) -> Tuple[float, float]:
    """
    1/(1-H(z)) - 1/(H'(1)(1-z)) とその上界 H''(1)/H'(1)^2

    Returns:
        (gap, upper)
    """
    if not 0.0 <= z < 1.0:
        raise ValueError("z must lie in [0, 1)")
    first, second = h_derivatives(handle, A, s)
    complement = one_minus_h(handle, A, s, z)
    if complement <= 0 or first <= 0:
        raise ValueError("degenerate H: 1 - H(z) or H'(1) vanishes")
    return 1.0 / complement - 1.0 / (first * (1.0 - z)), second / first ** 2


def psi(handle: HandleLike, A: np.ndarray, M: Optional[np.ndarray], s: np.ndarray) -> float:
    """
    ψ_{f,A,M}(s) = |A|/|A(1-f(s))| - |A|/|AM(1-s)|

    Args:
        handle: 生成関数
        A: 非負行列（|A| > 0）。1 行の行列も可
        M: 平均行列（None ならハンドルのもの）
        s: 単位立方体の点（s != 1）

    Raises:
        ValueError: s = 1、または |A(1-f(s))| = 0
    """
    handle = as_handle(handle)
    A = _check_matrix(A, handle.p)
    s = _check_cube(s, handle.p)
    if np.all(s == 1.0):
        raise ValueError("psi is undefined at s = 1")
    M = handle.mean_matrix if M is None else np.asarray(M, dtype=float)
    q = 1.0 - s
    norm_a = A.sum()
    survival = (A @ handle.complement(q)).sum()
    linear = (A @ (M @ q)).sum()
    if survival <= 0:
        raise ValueError("|A(1-f(s))| = 0: degenerate law with f(s) = 1 at s < 1")
    if linear <= 0:
        raise ValueError("|AM(1-s)| = 0")
    return float(norm_a / survival - norm_a / linear)


__all__ = [
    "GfHandle",
    "as_handle",
    "evaluate",
    "delta2",
    "h_of_z",
    "h_derivatives",
    "one_minus_h",
    "kozlov_gap",
    "psi",
]
