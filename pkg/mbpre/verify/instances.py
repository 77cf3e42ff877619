"""
Random instance generators for the property campaigns
"""

from typing import List, Optional

import numpy as np

from ..environment.offspring import EnvironmentComponent, OffspringLaw

MAX_SUPPORT = 6
MAX_CHILDREN = 5
# |M| がこれ未満の法則は棄却
MIN_MEAN_NORM = 1e-6


def random_law(rng: np.random.Generator, p: int, max_support: int = MAX_SUPPORT,
               max_children: int = MAX_CHILDREN) -> OffspringLaw:
    """台の大きさ <= max_support、各座標 <= max_children の有限台法則"""
    size = int(rng.integers(1, max_support + 1))
    points = {}
    while len(points) < size:
        z = tuple(int(v) for v in rng.integers(0, max_children + 1, size=p))
        points.setdefault(z, None)
    probs = rng.dirichlet(np.ones(size))
    probs = probs / probs.sum()
    return OffspringLaw(support=np.array(list(points), dtype=np.int64), probs=probs)


def random_component(rng: np.random.Generator, p: int, positive_means: bool = False) -> EnvironmentComponent:
    """
    p 個のランダムな法則からなる成分

    Args:
        positive_means: True なら平均行列の全成分が正（条件 H3）になるまで引き直す
    """
    while True:
        laws = [random_law(rng, p) for _ in range(p)]
        means = np.vstack([law.mean() for law in laws])
        if means.sum() < MIN_MEAN_NORM:
            continue
        if positive_means and means.min() <= 0:
            continue
        return EnvironmentComponent.from_laws(laws)


def random_chain(rng: np.random.Generator, p: int, n: int, positive_means: bool = False) -> List[EnvironmentComponent]:
    return [random_component(rng, p, positive_means) for _ in range(n)]


def random_matrix(rng: np.random.Generator, p: int, positive: bool = True) -> np.ndarray:
    """成分が (0.05, 3) の一様な行列。positive=False なら約3割を0にする（全0は避ける）"""
    while True:
        A = rng.uniform(0.05, 3.0, size=(p, p))
        if not positive:
            A = A * (rng.random((p, p)) > 0.3)
        if A.sum() > 0:
            return A


def random_point(rng: np.random.Generator, p: int) -> np.ndarray:
    """単体上の Dirichlet(1,...,1) 点"""
    x = rng.dirichlet(np.ones(p))
    return x / x.sum()


def random_s(rng: np.random.Generator, p: int, upper: Optional[float] = None) -> np.ndarray:
    """[0, 1) の一様な種点"""
    s = rng.random(p)
    return s if upper is None else np.minimum(s, upper)


def random_dimension(rng: np.random.Generator, max_p: int = 3) -> int:
    return int(rng.integers(1, max_p + 1))


__all__ = [
    "MAX_SUPPORT",
    "MAX_CHILDREN",
    "MIN_MEAN_NORM",
    "random_law",
    "random_component",
    "random_chain",
    "random_matrix",
    "random_point",
    "random_s",
    "random_dimension",
]
