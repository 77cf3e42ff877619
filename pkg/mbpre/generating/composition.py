"""
Backward composition f_{k,n}, quenched survival and the telescoping
representation of 1/(x, 1 - f_{0,n}(s))
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..walk.projective import as_point, ratio_constant
from .functions import GfHandle, HandleLike, _check_cube, as_handle

# 明示的な行列積を許す最大の長さ
EXPLICIT_PRODUCT_LIMIT = 20


class CompositionChain:
    """
    環境 f_0, ..., f_{n-1} の列と、種点 s ごとの反復 f_{k,n}(s) のキャッシュ

    iterates(s)[k] = f_{k,n}(s)、iterates(s)[n] = s。
    """

    def __init__(self, components: Sequence[HandleLike], etas: Optional[Sequence[float]] = None):
        self.handles: Tuple[GfHandle, ...] = tuple(as_handle(c) for c in components)
        ps = {h.p for h in self.handles}
        if len(ps) > 1:
            raise ValueError(f"all components must share p, got {sorted(ps)}")
        self._p = ps.pop() if ps else None
        self._etas = None if etas is None else np.asarray(etas, dtype=float)
        if etas is None and components:
            self._etas = np.array([getattr(c, "eta", np.nan) for c in components], dtype=float)
        self._cache: Dict[Tuple[float, ...], np.ndarray] = {}
        self._complement_cache: Dict[Tuple[float, ...], np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.handles)

    @property
    def p(self) -> int:
        if self._p is None:
            raise ValueError("p is undefined for an empty chain")
        return self._p

    @property
    def etas(self) -> np.ndarray:
        return self._etas

    def mean_matrices(self) -> np.ndarray:
        return np.stack([h.mean_matrix for h in self.handles])

    def iterates(self, s: np.ndarray) -> np.ndarray:
        """(n+1, p) 配列 [f_{0,n}(s), ..., f_{n,n}(s) = s]"""
        s = _check_cube(s, self.p)
        key = tuple(s.tolist())
        if key not in self._cache:
            out = np.empty((len(self) + 1, self.p))
            out[-1] = s
            t = s
            for m in range(len(self) - 1, -1, -1):
                t = np.clip(self.handles[m].evaluate(t), 0.0, 1.0)
                out[m] = t
            out.setflags(write=False)
            self._cache[key] = out
        return self._cache[key]

    def complement_iterates(self, s: np.ndarray) -> np.ndarray:
        """(n+1, p) 配列 [1 - f_{k,n}(s)]_k（閉形式では桁落ちなしの漸化式）"""
        s = _check_cube(s, self.p)
        key = tuple(s.tolist())
        if key not in self._complement_cache:
            out = np.empty((len(self) + 1, self.p))
            q = 1.0 - s
            out[-1] = q
            for m in range(len(self) - 1, -1, -1):
                q = np.clip(self.handles[m].complement(q), 0.0, 1.0)
                out[m] = q
            out.setflags(write=False)
            self._complement_cache[key] = out
        return self._complement_cache[key]


def _as_chain(chain) -> CompositionChain:
    return chain if isinstance(chain, CompositionChain) else CompositionChain(chain)


def compose(chain, s: np.ndarray, k: int = 0, n: Optional[int] = None) -> np.ndarray:
    """
    f_{k,n}(s) = f_k(f_{k+1}(... f_{n-1}(s) ...))

    Args:
        chain: CompositionChain または環境成分の列
        s: 種点
        k, n: 0 <= k <= n <= 長さ（n 省略時は全長）
    """
    chain = _as_chain(chain)
    n = len(chain) if n is None else n
    if not 0 <= k <= n <= len(chain):
        raise ValueError(f"need 0 <= k <= n <= {len(chain)}, got k={k}, n={n}")
    if n == len(chain):
        return chain.iterates(s)[k].copy()
    t = _check_cube(s, chain.p)
    for m in range(n - 1, k - 1, -1):
        t = np.clip(chain.handles[m].evaluate(t), 0.0, 1.0)
    return t


def quenched_survival(chain, i: int) -> float:
    """(e_i, 1 - f_{0,n}(0)): 環境を固定したときのタイプ i からの n 世代生存確率"""
    chain = _as_chain(chain)
    if len(chain) == 0:
        raise ValueError("quenched survival needs a nonempty chain")
    if not 0 <= i < chain.p:
        raise ValueError(f"type index {i} out of range for p = {chain.p}")
    return float(chain.complement_iterates(np.zeros(chain.p))[0, i])


@dataclass
class TelescopeReport:
    """1/(x, 1-f_{0,n}(s)) の望遠鏡和表示とその上界"""
    lhs: float
    leading: float
    psi_terms: np.ndarray
    weights: np.ndarray
    rhs: float
    residual: float
    ratio_constant: float
    bound: float
    bound_slack: float
    log_norms: np.ndarray = field(repr=False, default=None)

    @property
    def min_psi(self) -> float:
        return float(self.psi_terms.min()) if self.psi_terms.size else 0.0


def _bound(leading, log_norms, etas, b, p) -> float:
    if not np.isfinite(b) or etas is None or np.any(np.isnan(etas)):
        return float("inf")
    return float(leading + b * p ** 2 * np.sum(etas * np.exp(-log_norms[:-1])))


def telescope(chain, x, s: np.ndarray) -> TelescopeReport:
    """
    望遠鏡和表示を計算

    射影点 X_k = x·R_k と ln|xR_k| をコサイクルの増分で逐次更新し、
    明示的な行列積は作らない。

    Args:
        chain: 環境 f_0..f_{n-1}
        x: 単体上の点
        s: 種点（上界は s = 0 で意味を持つ）
    """
    chain = _as_chain(chain)
    x = as_point(x)
    if x.shape[0] != chain.p:
        raise ValueError("x and the chain must share p")
    n = len(chain)
    means = chain.mean_matrices() if n else np.zeros((0, chain.p, chain.p))
    if n and np.any(means.sum(axis=(1, 2)) <= 0):
        raise ValueError("zero mean matrix in the chain")
    q = chain.complement_iterates(s)

    point = x.copy()
    log_norm = 0.0
    log_norms = np.empty(n + 1)
    psi_terms = np.empty(n)
    for k in range(n):
        log_norms[k] = log_norm
        pushed = point @ means[k]
        psi_terms[k] = 1.0 / (point @ q[k]) - 1.0 / (pushed @ q[k + 1])
        norm = pushed.sum()
        if norm <= 0:
            raise ValueError("|xA| = 0: matrix annihilates x")
        log_norm += np.log(norm)
        point = pushed / norm
    log_norms[n] = log_norm

    weights = np.exp(-log_norms[:-1])
    leading = float(np.exp(-log_norm) / (point @ q[n]))
    rhs = leading + float(np.sum(psi_terms * weights))
    lhs = float(1.0 / (x @ q[0]))
    residual = abs(lhs - rhs) / abs(lhs)
    b = max((ratio_constant(m) for m in means), default=1.0)
    bound = _bound(leading, log_norms, chain.etas, b, chain.p)
    return TelescopeReport(
        lhs=lhs, leading=leading, psi_terms=psi_terms, weights=weights, rhs=rhs,
        residual=residual, ratio_constant=b, bound=bound, bound_slack=bound - lhs,
        log_norms=log_norms,
    )


def telescope_explicit(chain, x, s: np.ndarray) -> TelescopeReport:
    """明示的な積 R_k = M_0⋯M_{k-1} を用いた望遠鏡和（n <= 20 の検算用）"""
    chain = _as_chain(chain)
    n = len(chain)
    if n > EXPLICIT_PRODUCT_LIMIT:
        raise ValueError(f"explicit products are limited to n <= {EXPLICIT_PRODUCT_LIMIT}")
    x = as_point(x)
    s = _check_cube(s, chain.p)
    A = np.diag(x)
    q = chain.complement_iterates(s)
    product = np.eye(chain.p)
    psi_terms = np.empty(n)
    weights = np.empty(n)
    log_norms = np.empty(n + 1)
    for k, handle in enumerate(chain.handles):
        a_k = A @ product
        norm = a_k.sum()
        log_norms[k] = np.log(norm)
        weights[k] = 1.0 / norm
        # psi(handle, a_k, M_k, s_{k+1}) を同じ補数列で評価
        psi_terms[k] = norm / (a_k @ q[k]).sum() - norm / (a_k @ handle.mean_matrix @ q[k + 1]).sum()
        product = product @ handle.mean_matrix
    a_n = A @ product
    log_norms[n] = np.log(a_n.sum())
    leading = float(1.0 / (a_n @ q[n]).sum())
    rhs = leading + float(np.sum(psi_terms * weights))
    lhs = float(1.0 / (x @ q[0]))
    b = max((ratio_constant(h.mean_matrix) for h in chain.handles), default=1.0)
    bound = _bound(leading, log_norms, chain.etas, b, chain.p)
    return TelescopeReport(
        lhs=lhs, leading=leading, psi_terms=psi_terms, weights=weights, rhs=rhs,
        residual=abs(lhs - rhs) / abs(lhs), ratio_constant=b, bound=bound,
        bound_slack=bound - lhs, log_norms=log_norms,
    )


__all__ = [
    "EXPLICIT_PRODUCT_LIMIT",
    "CompositionChain",
    "compose",
    "quenched_survival",
    "TelescopeReport",
    "telescope",
    "telescope_explicit",
]
