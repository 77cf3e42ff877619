"""
Self-normalized h-transform sampler: the walk conditioned to stay positive,
realized by endpoint reweighting of killed paths
"""

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..environment.models import EnvironmentModel
from ..runner.parallel import RandomStreams, ReplicaExecutor, concat_chunks
from ..walk.walks import advance_walks, sample_block, start_point
from .estimates import HarmonicFunction

Z_95 = 1.959963984540054
# 丸め誤差の許容幅
AGREE_FLOOR = 1e-12


@dataclass
class HatEnsemble:
    """
    {τ>n} 上の生き残った経路と、ĥ(X_n, S_n) に比例する自己正規化重み
    """
    n: int
    grid: np.ndarray
    values: np.ndarray    # (N, G) 生存経路の S_k
    points: np.ndarray    # (N, p) X_n
    raw_h: np.ndarray     # (N,) ĥ(X_n, S_n)
    weights: np.ndarray   # (N,) 和が 1
    replicas: int
    series: Optional[np.ndarray] = None

    @property
    def survivors(self) -> int:
        return self.values.shape[0]

    def level_at(self, k: int) -> np.ndarray:
        """生存経路の S_k"""
        matches = np.flatnonzero(self.grid == k)
        if matches.size == 0:
            raise ValueError(f"step {k} was not recorded; pass it in record")
        return self.values[:, matches[0]]

    def _observable(self, y: Union[np.ndarray, Callable, float]) -> np.ndarray:
        if callable(y):
            y = y(self)
        return np.broadcast_to(np.asarray(y, dtype=float), (self.survivors,))

    def expectation(self, y) -> float:
        """Ê[Y] = Σ w_i Y(path_i)"""
        if self.survivors == 0 or self.raw_h.sum() <= 0:
            return float("nan")
        return float(self.weights @ self._observable(y))

    def stderr(self, y) -> float:
        """比推定量のデルタ法による標準誤差"""
        if self.survivors == 0 or self.raw_h.sum() <= 0:
            return float("nan")
        values = self._observable(y)
        centered = self.raw_h * (values - self.expectation(values))
        return float(np.sqrt(np.sum(centered ** 2)) / self.raw_h.sum())


def _hat_chunk(replica_ids, streams, model, x, a, grid, eta_series):
    block = sample_block(model, replica_ids, streams, int(grid[-1]))
    walked = advance_walks(block, x, a, grid, eta_series=eta_series)
    alive = walked.alive()
    out = {
        "values": walked.values,
        "points": walked.points,
        "alive": alive,
    }
    if eta_series:
        out["series"] = walked.series
    return out


def _walk_grid(model, x, a, grid, replicas, streams, executor, eta_series, desc):
    if a <= 0:
        raise ValueError("a must be positive")
    executor = executor or ReplicaExecutor()
    results = executor.map(
        _hat_chunk, replicas, streams, desc=desc, model=model, x=x, a=float(a), grid=grid,
        eta_series=eta_series,
    )
    return concat_chunks(results)


def hat_sampler(
    x,
    a: float,
    model: EnvironmentModel,
    n: int,
    replicas: int,
    streams: RandomStreams,
    h: HarmonicFunction,
    record: Sequence[int] = (),
    executor: Optional[ReplicaExecutor] = None,
    eta_series: bool = False,
) -> HatEnsemble:
    """
    基底測度で経路を生成し、τ>n のものを ĥ(X_n, S_n) で重み付け

    Args:
        x, a: 開始点と開始値
        model: 環境モデル
        n: 経路の長さ
        replicas: 生成する経路数
        streams: 乱数ストリーム
        h: 調和関数の評価器 h(points, levels)
        record: S_k を記録する追加のステップ
        eta_series: Σ_{k<n} η_k e^{-S_k} を記録するか
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    x = start_point(model, x)
    grid = np.unique(np.append(np.asarray(record, dtype=int), n))
    if grid[0] < 0 or grid[-1] != n:
        raise ValueError("recorded steps must lie in [0, n]")
    data = _walk_grid(model, x, a, grid, replicas, streams, executor, eta_series, "hat")
    keep = data["alive"][:, -1]
    values = data["values"][keep]
    points = data["points"][keep][:, -1]
    raw_h = np.asarray(h(points, values[:, -1]), dtype=float) if keep.any() else np.zeros(0)
    total = raw_h.sum()
    if not keep.any() or total <= 0:
        warnings.warn("no surviving paths with positive weight; increase replicas")
    weights = raw_h / total if total > 0 else np.zeros_like(raw_h)
    series = data["series"][keep][:, -1] if eta_series else None
    return HatEnsemble(
        n=n, grid=grid, values=values, points=points, raw_h=raw_h, weights=weights,
        replicas=replicas, series=series,
    )


@dataclass
class FixedKCheck:
    """E[Y_k | τ>n] と自己正規化 Ê[Y_k] の比較（Y_k = 1{S_k > a}）"""
    k: int
    n: int
    conditional: float
    conditional_stderr: float
    hat: float
    hat_stderr: float
    survivors: int

    @property
    def difference(self) -> float:
        return self.conditional - self.hat

    @property
    def combined_stderr(self) -> float:
        return math.sqrt(self.conditional_stderr ** 2 + self.hat_stderr ** 2)

    @property
    def agree(self) -> bool:
        return abs(self.difference) <= Z_95 * self.combined_stderr + AGREE_FLOOR


def fixed_k_check(
    x,
    a: float,
    model: EnvironmentModel,
    k: int,
    n: int,
    replicas: int,
    streams: RandomStreams,
    h: HarmonicFunction,
    executor: Optional[ReplicaExecutor] = None,
) -> FixedKCheck:
    """
    条件付き期待値 E[Y_k | τ>n] と Ê[Y_k] を独立なストリームで推定して比較

    2つの推定は streams の枝 0（条件付き）と枝 1（ĥ 重み付け）を使う。
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    x = start_point(model, x)
    conditional_streams = streams.substream(0)
    data = _walk_grid(model, x, a, np.array([k, n]), replicas, conditional_streams, executor, False, "fixed-k")
    keep = data["alive"][:, -1]
    y = (data["values"][keep, 0] > a).astype(float)
    survivors = int(keep.sum())
    if survivors == 0:
        warnings.warn("no paths survived to n; increase replicas")
        conditional, conditional_se = float("nan"), float("nan")
    else:
        conditional = float(y.mean())
        conditional_se = float(math.sqrt(max(conditional * (1.0 - conditional), 0.0) / survivors))

    hat_streams = streams.substream(1)
    ensemble = hat_sampler(x, a, model, k, replicas, hat_streams, h, executor=executor)
    indicator = (ensemble.level_at(k) > a).astype(float)
    return FixedKCheck(
        k=k, n=n, conditional=conditional, conditional_stderr=conditional_se,
        hat=ensemble.expectation(indicator), hat_stderr=ensemble.stderr(indicator),
        survivors=survivors,
    )


@dataclass
class HatSeries:
    """Ê[Σ_{k<n} η_k e^{-S_k}] の n ごとの推定"""
    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray


def hat_series(
    x,
    a: float,
    model: EnvironmentModel,
    n_grid: Sequence[int],
    replicas: int,
    streams: RandomStreams,
    h: HarmonicFunction,
    executor: Optional[ReplicaExecutor] = None,
) -> HatSeries:
    """ĥ で重み付けた部分和 Σ_{k<n} η_k e^{-S_k} の期待値を格子の各 n で推定"""
    x = start_point(model, x)
    grid = np.unique(np.asarray(n_grid, dtype=int))
    data = _walk_grid(model, x, a, grid, replicas, streams, executor, True, "hat-series")
    values = np.full(grid.size, np.nan)
    stderr = np.full(grid.size, np.nan)
    for g, n in enumerate(grid):
        keep = data["alive"][:, g]
        if not keep.any():
            continue
        raw_h = np.asarray(h(data["points"][keep, g], data["values"][keep, g]), dtype=float)
        total = raw_h.sum()
        if total <= 0:
            continue
        series = data["series"][keep, g]
        values[g] = float(raw_h @ series / total)
        stderr[g] = float(np.sqrt(np.sum((raw_h * (series - values[g])) ** 2)) / total)
    return HatSeries(grid=grid, values=values, stderr=stderr)


__all__ = [
    "HatEnsemble",
    "hat_sampler",
    "FixedKCheck",
    "fixed_k_check",
    "HatSeries",
    "hat_series",
]
