"""
Annealed survival probability by environment-averaged generating-function
iteration, and the fit of √n·P(Z(n) ≠ 0) against n
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import norm

from ..environment.models import EnvironmentBlock, EnvironmentModel
from ..runner.parallel import RandomStreams, ReplicaExecutor, concat_chunks
from ..walk.projective import ProjectivePoint
from ..walk.walks import advance_walks, sample_block

# 単調性の判定に使う相対許容誤差
MONOTONE_TOLERANCE = 1e-12
CONFIDENCE = 0.95


@dataclass
class BetaFit:
    """両対数回帰の傾きと β̂（いずれも信頼区間付き）"""
    slope: float
    slope_ci: Tuple[float, float]
    beta_hat: float
    beta_ci: Tuple[float, float]
    points: int

    def summary(self) -> Dict[str, float]:
        return {
            "slope": self.slope,
            "slope_ci_lo": self.slope_ci[0],
            "slope_ci_hi": self.slope_ci[1],
            "beta_hat": self.beta_hat,
            "beta_ci_lo": self.beta_ci[0],
            "beta_ci_hi": self.beta_ci[1],
        }


@dataclass
class ScalingReport:
    """格子上の P̂_n と √n·P̂_n、当てはめ結果"""
    type_index: int
    grid: np.ndarray
    p_hat: np.ndarray
    stderr: np.ndarray
    replicas: int
    fit: Optional[BetaFit] = None
    monotone_violations: int = 0
    capped_fraction: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def sqrt_n_p(self) -> np.ndarray:
        return np.sqrt(self.grid) * self.p_hat

    def to_frame(self) -> pd.DataFrame:
        capped = self.capped_fraction if self.capped_fraction is not None else np.zeros(self.grid.size)
        return pd.DataFrame(
            {
                "type_i": self.type_index + 1,
                "n": self.grid.astype(int),
                "p_hat": self.p_hat,
                "stderr": self.stderr,
                "sqrt_n_p": self.sqrt_n_p,
                "capped_fraction": capped,
            }
        )


def backward_survival(block: EnvironmentBlock, i: int, grid: np.ndarray) -> np.ndarray:
    """
    各レプリカについて (e_i, 1 - f_{0,n}(0)) を格子の各 n で計算

    1 - f は補数の漸化式で更新する。n ごとに後ろ向きの1回の走査。
    """
    out = np.empty((block.replicas, grid.size))
    for g, n in enumerate(grid):
        q = np.ones((block.replicas, block.p))
        for step in range(int(n) - 1, -1, -1):
            q = np.clip(block.complement(step, q), 0.0, 1.0)
        out[:, g] = q[:, i]
    return out


def _annealed_chunk(replica_ids, streams, model, i, grid):
    block = sample_block(model, replica_ids, streams, int(grid[-1]))
    return {"values": backward_survival(block, i, grid)}


def _count_monotone_violations(values: np.ndarray) -> int:
    increase = np.diff(values, axis=1)
    scale = np.maximum(values[:, :-1], 1e-300)
    return int(np.sum(np.any(increase > MONOTONE_TOLERANCE * scale, axis=1)))


def _check_grid(model: EnvironmentModel, i: int, n_grid: Sequence[int]) -> np.ndarray:
    if not 0 <= i < model.p:
        raise ValueError(f"type index {i} out of range for p = {model.p}")
    grid = np.asarray(n_grid, dtype=int)
    if grid.size == 0 or np.any(grid < 1) or np.any(np.diff(grid) <= 0):
        raise ValueError("n_grid must be nonempty, positive and strictly increasing")
    return grid


def annealed_survival(
    model: EnvironmentModel,
    i: int,
    n_grid: Sequence[int],
    replicas: int,
    streams: RandomStreams,
    executor: Optional[ReplicaExecutor] = None,
    fit: bool = True,
) -> ScalingReport:
    """
    P(Z(n) ≠ 0 | Z(0) = e_i) = E[1 - f_{0,n}^{(i)}(0)] を環境についての平均で推定

    Args:
        model: 環境モデル
        i: 0 始まりのタイプ番号
        n_grid: 世代数の格子
        replicas: 環境のレプリカ数
        streams: 乱数ストリーム
        fit: 格子が十分なら fit_beta を実行するか

    Returns:
        ScalingReport
    """
    grid = _check_grid(model, i, n_grid)
    executor = executor or ReplicaExecutor()
    values = concat_chunks(
        executor.map(_annealed_chunk, replicas, streams, desc="survival", model=model, i=i, grid=grid)
    )["values"]
    p_hat = values.mean(axis=0)
    stderr = values.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros(grid.size)
    report = ScalingReport(
        type_index=i, grid=grid, p_hat=p_hat, stderr=stderr, replicas=replicas,
        monotone_violations=_count_monotone_violations(values), values=values,
    )
    if fit and _grid_supports_fit(grid):
        report.fit = fit_beta(grid, p_hat, stderr)
    return report


def _grid_supports_fit(grid: np.ndarray) -> bool:
    return grid.size >= 4 and grid[-1] >= 8 * grid[0]


def fit_beta(n_grid: Sequence[int], p_hat: Sequence[float], stderr: Sequence[float]) -> BetaFit:
    """
    格子の上半分で log P̂ を log n に重み付き最小二乗で回帰し、β̂ を求める

    重みは (P̂/SE)^2（log P̂ の分散の逆数）。SE が 0 のときは等重みで幅 0 の区間。

    Raises:
        ValueError: 格子点が4未満、または n の幅が8倍未満
    """
    grid = np.asarray(n_grid, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    stderr = np.asarray(stderr, dtype=float)
    if grid.size < 4 or grid[-1] < 8 * grid[0]:
        raise ValueError("grid too short: need at least 4 points spanning a factor of 8 in n")
    top = slice(grid.size - math.ceil(grid.size / 2), grid.size)
    n, p, se = grid[top], p_hat[top], stderr[top]
    if np.any(p <= 0):
        raise ValueError("survival estimates must be positive for the log-log fit")
    z = norm.ppf(0.5 + CONFIDENCE / 2.0)
    exact = bool(np.any(~np.isfinite(se)) or np.any(se <= 0))

    x, y = np.log(n), np.log(p)
    w = np.ones_like(x) if exact else (p / se) ** 2
    x_bar = np.sum(w * x) / np.sum(w)
    y_bar = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - x_bar) ** 2)
    slope = float(np.sum(w * (x - x_bar) * (y - y_bar)) / sxx)
    slope_half = 0.0 if exact else float(z / math.sqrt(sxx))

    scaled = np.sqrt(n) * p
    if exact:
        beta_hat, beta_half = float(scaled.mean()), 0.0
    else:
        scaled_w = 1.0 / (np.sqrt(n) * se) ** 2
        beta_hat = float(np.sum(scaled_w * scaled) / np.sum(scaled_w))
        beta_half = float(z / math.sqrt(np.sum(scaled_w)))
    return BetaFit(
        slope=slope,
        slope_ci=(slope - slope_half, slope + slope_half),
        beta_hat=beta_hat,
        beta_ci=(beta_hat - beta_half, beta_hat + beta_half),
        points=int(n.size),
    )


@dataclass
class SplitSurvival:
    """生存確率の τ>n 上の部分と τ<=n 上の部分への分解"""
    type_index: int
    a: float
    grid: np.ndarray
    total: np.ndarray
    inside: np.ndarray
    outside: np.ndarray
    inside_stderr: np.ndarray
    outside_stderr: np.ndarray
    replicas: int

    def to_frame(self) -> pd.DataFrame:
        root = np.sqrt(self.grid)
        return pd.DataFrame(
            {
                "type_i": self.type_index + 1,
                "a": self.a,
                "n": self.grid.astype(int),
                "p_hat": self.total,
                "inside": self.inside,
                "inside_stderr": self.inside_stderr,
                "outside": self.outside,
                "outside_stderr": self.outside_stderr,
                "sqrt_n_inside": root * self.inside,
                "sqrt_n_outside": root * self.outside,
            }
        )


def _split_chunk(replica_ids, streams, model, i, a, grid):
    block = sample_block(model, replica_ids, streams, int(grid[-1]))
    values = backward_survival(block, i, grid)
    start = ProjectivePoint.vertex(model.p, i).x
    alive = advance_walks(block, start, a, grid).alive()
    return {"inside": values * alive, "outside": values * ~alive}


def split_survival(
    model: EnvironmentModel,
    i: int,
    a: float,
    n_grid: Sequence[int],
    replicas: int,
    streams: RandomStreams,
    executor: Optional[ReplicaExecutor] = None,
) -> SplitSurvival:
    """
    生存確率を、(e_i, a) から出発した付随歩行が正に留まる環境 {τ>n} の寄与と残りに分解

    同じレプリカ上で2つの部分の和は annealed_survival の推定値に一致する。
    """
    grid = _check_grid(model, i, n_grid)
    if a <= 0:
        raise ValueError("a must be positive")
    executor = executor or ReplicaExecutor()
    data = concat_chunks(
        executor.map(_split_chunk, replicas, streams, desc="split", model=model, i=i, a=float(a), grid=grid)
    )
    root = math.sqrt(replicas)
    inside, outside = data["inside"], data["outside"]
    return SplitSurvival(
        type_index=i, a=float(a), grid=grid,
        total=(inside + outside).mean(axis=0),
        inside=inside.mean(axis=0), outside=outside.mean(axis=0),
        inside_stderr=inside.std(axis=0, ddof=1) / root if replicas > 1 else np.zeros(grid.size),
        outside_stderr=outside.std(axis=0, ddof=1) / root if replicas > 1 else np.zeros(grid.size),
        replicas=replicas,
    )


__all__ = [
    "BetaFit",
    "ScalingReport",
    "SplitSurvival",
    "backward_survival",
    "annealed_survival",
    "fit_beta",
    "split_survival",
]
