"""
Monte Carlo estimation of the harmonic function h(x, a), the tail of the
stopping time τ, and exact enumeration of the killed walk
"""

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..environment.models import EnvironmentModel
from ..runner.parallel import RandomStreams, ReplicaExecutor, concat_chunks
from ..walk.walks import KILL_TOLERANCE, advance_walks, sample_block, start_point

# ĥ の外挿を安定とみなす最後の2点の相対変化
STABILITY_THRESHOLD = 0.02
# d̂ に加える余白（下界を厳密不等式にする）
BOUND_MARGIN = 1e-9


@dataclass
class HarmonicEstimate:
    """E[S_n; τ>n] の格子上の推定値と外挿値 ĥ(x, a)"""
    x: np.ndarray
    a: float
    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    survival: np.ndarray
    replicas: int
    h_hat: float = 0.0
    stable: bool = False
    relative_change: float = float("nan")

    def rows(self, x_id: str = "x0") -> List[Dict]:
        return [
            {"x_id": x_id, "a": self.a, "n": int(n), "estimate": v, "stderr": se}
            for n, v, se in zip(self.grid, self.values, self.stderr)
        ]


def _killed_walk_chunk(replica_ids, streams, model, x, a, grid):
    block = sample_block(model, replica_ids, streams, int(max(grid)))
    walked = advance_walks(block, x, a, grid)
    alive = walked.alive()
    return {"weighted": walked.values * alive, "alive": alive.astype(float), "final": walked.values[:, -1]}


def _simulate_killed(model, x, a, n_grid, replicas, streams, executor, desc):
    if a <= 0:
        raise ValueError("a must be positive")
    grid = np.unique(np.asarray(n_grid, dtype=int))
    if grid.size == 0 or grid[0] < 1:
        raise ValueError("n_grid must contain positive step counts")
    executor = executor or ReplicaExecutor()
    results = executor.map(
        _killed_walk_chunk, replicas, streams, desc=desc, model=model, x=x, a=float(a), grid=grid
    )
    return grid, concat_chunks(results)


def _mean_and_se(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    count = samples.shape[0]
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(count) if count > 1 else np.full(mean.shape, np.nan)
    return mean, se


def estimate_h(
    x,
    a: float,
    model: EnvironmentModel,
    n_grid: Sequence[int],
    replicas: int,
    streams: RandomStreams,
    executor: Optional[ReplicaExecutor] = None,
) -> HarmonicEstimate:
    """
    h(x, a) = lim E[S_n; τ>n] のモンテカルロ推定

    最大の n での値を ĥ とし、最後の2点の相対変化が 2% 未満なら安定とする。
    """
    x = start_point(model, x)
    grid, data = _simulate_killed(model, x, a, n_grid, replicas, streams, executor, "harmonic")
    values, stderr = _mean_and_se(data["weighted"])
    survival = data["alive"].mean(axis=0)
    h_hat = float(max(values[-1], 0.0))
    relative_change, stable = float("nan"), False
    if grid.size >= 2 and values[-2] > 0:
        relative_change = float(abs(values[-1] - values[-2]) / values[-2])
        stable = relative_change < STABILITY_THRESHOLD
    if not stable:
        warnings.warn(f"h estimate at a={a:g} is not stable across the last grid points")
    return HarmonicEstimate(
        x=x, a=float(a), grid=grid, values=values, stderr=stderr, survival=survival,
        replicas=replicas, h_hat=h_hat, stable=stable, relative_change=relative_change,
    )


class LatticeHarmonic:
    """±δ の格子歩行の調和関数 h(a) = δ·ceil(a/δ)（a <= 0 では 0）"""

    def __init__(self, delta: float):
        if delta <= 0:
            raise ValueError("delta must be positive")
        self.delta = float(delta)

    def __call__(self, points: np.ndarray, levels: np.ndarray) -> np.ndarray:
        levels = np.asarray(levels, dtype=float)
        steps = np.ceil(levels / self.delta - 1e-9)
        return np.where(levels > KILL_TOLERANCE, self.delta * steps, 0.0)


class TabulatedHarmonic:
    """
    (アンカー点, a 格子) 上の ĥ の表

    評価点に最も近いアンカー（L1 距離）を選び、a 方向は線形補間、
    格子の外は端の傾きで線形外挿する。
    """

    def __init__(self, anchors: np.ndarray, a_grid: np.ndarray, table: np.ndarray):
        self.anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
        self.a_grid = np.asarray(a_grid, dtype=float)
        self.table = np.atleast_2d(np.asarray(table, dtype=float))
        if self.table.shape != (self.anchors.shape[0], self.a_grid.shape[0]):
            raise ValueError("table must have one row per anchor and one column per a value")
        if self.a_grid.shape[0] < 2 or np.any(np.diff(self.a_grid) <= 0):
            raise ValueError("a_grid must hold at least two increasing values")

    def __call__(self, points: np.ndarray, levels: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        levels = np.asarray(levels, dtype=float)
        nearest = np.abs(points[:, None, :] - self.anchors[None, :, :]).sum(axis=2).argmin(axis=1)
        out = np.empty(levels.shape[0])
        grid = self.a_grid
        for anchor in np.unique(nearest):
            mask = nearest == anchor
            row = self.table[anchor]
            lv = levels[mask]
            value = np.interp(lv, grid, row)
            low_slope = (row[1] - row[0]) / (grid[1] - grid[0])
            high_slope = (row[-1] - row[-2]) / (grid[-1] - grid[-2])
            value = np.where(lv < grid[0], row[0] + low_slope * (lv - grid[0]), value)
            value = np.where(lv > grid[-1], row[-1] + high_slope * (lv - grid[-1]), value)
            out[mask] = value
        return np.where(levels > KILL_TOLERANCE, np.maximum(out, 0.0), 0.0)


def tabulate_h(
    model: EnvironmentModel,
    anchors: Sequence,
    a_grid: Sequence[float],
    n: int,
    replicas: int,
    streams: RandomStreams,
    executor: Optional[ReplicaExecutor] = None,
) -> TabulatedHarmonic:
    """アンカー点と a 格子ごとに estimate_h を実行して ĥ の表を作る"""
    anchors = np.stack([start_point(model, x) for x in anchors])
    table = np.empty((anchors.shape[0], len(a_grid)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, x in enumerate(anchors):
            for j, a in enumerate(a_grid):
                table[i, j] = estimate_h(x, a, model, [n // 2, n], replicas, streams, executor).h_hat
    return TabulatedHarmonic(anchors, np.asarray(a_grid, dtype=float), table)


HarmonicFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def harmonicity_residual(x, a: float, model: EnvironmentModel, h: HarmonicFunction) -> float:
    """
    1 ステップの調和性の相対残差

    |Σ_c w_c ĥ(x·M_c, a+ρ(x,M_c)) 1{a+ρ>0} - ĥ(x,a)| / ĥ(x,a)。
    有限台モデル以外では適用外として nan を返す。
    """
    if not model.is_finite:
        return float("nan")
    x = start_point(model, x)
    base = float(h(x[None, :], np.array([a]))[0])
    if base == 0.0:
        raise ValueError("h(x, a) = 0: relative residual undefined")
    pushed = np.stack([x @ atom.mean_matrix for atom in model.atoms])
    norms = pushed.sum(axis=1)
    levels = a + np.log(norms)
    values = h(pushed / norms[:, None], levels)
    step = float(np.sum(model.weights * np.where(levels > KILL_TOLERANCE, values, 0.0)))
    return abs(step - base) / base


@dataclass
class TauTailReport:
    """P(τ>n) の推定と σ̂²、定数 2ĥ/(σ̂√(2π))"""
    x: np.ndarray
    a: float
    grid: np.ndarray
    p_hat: np.ndarray
    stderr: np.ndarray
    sqrt_n_p: np.ndarray
    sigma2: float
    sigma2_stderr: float
    h_hat: float
    implied_constant: float
    replicas: int

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.p_hat) <= 0))

    def flatness(self) -> float:
        """格子の最上部で √n·P̂ の n と 4n の比（4n が無ければ nan）"""
        top = self.grid[-1]
        matches = np.flatnonzero(self.grid * 4 == top)
        if matches.size == 0 or self.sqrt_n_p[matches[0]] == 0:
            return float("nan")
        return float(self.sqrt_n_p[-1] / self.sqrt_n_p[matches[0]])


def tau_tail(
    x,
    a: float,
    model: EnvironmentModel,
    n_grid: Sequence[int],
    replicas: int,
    streams: RandomStreams,
    executor: Optional[ReplicaExecutor] = None,
    sigma_batches: int = 20,
) -> TauTailReport:
    """
    P(τ>n) を格子上で推定し、σ̂² を停止させない歩行から求める

    σ̂² は最大の n での Var(S_n - a)/n のバッチ平均推定。
    """
    x = start_point(model, x)
    grid, data = _simulate_killed(model, x, a, n_grid, replicas, streams, executor, "tau")
    p_hat, stderr = _mean_and_se(data["alive"])
    sqrt_n_p = np.sqrt(grid) * p_hat
    n_top = grid[-1]
    centered = data["final"] - a
    batches = max(2, min(sigma_batches, replicas // 2))
    usable = (replicas // batches) * batches
    batch_vars = centered[:usable].reshape(batches, -1).var(axis=1, ddof=1) / n_top
    sigma2 = float(batch_vars.mean())
    sigma2_stderr = float(batch_vars.std(ddof=1) / np.sqrt(batches))
    h_hat = float(data["weighted"][:, -1].mean())
    implied = 2.0 * h_hat / (math.sqrt(sigma2) * math.sqrt(2.0 * math.pi)) if sigma2 > 0 else float("nan")
    return TauTailReport(
        x=x, a=float(a), grid=grid, p_hat=p_hat, stderr=stderr, sqrt_n_p=sqrt_n_p,
        sigma2=sigma2, sigma2_stderr=sigma2_stderr, h_hat=h_hat, implied_constant=implied,
        replicas=replicas,
    )


@dataclass
class EnvelopeFit:
    """√n·P̂(τ>n) <= ĉ(1+a) を満たす共通の ĉ"""
    c_hat: float
    a_values: List[float]
    ratios: np.ndarray  # (len(a), G) √n·P̂/(1+a)

    def holds(self) -> bool:
        return bool(np.all(self.ratios <= self.c_hat))


def fit_envelope(reports: Sequence[TauTailReport]) -> EnvelopeFit:
    if not reports:
        raise ValueError("at least one tau-tail report is required")
    ratios = np.stack([r.sqrt_n_p / (1.0 + r.a) for r in reports])
    return EnvelopeFit(c_hat=float(ratios.max()), a_values=[r.a for r in reports], ratios=ratios)


@dataclass
class BoundFit:
    """ĥ の上下界の診断定数 d̂, Ĉ"""
    d_hat: float
    c_hat: float
    lower_holds: bool
    upper_holds: bool
    companion_holds: bool

    @property
    def holds(self) -> bool:
        return self.lower_holds and self.upper_holds and self.companion_holds


def fit_bound_constants(estimates: Sequence[HarmonicEstimate]) -> BoundFit:
    """
    標本点 (x, a) 上で max{0, a-d̂} < ĥ <= Ĉ(1+a) を満たす d̂, Ĉ を当てはめる

    併せて 1 + a <= (d̂+1)(1+ĥ) も確認する。
    """
    if not estimates:
        raise ValueError("at least one harmonic estimate is required")
    a = np.array([e.a for e in estimates])
    h = np.array([e.h_hat for e in estimates])
    c_hat = float(np.max(h / (1.0 + a)))
    d_hat = float(max(0.0, np.max(a - h)) + BOUND_MARGIN)
    lower = bool(np.all(np.maximum(0.0, a - d_hat) < h))
    upper = bool(np.all(h <= c_hat * (1.0 + a)))
    companion = bool(np.all(1.0 + a <= (d_hat + 1.0) * (1.0 + h)))
    return BoundFit(d_hat=d_hat, c_hat=c_hat, lower_holds=lower, upper_holds=upper, companion_holds=companion)


@dataclass
class ExactKilledWalk:
    """停止付き歩行の厳密な列挙結果"""
    steps: np.ndarray        # 0..n
    survival: np.ndarray     # P(τ>k)
    expectation: np.ndarray  # E[S_k; τ>k]
    states: int = 0


def exact_killed_walk(x, a: float, model: EnvironmentModel, n: int, decimals: int = 12) -> ExactKilledWalk:
    """
    有限台モデルで停止付き歩行を厳密に列挙（丸めて一致する状態は併合）

    Args:
        x: 開始点
        a: 開始値（> 0）
        model: 有限台の環境モデル
        n: ステップ数
        decimals: 状態の併合に使う丸めの桁数
    """
    if not model.is_finite:
        raise ValueError("exact enumeration needs a finite-support environment model")
    if a <= 0:
        raise ValueError("a must be positive")
    x = start_point(model, x)
    means = [atom.mean_matrix for atom in model.atoms]
    states: Dict[tuple, list] = {(tuple(np.round(x, decimals)), round(a, decimals)): [1.0, x, float(a)]}
    survival = np.empty(n + 1)
    expectation = np.empty(n + 1)
    survival[0], expectation[0] = 1.0, float(a)
    peak = 1
    for k in range(1, n + 1):
        nxt: Dict[tuple, list] = {}
        for prob, point, level in states.values():
            for weight, matrix in zip(model.weights, means):
                if weight == 0:
                    continue
                pushed = point @ matrix
                norm = pushed.sum()
                new_level = level + math.log(norm)
                if new_level <= KILL_TOLERANCE:
                    continue
                new_point = pushed / norm
                key = (tuple(np.round(new_point, decimals)), round(new_level, decimals))
                if key in nxt:
                    nxt[key][0] += prob * weight
                else:
                    nxt[key] = [prob * weight, new_point, new_level]
        states = nxt
        peak = max(peak, len(states))
        survival[k] = sum(s[0] for s in states.values())
        expectation[k] = sum(s[0] * s[2] for s in states.values())
    return ExactKilledWalk(steps=np.arange(n + 1), survival=survival, expectation=expectation, states=peak)


__all__ = [
    "STABILITY_THRESHOLD",
    "HarmonicEstimate",
    "LatticeHarmonic",
    "TabulatedHarmonic",
    "HarmonicFunction",
    "tabulate_h",
    "estimate_h",
    "harmonicity_residual",
    "TauTailReport",
    "tau_tail",
    "EnvelopeFit",
    "fit_envelope",
    "BoundFit",
    "fit_bound_constants",
    "ExactKilledWalk",
    "exact_killed_walk",
]
