"""
The Markov chain (X_n, S_n) driven by i.i.d. mean matrices: single paths,
vectorized replica blocks, Lyapunov exponent and invariant measure estimates
"""

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence

import numpy as np

from ..environment.models import EnvironmentBlock, EnvironmentModel
from ..runner.parallel import RandomStreams, ReplicaExecutor, batch_means_stderr, concat_chunks
from .projective import ProjectivePoint, as_point, cocycle, projective_action

# S_n がこの値以下になったら停止（格子上の和の丸め誤差を吸収）
KILL_TOLERANCE = 1e-9


def start_point(model: EnvironmentModel, x=None) -> np.ndarray:
    """開始点（省略時は一様点 (1/p, ..., 1/p)）"""
    if x is None:
        return ProjectivePoint.uniform(model.p).x
    x = as_point(x)
    if x.shape[0] != model.p:
        raise ValueError(f"x must have {model.p} coordinates")
    return x


@dataclass
class WalkPath:
    """(X_k, S_k) の軌道と停止時刻 τ（未到達なら None）"""
    x: np.ndarray
    a: float
    points: np.ndarray      # (n+1, p)
    values: np.ndarray      # (n+1,) S_0..S_n
    increments: np.ndarray  # (n,) ρ(X_k, M_k)
    tau: Optional[int] = None

    def __len__(self) -> int:
        return self.increments.shape[0]

    def first_nonpositive(self, tolerance: float = KILL_TOLERANCE) -> Optional[int]:
        """保存された軌道から τ を再計算"""
        hits = np.flatnonzero(self.values[1:] <= tolerance)
        return int(hits[0]) + 1 if hits.size else None

    def steps(self) -> Iterator[tuple]:
        for k in range(len(self)):
            yield self.points[k], self.values[k], self.increments[k]


def run_walk(x, a: float, model: EnvironmentModel, n: int, rng: np.random.Generator) -> WalkPath:
    """
    平均行列を i.i.d. にサンプリングして (X_k, S_k) を逐次更新

    R_n は作らず、コサイクルの増分を加算する。
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    x = start_point(model, x)
    path = model.sample_path(rng, n)
    points = np.empty((n + 1, model.p))
    values = np.empty(n + 1)
    increments = np.empty(n)
    points[0], values[0] = x, a
    tau = None
    current = ProjectivePoint(x)
    for k in range(n):
        matrix = model.mean_matrix_at(path, k)
        increments[k] = cocycle(current, matrix)
        current = projective_action(current, matrix)
        values[k + 1] = values[k] + increments[k]
        points[k + 1] = current.x
        if tau is None and values[k + 1] <= KILL_TOLERANCE:
            tau = k + 1
    return WalkPath(x=x, a=float(a), points=points, values=values, increments=increments, tau=tau)


@dataclass
class WalkBlock:
    """レプリカ群の歩行を格子点で記録したもの"""
    grid: np.ndarray        # (G,) 記録するステップ数
    values: np.ndarray      # (R, G) S_n
    points: np.ndarray      # (R, G, p) X_n
    tau: np.ndarray         # (R,) 停止時刻（0 は未到達）
    series: Optional[np.ndarray] = None  # (R, G) Σ_{k<n} η_k e^{-S_k}

    def alive(self) -> np.ndarray:
        """(R, G) の 1{τ > n}"""
        return (self.tau[:, None] == 0) | (self.tau[:, None] > self.grid[None, :])


def advance_walks(
    block: EnvironmentBlock, x: np.ndarray, a: float, grid: Sequence[int], eta_series: bool = False
) -> WalkBlock:
    """
    環境ブロック上で全レプリカの (X_k, S_k) を同時に進める

    Args:
        block: 環境ブロック（長さ >= max(grid)）
        x: 開始点
        a: 開始値
        grid: 記録するステップ数の列
        eta_series: Σ_{k<n} η_k e^{-S_k} も記録するか
    """
    grid = np.unique(np.asarray(grid, dtype=int))
    n_max = int(grid[-1]) if grid.size else 0
    if n_max > block.length:
        raise ValueError(f"environment block has {block.length} steps, need {n_max}")
    R, p = block.replicas, block.p
    values = np.empty((R, grid.size))
    points = np.empty((R, grid.size, p))
    tau = np.zeros(R, dtype=np.int64)
    slots = {int(n): g for g, n in enumerate(grid)}

    if p == 1 and not eta_series:
        log_means = block.log_means_scalar()[:, :n_max]
        if np.any(np.isinf(log_means)):
            raise ValueError("|xA| = 0: matrix annihilates x")
        partial_sums = a + np.cumsum(log_means, axis=1)
        killed = partial_sums <= KILL_TOLERANCE
        hit = killed.any(axis=1)
        tau[hit] = killed[hit].argmax(axis=1) + 1
        for n, g in slots.items():
            values[:, g] = a if n == 0 else partial_sums[:, n - 1]
        points[:] = 1.0
        return WalkBlock(grid=grid, values=values, points=points, tau=tau)

    current = np.tile(np.asarray(x, dtype=float), (R, 1))
    level = np.full(R, float(a))
    series = np.zeros((R, grid.size)) if eta_series else None
    running = np.zeros(R)
    if 0 in slots:
        values[:, slots[0]], points[:, slots[0]] = level, current
    for k in range(n_max):
        if eta_series:
            running = running + block.etas(k) * np.exp(-level)
        pushed = np.einsum("rp,rpq->rq", current, block.means(k))
        norm = pushed.sum(axis=1)
        if np.any(norm <= 0):
            raise ValueError("|xA| = 0: matrix annihilates x")
        level = level + np.log(norm)
        current = pushed / norm[:, None]
        tau[(tau == 0) & (level <= KILL_TOLERANCE)] = k + 1
        g = slots.get(k + 1)
        if g is not None:
            values[:, g], points[:, g] = level, current
            if eta_series:
                series[:, g] = running
    return WalkBlock(grid=grid, values=values, points=points, tau=tau, series=series)


def sample_block(model: EnvironmentModel, replica_ids, streams: RandomStreams, n: int) -> EnvironmentBlock:
    """レプリカ番号ごとのストリームから環境列をサンプリングしてブロックにまとめる"""
    paths = [model.sample_path(streams.generator(r), n) for r in replica_ids]
    return model.block(paths)


@dataclass
class LyapunovEstimate:
    """ln|xR_n|/n のレプリカ平均とバッチ標準誤差"""
    estimate: float
    stderr: float
    n: int
    replicas: int
    values: np.ndarray = field(repr=False, default=None)

    def __iter__(self):
        yield self.estimate
        yield self.stderr


def _lyapunov_chunk(replica_ids, streams, model, x, n):
    block = sample_block(model, replica_ids, streams, n)
    walked = advance_walks(block, x, 0.0, [n])
    return {"values": walked.values[:, 0] / n}


def lyapunov(
    model: EnvironmentModel,
    n: int,
    replicas: int,
    streams: RandomStreams,
    x=None,
    executor: Optional[ReplicaExecutor] = None,
    batches: int = 20,
) -> LyapunovEstimate:
    """
    上側リアプノフ指数の推定

    Args:
        model: 環境モデル
        n: 積の長さ
        replicas: レプリカ数
        streams: 乱数ストリーム
        x: 開始点（省略時は一様点）

    Returns:
        LyapunovEstimate（(π̂, SE) としても展開可能）
    """
    if n < 1 or replicas < 1:
        raise ValueError("n and replicas must be at least 1")
    executor = executor or ReplicaExecutor()
    x = start_point(model, x)
    results = executor.map(_lyapunov_chunk, replicas, streams, desc="lyapunov", model=model, x=x, n=n)
    values = concat_chunks(results)["values"]
    stderr = batch_means_stderr(values, batches) if replicas > 1 else float("nan")
    if np.all(values == values[0]):
        stderr = 0.0
    return LyapunovEstimate(float(values.mean()), stderr, n, replicas, values)


def coordinate_monomials(points: np.ndarray) -> np.ndarray:
    """テスト関数：座標 x_j と 2 次の単項式 x_j x_l (j <= l)"""
    p = points.shape[-1]
    columns = [points[..., j] for j in range(p)]
    columns += [points[..., j] * points[..., l] for j in range(p) for l in range(j, p)]
    return np.stack(columns, axis=-1)


@dataclass
class InvariantMeasure:
    """射影鎖の占有測度と定常性の残差"""
    points: np.ndarray
    weights: np.ndarray
    residuals: np.ndarray
    tolerance: float
    burn_in: int

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))

    @property
    def stationary(self) -> bool:
        return self.max_residual <= self.tolerance

    def mean(self) -> np.ndarray:
        return self.weights @ self.points


def invariant_measure(
    model: EnvironmentModel, burn_in: int, samples: int, rng: np.random.Generator, x=None
) -> InvariantMeasure:
    """
    X_k の占有測度で不変測度を近似

    有限台モデルでは 1 ステップ先の期待値 (P*ν̂)(φ) を成分の列挙で厳密に計算し、
    連続モデルでは点ごとに1回サンプリングする。
    """
    if burn_in < 1 or samples < 1:
        raise ValueError("burn_in and samples must be at least 1")
    current = start_point(model, x)
    path = model.sample_path(rng, burn_in + samples)
    points = np.empty((samples, model.p))
    for k in range(burn_in + samples):
        if k >= burn_in:
            points[k - burn_in] = current
        pushed = current @ model.mean_matrix_at(path, k)
        current = pushed / pushed.sum()

    phi = coordinate_monomials(points)
    if model.is_finite:
        stepped = np.zeros_like(phi)
        for atom, weight in zip(model.atoms, model.weights):
            pushed = points @ atom.mean_matrix
            stepped += weight * coordinate_monomials(pushed / pushed.sum(axis=1, keepdims=True))
    else:
        check = model.sample_path(rng, samples)
        pushed = np.stack([points[k] @ model.mean_matrix_at(check, k) for k in range(samples)])
        stepped = coordinate_monomials(pushed / pushed.sum(axis=1, keepdims=True))
    residuals = stepped.mean(axis=0) - phi.mean(axis=0)
    tolerance = max(float(3.0 * np.max(phi.std(axis=0)) / np.sqrt(samples)), 1e-12)
    return InvariantMeasure(
        points=points,
        weights=np.full(samples, 1.0 / samples),
        residuals=residuals,
        tolerance=tolerance,
        burn_in=burn_in,
    )


__all__ = [
    "KILL_TOLERANCE",
    "WalkPath",
    "WalkBlock",
    "LyapunovEstimate",
    "InvariantMeasure",
    "start_point",
    "run_walk",
    "advance_walks",
    "sample_block",
    "lyapunov",
    "coordinate_monomials",
    "invariant_measure",
]
