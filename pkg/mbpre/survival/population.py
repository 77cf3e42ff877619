"""
Direct particle simulation of the branching process in random environment
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..environment.models import EnvironmentModel
from ..runner.parallel import RandomStreams, ReplicaExecutor, concat_chunks

DEFAULT_CAP = 10 ** 7


@dataclass(frozen=True, eq=False)
class BranchingState:
    """世代 n の各タイプの個体数 Z(n)"""
    counts: np.ndarray
    generation: int = 0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or np.any(counts < 0):
            raise ValueError("counts must be a vector of nonnegative integers")
        if self.generation < 0:
            raise ValueError("generation must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def extinct(self) -> bool:
        return not self.counts.any()

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def single(cls, p: int, i: int) -> "BranchingState":
        """タイプ i（0 始まり）の1個体から開始"""
        counts = np.zeros(p, dtype=np.int64)
        counts[i] = 1
        return cls(counts, 0)


@dataclass
class PopulationTrajectory:
    """
    個体数の軌道。絶滅または上限到達で打ち切る

    上限に達した軌道は以後も生存しているとみなす。
    """
    states: List[BranchingState] = field(default_factory=list)
    capped: bool = False
    extinct_at: Optional[int] = None

    def alive_at(self, n: int) -> bool:
        if self.extinct_at is not None:
            return n < self.extinct_at
        return True

    def counts(self) -> np.ndarray:
        return np.stack([s.counts for s in self.states])


def simulate_population(
    model: EnvironmentModel,
    z0: BranchingState,
    n: int,
    cap: int = DEFAULT_CAP,
    rng: Optional[np.random.Generator] = None,
) -> PopulationTrajectory:
    """
    世代ごとに環境成分を1つサンプリングし、各親の子孫ベクトルを足し合わせる

    Args:
        model: 環境モデル
        z0: 初期状態
        n: 世代数
        cap: 総個体数の上限（>= 1）
        rng: 乱数生成器
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    if z0.counts.shape[0] != model.p:
        raise ValueError(f"initial state must have {model.p} types")
    rng = rng or np.random.default_rng()
    trajectory = PopulationTrajectory(states=[z0])
    state = z0
    if state.extinct:
        trajectory.extinct_at = state.generation
        return trajectory
    for generation in range(state.generation + 1, state.generation + n + 1):
        if model.is_finite:
            offspring = model.sample_component(rng).sample_offspring(rng, state.counts)
        else:
            form = model.sample_form(rng)
            offspring = np.zeros(model.p, dtype=np.int64)
            for i, count in enumerate(state.counts):
                offspring += form.sample_total(rng, i, int(count))
        state = BranchingState(offspring, generation)
        trajectory.states.append(state)
        if state.extinct:
            trajectory.extinct_at = generation
            break
        if state.total >= cap:
            trajectory.capped = True
            break
    return trajectory


@dataclass
class PopulationSurvival:
    """粒子シミュレーションによる生存頻度"""
    type_index: int
    grid: np.ndarray
    frequency: np.ndarray
    stderr: np.ndarray
    capped_fraction: np.ndarray
    runs: int


def _population_chunk(replica_ids, streams, model, i, grid, cap):
    n_max = int(grid[-1])
    alive = np.zeros((len(replica_ids), grid.size))
    capped = np.zeros((len(replica_ids), grid.size))
    for row, r in enumerate(replica_ids):
        trajectory = simulate_population(model, BranchingState.single(model.p, i), n_max, cap, streams.generator(r))
        alive[row] = [trajectory.alive_at(int(n)) for n in grid]
        if trajectory.capped:
            capped_at = trajectory.states[-1].generation
            capped[row] = grid >= capped_at
    return {"alive": alive, "capped": capped}


def population_survival(
    model: EnvironmentModel,
    i: int,
    n_grid: Sequence[int],
    runs: int,
    streams: RandomStreams,
    cap: int = DEFAULT_CAP,
    executor: Optional[ReplicaExecutor] = None,
) -> PopulationSurvival:
    """
    Z(0) = e_i からの生存頻度を格子の各 n で推定

    Args:
        i: 0 始まりのタイプ番号
    """
    if not 0 <= i < model.p:
        raise ValueError(f"type index {i} out of range for p = {model.p}")
    grid = np.unique(np.asarray(n_grid, dtype=int))
    executor = executor or ReplicaExecutor()
    data = concat_chunks(
        executor.map(_population_chunk, runs, streams, desc="population", model=model, i=i, grid=grid, cap=cap)
    )
    frequency = data["alive"].mean(axis=0)
    stderr = np.sqrt(frequency * (1.0 - frequency) / runs)
    return PopulationSurvival(
        type_index=i, grid=grid, frequency=frequency, stderr=stderr,
        capped_fraction=data["capped"].mean(axis=0), runs=runs,
    )


__all__ = [
    "DEFAULT_CAP",
    "BranchingState",
    "PopulationTrajectory",
    "PopulationSurvival",
    "simulate_population",
    "population_survival",
]
