"""
Reproducible random streams and chunked parallel execution over replicas
"""

import multiprocessing as mp
from dataclasses import dataclass
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

# 用途ごとの名前空間（同じシードから独立なストリームを作る）
NAMESPACES: Dict[str, int] = {
    "walk": 1,
    "survival": 2,
    "population": 3,
    "harmonic": 4,
    "tau": 5,
    "hat": 6,
    "lyapunov": 7,
    "conditions": 8,
    "verify": 9,
    "invariant": 10,
}


@dataclass(frozen=True)
class RandomStreams:
    """
    1つの 64 bit シードからレプリカごとの Philox ストリームを作る

    レプリカ r には SeedSequence(seed, spawn_key=(namespace, *branch, r)) で鍵付けされた
    生成器が割り当てられ、ワーカー数に依存しない。
    """
    seed: int
    namespace: int = 0
    branch: Tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def generator(self, replica: int) -> np.random.Generator:
        sequence = np.random.SeedSequence(int(self.seed), spawn_key=self._key(replica))
        return np.random.Generator(np.random.Philox(sequence))

    def _key(self, replica: int) -> Tuple[int, ...]:
        return (int(self.namespace), *(int(b) for b in self.branch), int(replica))

    def child(self, name: str) -> "RandomStreams":
        """名前空間を切り替えた兄弟ストリーム"""
        if name not in NAMESPACES:
            raise ValueError(f"Unknown stream namespace: {name}. Available: {sorted(NAMESPACES)}")
        return RandomStreams(self.seed, NAMESPACES[name])

    def substream(self, index: int) -> "RandomStreams":
        """同じ名前空間の下に枝分かれした独立なストリーム"""
        if index < 0:
            raise ValueError("substream index must be nonnegative")
        return RandomStreams(self.seed, self.namespace, self.branch + (int(index),))

    def stream_id(self, replica: int) -> List[int]:
        return list(self._key(replica))


def _run_chunk(task: Callable, streams: RandomStreams, shared: Dict[str, Any], bounds: Tuple[int, int]):
    start, stop = bounds
    return task(np.arange(start, stop), streams, **shared)


class ReplicaExecutor:
    """
    レプリカを固定サイズのチャンクに分けて実行するクラス

    チャンク分割はワーカー数に依存せず、結果はレプリカ順に連結されるため、
    ワーカー数を変えてもビット単位で同じ結果になる。
    """

    def __init__(self, num_workers: Optional[int] = 1, chunk_size: int = 500, progress: bool = False):
        """
        Args:
            num_workers: 並列ワーカー数（None の場合は CPU 数 - 1）
            chunk_size: 1チャンクあたりのレプリカ数
            progress: tqdm の進捗バーを表示するか
        """
        if chunk_size < 1:
            raise ValueError("chunk_size must be at least 1")
        self.num_workers = num_workers or max(1, mp.cpu_count() - 1)
        self.chunk_size = int(chunk_size)
        self.progress = progress
        self.chunk_log: List[Dict[str, Any]] = []

    def chunks(self, replicas: int) -> List[Tuple[int, int]]:
        return [
            (start, min(start + self.chunk_size, replicas))
            for start in range(0, replicas, self.chunk_size)
        ]

    def map(
        self,
        task: Callable,
        replicas: int,
        streams: RandomStreams,
        desc: str = "replicas",
        **shared,
    ) -> List[Any]:
        """
        task(replica_ids, streams, **shared) を全チャンクに適用

        Args:
            task: モジュールレベルの関数（pickle 可能であること）
            replicas: レプリカ数
            streams: 乱数ストリーム
            desc: 進捗バーのラベル
            **shared: 全チャンク共通の引数

        Returns:
            チャンク順の結果リスト
        """
        if replicas < 1:
            raise ValueError("replicas must be at least 1")
        bounds = self.chunks(replicas)
        worker = partial(_run_chunk, task, streams, shared)
        for start, stop in bounds:
            entry = {"desc": desc, "namespace": streams.namespace, "first_replica": start, "last_replica": stop - 1}
            if streams.branch:
                entry["branch"] = list(streams.branch)
            self.chunk_log.append(entry)
        disable = not self.progress
        if self.num_workers == 1 or len(bounds) == 1:
            return [worker(b) for b in tqdm(bounds, desc=desc, disable=disable)]
        with mp.Pool(processes=min(self.num_workers, len(bounds))) as pool:
            return list(tqdm(pool.imap(worker, bounds), total=len(bounds), desc=desc, disable=disable))


def concat_chunks(results: Sequence[Dict[str, np.ndarray]]) -> Dict[str, np.ndarray]:
    """チャンクごとの配列辞書をレプリカ順に連結"""
    if not results:
        return {}
    return {key: np.concatenate([r[key] for r in results]) for key in results[0]}


def batch_means_stderr(values: np.ndarray, batches: int = 20) -> float:
    """
    バッチ平均法による平均の標準誤差

    値をレプリカ順に batches 個の連続ブロックに分け、ブロック平均のばらつきから推定。
    """
    values = np.asarray(values, dtype=float)
    count = values.shape[0]
    batches = min(batches, count)
    if batches < 2:
        return float("nan")
    usable = (count // batches) * batches
    means = values[:usable].reshape(batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(batches))


def default_executor() -> ReplicaExecutor:
    return ReplicaExecutor(num_workers=1)


__all__ = [
    "NAMESPACES",
    "RandomStreams",
    "ReplicaExecutor",
    "concat_chunks",
    "batch_means_stderr",
    "default_executor",
]
