"""
Checkers for the structural and moment conditions on the environment law
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..environment.models import EnvironmentModel
from ..runner.parallel import NAMESPACES, RandomStreams, ReplicaExecutor
from .projective import ratio_constant
from .walks import lyapunov

PASS = "pass"
FAIL = "fail"
FLAGGED = "flagged"
INCONCLUSIVE = "inconclusive"


@dataclass
class ConditionResult:
    """1つの条件チェックの結果"""
    name: str
    status: str
    estimate: float
    stderr: float = 0.0
    detail: str = ""


@dataclass
class ConditionReport:
    """条件チェック結果の一覧"""
    results: List[ConditionResult] = field(default_factory=list)
    exact: bool = True

    def add(self, result: ConditionResult):
        self.results.append(result)

    def get(self, name: str) -> ConditionResult:
        for result in self.results:
            if result.name == name:
                return result
        raise KeyError(name)

    def statuses(self) -> Dict[str, str]:
        return {r.name: r.status for r in self.results}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {"quantity": r.name, "status": r.status, "estimate": r.estimate, "stderr": r.stderr}
                for r in self.results
            ]
        )

    def format_text(self) -> str:
        """人が読むためのレポート"""
        mode = "exact enumeration over the support" if self.exact else "Monte Carlo over sampled components"
        lines = [f"Condition report ({mode})", ""]
        width = max((len(r.name) for r in self.results), default=10)
        for r in self.results:
            line = f"{r.name.ljust(width)}  {r.status:<12}  estimate={r.estimate:.6g}"
            if r.stderr:
                line += f"  stderr={r.stderr:.3g}"
            if r.detail:
                line += f"  ({r.detail})"
            lines.append(line)
        return "\n".join(lines) + "\n"


def _support_sample(model: EnvironmentModel, draws: int, rng: np.random.Generator):
    """(平均行列, η, 重み) の組。有限モデルなら厳密、そうでなければサンプル"""
    if model.is_finite:
        means = np.stack([atom.mean_matrix for atom in model.atoms])
        etas = np.array([atom.eta for atom in model.atoms])
        return means, etas, np.asarray(model.weights)
    path = model.sample_path(rng, draws)
    block = model.block([path])
    means = np.stack([block.means(k)[0] for k in range(draws)])
    etas = np.array([block.etas(k)[0] for k in range(draws)])
    return means, etas, np.full(draws, 1.0 / draws)


def _moment(values: np.ndarray, weights: np.ndarray, exact: bool) -> Tuple[float, float]:
    mean = float(weights @ values)
    if exact:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / np.sqrt(values.shape[0]))


def positive_product_length(matrices: np.ndarray, max_length: Optional[int] = None) -> Optional[int]:
    """
    台の行列の積で全成分が正になるものの最短の長さ（零パターンの幅優先探索）

    Returns:
        長さ（p^2 以内に見つからなければ None）
    """
    p = matrices.shape[-1]
    max_length = max_length or max(1, p * p)
    generators = {tuple((m > 0).ravel()) for m in matrices}
    generator_arrays = [np.array(g).reshape(p, p) for g in generators]
    frontier = set(generators)
    seen = set(frontier)
    for length in range(1, max_length + 1):
        if any(all(pattern) for pattern in frontier):
            return length
        if length == max_length:
            break
        next_frontier = set()
        for pattern in frontier:
            current = np.array(pattern).reshape(p, p).astype(int)
            for g in generator_arrays:
                product = tuple(((current @ g.astype(int)) > 0).ravel())
                if product not in seen:
                    seen.add(product)
                    next_frontier.add(product)
        if not next_frontier:
            break
        frontier = next_frontier
    return None


def check_conditions(
    model: EnvironmentModel,
    epsilon_grid: Sequence[float] = (0.1, 0.5, 1.0),
    delta_grid: Sequence[float] = (0.05, 0.1, 0.5),
    n: int = 1000,
    replicas: int = 2000,
    streams: Optional[RandomStreams] = None,
    executor: Optional[ReplicaExecutor] = None,
    draws: int = 10000,
) -> ConditionReport:
    """
    環境の法則に対する条件を全てチェック（失敗しても例外は出さず状態を記録）

    Args:
        model: 環境モデル
        epsilon_grid: H1 と 2 次モーメント条件の ε
        delta_grid: H5 の δ
        n, replicas: H4 のリアプノフ指数推定の設定
        streams: 乱数ストリーム
        draws: 連続モデルで成分をサンプリングする数
    """
    streams = streams or RandomStreams(0, NAMESPACES["conditions"])
    rng = streams.generator(0)
    exact = model.is_finite
    means, etas, weights = _support_sample(model, draws, rng)
    report = ConditionReport(exact=exact)
    norms = means.sum(axis=(1, 2))
    row_sums = means.sum(axis=2)

    for eps in epsilon_grid:
        value, se = _moment(norms ** eps, weights, exact)
        report.add(
            ConditionResult(f"H1[eps={eps:g}]", PASS if np.isfinite(value) else FAIL, value, se, "E|M|^eps")
        )

    length = positive_product_length(means)
    report.add(
        ConditionResult(
            "H2",
            PASS if length is not None else INCONCLUSIVE,
            float(length) if length is not None else float("nan"),
            detail="shortest strictly positive product" if length else "no positive product up to length p^2",
        )
    )

    b_hat = max(ratio_constant(m) for m in means)
    report.add(
        ConditionResult(
            "H3",
            PASS if np.isfinite(b_hat) else FLAGGED,
            b_hat,
            detail="max entry ratio over the support" if np.isfinite(b_hat) else "zero entries in the support",
        )
    )

    walk_streams = RandomStreams(streams.seed, NAMESPACES["lyapunov"])
    estimate = lyapunov(model, n, replicas, walk_streams, executor=executor)
    critical = abs(estimate.estimate) <= 3.0 * estimate.stderr or estimate.stderr == 0.0 and estimate.estimate == 0.0
    report.add(
        ConditionResult("H4", PASS if critical else FAIL, estimate.estimate, estimate.stderr, "|pi| <= 3 SE")
    )

    min_rows = row_sums.min(axis=1)
    for delta in delta_grid:
        value, se = _moment((min_rows >= np.exp(delta)).astype(float), weights, exact)
        report.add(
            ConditionResult(
                f"H5[delta={delta:g}]", PASS if value > 0 else FAIL, value, se, "P(min row sum >= e^delta)"
            )
        )

    with np.errstate(divide="ignore"):
        inverse_rows = 1.0 / row_sums
    vertex_values = [_moment(inverse_rows[:, i], weights, exact) for i in range(model.p)]
    worst = int(np.argmax([v for v, _ in vertex_values]))
    value, se = vertex_values[worst]
    report.add(
        ConditionResult(
            "ExponFinite", PASS if np.isfinite(value) else FAIL, value, se, f"sup over vertices at e_{worst + 1}"
        )
    )

    for eps in epsilon_grid:
        value, se = _moment(etas ** (1.0 + eps), weights, exact)
        report.add(
            ConditionResult(
                f"SecondFinite[eps={eps:g}]", PASS if np.isfinite(value) else FAIL, value, se, "E[eta^(1+eps)]"
            )
        )
    return report


__all__ = [
    "PASS",
    "FAIL",
    "FLAGGED",
    "INCONCLUSIVE",
    "ConditionResult",
    "ConditionReport",
    "positive_product_length",
    "check_conditions",
]
