"""
Property campaigns over random instances: the telescoping identity and its
bound, ψ and Kozlov inequalities, norm estimates, cocycle and walk identities
"""

from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..environment.offspring import permute_types, second_moments
from ..generating.composition import EXPLICIT_PRODUCT_LIMIT, CompositionChain, compose, telescope
from ..generating.functions import delta2, evaluate, kozlov_gap, one_minus_h, psi
from ..runner.parallel import NAMESPACES, RandomStreams, ReplicaExecutor, concat_chunks
from ..walk.projective import cocycle, explicit_log_norm, projective_action, ratio_constant
from .instances import random_chain, random_component, random_dimension, random_matrix, random_point, random_s

# 不等式チェックの許容幅（比較する量の大きさに対する相対値）
SLACK_TOLERANCE = 1e-12
IDENTITY_TOLERANCE = 1e-9
LOG_NORM_TOLERANCE = 1e-10
MAX_TELESCOPE_LENGTH = 15
KOZLOV_GRID = np.linspace(0.0, 0.95, 20)
# 退化した（|xR_k| = 0 などの）鎖を引き直す回数の上限
MAX_REDRAWS = 100

CheckOutcome = Tuple[float, float]


def _scaled(magnitude: float) -> float:
    return SLACK_TOLERANCE * max(1.0, abs(float(magnitude)))


def _draw_telescope(rng: np.random.Generator, positive_means: bool, s_zero: bool):
    for _ in range(MAX_REDRAWS):
        p = random_dimension(rng)
        n = int(rng.integers(1, MAX_TELESCOPE_LENGTH + 1))
        chain = CompositionChain(random_chain(rng, p, n, positive_means))
        x = random_point(rng, p)
        s = np.zeros(p) if s_zero else random_s(rng, p)
        try:
            report = telescope(chain, x, s)
        except ValueError:
            continue
        if np.isfinite(report.lhs) and np.isfinite(report.rhs):
            return report
    raise RuntimeError("could not draw a nondegenerate telescoping instance")


def check_telescope_identity(rng: np.random.Generator) -> CheckOutcome:
    report = _draw_telescope(rng, positive_means=False, s_zero=bool(rng.random() < 0.5))
    return report.residual, IDENTITY_TOLERANCE


def check_telescope_bound(rng: np.random.Generator) -> CheckOutcome:
    report = _draw_telescope(rng, positive_means=True, s_zero=True)
    return report.lhs - report.bound, _scaled(report.bound)


def _psi_instance(rng: np.random.Generator, positive_means: bool):
    p = random_dimension(rng)
    component = random_component(rng, p, positive_means)
    A = random_matrix(rng, p)
    s = random_s(rng, p)
    value = psi(component, A, component.mean_matrix, s)
    magnitude = A.sum() / (A @ (1.0 - evaluate(component, s))).sum()
    return component, value, magnitude


def check_psi_nonnegative(rng: np.random.Generator) -> CheckOutcome:
    _, value, magnitude = _psi_instance(rng, positive_means=False)
    return -value, _scaled(magnitude)


def check_psi_bound(rng: np.random.Generator) -> CheckOutcome:
    component, value, magnitude = _psi_instance(rng, positive_means=True)
    p = component.p
    bound = ratio_constant(component.mean_matrix) * p ** 2 * component.eta
    return value - bound, _scaled(max(bound, magnitude))


def check_kozlov_inequality(rng: np.random.Generator) -> CheckOutcome:
    p = random_dimension(rng)
    component = random_component(rng, p)
    A = random_matrix(rng, p)
    s = random_s(rng, p)
    worst, worst_tol = -np.inf, 0.0
    for z in KOZLOV_GRID:
        gap, upper = kozlov_gap(component, A, s, float(z))
        tol = _scaled(max(abs(gap), upper, 1.0 / one_minus_h(component, A, s, float(z))))
        slack = max(-gap, gap - upper)
        if slack - tol > worst - worst_tol:
            worst, worst_tol = slack, tol
    return float(worst), worst_tol


def check_norm1(rng: np.random.Generator) -> CheckOutcome:
    p = random_dimension(rng)
    component = random_component(rng, p)
    s = random_s(rng, p)
    q_norm = (1.0 - s).sum()
    bound = component.mu * q_norm ** 2
    return float(np.abs(delta2(component, s)).sum() - bound), _scaled(bound)


def check_norm2(rng: np.random.Generator) -> CheckOutcome:
    p = random_dimension(rng)
    component = random_component(rng, p, positive_means=True)
    M = component.mean_matrix
    A = random_matrix(rng, p, positive=False)
    q = 1.0 - random_s(rng, p)
    lower = A.sum() * M.sum() * q.sum() / (ratio_constant(M) * p ** 2)
    value = (A @ M @ q).sum()
    return float(lower - value), _scaled(value)


def check_cocycle(rng: np.random.Generator) -> CheckOutcome:
    p = random_dimension(rng)
    x = random_point(rng, p)
    A1, A2 = random_matrix(rng, p), random_matrix(rng, p)
    whole = cocycle(x, A1 @ A2)
    split = cocycle(projective_action(x, A1), A2) + cocycle(x, A1)
    return abs(whole - split), _scaled(whole)


def check_projective_normalization(rng: np.random.Generator) -> CheckOutcome:
    p = random_dimension(rng)
    x = random_point(rng, p)
    A = random_matrix(rng, p)
    y = x @ A
    y = y / y.sum()
    return float(max(abs(y.sum() - 1.0), -y.min())), SLACK_TOLERANCE


def check_compose_associativity(rng: np.random.Generator) -> CheckOutcome:
    p = random_dimension(rng)
    n = int(rng.integers(1, MAX_TELESCOPE_LENGTH + 1))
    chain = CompositionChain(random_chain(rng, p, n))
    k, m = sorted(int(v) for v in rng.integers(0, n + 1, size=2))
    s = random_s(rng, p)
    direct = compose(chain, s, k, n)
    split = compose(chain, compose(chain, s, m, n), k, m)
    return float(np.abs(direct - split).max()), SLACK_TOLERANCE


def check_h5_row_sum(rng: np.random.Generator) -> CheckOutcome:
    p = random_dimension(rng)
    A = random_matrix(rng, p, positive=False)
    x = random_point(rng, p)
    rows = A.sum(axis=1)
    smallest = rows.min()
    vertex_gap = abs(min((np.eye(p)[i] @ A).sum() for i in range(p)) - smallest)
    return float(max(smallest - (x @ A).sum(), vertex_gap)), _scaled(rows.max())


def check_eta_permutation(rng: np.random.Generator) -> CheckOutcome:
    p = random_dimension(rng)
    component = random_component(rng, p)
    perm = rng.permutation(p)
    _, _, eta = second_moments(permute_types(component.laws, perm))
    return abs(eta - component.eta), _scaled(component.eta)


def check_incremental_log_norm(rng: np.random.Generator) -> CheckOutcome:
    p = random_dimension(rng)
    n = int(rng.integers(1, EXPLICIT_PRODUCT_LIMIT + 1))
    matrices = [random_matrix(rng, p) for _ in range(n)]
    x = random_point(rng, p)
    point, log_norm = x, 0.0
    for matrix in matrices:
        log_norm += cocycle(point, matrix)
        point = projective_action(point, matrix)
    return abs(log_norm - explicit_log_norm(x, matrices)), LOG_NORM_TOLERANCE


def check_first_moment_bound(rng: np.random.Generator) -> CheckOutcome:
    """1 - f_{0,n}(0) <= 1 - f_{0,k}(0) <= R_k 1（成分ごと）"""
    p = random_dimension(rng)
    n = int(rng.integers(1, MAX_TELESCOPE_LENGTH + 1))
    components = random_chain(rng, p, n)
    k = int(rng.integers(0, n + 1))
    zero = np.zeros(p)
    q_n = CompositionChain(components).complement_iterates(zero)[0]
    q_k = CompositionChain(components[:k]).complement_iterates(zero)[0] if k else np.ones(p)
    product = np.eye(p)
    for component in components[:k]:
        product = product @ component.mean_matrix
    first_moment = product.sum(axis=1)
    slack = max(float((q_n - q_k).max()), float((q_k - first_moment).max()))
    return slack, _scaled(first_moment.max())


def check_evaluate_monotone(rng: np.random.Generator) -> CheckOutcome:
    p = random_dimension(rng)
    component = random_component(rng, p)
    s = random_s(rng, p)
    t = s + rng.random(p) * (1.0 - s)
    return float((evaluate(component, s) - evaluate(component, t)).max()), SLACK_TOLERANCE


CHECKS: Dict[str, Callable[[np.random.Generator], CheckOutcome]] = {
    "telescope_identity": check_telescope_identity,
    "telescope_bound": check_telescope_bound,
    "psi_bound": check_psi_bound,
    "psi_nonnegative": check_psi_nonnegative,
    "kozlov_inequality": check_kozlov_inequality,
    "norm1": check_norm1,
    "norm2": check_norm2,
    "cocycle": check_cocycle,
    "projective_normalization": check_projective_normalization,
    "compose_associativity": check_compose_associativity,
    "h5_row_sum": check_h5_row_sum,
    "eta_permutation": check_eta_permutation,
    "incremental_log_norm": check_incremental_log_norm,
    "first_moment_bound": check_first_moment_bound,
    "evaluate_monotone": check_evaluate_monotone,
}

TELESCOPE_CHECKS = ("telescope_identity", "telescope_bound")


@dataclass
class CheckResult:
    """1つのチェックの集計結果"""
    check_name: str
    instances: int
    violations: int
    max_slack: float
    worst_seed: int


def check_streams(seed: int, check_name: str) -> RandomStreams:
    """チェックごとの乱数ストリーム。インスタンス r は generator(r) で再現できる"""
    index = list(CHECKS).index(check_name)
    return RandomStreams(seed, NAMESPACES["verify"] * 100 + index)


def _verify_chunk(replica_ids, streams, check_name):
    check = CHECKS[check_name]
    slack = np.empty(len(replica_ids))
    tolerance = np.empty(len(replica_ids))
    for row, r in enumerate(replica_ids):
        slack[row], tolerance[row] = check(streams.generator(r))
    return {"slack": slack, "tolerance": tolerance}


def run_check(
    check_name: str,
    seed: int,
    instances: int,
    executor: Optional[ReplicaExecutor] = None,
) -> CheckResult:
    """
    1つのチェックを instances 個のランダムインスタンスで実行

    Returns:
        CheckResult（worst_seed は許容幅を最も超えた、または最も近づいたインスタンス番号）
    """
    if check_name not in CHECKS:
        raise ValueError(f"Unknown check: {check_name}. Available: {list(CHECKS)}")
    if instances < 1:
        raise ValueError("instances must be at least 1")
    executor = executor or ReplicaExecutor()
    data = concat_chunks(
        executor.map(_verify_chunk, instances, check_streams(seed, check_name), desc=check_name,
                     check_name=check_name)
    )
    excess = data["slack"] - data["tolerance"]
    return CheckResult(
        check_name=check_name,
        instances=int(instances),
        violations=int(np.sum(excess > 0)),
        max_slack=float(data["slack"].max()),
        worst_seed=int(np.argmax(excess)),
    )


def run_verification(
    seed: int,
    instances: int = 10000,
    telescope_instances: int = 200,
    executor: Optional[ReplicaExecutor] = None,
    checks: Optional[Sequence[str]] = None,
) -> List[CheckResult]:
    """
    全チェック（または checks で指定したもの）を実行

    Args:
        seed: 64 bit シード
        instances: 通常のチェックのインスタンス数
        telescope_instances: 望遠鏡和のチェックのインスタンス数
        checks: 実行するチェック名（None なら全部）
    """
    names = list(CHECKS) if checks is None else list(checks)
    results = []
    for name in names:
        count = telescope_instances if name in TELESCOPE_CHECKS else instances
        results.append(run_check(name, seed, count, executor))
    return results


def results_frame(results: Sequence[CheckResult]) -> pd.DataFrame:
    """列 check_name, instances, violations, max_slack, worst_seed の表"""
    return pd.DataFrame([asdict(r) for r in results],
                        columns=["check_name", "instances", "violations", "max_slack", "worst_seed"])


__all__ = [
    "SLACK_TOLERANCE",
    "CHECKS",
    "CheckResult",
    "check_streams",
    "run_check",
    "run_verification",
    "results_frame",
]
