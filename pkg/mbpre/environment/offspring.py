"""
Offspring laws and environment components for multitype branching processes
"""

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln

# 確率和の許容誤差
PROB_TOLERANCE = 1e-12
# 幾何分布を打ち切るときの裾の質量（< 1e-12）
TAIL_MASS = 1e-14


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """1つの親タイプに対する N_0^p 上の有限台確率測度"""
    support: np.ndarray  # (K, p) 非負整数
    probs: np.ndarray    # (K,)

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=float)
        if support.ndim != 2 or support.shape[1] < 1:
            raise ValueError("support must be a (K, p) array with p >= 1")
        if probs.shape != (support.shape[0],):
            raise ValueError("probs must have one entry per support point")
        if support.shape[0] == 0:
            raise ValueError("support must not be empty")
        if np.any(support < 0):
            raise ValueError("offspring counts must be nonnegative")
        if np.any(probs < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > PROB_TOLERANCE:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, expected 1 within 1e-12")
        if len({tuple(z) for z in support}) != support.shape[0]:
            raise ValueError("support entries must be distinct")
        support.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_points(cls, points: Iterable[Tuple[Sequence[int], float]]) -> "OffspringLaw":
        """(z, prob) の列から法則を作る"""
        points = list(points)
        support = np.array([list(z) for z, _ in points], dtype=np.int64)
        probs = np.array([prob for _, prob in points], dtype=float)
        return cls(support=support, probs=probs)

    @classmethod
    def deterministic(cls, z: Sequence[int]) -> "OffspringLaw":
        return cls(support=np.array([list(z)], dtype=np.int64), probs=np.ones(1))

    @property
    def p(self) -> int:
        return self.support.shape[1]

    def mean(self) -> np.ndarray:
        return self.probs @ self.support

    def factorial_moments(self) -> np.ndarray:
        """B(k,l) = E[ξ_k (ξ_l - δ_kl)]"""
        z = self.support.astype(float)
        second = np.einsum("n,nk,nl->kl", self.probs, z, z)
        return second - np.diag(self.mean())

    def generate(self, s: np.ndarray) -> np.ndarray:
        """Σ_z F({z}) s^z を s の先頭次元についてベクトル化して評価"""
        s = np.asarray(s, dtype=float)
        powers = np.prod(s[..., None, :] ** self.support, axis=-1)
        return powers @ self.probs

    def complement(self, q: np.ndarray) -> np.ndarray:
        """1 - f(1 - q) = Σ_z F({z})(1 - (1-q)^z) を桁落ちなしで評価"""
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            logs = np.maximum(np.log1p(-np.minimum(q, 1.0)), -1e300)
        return -np.expm1(logs @ self.support.T.astype(float)) @ self.probs

    def sample_total(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """count 個の親から生まれる子の合計ベクトル"""
        if count <= 0:
            return np.zeros(self.p, dtype=np.int64)
        counts = rng.multinomial(count, self.probs)
        return counts @ self.support


@dataclass(frozen=True, eq=False)
class FractionalLinearForm:
    """
    「停止 または 幾何分布の総数 + i.i.d. 子タイプ」型の分数線形生成関数

    タイプ i の親は確率 stall[i] で子を持たず、そうでなければ
    P(N=k) = (1-r) r^{k-1} (k>=1, r = geometric[i]) の総数 N の子を持ち、
    各子のタイプは mixers[i] に従う。
    """
    stall: np.ndarray      # (p,)
    geometric: np.ndarray  # (p,)
    mixers: np.ndarray     # (p, p)

    def __post_init__(self):
        stall = np.asarray(self.stall, dtype=float)
        geometric = np.asarray(self.geometric, dtype=float)
        mixers = np.asarray(self.mixers, dtype=float)
        p = stall.shape[0]
        if geometric.shape != (p,) or mixers.shape != (p, p):
            raise ValueError("stall, geometric and mixers must describe the same number of types")
        if np.any(stall < 0) or np.any(stall > 1):
            raise ValueError("stall probabilities must lie in [0, 1]")
        if np.any(geometric < 0) or np.any(geometric >= 1):
            raise ValueError("geometric parameters must lie in [0, 1)")
        if np.any(mixers < 0) or np.any(np.abs(mixers.sum(axis=1) - 1.0) > PROB_TOLERANCE):
            raise ValueError("type mixers must be probability vectors")
        for arr in (stall, geometric, mixers):
            arr.setflags(write=False)
        object.__setattr__(self, "stall", stall)
        object.__setattr__(self, "geometric", geometric)
        object.__setattr__(self, "mixers", mixers)

    @property
    def p(self) -> int:
        return self.stall.shape[0]

    def evaluate(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return 1.0 - self.complement(1.0 - s)

    def complement(self, q: np.ndarray) -> np.ndarray:
        """1 - f(1 - q) を桁落ちなしで評価"""
        return fractional_linear_complement(self.stall, self.geometric, self.mixers, q)

    def mean_matrix(self) -> np.ndarray:
        totals = (1.0 - self.stall) / (1.0 - self.geometric)
        return totals[:, None] * self.mixers

    def hessians(self) -> np.ndarray:
        # E[N(N-1)] π π^T, E[N(N-1)] = 2r/(1-r)^2 (非停止時)
        r = self.geometric
        factorial = (1.0 - self.stall) * 2.0 * r / (1.0 - r) ** 2
        return factorial[:, None, None] * np.einsum("ik,il->ikl", self.mixers, self.mixers)

    def sample_total(self, rng: np.random.Generator, i: int, count: int) -> np.ndarray:
        """打ち切りなしで count 個のタイプ i 親の子の合計を直接サンプリング"""
        if count <= 0:
            return np.zeros(self.p, dtype=np.int64)
        breeders = rng.binomial(count, 1.0 - self.stall[i])
        if breeders == 0:
            return np.zeros(self.p, dtype=np.int64)
        r = self.geometric[i]
        total = breeders + (rng.negative_binomial(breeders, 1.0 - r) if r > 0 else 0)
        return rng.multinomial(total, self.mixers[i])


def fractional_linear_complement(stall, geometric, mixers, q) -> np.ndarray:
    """
    バッチ化された分数線形パラメータに対して 1 - f(1 - q) を計算

    Args:
        stall: (..., p)
        geometric: (..., p)
        mixers: (..., p, p)
        q: (..., p) 1 - s

    Returns:
        (..., p) の 1 - f(s)
    """
    mixed = np.einsum("...ij,...j->...i", mixers, q)
    return (1.0 - stall) * mixed / ((1.0 - geometric) + geometric * mixed)


def _truncation_length(stall: float, r: float) -> int:
    if r <= 0.0 or stall >= 1.0:
        return 1
    return max(1, int(math.ceil(math.log(TAIL_MASS / (1.0 - stall)) / math.log(r))))


def _compositions(total: int, parts: int) -> List[Tuple[int, ...]]:
    if parts == 1:
        return [(total,)]
    result = []
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            result.append((head,) + tail)
    return result


def truncated_law(form: FractionalLinearForm, i: int) -> OffspringLaw:
    """タイプ i の分数線形法則を裾の質量 < 1e-12 で打ち切り、正規化した有限台法則"""
    stall = float(form.stall[i])
    r = float(form.geometric[i])
    mixer = form.mixers[i]
    p = form.p
    masses = {(0,) * p: stall}
    if stall < 1.0:
        active = np.flatnonzero(mixer > 0)
        log_mixer = np.log(mixer[active])
        for k in range(1, _truncation_length(stall, r) + 1):
            total_mass = (1.0 - stall) * (1.0 - r) * r ** (k - 1)
            if total_mass == 0.0:
                break
            for comp in _compositions(k, len(active)):
                comp_arr = np.array(comp)
                log_multinomial = (
                    gammaln(k + 1) - gammaln(comp_arr + 1).sum() + (comp_arr * log_mixer).sum()
                )
                z = [0] * p
                for idx, count in zip(active, comp):
                    z[idx] = int(count)
                masses[tuple(z)] = masses.get(tuple(z), 0.0) + total_mass * math.exp(log_multinomial)
    points = [(z, m) for z, m in masses.items() if m > 0.0]
    total = sum(m for _, m in points)
    return OffspringLaw.from_points((z, m / total) for z, m in points)


def mean_matrix(laws: Sequence[OffspringLaw]) -> np.ndarray:
    """平均行列 M(i,j) = E[ξ_ij]"""
    _check_law_tuple(laws)
    return np.vstack([law.mean() for law in laws])


def second_moments(laws: Sequence[OffspringLaw]) -> Tuple[np.ndarray, float, float]:
    """
    ヘッセ行列 B^{(i)} と μ, η を計算

    Returns:
        (B (p,p,p), μ = Σ|B^{(i)}|, η = μ/|M|^2)
    """
    _check_law_tuple(laws)
    norm_m = float(np.abs(mean_matrix(laws)).sum())
    if norm_m == 0.0:
        raise ValueError("|M| = 0: eta is undefined for a law tuple without offspring")
    hessians = np.stack([law.factorial_moments() for law in laws])
    mu = float(np.abs(hessians).sum())
    return hessians, mu, mu / norm_m ** 2


def _check_law_tuple(laws: Sequence[OffspringLaw]):
    if len(laws) == 0:
        raise ValueError("at least one offspring law is required")
    p = len(laws)
    for law in laws:
        if law.p != p:
            raise ValueError(f"every law must have {p} coordinates, got {law.p}")


def make_fractional_linear(
    p: int,
    stall_probs: Sequence[float],
    geometric_params: Sequence[float],
    type_mixers: Sequence[Sequence[float]],
) -> Tuple[Tuple[OffspringLaw, ...], FractionalLinearForm]:
    """
    分数線形の子孫法則を作成

    Args:
        p: タイプ数
        stall_probs: 子を持たない確率（[0,1]）
        geometric_params: 幾何分布パラメータ r（(0,1)）
        type_mixers: 子タイプの分布

    Returns:
        (打ち切られた p 個の法則, 閉形式ハンドル)
    """
    stall = np.asarray(stall_probs, dtype=float)
    geometric = np.asarray(geometric_params, dtype=float)
    mixers = np.asarray(type_mixers, dtype=float)
    if stall.shape != (p,) or geometric.shape != (p,) or mixers.shape != (p, p):
        raise ValueError(f"parameters must describe exactly {p} types")
    if np.any(stall < 0) or np.any(stall > 1):
        raise ValueError("stall probabilities must lie in [0, 1]")
    if np.any(geometric <= 0) or np.any(geometric >= 1):
        raise ValueError("geometric parameters must lie in (0, 1)")
    form = FractionalLinearForm(stall=stall, geometric=geometric, mixers=mixers)
    laws = tuple(truncated_law(form, i) for i in range(p))
    return laws, form


def geometric_form_with_mean(means: np.ndarray) -> FractionalLinearForm:
    """
    平均行列 M を持つ N_0 上の幾何分布型の分数線形法則

    行 i の総数は平均 c_i = Σ_j M(i,j) の N_0 上幾何分布、子タイプは M_i / c_i。
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    p = means.shape[0]
    totals = means.sum(axis=1)
    q = totals / (1.0 + totals)
    mixers = np.where(
        totals[:, None] > 0, means / np.where(totals > 0, totals, 1.0)[:, None], 1.0 / p
    )
    return FractionalLinearForm(stall=1.0 - q, geometric=q, mixers=mixers)


@dataclass(frozen=True, eq=False)
class EnvironmentComponent:
    """環境の1成分：p 個の子孫法則とその1次・2次モーメント"""
    laws: Tuple[OffspringLaw, ...]
    mean_matrix: np.ndarray
    hessians: np.ndarray
    mu: float
    eta: float
    closed_form: Optional[FractionalLinearForm] = None
    label: str = field(default="")

    @classmethod
    def from_laws(
        cls,
        laws: Sequence[OffspringLaw],
        closed_form: Optional[FractionalLinearForm] = None,
        label: str = "",
        strict: bool = True,
    ) -> "EnvironmentComponent":
        """
        法則から成分を作成

        Args:
            laws: p 個の子孫法則
            closed_form: 分数線形の閉形式（あれば）
            label: 表示用ラベル
            strict: True なら |M| = 0 を拒否。False なら μ, η を inf とする
        """
        laws = tuple(laws)
        means = mean_matrix(laws)
        if means.sum() > 0:
            hessians, mu, eta = second_moments(laws)
        elif strict:
            raise ValueError("|M| = 0: an environment component needs a positive mean matrix")
        else:
            hessians = np.stack([law.factorial_moments() for law in laws])
            mu, eta = float(np.abs(hessians).sum()), math.inf
        means.setflags(write=False)
        hessians.setflags(write=False)
        return cls(laws, means, hessians, mu, eta, closed_form, label)

    @classmethod
    def from_fractional_linear(cls, form: FractionalLinearForm, label: str = "") -> "EnvironmentComponent":
        laws = tuple(truncated_law(form, i) for i in range(form.p))
        return cls.from_laws(laws, closed_form=form, label=label)

    @property
    def p(self) -> int:
        return len(self.laws)

    def sample_offspring(self, rng: np.random.Generator, counts: np.ndarray) -> np.ndarray:
        """各タイプ counts[i] 個の親が産む次世代ベクトル"""
        total = np.zeros(self.p, dtype=np.int64)
        for i, count in enumerate(counts):
            if count == 0:
                continue
            if self.closed_form is not None:
                total += self.closed_form.sample_total(rng, i, int(count))
            else:
                total += self.laws[i].sample_total(rng, int(count))
        return total


def dump_law_table(law: OffspringLaw) -> str:
    """法則をテキスト表に書き出す（支持点1行、列 z_1..z_p, prob）"""
    header = ",".join([f"z_{j + 1}" for j in range(law.p)] + ["prob"])
    lines = [header]
    for z, prob in zip(law.support, law.probs):
        lines.append(",".join([str(int(v)) for v in z] + [f"{prob:.17g}"]))
    return "\n".join(lines) + "\n"


def permute_types(laws: Sequence[OffspringLaw], perm: Sequence[int]) -> Tuple[OffspringLaw, ...]:
    """タイプラベルを perm で付け替えた法則の組（新タイプ a = 旧タイプ perm[a]）"""
    perm = list(perm)
    result = []
    for new_type in range(len(perm)):
        law = laws[perm[new_type]]
        result.append(OffspringLaw(support=law.support[:, perm], probs=law.probs))
    return tuple(result)


LawLike = Union[OffspringLaw, Sequence[Tuple[Sequence[int], float]]]


def as_law(spec: LawLike) -> OffspringLaw:
    if isinstance(spec, OffspringLaw):
        return spec
    return OffspringLaw.from_points(spec)


__all__ = [
    "PROB_TOLERANCE",
    "TAIL_MASS",
    "OffspringLaw",
    "FractionalLinearForm",
    "EnvironmentComponent",
    "fractional_linear_complement",
    "truncated_law",
    "mean_matrix",
    "second_moments",
    "make_fractional_linear",
    "geometric_form_with_mean",
    "dump_law_table",
    "permute_types",
    "as_law",
]
