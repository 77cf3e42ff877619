"""
Random environment models: i.i.d. sampling of environment components and
vectorized per-step access for replica blocks
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .offspring import (
    PROB_TOLERANCE,
    EnvironmentComponent,
    FractionalLinearForm,
    fractional_linear_complement,
    geometric_form_with_mean,
)


class ModelKind(Enum):
    """環境モデルの種類"""
    FINITE_MIXTURE = "finite_mixture"
    FRACTIONAL_LINEAR = "fractional_linear"
    SCALAR_SYMMETRIC = "scalar_symmetric"
    COMMON_LEFT_EIGENVECTOR = "common_left_eigenvector"


@dataclass(frozen=True, eq=False)
class FractionalLinearFamily:
    """
    分数線形パラメータのサンプリング法則

    各エントリは区間 [low, high] 上の一様分布（low == high なら固定値）。
    サンプル後、混合分布の行は正規化される。
    """
    weight: float
    stall_low: np.ndarray
    stall_high: np.ndarray
    geometric_low: np.ndarray
    geometric_high: np.ndarray
    mixers_low: np.ndarray
    mixers_high: np.ndarray

    def __post_init__(self):
        p = self.stall_low.shape[0]
        for name in ("stall", "geometric", "mixers"):
            low, high = getattr(self, f"{name}_low"), getattr(self, f"{name}_high")
            if low.shape != high.shape or np.any(low > high):
                raise ValueError(f"{name} ranges must satisfy low <= high")
        if self.mixers_low.shape != (p, p) or self.geometric_low.shape != (p,):
            raise ValueError("fractional-linear parameters must describe the same number of types")
        if np.any(self.stall_low < 0) or np.any(self.stall_high >= 1):
            raise ValueError("stall probabilities must lie in [0, 1)")
        if np.any(self.geometric_low <= 0) or np.any(self.geometric_high >= 1):
            raise ValueError("geometric parameters must lie in (0, 1)")
        if np.any(self.mixers_low < 0) or np.any(self.mixers_high.sum(axis=1) <= 0):
            raise ValueError("type mixers must be nonnegative with a positive row")
        fixed = np.all(self.mixers_low == self.mixers_high, axis=1)
        if np.any(np.abs(self.mixers_low[fixed].sum(axis=1) - 1.0) > PROB_TOLERANCE):
            raise ValueError("fixed type mixers must be probability vectors")

    @classmethod
    def fixed(cls, weight, stall, geometric, mixers) -> "FractionalLinearFamily":
        stall, geometric, mixers = (np.asarray(v, dtype=float) for v in (stall, geometric, mixers))
        return cls(weight, stall, stall, geometric, geometric, mixers, mixers)

    @property
    def p(self) -> int:
        return self.stall_low.shape[0]

    @property
    def is_fixed(self) -> bool:
        return all(
            np.array_equal(getattr(self, f"{n}_low"), getattr(self, f"{n}_high"))
            for n in ("stall", "geometric", "mixers")
        )

    def draw(self, rng: np.random.Generator, count: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """count 個のパラメータ組 (stall, geometric, mixers) を一括サンプリング"""
        p = self.p
        stall = rng.uniform(self.stall_low, self.stall_high, size=(count, p))
        geometric = rng.uniform(self.geometric_low, self.geometric_high, size=(count, p))
        mixers = rng.uniform(self.mixers_low, self.mixers_high, size=(count, p, p))
        mixers /= mixers.sum(axis=2, keepdims=True)
        return stall, geometric, mixers


@dataclass(frozen=True, eq=False)
class EnvironmentPath:
    """1本のレプリカの環境列 (有限モデルなら成分番号、連続モデルならパラメータ)"""
    indices: Optional[np.ndarray] = None
    stall: Optional[np.ndarray] = None
    geometric: Optional[np.ndarray] = None
    mixers: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.indices) if self.indices is not None else self.stall.shape[0]


@dataclass(frozen=True, eq=False)
class EnvironmentModel:
    """
    i.i.d. 環境成分のサンプリング法則

    有限台のモデルは atoms と weights を持ち、連続パラメータの分数線形モデルは
    families を持つ。
    """
    kind: ModelKind
    p: int
    atoms: Tuple[EnvironmentComponent, ...] = ()
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    families: Tuple[FractionalLinearFamily, ...] = ()
    parameters: Dict[str, Any] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if self.atoms:
            weights = np.asarray(self.weights, dtype=float)
            if weights.shape != (len(self.atoms),):
                raise ValueError("one weight per component is required")
            if np.any(weights < 0) or abs(weights.sum() - 1.0) > PROB_TOLERANCE:
                raise ValueError(f"mixture weights sum to {weights.sum()!r}, expected 1 within 1e-12")
            if any(atom.p != self.p for atom in self.atoms):
                raise ValueError(f"every component must have p = {self.p}")
            weights.setflags(write=False)
            object.__setattr__(self, "weights", weights)
        elif self.families:
            family_weights = np.array([f.weight for f in self.families])
            if np.any(family_weights < 0) or abs(family_weights.sum() - 1.0) > PROB_TOLERANCE:
                raise ValueError("parameter set weights must sum to 1 within 1e-12")
            if any(f.p != self.p for f in self.families):
                raise ValueError(f"every parameter set must have p = {self.p}")
        else:
            raise ValueError("an environment model needs components or parameter sets")

    @property
    def is_finite(self) -> bool:
        """有限台（成分の列挙が可能）かどうか"""
        return bool(self.atoms)

    @property
    def has_closed_form(self) -> bool:
        return not self.atoms or all(atom.closed_form is not None for atom in self.atoms)

    def _family_weights(self) -> np.ndarray:
        return np.array([f.weight for f in self.families])

    def sample_component(self, rng: np.random.Generator) -> EnvironmentComponent:
        """環境成分を1つ i.i.d. にサンプリング"""
        if self.atoms:
            return self.atoms[rng.choice(len(self.atoms), p=self.weights)]
        return EnvironmentComponent.from_fractional_linear(self.sample_form(rng))

    def sample_form(self, rng: np.random.Generator) -> FractionalLinearForm:
        """連続パラメータモデルから閉形式のみを（打ち切りなしで）サンプリング"""
        if self.atoms:
            atom = self.sample_component(rng)
            if atom.closed_form is None:
                raise ValueError("component has no closed fractional-linear form")
            return atom.closed_form
        family = self.families[rng.choice(len(self.families), p=self._family_weights())]
        stall, geometric, mixers = family.draw(rng, 1)
        return FractionalLinearForm(stall=stall[0], geometric=geometric[0], mixers=mixers[0])

    def sample_path(self, rng: np.random.Generator, n: int) -> EnvironmentPath:
        """長さ n の環境列をサンプリング"""
        if self.atoms:
            return EnvironmentPath(indices=rng.choice(len(self.atoms), size=n, p=self.weights))
        choice = rng.choice(len(self.families), size=n, p=self._family_weights())
        stall = np.empty((n, self.p))
        geometric = np.empty((n, self.p))
        mixers = np.empty((n, self.p, self.p))
        for f_idx, family in enumerate(self.families):
            mask = choice == f_idx
            stall[mask], geometric[mask], mixers[mask] = family.draw(rng, int(mask.sum()))
        return EnvironmentPath(stall=stall, geometric=geometric, mixers=mixers)

    def component_at(self, path: EnvironmentPath, step: int) -> EnvironmentComponent:
        if path.indices is not None:
            return self.atoms[path.indices[step]]
        form = FractionalLinearForm(path.stall[step], path.geometric[step], path.mixers[step])
        return EnvironmentComponent.from_fractional_linear(form)

    def mean_matrix_at(self, path: EnvironmentPath, step: int) -> np.ndarray:
        if path.indices is not None:
            return self.atoms[path.indices[step]].mean_matrix
        totals = (1.0 - path.stall[step]) / (1.0 - path.geometric[step])
        return totals[:, None] * path.mixers[step]

    def block(self, paths: Sequence[EnvironmentPath]) -> "EnvironmentBlock":
        return EnvironmentBlock(self, paths)

    def describe(self) -> Dict[str, Any]:
        info = {"kind": self.kind.value, "p": self.p, "name": self.name}
        info.update(self.parameters)
        if self.atoms:
            info["components"] = len(self.atoms)
        else:
            info["parameter_sets"] = len(self.families)
        return info


class EnvironmentBlock:
    """
    複数レプリカの環境列を揃えて、ステップごとにベクトル化して扱う

    有限モデルでは成分の平均行列・閉形式パラメータを一度だけ積み上げておき、
    ステップごとに成分番号で集める。
    """

    def __init__(self, model: EnvironmentModel, paths: Sequence[EnvironmentPath]):
        self.model = model
        self.p = model.p
        self.replicas = len(paths)
        self.length = min(len(path) for path in paths) if paths else 0
        if model.atoms:
            self.indices = np.stack([path.indices[: self.length] for path in paths])
            self._atom_means = np.stack([atom.mean_matrix for atom in model.atoms])
            self._atom_etas = np.array([atom.eta for atom in model.atoms])
            self._atom_mus = np.array([atom.mu for atom in model.atoms])
            self._atom_hessians = np.stack([atom.hessians for atom in model.atoms])
            if model.has_closed_form:
                forms = [atom.closed_form for atom in model.atoms]
                self._atom_stall = np.stack([f.stall for f in forms])
                self._atom_geometric = np.stack([f.geometric for f in forms])
                self._atom_mixers = np.stack([f.mixers for f in forms])
        else:
            self.indices = None
            self.stall = np.stack([path.stall[: self.length] for path in paths])
            self.geometric = np.stack([path.geometric[: self.length] for path in paths])
            self.mixers = np.stack([path.mixers[: self.length] for path in paths])

    def means(self, step: int) -> np.ndarray:
        """ステップ step の平均行列 (R, p, p)"""
        if self.indices is not None:
            return self._atom_means[self.indices[:, step]]
        totals = (1.0 - self.stall[:, step]) / (1.0 - self.geometric[:, step])
        return totals[:, :, None] * self.mixers[:, step]

    def etas(self, step: int) -> np.ndarray:
        if self.indices is not None:
            return self._atom_etas[self.indices[:, step]]
        stall, r = self.stall[:, step], self.geometric[:, step]
        mu = ((1.0 - stall) * 2.0 * r / (1.0 - r) ** 2).sum(axis=1)
        norm_m = ((1.0 - stall) / (1.0 - r)).sum(axis=1)
        return mu / norm_m ** 2

    def log_means_scalar(self) -> np.ndarray:
        """p = 1 のときの ln m の全ステップ (R, length)"""
        if self.p != 1:
            raise ValueError("scalar log-means are only defined for p = 1")
        if self.indices is not None:
            with np.errstate(divide="ignore"):
                return np.log(self._atom_means[:, 0, 0])[self.indices]
        return np.log((1.0 - self.stall[:, :, 0]) / (1.0 - self.geometric[:, :, 0]))

    def complement(self, step: int, q: np.ndarray) -> np.ndarray:
        """
        全レプリカについて 1 - f_step(1 - q) を計算

        Args:
            step: 環境のステップ番号
            q: (R, p) の 1 - s

        Returns:
            (R, p) の 1 - f_step(s)
        """
        if self.indices is None:
            return fractional_linear_complement(
                self.stall[:, step], self.geometric[:, step], self.mixers[:, step], q
            )
        idx = self.indices[:, step]
        if self.model.has_closed_form:
            return fractional_linear_complement(
                self._atom_stall[idx], self._atom_geometric[idx], self._atom_mixers[idx], q
            )
        out = np.empty_like(q)
        for atom_idx in np.unique(idx):
            mask = idx == atom_idx
            laws = self.model.atoms[atom_idx].laws
            out[mask] = np.stack([law.complement(q[mask]) for law in laws], axis=-1)
        return out


def finite_mixture(
    components: Sequence[EnvironmentComponent],
    weights: Sequence[float],
    name: str = "",
) -> EnvironmentModel:
    """成分と重みの有限混合モデル"""
    if not components:
        raise ValueError("a finite mixture needs at least one component")
    return EnvironmentModel(
        kind=ModelKind.FINITE_MIXTURE,
        p=components[0].p,
        atoms=tuple(components),
        weights=np.asarray(weights, dtype=float),
        name=name,
    )


def fractional_linear_model(
    families: Sequence[FractionalLinearFamily], name: str = ""
) -> EnvironmentModel:
    """
    分数線形モデル。全パラメータ組が固定値なら有限混合として成分を前計算する
    """
    if not families:
        raise ValueError("at least one parameter set is required")
    p = families[0].p
    if all(f.is_fixed for f in families):
        atoms = tuple(
            EnvironmentComponent.from_fractional_linear(
                FractionalLinearForm(f.stall_low, f.geometric_low, f.mixers_low), label=f"set_{k}"
            )
            for k, f in enumerate(families)
        )
        return EnvironmentModel(
            kind=ModelKind.FRACTIONAL_LINEAR,
            p=p,
            atoms=atoms,
            weights=np.array([f.weight for f in families]),
            families=tuple(families),
            name=name,
        )
    return EnvironmentModel(
        kind=ModelKind.FRACTIONAL_LINEAR, p=p, families=tuple(families), name=name
    )


def scalar_symmetric(delta: float, name: str = "") -> EnvironmentModel:
    """平均 e^{±δ} の幾何型子孫法則を等確率で選ぶ p = 1 のモデル (π = 0)"""
    if not delta > 0:
        raise ValueError("delta must be positive")
    atoms = tuple(
        EnvironmentComponent.from_fractional_linear(
            geometric_form_with_mean(np.array([[math.exp(sign * delta)]])), label=label
        )
        for sign, label in ((1.0, "up"), (-1.0, "down"))
    )
    return EnvironmentModel(
        kind=ModelKind.SCALAR_SYMMETRIC,
        p=1,
        atoms=atoms,
        weights=np.array([0.5, 0.5]),
        parameters={"delta": float(delta)},
        name=name,
    )


def common_eigen_matrix(v: np.ndarray, eigenvalue: float, mixing: float) -> np.ndarray:
    """M = ρ(αI + (1-α) 1 v^T): vM = ρv かつ全行和が ρ"""
    p = v.shape[0]
    return eigenvalue * (mixing * np.eye(p) + (1.0 - mixing) * np.tile(v, (p, 1)))


def common_left_eigenvector(
    v: Sequence[float],
    eigenvalues: Sequence[float],
    eigenvalue_weights: Optional[Sequence[float]] = None,
    mixing: Sequence[float] = (0.0,),
    name: str = "",
) -> EnvironmentModel:
    """
    全成分が共通の左固有ベクトル v を持つモデル

    Args:
        v: 単体上の正ベクトル
        eigenvalues: 固有値 ρ の台
        eigenvalue_weights: ρ の確率（省略時は一様）
        mixing: 行列の形を決める α の台（一様に選ぶ）
    """
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0) or abs(v.sum() - 1.0) > PROB_TOLERANCE:
        raise ValueError("v must be a positive probability vector")
    eigenvalues = [float(rho) for rho in eigenvalues]
    if not eigenvalues or any(rho <= 0 for rho in eigenvalues):
        raise ValueError("eigenvalues must be positive")
    if eigenvalue_weights is None:
        eigenvalue_weights = [1.0 / len(eigenvalues)] * len(eigenvalues)
    eigenvalue_weights = np.asarray(eigenvalue_weights, dtype=float)
    if eigenvalue_weights.shape != (len(eigenvalues),):
        raise ValueError("one weight per eigenvalue is required")
    mixing = [float(alpha) for alpha in mixing]
    if not mixing:
        raise ValueError("mixing must not be empty")

    atoms: List[EnvironmentComponent] = []
    weights: List[float] = []
    for rho, w in zip(eigenvalues, eigenvalue_weights):
        for alpha in mixing:
            matrix = common_eigen_matrix(v, rho, alpha)
            if np.any(matrix < 0):
                raise ValueError(f"mixing {alpha} gives a matrix with negative entries")
            atoms.append(
                EnvironmentComponent.from_fractional_linear(
                    geometric_form_with_mean(matrix), label=f"rho={rho:g},alpha={alpha:g}"
                )
            )
            weights.append(w / len(mixing))
    return EnvironmentModel(
        kind=ModelKind.COMMON_LEFT_EIGENVECTOR,
        p=v.shape[0],
        atoms=tuple(atoms),
        weights=np.array(weights),
        parameters={"v": v.tolist(), "eigenvalues": eigenvalues, "mixing": mixing},
        name=name,
    )


def eigenvalue_of(model: EnvironmentModel, component: EnvironmentComponent) -> float:
    """共通左固有ベクトルモデルの成分の固有値 ρ（行和に等しい）"""
    if model.kind is not ModelKind.COMMON_LEFT_EIGENVECTOR:
        raise ValueError("eigenvalues are only defined for the common-left-eigenvector model")
    return float(component.mean_matrix[0].sum())


__all__ = [
    "ModelKind",
    "FractionalLinearFamily",
    "EnvironmentPath",
    "EnvironmentModel",
    "EnvironmentBlock",
    "finite_mixture",
    "fractional_linear_model",
    "scalar_symmetric",
    "common_eigen_matrix",
    "common_left_eigenvector",
    "eigenvalue_of",
]
