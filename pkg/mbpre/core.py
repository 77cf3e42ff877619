"""
Core module for mbpre: command dispatch and run orchestration
"""

import math
import time
import warnings
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from . import __version__
from .environment.models import ModelKind
from .harmonic import (
    LatticeHarmonic,
    estimate_h,
    fit_bound_constants,
    fit_envelope,
    fixed_k_check,
    harmonicity_residual,
    hat_series,
    tabulate_h,
    tau_tail,
)
from .reporting import RunLogger
from .runner.config import ExperimentConfig, resolve_point, resolve_start
from .runner.parallel import NAMESPACES, RandomStreams, ReplicaExecutor
from .runner.serialization import ResultSerializer, RunManifest
from .survival import annealed_survival, population_survival, split_survival
from .verify import results_frame, run_verification
from .walk import check_conditions, invariant_measure, lyapunov


class CommandType(Enum):
    """実行できるコマンド"""
    SURVIVAL = "survival"
    TAU = "tau"
    HARMONIC = "harmonic"
    LYAPUNOV = "lyapunov"
    CONDITIONS = "conditions"
    VERIFY = "verify"


@dataclass
class CommandResult:
    """コマンドの出力：主表、1行の要約、追加の表とテキスト"""
    rows: pd.DataFrame
    summary: Dict[str, Any]
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    texts: Dict[str, str] = field(default_factory=dict)


def _finite_or_nan(value) -> float:
    value = float(value)
    return value if math.isfinite(value) else float("nan")


class BranchingLab:
    """
    mbpre のメインクラス：設定に従ってコマンドを実行し、結果を書き出す
    """

    def __init__(self, config: ExperimentConfig, verbose: bool = True):
        """
        Args:
            config: 検証済みの実験設定
            verbose: 進捗を表示するか
        """
        self.config = config
        self.verbose = verbose
        self.model = config.model
        self.executor = ReplicaExecutor(config.workers, config.chunk_size, progress=verbose)
        self.handlers: Dict[CommandType, Callable[[], CommandResult]] = {}
        self._initialize_commands()

    def _initialize_commands(self):
        """コマンドとハンドラの対応"""
        self.handlers = {
            CommandType.SURVIVAL: self._run_survival,
            CommandType.TAU: self._run_tau,
            CommandType.HARMONIC: self._run_harmonic,
            CommandType.LYAPUNOV: self._run_lyapunov,
            CommandType.CONDITIONS: self._run_conditions,
            CommandType.VERIFY: self._run_verify,
        }

    def streams(self, name: str) -> RandomStreams:
        return RandomStreams(self.config.seed, NAMESPACES[name])

    @property
    def options(self) -> Dict[str, Any]:
        return self.config.options

    def _a_values(self) -> List[float]:
        return sorted(set(self.config.a_values) | {self.config.a})

    def execute(self, command: Optional[CommandType] = None) -> CommandResult:
        """ファイルを書かずにコマンドを実行"""
        command = command or CommandType(self.config.command)
        handler = self.handlers.get(command)
        if handler is None:
            raise ValueError(f"Unknown command: {command}")
        return handler()

    # --- survival -------------------------------------------------------

    def _run_survival(self) -> CommandResult:
        config = self.config
        i = config.type_index - 1
        streams = self.streams("survival")
        report = annealed_survival(self.model, i, config.n_grid, config.replicas, streams, self.executor)
        summary: Dict[str, Any] = {
            "type_i": config.type_index,
            "replicas": config.replicas,
            "monotone_violations": report.monotone_violations,
        }
        if report.fit is not None:
            summary.update(report.fit.summary())
        else:
            summary.update({k: float("nan") for k in
                            ("slope", "slope_ci_lo", "slope_ci_hi", "beta_hat", "beta_ci_lo", "beta_ci_hi")})
        if report.grid.size >= 2 and report.grid[-1] == 2 * report.grid[-2] and report.sqrt_n_p[-2] > 0:
            summary["top_ratio"] = float(report.sqrt_n_p[-1] / report.sqrt_n_p[-2])
        result = CommandResult(rows=report.to_frame(), summary=summary)

        runs = int(self.options.get("population_runs", 0))
        if runs > 0:
            max_n = int(self.options.get("population_max_n", 30))
            grid = [n for n in config.n_grid if n <= max_n] or [max_n]
            gf = annealed_survival(self.model, i, grid, config.replicas, streams, self.executor, fit=False)
            pop = population_survival(
                self.model, i, grid, runs, self.streams("population"),
                cap=int(self.options.get("cap", 10 ** 7)), executor=self.executor,
            )
            combined = np.sqrt(gf.stderr ** 2 + pop.stderr ** 2)
            z = np.where(combined > 0, (gf.p_hat - pop.frequency) / np.where(combined > 0, combined, 1.0), 0.0)
            result.tables["survival_population.csv"] = pd.DataFrame(
                {
                    "type_i": config.type_index,
                    "n": gf.grid.astype(int),
                    "p_hat": gf.p_hat,
                    "stderr": gf.stderr,
                    "frequency": pop.frequency,
                    "frequency_stderr": pop.stderr,
                    "capped_fraction": pop.capped_fraction,
                    "z_score": z,
                }
            )
            summary["population_max_abs_z"] = float(np.max(np.abs(z)))
            summary["population_agrees"] = bool(np.all(np.abs(z) <= 3.0))

        if self.options.get("split"):
            split = split_survival(self.model, i, config.a, config.n_grid, config.replicas, streams, self.executor)
            result.tables["survival_split.csv"] = split.to_frame()
        return result

    # --- tau ------------------------------------------------------------

    def _tau_starts(self) -> List[Tuple[str, np.ndarray]]:
        """x0 と追加の開始点（x_values、未指定なら p > 1 で各頂点 e_i）"""
        config = self.config
        starts = [("x0", resolve_start(config))]
        specs = self.options.get("x_values")
        if specs is not None:
            return starts + [(f"x{j}", resolve_point(s, self.model)) for j, s in enumerate(specs, start=1)]
        if config.p > 1:
            starts += [(f"e{i}", resolve_point(f"vertex:{i}", self.model)) for i in range(1, config.p + 1)]
        return starts

    def _run_tau(self) -> CommandResult:
        config = self.config
        reports = []
        frames = []
        ratio_rows = []
        for x_id, x in self._tau_starts():
            for a in self._a_values():
                report = tau_tail(
                    x, a, self.model, config.n_grid, config.replicas, self.streams("tau"), self.executor,
                    sigma_batches=int(self.options.get("sigma_batches", 20)),
                )
                reports.append((x_id, report))
                top = float(report.sqrt_n_p[-1])
                ratio_rows.append(
                    {
                        "x_id": x_id,
                        "a": a,
                        "h_hat": report.h_hat,
                        "sqrt_n_p_top": top,
                        "ratio": top / report.h_hat if report.h_hat > 0 else float("nan"),
                    }
                )
                frames.append(
                    pd.DataFrame(
                        {
                            "x_id": x_id,
                            "a": a,
                            "n": report.grid.astype(int),
                            "estimate": report.p_hat,
                            "stderr": report.stderr,
                            "sqrt_n_p": report.sqrt_n_p,
                        }
                    )
                )
        envelope = fit_envelope([r for _, r in reports])
        main = next(r for x_id, r in reports if x_id == "x0" and r.a == config.a)
        ratio_table = pd.DataFrame(ratio_rows)
        ratios = ratio_table["ratio"].dropna().to_numpy()
        spread = float((ratios.max() - ratios.min()) / ratios.mean()) if ratios.size else float("nan")
        summary = {
            "a": config.a,
            "h_hat": main.h_hat,
            "sigma2": main.sigma2,
            "sigma2_stderr": main.sigma2_stderr,
            "implied_constant": main.implied_constant,
            "sqrt_n_p_top": float(main.sqrt_n_p[-1]),
            "flatness": main.flatness(),
            "monotone": all(r.monotone for _, r in reports),
            "c_hat": envelope.c_hat,
            "envelope_holds": envelope.holds(),
            "ratio_spread": spread,
            "ratio_constant": bool(spread <= 0.15),
            "start_points": int(ratio_table["x_id"].nunique()),
        }
        result = CommandResult(rows=pd.concat(frames, ignore_index=True), summary=summary)
        result.tables["tau_ratios.csv"] = ratio_table
        return result

    # --- harmonic -------------------------------------------------------

    def _harmonic_function(self, x: np.ndarray, a_grid: List[float], h_replicas: int):
        """格子モデルでは厳密な h、それ以外は ĥ の表"""
        if self.model.kind is ModelKind.SCALAR_SYMMETRIC:
            return LatticeHarmonic(self.model.parameters["delta"])
        anchors = [x]
        if self.model.is_finite:
            for atom in self.model.atoms:
                pushed = x @ atom.mean_matrix
                anchors.append(pushed / pushed.sum())
        anchors = list(np.unique(np.round(np.stack(anchors), 12), axis=0))
        grid = sorted(set(a_grid))
        if len(grid) < 2:
            grid = [grid[0] / 2.0, grid[0]]
        return tabulate_h(
            self.model, anchors, grid, int(self.config.n_grid[-1]), h_replicas,
            self.streams("harmonic"), self.executor,
        )

    def _run_harmonic(self) -> CommandResult:
        config = self.config
        x = resolve_start(config)
        estimates = []
        frames = []
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            for a in self._a_values():
                estimate = estimate_h(x, a, self.model, config.n_grid, config.replicas,
                                      self.streams("harmonic"), self.executor)
                estimates.append(estimate)
                frames.append(pd.DataFrame(estimate.rows("x0")))
        for warning in caught:
            self._say(f"⚠️ {warning.message}")
        bounds = fit_bound_constants(estimates)
        main = next(e for e in estimates if e.a == config.a)
        summary: Dict[str, Any] = {
            "a": config.a,
            "h_hat": main.h_hat,
            "stable": main.stable,
            "relative_change": main.relative_change,
            "d_hat": bounds.d_hat,
            "C_hat": bounds.c_hat,
            "bounds_hold": bounds.holds,
        }

        h_replicas = int(self.options.get("h_replicas") or config.replicas)
        need_h = self.model.is_finite or self.options.get("fixed_k") or self.options.get("hat_series")
        h = self._harmonic_function(x, self._a_values(), h_replicas) if need_h else None
        if self.model.is_finite:
            residual = harmonicity_residual(x, config.a, self.model, h)
            summary["harmonicity_residual"] = residual
            summary["harmonicity_status"] = "computed"
        else:
            summary["harmonicity_residual"] = float("nan")
            summary["harmonicity_status"] = "not applicable"

        result = CommandResult(rows=pd.concat(frames, ignore_index=True), summary=summary)
        k = int(self.options.get("fixed_k") or 0)
        if k > 0:
            check = fixed_k_check(x, config.a, self.model, k, int(self.options.get("fixed_k_n", 2000)),
                                  config.replicas, self.streams("harmonic"), h, self.executor)
            summary.update(
                {
                    "fixed_k": k,
                    "fixed_k_conditional": check.conditional,
                    "fixed_k_hat": check.hat,
                    "fixed_k_combined_stderr": check.combined_stderr,
                    "fixed_k_agree": check.agree,
                }
            )
        if self.options.get("hat_series"):
            series = hat_series(x, config.a, self.model, config.n_grid, config.replicas,
                                self.streams("hat"), h, self.executor)
            result.tables["harmonic_hat_series.csv"] = pd.DataFrame(
                {"n": series.grid.astype(int), "estimate": series.values, "stderr": series.stderr}
            )
        return result

    # --- lyapunov -------------------------------------------------------

    def _run_lyapunov(self) -> CommandResult:
        config = self.config
        x = resolve_start(config)
        n = int(self.options.get("n") or config.n_grid[-1])
        estimate = lyapunov(self.model, n, config.replicas, self.streams("lyapunov"), x, self.executor)
        measure = invariant_measure(
            self.model, int(self.options.get("burn_in", 100)), int(self.options.get("samples", 1000)),
            self.streams("invariant").generator(0), x,
        )
        rows = [
            {"quantity": "lyapunov_exponent", "estimate": estimate.estimate, "stderr": estimate.stderr,
             "n": n, "replicas": config.replicas},
        ]
        for j, value in enumerate(measure.mean()):
            rows.append({"quantity": f"invariant_mean[{j + 1}]", "estimate": value, "stderr": float("nan"),
                         "n": measure.burn_in, "replicas": measure.points.shape[0]})
        rows.append({"quantity": "stationarity_residual", "estimate": measure.max_residual,
                     "stderr": measure.tolerance, "n": measure.burn_in, "replicas": measure.points.shape[0]})
        summary = {
            "pi_hat": estimate.estimate,
            "stderr": estimate.stderr,
            "critical": bool(abs(estimate.estimate) <= 3.0 * estimate.stderr),
            "stationarity_residual": measure.max_residual,
            "stationarity_tolerance": measure.tolerance,
            "stationary": measure.stationary,
        }
        return CommandResult(rows=pd.DataFrame(rows), summary=summary)

    # --- conditions -----------------------------------------------------

    def _run_conditions(self) -> CommandResult:
        config = self.config
        n = int(self.options.get("n") or config.n_grid[-1])
        replicas = int(self.options.get("replicas") or config.replicas)
        report = check_conditions(
            self.model,
            epsilon_grid=self.options.get("epsilon_grid", (0.1, 0.5, 1.0)),
            delta_grid=self.options.get("delta_grid", (0.05, 0.1, 0.5)),
            n=n,
            replicas=replicas,
            streams=self.streams("conditions"),
            executor=self.executor,
        )
        rows = report.to_frame()
        rows["n"] = n
        rows["replicas"] = replicas
        summary = {name: status for name, status in report.statuses().items()}
        summary["exact"] = report.exact
        return CommandResult(rows=rows, summary=summary, texts={"conditions_report.txt": report.format_text()})

    # --- verify ---------------------------------------------------------

    def _run_verify(self) -> CommandResult:
        results = run_verification(
            self.config.seed,
            instances=int(self.options.get("instances", 10000)),
            telescope_instances=int(self.options.get("telescope_instances", 200)),
            executor=self.executor,
        )
        failed = [r.check_name for r in results if r.violations > 0]
        summary = {
            "checks": len(results),
            "violations": sum(r.violations for r in results),
            "failed_checks": ";".join(failed),
        }
        return CommandResult(rows=results_frame(results), summary=summary)

    # --- orchestration --------------------------------------------------

    def _say(self, message: str):
        if self.verbose:
            print(message)

    def run(self, logger: Optional[RunLogger] = None) -> RunManifest:
        """
        コマンドを実行して CSV・要約・マニフェストを書き出す

        Returns:
            RunManifest
        """
        config = self.config
        command = config.command
        output_dir = Path(config.output_dir)
        logger = logger or RunLogger(str(output_dir), command, verbose=self.verbose)
        started = time.perf_counter()
        created_at = datetime.now().isoformat()
        logger.run_started(config.to_dict())
        self._say(f"🚀 {command} 開始: scenario={self.model.name or self.model.kind.value}, "
                  f"replicas={config.replicas:,}, workers={self.executor.num_workers}")
        try:
            stage_started = time.perf_counter()
            result = self.execute()
            logger.stage_finished(command, time.perf_counter() - stage_started)

            serializer = ResultSerializer(output_dir)
            written = [serializer.write_csv(result.rows, f"{command}.csv")]
            summary = {k: (_finite_or_nan(v) if isinstance(v, float) else v) for k, v in result.summary.items()}
            written.append(serializer.write_csv(pd.DataFrame([summary]), f"{command}_summary.csv"))
            written.append(serializer.write_json({"command": command, "summary": summary}, "summary.json"))
            for name, frame in result.tables.items():
                written.append(serializer.write_csv(frame, name))
            for name, text in result.texts.items():
                written.append(serializer.write_text(text, name))
            for path in written:
                logger.file_written(str(path), serializer.digests[path.name])

            manifest = RunManifest(
                command=command,
                version=__version__,
                config=config.to_dict(),
                created_at=created_at,
                wall_clock_seconds=time.perf_counter() - started,
                workers=self.executor.num_workers,
                chunk_size=self.executor.chunk_size,
                stream_ids=list(self.executor.chunk_log),
            )
            manifest_path = serializer.write_manifest(manifest)
            logger.file_written(str(manifest_path))
        except Exception as exc:
            logger.run_failed(exc)
            raise
        logger.run_finished(files=len(manifest.files))
        self._say(f"✅ {command} 完了: {output_dir}")
        return manifest


def run(config: ExperimentConfig, verbose: bool = True) -> RunManifest:
    """設定に従って1回実行"""
    return BranchingLab(config, verbose=verbose).run()


__all__ = ["CommandType", "CommandResult", "BranchingLab", "run"]
