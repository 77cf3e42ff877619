"""
JSONL event log for experiment runs
"""

import json
import os
import time
from datetime import datetime
from typing import Any, Dict, List, Optional

from ..runner.serialization import to_jsonable

EVENTS = ("run_started", "stage_finished", "file_written", "run_finished", "run_failed")


class RunLogger:
    """実行ログを管理するクラス（1行1イベントの JSONL）"""

    def __init__(self, log_dir: str = "./results", command: str = "run", verbose: bool = True):
        self.log_dir = log_dir
        if not os.path.exists(log_dir):
            os.makedirs(log_dir)

        # 日付ベースのログファイル名（コマンド名を含む）
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        self.log_filename = os.path.join(log_dir, f"{command}_run_{timestamp}.jsonl")
        self.command = command
        self.verbose = verbose
        self.events: List[Dict[str, Any]] = []
        self._started = time.perf_counter()

        if verbose:
            print(f"ログファイル: {self.log_filename}")

    def log_event(self, event: str, **fields) -> Dict[str, Any]:
        """イベントを1行追記"""
        if event not in EVENTS:
            raise ValueError(f"Unknown event: {event}. Available: {list(EVENTS)}")
        entry = {"event": event, "timestamp": datetime.now().isoformat(), "command": self.command}
        entry.update(to_jsonable(fields))
        self.events.append(entry)

        with open(self.log_filename, "a", encoding="utf-8") as f:
            json.dump(entry, f, ensure_ascii=False)
            f.write("\n")
        return entry

    def run_started(self, config: Dict[str, Any]) -> Dict[str, Any]:
        return self.log_event("run_started", config=config)

    def stage_finished(self, stage: str, seconds: float, **fields) -> Dict[str, Any]:
        if self.verbose:
            print(f"✅ {stage} 完了 ({seconds:.2f}s)")
        return self.log_event("stage_finished", stage=stage, seconds=seconds, **fields)

    def file_written(self, path: str, sha256: Optional[str] = None) -> Dict[str, Any]:
        if self.verbose:
            print(f"💾 保存: {path}")
        return self.log_event("file_written", path=str(path), sha256=sha256)

    def run_finished(self, **fields) -> Dict[str, Any]:
        return self.log_event("run_finished", seconds=self.elapsed(), **fields)

    def run_failed(self, error: BaseException) -> Dict[str, Any]:
        return self.log_event(
            "run_failed", seconds=self.elapsed(), error_type=type(error).__name__, message=str(error)
        )

    def elapsed(self) -> float:
        return time.perf_counter() - self._started

    def get_summary_stats(self) -> Dict[str, Any]:
        """ログのサマリー統計を取得"""
        if not self.events:
            return {}
        counts: Dict[str, int] = {}
        for entry in self.events:
            counts[entry["event"]] = counts.get(entry["event"], 0) + 1
        return {
            "total_events": len(self.events),
            "event_counts": counts,
            "wall_clock_seconds": self.elapsed(),
            "failed": counts.get("run_failed", 0) > 0,
        }


__all__ = ["EVENTS", "RunLogger"]
