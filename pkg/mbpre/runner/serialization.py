"""
Result serialization: CSV tables, JSON summaries and the run manifest
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.17g"


@dataclass
class RunManifest:
    """再実行に必要な情報と出力ファイルのダイジェスト"""
    command: str
    version: str
    config: Dict[str, Any]
    created_at: str
    wall_clock_seconds: float
    workers: int
    chunk_size: int
    stream_ids: List[Dict[str, Any]] = field(default_factory=list)
    files: Dict[str, str] = field(default_factory=dict)  # ファイル名 -> sha256


def sha256_of(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def to_jsonable(value: Any) -> Any:
    """numpy の値を JSON に変換（非有限の実数は null）"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class ResultSerializer:
    """出力ディレクトリへの書き出し。書いたファイルのダイジェストを記録する"""

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.digests: Dict[str, str] = {}

    def _record(self, path: Path) -> Path:
        self.digests[path.name] = sha256_of(path)
        return path

    def write_csv(self, frame: pd.DataFrame, name: str) -> Path:
        """カンマ区切り・UTF-8・ヘッダ付き・改行 \\n・実数は有効数字17桁"""
        path = self.output_dir / name
        frame.to_csv(
            path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8"
        )
        return self._record(path)

    def write_json(self, data: Any, name: str, record: bool = True) -> Path:
        path = self.output_dir / name
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(to_jsonable(data), f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
        return self._record(path) if record else path

    def write_text(self, text: str, name: str) -> Path:
        path = self.output_dir / name
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        return self._record(path)

    def write_manifest(self, manifest: RunManifest, name: str = "manifest.json") -> Path:
        """マニフェスト自身はダイジェストの対象外"""
        manifest.files = dict(sorted(self.digests.items()))
        return self.write_json(asdict(manifest), name, record=False)

    @staticmethod
    def load_manifest(path: Union[str, Path]) -> RunManifest:
        with open(path, "r", encoding="utf-8") as f:
            return RunManifest(**json.load(f))


__all__ = [
    "FLOAT_FORMAT",
    "RunManifest",
    "ResultSerializer",
    "sha256_of",
    "to_jsonable",
]
