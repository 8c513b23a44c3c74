"""
Artifact writer for experiment runs.

Every artifact lands in a per-kind subdirectory of the output directory:
1. JSON reports - machine-readable verdicts and numbers
2. Text reports - aligned columns for reading
3. CSV tables - oracle tables, raw estimates, trajectories
Path files go to paths/. File names are deterministic and the report bytes
carry no timestamps; the .meta.json sidecar records when a file was written.
"""

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd
from pydantic import BaseModel

from src.exceptions import InputError
from src.logger import logger


REPORT_KINDS = ("mech", "simulate", "flow", "ode", "converge", "verify", "paths")


def _slug(label: str) -> str:
    keep = [c if c.isalnum() or c in "-." else "-" for c in label]
    return "".join(keep).strip("-") or "run"


class ReportManager:
    """Writes JSON / text / CSV artifacts with .meta.json sidecars."""

    def __init__(self, base_dir: Union[str, Path] = "results", config_hash: str = "", master_seed: Optional[int] = None):
        self.base_dir = Path(base_dir)
        self.config_hash = config_hash
        self.master_seed = master_seed
        self.written: List[Path] = []
        self.ensure_directories()

    def ensure_directories(self):
        self.base_dir.mkdir(parents=True, exist_ok=True)

    def directory(self, kind: str) -> Path:
        if kind not in REPORT_KINDS:
            raise InputError(f"Unknown report kind '{kind}', choose from {REPORT_KINDS}")
        path = self.base_dir / kind
        path.mkdir(parents=True, exist_ok=True)
        return path

    def generate_filename(self, kind: str, label: str, extension: str) -> str:
        """<kind>_<label>_<hash12>.<ext>"""
        return f"{kind}_{_slug(label)}_{self.config_hash[:12] or 'nohash'}.{extension}"

    def report_path(self, kind: str, label: str, extension: str) -> Path:
        return self.directory(kind) / self.generate_filename(kind, label, extension)

    def register(self, kind: str, label: str, file_path: Path, metadata: Optional[Dict] = None) -> Path:
        """Record a file written elsewhere (oracle tables, trajectories) with its sidecar."""
        file_path = Path(file_path)
        if not file_path.is_file():
            raise InputError(f"cannot register missing artifact {file_path}")
        meta_path = file_path.with_suffix(".meta.json")
        with open(meta_path, "w", encoding="utf-8") as f:
            json.dump(
                {
                    **(metadata or {}),
                    "report_kind": kind,
                    "label": label,
                    "config_hash": self.config_hash,
                    "master_seed": self.master_seed,
                    "created_at": datetime.now().isoformat(),
                    "file_size": file_path.stat().st_size,
                    "filename": file_path.name,
                },
                f,
                ensure_ascii=False,
                indent=2,
            )
        self.written.append(file_path)
        logger.info(f"Saved {kind} artifact: {file_path}")
        return file_path

    def _write(self, kind: str, label: str, extension: str, content: str, metadata: Optional[Dict] = None) -> Path:
        file_path = self.report_path(kind, label, extension)
        with open(file_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(content)
        return self.register(kind, label, file_path, metadata)

    def save_json(self, kind: str, label: str, data: Union[BaseModel, Dict[str, Any]], metadata: Optional[Dict] = None) -> Path:
        payload = data.model_dump(mode="json") if isinstance(data, BaseModel) else dict(data)
        payload = {"config_hash": self.config_hash, "master_seed": self.master_seed, **payload}
        content = json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
        return self._write(kind, label, "json", content, metadata)

    def save_text(self, kind: str, label: str, title: str, tables: Dict[str, Sequence[dict]], metadata: Optional[Dict] = None) -> Path:
        """Aligned-column text: a header, then one block per table."""
        lines = [title, f"config_hash {self.config_hash}", f"master_seed {self.master_seed}", ""]
        for name, rows in tables.items():
            lines.append(f"[{name}]")
            frame = pd.DataFrame(list(rows))
            lines.append(frame.to_string(index=False) if not frame.empty else "(empty)")
            lines.append("")
        return self._write(kind, label, "txt", "\n".join(lines), metadata)

    def save_csv(self, kind: str, label: str, rows: Union[pd.DataFrame, Sequence[dict]], metadata: Optional[Dict] = None) -> Path:
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
        if "config_hash" not in frame.columns:
            frame = frame.assign(config_hash=self.config_hash)
        content = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
        return self._write(kind, label, "csv", content, metadata)
