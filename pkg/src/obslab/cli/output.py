"""Atomic, hash-stamped output files and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import platform
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from obslab import __version__
from obslab.measure_core.io import MAGIC, atomic_write_text, format_measure

PARTIAL_MARKER = "PARTIAL"


def config_hash(canonical: dict) -> str:
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def versions() -> dict:
    import matplotlib
    import numba
    import scipy
    import statsmodels

    return {"obslab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__,
            "statsmodels": statsmodels.__version__, "matplotlib": matplotlib.__version__}


class OutputDir:
    """Every file written here carries the manifest (config) hash; nothing
    time-dependent is recorded, so reruns are byte-identical."""

    def __init__(self, path, manifest_hash: str, config: dict, seed: int, command: str):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.hash = manifest_hash
        self.config = config
        self.seed = seed
        self.command = command
        self.files: list[str] = []
        marker = self.path / PARTIAL_MARKER
        if marker.exists():
            marker.unlink()

    def _record(self, name: str):
        if name not in self.files:
            self.files.append(name)

    def write_text(self, name: str, text: str) -> str:
        atomic_write_text(self.path / name, text)
        self._record(name)
        return name

    def write_json(self, name: str, data: dict) -> str:
        body = dict(_jsonable(data))
        body["manifest"] = self.hash
        return self.write_text(name, json.dumps(body, indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
        buf = io.StringIO()
        buf.write(f"# manifest: {self.hash}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(list(header))
        for row in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else
                         int(v) if isinstance(v, (np.integer,)) else v for v in row])
        return self.write_text(name, buf.getvalue())

    def write_measure(self, name: str, mu) -> str:
        text = format_measure(mu)
        head, rest = text.split("\n", 1)
        assert head == MAGIC
        return self.write_text(name, f"{head}\n# manifest: {self.hash}\n{rest}")

    def write_png(self, name: str, fig) -> str:
        """Agg PNG with the manifest hash as metadata and no timestamp or version."""
        import matplotlib.pyplot as plt

        buf = io.BytesIO()
        fig.savefig(buf, format="png", dpi=100,
                    metadata={"Software": None, "Description": f"manifest {self.hash}"})
        plt.close(fig)
        tmp = self.path / f".{name}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, self.path / name)
        self._record(name)
        return name

    def mark_partial(self, reason: str):
        atomic_write_text(self.path / PARTIAL_MARKER, f"# manifest: {self.hash}\n{reason}\n")

    def finish(self, status: str = "complete", error: Optional[str] = None) -> str:
        entries = []
        for name in sorted(self.files):
            data = (self.path / name).read_bytes()
            entries.append({"file": name, "sha256": hashlib.sha256(data).hexdigest()})
        manifest = {
            "config_hash": self.hash, "seed": int(self.seed), "command": self.command,
            "status": status, "error": error, "versions": versions(), "files": entries,
            "config": self.config,
        }
        atomic_write_text(self.path / "manifest.json",
                          json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
        return "manifest.json"
