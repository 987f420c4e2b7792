"""Plain-text measure files.

Format::

    # obslab-measure v1
    space: Circle
    repr: atoms            (or: histogram)
    resolution: 1024       (histograms only; "128 128" in 2-d)
    ---
    0.25 0.5               (atoms: coordinates then weight)
    17 0.0009765625        (histograms: flat bin index then weight)

Numbers are written with ``repr`` so a write/read cycle is bit-exact.
Histogram bins absent from the record list carry zero weight.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from obslab.errors import MeasureParseError, NormalizationError, ValidationError
from obslab.measure_core.measure import MASS_TOL, ProbMeasure
from obslab.measure_core.space import PhaseSpace

MAGIC = "# obslab-measure v1"


def format_measure(mu: ProbMeasure) -> str:
    lines = [MAGIC, f"space: {mu.space.kind.value}", f"repr: {mu.repr}"]
    if mu.repr == "histogram":
        lines.append("resolution: " + " ".join(str(n) for n in mu.resolution))
    lines.append("---")
    if mu.repr == "atoms":
        for p, w in zip(mu.points, mu.weights):
            lines.append(" ".join(repr(float(c)) for c in p) + " " + repr(float(w)))
    else:
        flat = mu.weights.reshape(-1)
        for j in np.nonzero(flat)[0]:
            lines.append(f"{int(j)} {float(flat[j])!r}")
    return "\n".join(lines) + "\n"


def write_measure(mu: ProbMeasure, path) -> Path:
    path = Path(path)
    atomic_write_text(path, format_measure(mu))
    return path


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _float(tok: str, lineno: int, fieldname: str) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise MeasureParseError(f"not a number: {tok!r}", lineno, fieldname) from None
    if not np.isfinite(val):
        raise MeasureParseError(f"non-finite value {tok!r}", lineno, fieldname)
    return val


def parse_measure(text: str) -> ProbMeasure:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise MeasureParseError("missing header line", 1, "magic")
    header: dict[str, tuple[str, int]] = {}
    body_start = None
    for i, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "---":
            body_start = i
            break
        if ":" not in line:
            raise MeasureParseError(f"expected 'key: value', got {line!r}", i, "header")
        key, val = (s.strip() for s in line.split(":", 1))
        if key not in ("space", "repr", "resolution"):
            raise MeasureParseError(f"unknown header key {key!r}", i, key)
        header[key] = (val, i)
    if body_start is None:
        raise MeasureParseError("missing '---' separator", len(lines), "separator")
    for key in ("space", "repr"):
        if key not in header:
            raise MeasureParseError(f"missing header key {key!r}", body_start, key)
    try:
        space = PhaseSpace.parse(header["space"][0])
    except Exception:
        raise MeasureParseError(
            f"unknown space {header['space'][0]!r}", header["space"][1], "space"
        ) from None
    kind = header["repr"][0]
    if kind not in ("atoms", "histogram"):
        raise MeasureParseError(f"unknown repr {kind!r}", header["repr"][1], "repr")

    records = [
        (i, ln.split())
        for i, ln in enumerate(lines[body_start:], start=body_start + 1)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if kind == "atoms":
        width = space.dimension + 1
        pts, wts = [], []
        for i, toks in records:
            if len(toks) != width:
                raise MeasureParseError(f"expected {width} fields, got {len(toks)}", i, "record")
            pts.append([_float(t, i, f"coord{c}") for c, t in enumerate(toks[:-1])])
            w = _float(toks[-1], i, "weight")
            if w < 0:
                raise ValidationError(f"negative weight on line {i}")
            wts.append(w)
        if not wts:
            raise MeasureParseError("no atom records", len(lines), "record")
        _check_mass(wts)
        return ProbMeasure.atoms(space, np.array(pts), np.array(wts))

    if "resolution" not in header:
        raise MeasureParseError("histogram without resolution", body_start, "resolution")
    rtxt, rline = header["resolution"]
    try:
        res = tuple(int(t) for t in rtxt.split())
    except ValueError:
        raise MeasureParseError(f"bad resolution {rtxt!r}", rline, "resolution") from None
    if len(res) != space.dimension or min(res) < 1:
        raise MeasureParseError(f"bad resolution {rtxt!r}", rline, "resolution")
    size = int(np.prod(res))
    flat = np.zeros(size)
    for i, toks in records:
        if len(toks) != 2:
            raise MeasureParseError(f"expected 2 fields, got {len(toks)}", i, "record")
        try:
            j = int(toks[0])
        except ValueError:
            raise MeasureParseError(f"bad bin index {toks[0]!r}", i, "bin_index") from None
        if not 0 <= j < size:
            raise MeasureParseError(f"bin index {j} out of range", i, "bin_index")
        w = _float(toks[1], i, "weight")
        if w < 0:
            raise ValidationError(f"negative bin weight on line {i}")
        flat[j] = w
    _check_mass(flat)
    return ProbMeasure.histogram(space, flat.reshape(res))


def _check_mass(weights) -> None:
    total = float(np.sum(weights))
    if abs(total - 1.0) > MASS_TOL:
        raise NormalizationError(f"weights sum to {total!r}, not 1")


def read_measure(path) -> ProbMeasure:
    return parse_measure(Path(path).read_text(encoding="utf-8"))


def measure_io(mode: str, path, mu: ProbMeasure | None = None):
    """Read (mode 'r') or write (mode 'w') a measure file."""
    if mode in ("r", "read"):
        return read_measure(path)
    if mode in ("w", "write"):
        if mu is None:
            raise ValueError("write mode needs a measure")
        write_measure(mu, path)
        return mu
    raise ValueError(f"unknown mode {mode!r}")
