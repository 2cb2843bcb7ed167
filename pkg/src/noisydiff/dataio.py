"""CSV ingestion and serialization of observation series.

Values are written with 17 significant digits, which round-trips every
finite double exactly.  A JSON sidecar (``<file>.json``) carries the
sampling scheme so a written series can be reloaded without extra flags.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, MissingDataRejected, ParseError, ValidationError
from .preprocess import derive_tuning
from .simulate import ObservationSeries

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none"})
MISSING_POLICIES = ("reject", "ffill")
FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class IngestSpec:
    """Where the data is and how to turn rows into an observation series.

    ``h_n`` is the spacing between rows in raw time units and ``time_unit``
    the length of one model time unit in the same raw units, so the model
    step is ``h_n / time_unit``.  With 0.05 s rows and a two-hour unit this
    gives ``0.05 / 7200 = 6.94e-6``.  ``columns`` selects value columns by
    header name or 0-based position; ``None`` takes every column.
    """

    path: Union[str, Path]
    h_n: float
    columns: Optional[Sequence[Union[int, str]]] = None
    time_unit: float = 1.0
    tau: float = 1.9
    missing: str = "reject"
    state_dim: Optional[int] = None
    delimiter: str = ","

    def __post_init__(self):
        if self.missing not in MISSING_POLICIES:
            raise ValidationError(
                f"missing-value policy must be one of {MISSING_POLICIES}, got {self.missing!r}"
            )
        if not self.time_unit > 0:
            raise ValidationError("time_unit must be positive")
        if not self.model_step > 0 or not math.isfinite(self.model_step):
            raise ValidationError("h_n must be positive after rescaling")
        if self.columns is not None and self.state_dim is not None:
            if len(self.columns) != self.state_dim:
                raise DimensionMismatch(
                    f"{len(self.columns)} columns mapped but the model has state_dim {self.state_dim}"
                )

    @property
    def model_step(self) -> float:
        return float(self.h_n) / float(self.time_unit)


@dataclass
class IngestReport:
    n_rows: int
    n_filled: int
    columns: list
    header: bool


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _resolve_columns(columns, header: Optional[list], width: int) -> list:
    if columns is None:
        return list(range(width))
    out = []
    for c in columns:
        if isinstance(c, str) and not c.lstrip("-").isdigit():
            if header is None or c not in header:
                raise ParseError(f"column {c!r} not found in header {header}", row=1)
            out.append(header.index(c))
        else:
            c = int(c)
            if not 0 <= c < width:
                raise ParseError(f"column index {c} out of range for {width} columns", row=1)
            out.append(c)
    return out


def read_csv_values(spec: IngestSpec):
    """Parse the file into an ``(rows, len(columns))`` float array.

    Returns ``(values, report)``.  Row numbers in errors are 1-based file
    lines, column numbers 1-based fields.
    """
    path = Path(spec.path)
    if not path.exists():
        raise ParseError(f"file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=spec.delimiter)
        rows = iter(reader)
        try:
            first = next(rows)
        except StopIteration:
            raise ParseError("file is empty", row=1) from None
        header = None
        first_line = 1
        toks = [t.strip() for t in first]
        if any(t and not _is_number(t) and t.lower() not in MISSING_TOKENS for t in toks):
            header = toks
            first_data = None
        else:
            first_data = first
        width = len(header) if header is not None else len(first)
        cols = _resolve_columns(spec.columns, header, width)
        values = []
        n_filled = 0

        def parse(raw, line):
            nonlocal n_filled
            if len(raw) == 1 and not raw[0].strip() and width > 1:
                return  # blank line
            if len(raw) != width:
                raise ParseError(
                    f"expected {width} fields, found {len(raw)}", row=line, col=len(raw)
                )
            out = []
            for c in cols:
                tok = raw[c].strip()
                if tok.lower() in MISSING_TOKENS:
                    if spec.missing == "reject":
                        raise MissingDataRejected(
                            f"missing value (policy 'reject')", row=line, col=c + 1
                        )
                    if not values:
                        raise MissingDataRejected(
                            "missing value in the first data row cannot be forward-filled",
                            row=line,
                            col=c + 1,
                        )
                    out.append(values[-1][len(out)])
                    n_filled += 1
                    continue
                try:
                    v = float(tok)
                except ValueError:
                    raise ParseError(f"not a number: {tok!r}", row=line, col=c + 1) from None
                if not math.isfinite(v):
                    raise ParseError(f"non-finite value {tok!r}", row=line, col=c + 1)
                out.append(v)
            values.append(out)

        if first_data is not None:
            parse(first_data, first_line)
        for line, raw in enumerate(rows, start=2):
            parse(raw, line)
    if not values:
        raise ParseError("no data rows" + (" after the header" if header else ""), row=1)
    arr = np.array(values, dtype=float).reshape(len(values), len(cols))
    names = [header[c] for c in cols] if header is not None else [str(c) for c in cols]
    return arr, IngestReport(len(values), n_filled, names, header is not None)


def ingest_csv(spec: IngestSpec, return_report: bool = False):
    """Load an :class:`ObservationSeries` with ``n + 1`` rows."""
    values, report = read_csv_values(spec)
    if spec.state_dim is not None and values.shape[1] != spec.state_dim:
        raise DimensionMismatch(
            f"{values.shape[1]} value columns but the model has state_dim {spec.state_dim}"
        )
    n = values.shape[0] - 1
    scheme = derive_tuning(n, spec.model_step, spec.tau)
    obs = ObservationSeries(values, scheme)
    return (obs, report) if return_report else obs


def write_series_csv(
    obs: ObservationSeries,
    path,
    column_names=None,
    index: bool = True,
    latent: bool = False,
    sidecar: bool = True,
    metadata: Optional[dict] = None,
) -> Path:
    """Write ``index, y1..yd`` (and ``x1..xd`` with ``latent``) with a header row.

    The JSON sidecar records the scheme, the value columns and ``metadata``.
    """
    path = Path(path)
    d = obs.values.shape[1]
    names = list(column_names) if column_names else [f"y{i + 1}" for i in range(d)]
    if len(names) != d:
        raise DimensionMismatch(f"{len(names)} column names for {d} columns")
    blocks = [obs.values]
    header = (["index"] if index else []) + names
    if latent:
        if obs.latent is None:
            raise ValidationError("series has no latent path to write")
        blocks.append(obs.latent)
        header += [f"x{i + 1}" for i in range(d)]
    table = np.hstack(blocks)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(table):
            w.writerow(([i] if index else []) + [FLOAT_FMT % v for v in row])
    if sidecar:
        meta = {"scheme": obs.scheme.as_dict(), "value_columns": names, **(metadata or {})}
        sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")
    return path


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_sidecar(path) -> Optional[dict]:
    p = sidecar_path(path)
    if not p.exists():
        return None
    return json.loads(p.read_text())


def load_series(path, h_n: Optional[float] = None, tau: Optional[float] = None, **kwargs):
    """Ingest a CSV, taking ``h_n`` and ``tau`` from the sidecar when not given."""
    meta = read_sidecar(path) or {}
    scheme = meta.get("scheme", {})
    h = h_n if h_n is not None else scheme.get("h_n")
    t = tau if tau is not None else scheme.get("tau", 1.9)
    if h is None:
        raise ValidationError(f"{path}: h_n not given and no sidecar metadata found")
    kwargs.setdefault("columns", meta.get("value_columns"))
    return ingest_csv(IngestSpec(path=path, h_n=h, tau=t, **kwargs))
