"""Lossless CSV storage of run histories.

A record is an ordered set of named blocks, each an ``(N, k)`` float array
on a shared time grid. Every block expands to ``k`` columns named
``block[0] ... block[k-1]`` (``t`` stays a single column). Estimator blocks
are named ``<estimator>.<field>``.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import RunRecordFormatError
from .measurement import ImuSeries, Trajectory

BASE_BLOCKS = ("R", "v", "omega", "vdot", "y_v", "y_g", "y_a", "y_m")
_COL = re.compile(r"^(?P<name>.+)\[(?P<idx>\d+)\]$")


@dataclass
class RunRecord:
    t: NDArray[np.float64]
    blocks: dict[str, NDArray[np.float64]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        for name, arr in list(self.blocks.items()):
            self.blocks[name] = self._check(name, arr)

    def _check(self, name: str, arr: ArrayLike) -> NDArray[np.float64]:
        a = np.asarray(arr, dtype=float)
        a = a.reshape(len(a), -1) if a.ndim != 2 else a
        if len(a) != len(self.t):
            raise ValueError(f"block {name!r} has {len(a)} rows, expected {len(self.t)}")
        if "[" in name or name == "t":
            raise ValueError(f"invalid block name {name!r}")
        return a

    def __len__(self) -> int:
        return len(self.t)

    def add(self, name: str, arr: ArrayLike) -> None:
        if name in self.blocks:
            raise ValueError(f"duplicate block {name!r}")
        self.blocks[name] = self._check(name, arr)

    def __getitem__(self, name: str) -> NDArray[np.float64]:
        return self.blocks[name]

    def estimators(self) -> list[str]:
        """Estimator names in order of first appearance."""
        seen: list[str] = []
        for name in self.blocks:
            if "." in name:
                est = name.split(".", 1)[0]
                if est not in seen:
                    seen.append(est)
        return seen

    def columns(self) -> list[str]:
        cols = ["t"]
        for name, a in self.blocks.items():
            cols.extend(f"{name}[{k}]" for k in range(a.shape[1]))
        return cols

    def matrix(self) -> NDArray[np.float64]:
        return np.column_stack([self.t] + list(self.blocks.values())) if self.blocks else self.t[:, None]

    @classmethod
    def from_run(cls, traj: Trajectory, series: ImuSeries) -> "RunRecord":
        n = len(traj)
        return cls(
            traj.t.copy(),
            {
                "R": traj.R.reshape(n, 9),
                "v": traj.v,
                "omega": traj.omega,
                "vdot": traj.vdot,
                "y_v": series.y_v,
                "y_g": series.y_g,
                "y_a": series.y_a,
                "y_m": series.y_m,
            },
        )

    @classmethod
    def empty(cls) -> "RunRecord":
        widths = {"R": 9}
        return cls(np.zeros(0), {b: np.zeros((0, widths.get(b, 3))) for b in BASE_BLOCKS})

    def equals(self, other: "RunRecord") -> bool:
        """Bitwise equality of all columns (NaN equal to NaN)."""
        if self.columns() != other.columns():
            return False
        a, b = self.matrix(), other.matrix()
        return a.shape == b.shape and bool(np.array_equal(a, b, equal_nan=True))


def record_run(rr: RunRecord, path: str | Path) -> None:
    """Write ``rr`` as CSV with 17 significant digits (lossless for float64)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rr.columns())
        for row in rr.matrix():
            w.writerow(["%.17g" % x for x in row])


def _parse_header(header: list[str]) -> list[tuple[str, int]]:
    if not header or header[0] != "t":
        raise RunRecordFormatError("header must start with column 't'")
    blocks: list[tuple[str, int]] = []
    for col in header[1:]:
        m = _COL.match(col)
        if m is None:
            raise RunRecordFormatError(f"malformed column name {col!r}")
        name, idx = m.group("name"), int(m.group("idx"))
        if blocks and blocks[-1][0] == name and idx == blocks[-1][1]:
            blocks[-1] = (name, idx + 1)
        elif idx == 0 and all(b[0] != name for b in blocks):
            blocks.append((name, 1))
        else:
            raise RunRecordFormatError(f"column {col!r} out of order")
    return blocks


def replay_run(path: str | Path) -> RunRecord:
    """Read a record written by :func:`record_run`.

    Raises
    ------
    RunRecordFormatError
        On a malformed header or a row with the wrong column count or a
        non-numeric cell; the message names the offending data row (1-based)
        and the last complete one.
    """
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RunRecordFormatError(f"{path}: empty file (no header)") from None
        blocks = _parse_header(header)
        ncol = len(header)
        rows = []
        for i, row in enumerate(reader, start=1):
            if len(row) != ncol:
                raise RunRecordFormatError(
                    f"{path}: data row {i} has {len(row)} columns, expected {ncol}; last complete row is {i - 1}"
                )
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                raise RunRecordFormatError(
                    f"{path}: data row {i} has a non-numeric cell; last complete row is {i - 1}"
                ) from None
    data = np.array(rows, dtype=float).reshape(len(rows), ncol)
    out = RunRecord(data[:, 0].copy())
    c = 1
    for name, width in blocks:
        out.add(name, data[:, c : c + width].copy())
        c += width
    return out


__all__ = ["RunRecord", "record_run", "replay_run", "BASE_BLOCKS"]
