"""Loading and validation of solver time-series CSV files.

The solver writes one row per accepted step with the exact header
``time,dt,newton_iters,min_N,min_P,entropy``. Plot scripts refuse any
file deviating from that schema and never modify their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXPECTED_HEADER = "time,dt,newton_iters,min_N,min_P,entropy"
COLUMNS = EXPECTED_HEADER.split(",")

# shared marker/colour conventions so the two schemes look the same in
# every figure
STYLE = {
    "ddfv": {"color": "tab:purple", "marker": "^"},
    "hfv": {"color": "tab:red", "marker": "p"},
}
EXTRA_COLORS = ["tab:blue", "tab:green", "tab:orange", "tab:brown"]


class SeriesError(Exception):
    """Raised for any schema violation in a series file."""


@dataclass
class SeriesFile:
    """Parsed CSV columns, keyed by the schema names."""

    path: str
    columns: dict

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def n_rows(self) -> int:
        return len(self.columns["time"])


def load_series(path) -> SeriesFile:
    """Parse and validate one CSV file; raises :class:`SeriesError`."""
    path = str(path)
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh]
    lines = [line for line in lines if line.strip()]
    if not lines:
        raise SeriesError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise SeriesError(f"{path}: missing column '{missing[0]}' "
                          f"(expected header '{EXPECTED_HEADER}')")
    if header != COLUMNS:
        raise SeriesError(f"{path}: header '{lines[0]}' does not match "
                          f"'{EXPECTED_HEADER}'")
    if len(lines) < 2:
        raise SeriesError(f"{path}: no data rows")

    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(COLUMNS):
            raise SeriesError(f"{path}:{ln}: expected {len(COLUMNS)} fields, "
                              f"found {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            bad = next(c for c, p in zip(COLUMNS, parts)
                       if not _is_number(p))
            raise SeriesError(f"{path}:{ln}: column '{bad}' is not numeric") \
                from None
    data = np.array(rows)
    columns = {c: data[:, i] for i, c in enumerate(COLUMNS)}
    t = columns["time"]
    if np.any(np.diff(t) <= 0.0):
        raise SeriesError(f"{path}: time column is not strictly increasing")
    return SeriesFile(path, columns)


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False
