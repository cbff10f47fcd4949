"""Dataset ingestion, quantile normalization, response preprocessing.

Predictors are mapped column-by-column to (0, 1) by average rank over
the training sample divided by n+1, which keeps values strictly
interior (cutpoints live in open intervals) and makes each column
approximately Uniform(0, 1).  The per-column transform map is stored so
new data can be pushed through the training empirical cdf by linear
interpolation, clamped to [1/(n+1), n/(n+1)].

Responses are put on a model-specific working scale, and the constants
are kept so predictions come back on the original scale: the gamma
hurdle scales the non-zero responses to mean 1, the log-normal hurdle
standardizes the finite log-responses to mean 0 / sd 1, and the mixed
model standardizes the continuous response.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DataError

__all__ = [
    "QuantileMap",
    "Dataset",
    "quantile_normalize",
    "load_csv",
    "write_csv",
    "preprocess_response",
]


@dataclass
class QuantileMap:
    """Monotone map from raw column values to average-rank scores."""

    values: np.ndarray  # sorted unique training values
    scores: np.ndarray  # normalized average ranks of those values
    n_train: int

    def transform(self, col) -> np.ndarray:
        col = np.asarray(col, dtype=float)
        lo = 1.0 / (self.n_train + 1.0)
        hi = self.n_train / (self.n_train + 1.0)
        return np.clip(np.interp(col, self.values, self.scores), lo, hi)


def quantile_normalize(col) -> tuple[np.ndarray, QuantileMap]:
    """Average-rank normalization of one column: x -> rank(x)/(n+1).

    Ties share their average rank; a constant column maps to 0.5.
    """
    col = np.asarray(col, dtype=float)
    if col.size < 1:
        raise DataError("cannot normalize an empty column")
    if not np.all(np.isfinite(col)):
        raise DataError("non-finite value in predictor column")
    n = col.size
    scores = rankdata(col, method="average") / (n + 1.0)
    values, first_idx = np.unique(col, return_index=True)
    return scores, QuantileMap(values, scores[first_idx], n)


@dataclass
class Dataset:
    """Predictors normalized into [0,1]^P plus the response column(s)."""

    X: np.ndarray
    y: np.ndarray
    columns: list
    maps: list
    z: np.ndarray | None = None
    response_name: str = "y"
    binary_name: str | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def transform_new(self, X_raw) -> np.ndarray:
        """Push new raw predictors through the stored training maps."""
        X_raw = np.asarray(X_raw, dtype=float)
        if X_raw.ndim != 2 or X_raw.shape[1] != self.p:
            raise DataError(
                f"new data has {X_raw.shape[1] if X_raw.ndim == 2 else '?'} "
                f"columns, expected {self.p}"
            )
        out = np.empty_like(X_raw)
        for j, qmap in enumerate(self.maps):
            out[:, j] = qmap.transform(X_raw[:, j])
        return out


def _parse_cell(text, line_no, col_name):
    try:
        return float(text)
    except ValueError:
        raise DataError(
            f"non-numeric value {text!r} at line {line_no}, column {col_name!r}"
        ) from None


def load_csv(path, response, binary=None, normalize=True) -> Dataset:
    """Load a headered numeric CSV into a Dataset.

    Parameters
    ----------
    path : str
        CSV file with a header row.
    response : str
        Name of the response column.
    binary : str, optional
        Name of an extra binary-response column (mixed-response data).
    normalize : bool
        Quantile-normalize the predictors (identity maps otherwise).
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open data file {path!r}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty data file {path!r}") from None
        header = [h.strip() for h in header]
        if response not in header:
            raise DataError(f"response column {response!r} not in header {header}")
        if binary is not None and binary not in header:
            raise DataError(f"binary column {binary!r} not in header {header}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"ragged row at line {line_no}: "
                    f"{len(row)} fields, expected {len(header)}"
                )
            rows.append(
                [_parse_cell(c, line_no, header[j]) for j, c in enumerate(row)]
            )
    if not rows:
        raise DataError(f"no data rows in {path!r}")
    mat = np.asarray(rows, dtype=float)
    y_idx = header.index(response)
    z_idx = header.index(binary) if binary is not None else None
    drop = {y_idx} | ({z_idx} if z_idx is not None else set())
    pred_idx = [j for j in range(len(header)) if j not in drop]
    if not pred_idx:
        raise DataError("no predictor columns left after removing responses")
    X_raw = mat[:, pred_idx]
    y = mat[:, y_idx]
    z = mat[:, z_idx] if z_idx is not None else None
    columns = [header[j] for j in pred_idx]
    if normalize:
        X = np.empty_like(X_raw)
        maps = []
        for j in range(X_raw.shape[1]):
            X[:, j], qmap = quantile_normalize(X_raw[:, j])
            maps.append(qmap)
    else:
        X = X_raw.copy()
        maps = [
            QuantileMap(np.array([0.0, 1.0]), np.array([0.0, 1.0]), X.shape[0])
            for _ in range(X.shape[1])
        ]
    return Dataset(
        X=X,
        y=y,
        columns=columns,
        maps=maps,
        z=z,
        response_name=response,
        binary_name=binary,
    )


def write_csv(path, columns, arrays) -> None:
    """Write named columns to CSV with full float round-trip precision."""
    arrays = [np.asarray(a) for a in arrays]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for i in range(arrays[0].shape[0]):
            writer.writerow([repr(float(a[i])) for a in arrays])


def preprocess_response(y, kind: str):
    """Model-specific working response plus back-transform constants.

    Returns ``(working, constants)``:

    * ``"gamma"``: responses scaled so the non-zero part has mean
      exactly 1; working response has the same length as y.
      ``constants = {"scale": c}``.
    * ``"lognormal"``: working response is the standardized log of the
      positive y's only (mean 0, sd 1, population sd);
      ``constants = {"loc", "scale"}`` on the log scale.
    * ``"mixed"``: the full response standardized to mean 0 / sd 1;
      ``constants = {"loc", "scale"}``.
    """
    y = np.asarray(y, dtype=float)
    if kind in ("gamma", "lognormal"):
        if np.any(y < 0):
            raise DataError("semicontinuous response must be nonnegative")
        pos = y > 0
        n_pos = int(pos.sum())
        if n_pos == 0:
            raise DataError("all responses are zero; nothing to model")
        if kind == "gamma":
            if n_pos < 2:
                raise DataError("need at least 2 positive responses")
            c = float(y[pos].mean())
            return y / c, {"scale": c}
        if n_pos < 2:
            raise DataError("need at least 2 positive responses")
        w = np.log(y[pos])
        loc = float(w.mean())
        scale = float(w.std())
        if scale == 0.0:
            raise DataError("positive responses are constant; log-sd is zero")
        return (w - loc) / scale, {"loc": loc, "scale": scale}
    if kind == "mixed":
        loc = float(y.mean())
        scale = float(y.std())
        if scale == 0.0:
            raise DataError("response is constant")
        return (y - loc) / scale, {"loc": loc, "scale": scale}
    raise DataError(f"unknown model kind {kind!r}")
