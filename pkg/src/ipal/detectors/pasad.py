"""Subspace-projection detector for a single process variable.

The benign series is assumed to span a low-dimensional signal subspace.
Training embeds the first ``train_length`` values into an
``lag x (train_length - lag + 1)`` trajectory matrix of sliding windows,
takes its leading ``rank`` left singular vectors as an orthonormal basis,
and notes the centroid of the projected training windows.  The departure
score of a window x is the squared distance between the centroid and the
projection of x; the alarm threshold is the maximum departure observed
over windows ending in the validation tail of the training series
(``val_fraction`` = 1.0 makes that simply the maximum training score).

Detection slides a window over the incoming states, opens an interval
alert when the departure exceeds the threshold and closes it when the
score falls back.  Scores can be captured through ``score_sink`` for
plotting.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from typing import Iterable, Iterator, Sequence

import numpy as np

from ..detect import Detector, register
from ..errors import DataError
from ..model import AlertEvent, StateMessage

log = logging.getLogger(__name__)


def _series(records: Iterable[StateMessage], variable: str) -> list[float]:
    values = []
    for st in records:
        if variable not in st.state:
            continue
        v = st.state[variable]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise DataError(f"variable {variable!r} has non-numeric value {v!r}")
        values.append(float(v))
    return values


def trajectory_matrix(series: Sequence[float], lag: int) -> np.ndarray:
    """Sliding windows as columns of a lag x (len-lag+1) matrix."""
    arr = np.asarray(series, dtype=float)
    count = len(arr) - lag + 1
    return np.lib.stride_tricks.sliding_window_view(arr, lag)[:count].T.copy()


def departure(window: np.ndarray, basis: np.ndarray, centroid: np.ndarray) -> float:
    diff = centroid - basis.T @ window
    return float(diff @ diff)


@register
class Pasad(Detector):
    name = "pasad"
    input_kind = "state"
    output_kind = "interval"
    defaults = {
        "variable": None,
        "lag": 50,
        "train_length": 500,
        "rank": 3,
        "val_fraction": 0.2,
    }

    @classmethod
    def train_payload(cls, records: Sequence[StateMessage], cfg: dict) -> dict:
        variable = cfg["variable"]
        if not variable:
            raise DataError("pasad needs a target variable")
        lag, n, rank = cfg["lag"], cfg["train_length"], cfg["rank"]
        if not 1 <= lag < n:
            raise DataError("pasad needs 1 <= lag < train_length")
        if not 1 <= rank <= lag:
            raise DataError("pasad needs 1 <= rank <= lag")
        if not 0 < cfg["val_fraction"] <= 1:
            raise DataError("pasad needs val_fraction in (0, 1]")

        series = _series(records, variable)
        if len(series) < n:
            raise DataError(
                f"insufficient data: {len(series)} values of {variable!r}, "
                f"need train_length={n}"
            )

        matrix = trajectory_matrix(series[:n], lag)
        basis_full, singular, _ = np.linalg.svd(matrix, full_matrices=False)
        if singular[0] > 0:
            numerical_rank = int(np.sum(singular > singular[0] * 1e-10))
        else:
            numerical_rank = 0
        effective = max(1, min(rank, numerical_rank) if numerical_rank else 1)
        if effective < rank:
            log.warning("pasad: rank clamped from %d to numerical rank %d",
                        rank, effective)
        basis = basis_full[:, :effective]
        centroid = (basis.T @ matrix).mean(axis=1)
        basis_lists = [[float(v) for v in row] for row in basis]
        centroid_list = [float(v) for v in centroid]

        # The threshold must be comparable bit-for-bit with detection
        # scores, so compute it with the arrays a detector will rebuild
        # from the payload (contiguous layout changes BLAS rounding).
        basis = np.asarray(basis_lists, dtype=float)
        centroid = np.asarray(centroid_list, dtype=float)

        # threshold: max departure over windows ending in the validation tail
        total = len(series)
        val_start = max(lag - 1, math.floor((1 - cfg["val_fraction"]) * total))
        threshold = 0.0
        for j in range(val_start, total):
            window = np.asarray(series[j - lag + 1:j + 1])
            threshold = max(threshold, departure(window, basis, centroid))

        return {
            "variable": variable,
            "lag": lag,
            "rank": effective,
            "basis": basis_lists,
            "centroid": centroid_list,
            "threshold": threshold,
            "validation_windows": total - val_start,
        }

    @classmethod
    def detect_stream(cls, payload: dict, cfg: dict, records: Iterable[StateMessage],
                      score_sink=None) -> Iterator[AlertEvent]:
        variable = payload["variable"]
        lag = payload["lag"]
        basis = np.asarray(payload["basis"], dtype=float)
        centroid = np.asarray(payload["centroid"], dtype=float)
        threshold = payload["threshold"]

        window: deque[float] = deque(maxlen=lag)
        seen_variable = False
        open_start: float | None = None
        open_end = 0.0
        open_score = 0.0

        for st in records:
            if variable not in st.state:
                continue
            v = st.state[variable]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise DataError(f"variable {variable!r} has non-numeric value {v!r}")
            seen_variable = True
            window.append(float(v))
            if len(window) < lag:
                continue
            score = departure(np.asarray(window), basis, centroid)
            if score_sink is not None:
                score_sink(st.timestamp, score)
            if score > threshold:
                if open_start is None:
                    open_start = st.timestamp
                    open_score = score
                open_end = st.timestamp
                open_score = max(open_score, score)
            elif open_start is not None:
                yield AlertEvent(detector=cls.name, kind="interval",
                                 start=open_start, end=open_end, score=open_score)
                open_start = None

        if not seen_variable:
            raise DataError(f"variable {variable!r} absent from state stream")
        if open_start is not None:
            yield AlertEvent(detector=cls.name, kind="interval",
                             start=open_start, end=open_end, score=open_score)
