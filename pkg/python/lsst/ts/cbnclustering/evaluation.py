# This file is part of ts_cbnclustering.
#
# Developed for the Vera C. Rubin Observatory Telescope and Site Systems.
# This product includes software developed by the LSST Project
# (https://www.lsst.org).
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

__all__ = [
    "LABEL_COLUMN",
    "PairCounts",
    "evaluate",
    "jaccard_index",
    "pair_counts",
    "rand_index",
    "read_partition",
    "write_partition",
]

import dataclasses
import logging
import pathlib
import typing

import numpy as np
import pandas as pd

from .cbn import Partition
from .core import ID_COLUMN
from .enums import NOISE_LABEL
from .exceptions import InputFormatError

LABEL_COLUMN = "label"


@dataclasses.dataclass(frozen=True)
class PairCounts:
    """Agreement of two partitions over all unordered point pairs.

    Attributes
    ----------
    tp : `int`
        Pairs together in both partitions.
    tn : `int`
        Pairs apart in both partitions.
    fp : `int`
        Pairs together in the candidate only.
    fn : `int`
        Pairs together in the reference only.
    """

    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def _as_labels(partition: Partition | np.ndarray | typing.Sequence[int]) -> np.ndarray:
    """Return labels in which each noise point is its own cluster."""
    labels = np.array(
        partition.labels if isinstance(partition, Partition) else partition,
        dtype=np.int64,
    )
    noise = labels == NOISE_LABEL
    labels[noise] = labels.max(initial=0) + 1 + np.arange(np.count_nonzero(noise))
    return labels


def _together(counts: np.ndarray) -> int:
    counts = counts.astype(object)
    return int(sum(c * (c - 1) // 2 for c in counts))


def pair_counts(
    reference: Partition | np.ndarray | typing.Sequence[int],
    candidate: Partition | np.ndarray | typing.Sequence[int],
) -> PairCounts:
    """Count pair agreements between a reference and a candidate partition.

    Noise points (`NOISE_LABEL`) are treated as singleton clusters.
    Counting uses the contingency table, so the cost is linear in the
    number of points.

    Raises
    ------
    ValueError
        If the partitions cover different numbers of points.
    """
    ref = _as_labels(reference)
    cand = _as_labels(candidate)
    if ref.size != cand.size:
        raise ValueError(f"Partition sizes differ: {ref.size} != {cand.size}.")
    n = ref.size
    if n == 0:
        return PairCounts(tp=0, tn=0, fp=0, fn=0)
    _, ref_codes = np.unique(ref, return_inverse=True)
    _, cand_codes = np.unique(cand, return_inverse=True)
    joint = np.unique(
        np.column_stack((ref_codes.ravel(), cand_codes.ravel())),
        axis=0,
        return_counts=True,
    )[1]
    tp = _together(joint)
    together_ref = _together(np.bincount(ref_codes.ravel()))
    together_cand = _together(np.bincount(cand_codes.ravel()))
    fn = together_ref - tp
    fp = together_cand - tp
    tn = n * (n - 1) // 2 - tp - fp - fn
    return PairCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def rand_index(counts: PairCounts) -> float:
    """Return (TP + TN) / (TP + TN + FP + FN).

    Raises
    ------
    ValueError
        If there are no pairs (fewer than two points).
    """
    if counts.total == 0:
        raise ValueError("The Rand index needs at least two points.")
    return (counts.tp + counts.tn) / counts.total


def jaccard_index(counts: PairCounts) -> float:
    """Return TP / (TP + FP + FN); 1 if that denominator is 0."""
    denominator = counts.tp + counts.fp + counts.fn
    if denominator == 0:
        return 1.0
    return counts.tp / denominator


def evaluate(
    reference: Partition | np.ndarray | typing.Sequence[int],
    candidate: Partition | np.ndarray | typing.Sequence[int],
) -> dict[str, int | float]:
    """Return the pair counts with the Rand and Jaccard indices."""
    counts = pair_counts(reference, candidate)
    return dict(
        TP=counts.tp,
        TN=counts.tn,
        FP=counts.fp,
        FN=counts.fn,
        rand=rand_index(counts),
        jaccard=jaccard_index(counts),
    )


def read_partition(
    path: str | pathlib.Path, log: logging.Logger | None = None
) -> tuple[tuple[str, ...], Partition]:
    """Read a partition CSV file.

    The file has a ``label`` column and optionally an ``id`` column;
    without ``id`` the points are named by row index. Labels are
    renumbered by first appearance; -1 stays noise.

    Raises
    ------
    InputFormatError
        If the file is empty, has no ``label`` column or holds
        non-integer labels.
    """
    log = log or logging.getLogger(__name__)
    try:
        frame = pd.read_csv(path, dtype={ID_COLUMN: str})
    except pd.errors.EmptyDataError as e:
        raise InputFormatError(f"Partition file {path} is empty.") from e
    except pd.errors.ParserError as e:
        raise InputFormatError(f"Cannot parse partition file {path}: {e}") from e
    if LABEL_COLUMN not in frame.columns or len(frame) == 0:
        raise InputFormatError(f"Partition file {path} has no {LABEL_COLUMN} values.")
    labels = pd.to_numeric(frame[LABEL_COLUMN], errors="coerce")
    if labels.isna().any() or not np.all(labels == np.round(labels)):
        raise InputFormatError(f"Non-integer labels in {path}.")
    labels = labels.to_numpy(dtype=np.int64)
    if np.any(labels < NOISE_LABEL):
        raise InputFormatError(f"Negative labels other than {NOISE_LABEL} in {path}.")
    if ID_COLUMN in frame.columns:
        ids = tuple(frame[ID_COLUMN].astype(str))
    else:
        ids = tuple(str(i) for i in range(len(labels)))
    log.debug(f"Read a partition of {len(labels)} points from {path}.")
    return ids, Partition.from_labels(labels)


def write_partition(
    ids: typing.Sequence[str], partition: Partition, path: str | pathlib.Path
) -> None:
    """Write a partition as CSV with columns ``id`` and ``label``."""
    if len(ids) != partition.n:
        raise ValueError(f"Got {len(ids)} ids for {partition.n} points.")
    frame = pd.DataFrame({ID_COLUMN: list(ids), LABEL_COLUMN: partition.labels})
    frame.to_csv(path, index=False, lineterminator="\n")
