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
    "ColumnMapping",
    "ImputationRecord",
    "IngestResult",
    "LoadedObservations",
    "MonthWindow",
    "ObservationRecord",
    "StationSeries",
    "impute_from_neighbors",
    "load_observations",
    "monthly_average",
    "run_ingest",
    "to_point_cloud",
    "write_imputation_report",
    "zscale",
]

import dataclasses
import datetime
import logging
import pathlib
import re
import typing

import numpy as np
import pandas as pd
from sklearn.metrics.pairwise import haversine_distances

from .core import PointCloud
from .exceptions import InputFormatError, ProcessingError

# Secondary date format, tried when ISO 8601 parsing fails.
US_DATE_FORMAT = "%m/%d/%Y"

MONTH_FORMAT = "%Y-%m"

WINDOW_PATTERN = re.compile(r"^(\d{4}-\d{2}):(\d{4}-\d{2})$")


@dataclasses.dataclass(frozen=True)
class ColumnMapping:
    """Names of the input columns."""

    station: str = "station"
    date: str = "date"
    value: str = "value"
    latitude: str = "latitude"
    longitude: str = "longitude"


@dataclasses.dataclass(frozen=True)
class ObservationRecord:
    """One measurement of one station.

    Attributes
    ----------
    station : `str`
        Station identifier.
    timestamp : `datetime.date`
        Date of the measurement.
    value : `float`
        Measured value; finite.
    latitude, longitude : `float` or `None`
        Station location in decimal degrees, if known.
    """

    station: str
    timestamp: datetime.date
    value: float
    latitude: float | None = None
    longitude: float | None = None


@dataclasses.dataclass(frozen=True)
class LoadedObservations:
    records: list[ObservationRecord]
    skipped_rows: int


@dataclasses.dataclass(frozen=True)
class MonthWindow:
    """An inclusive range of calendar months."""

    start: pd.Period
    end: pd.Period

    def __post_init__(self) -> None:
        try:
            start = pd.Period(str(self.start), freq="M")
            end = pd.Period(str(self.end), freq="M")
        except ValueError as e:
            raise ValueError(f"Invalid month in {self.start}..{self.end}: {e}") from e
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)
        if self.end < self.start:
            raise ValueError(f"Empty month window {self.start}..{self.end}.")

    @classmethod
    def parse(cls, text: str) -> "MonthWindow":
        """Parse ``YYYY-MM:YYYY-MM``."""
        match = WINDOW_PATTERN.match(text.strip())
        if match is None:
            raise ValueError(f"Window {text!r} is not of the form YYYY-MM:YYYY-MM.")
        return cls(start=match.group(1), end=match.group(2))

    @property
    def months(self) -> pd.PeriodIndex:
        return pd.period_range(self.start, self.end, freq="M")

    def labels(self) -> tuple[str, ...]:
        """Return the months as ``YYYY-MM`` strings."""
        return tuple(self.months.strftime(MONTH_FORMAT))

    def __len__(self) -> int:
        return len(self.months)


@dataclasses.dataclass(frozen=True)
class StationSeries:
    """Monthly values of one station over a `MonthWindow`.

    Missing months are NaN.
    """

    station: str
    latitude: float | None
    longitude: float | None
    months: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if len(self.values) != len(self.months):
            raise ValueError(
                f"Station {self.station} has {len(self.values)} values "
                f"for {len(self.months)} months."
            )

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def has_location(self) -> bool:
        return self.latitude is not None and self.longitude is not None


@dataclasses.dataclass(frozen=True)
class ImputationRecord:
    """Provenance of one filled cell.

    ``donor`` is the station whose value was copied, or ``station``
    itself if its own observed mean was used.
    """

    station: str
    month: str
    donor: str


@dataclasses.dataclass(frozen=True)
class IngestResult:
    cloud: PointCloud
    months: tuple[str, ...]
    imputations: list[ImputationRecord]
    skipped_rows: int


def _parse_dates(text: pd.Series) -> pd.Series:
    iso = pd.to_datetime(text, format="ISO8601", errors="coerce")
    us = pd.to_datetime(text, format=US_DATE_FORMAT, errors="coerce")
    return iso.fillna(us)


def load_observations(
    path: str | pathlib.Path,
    columns: ColumnMapping | None = None,
    delimiter: str = ",",
    log: logging.Logger | None = None,
) -> LoadedObservations:
    """Read station observations from a delimited text file.

    Dates may be ISO 8601 or ``MM/DD/YYYY``. The latitude and longitude
    columns are optional. Rows with an empty station, an unparseable
    date, a non-finite value or an unparseable location are skipped and
    counted.

    Raises
    ------
    InputFormatError
        If a required column is missing or no row is valid.
    """
    log = log or logging.getLogger(__name__)
    columns = columns or ColumnMapping()
    try:
        frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise InputFormatError(f"Observation file {path} has zero valid rows.") from e
    except pd.errors.ParserError as e:
        raise InputFormatError(f"Cannot parse observation file {path}: {e}") from e
    missing_columns = [
        name
        for name in (columns.station, columns.date, columns.value)
        if name not in frame.columns
    ]
    if missing_columns:
        raise InputFormatError(f"Observation file {path} lacks {missing_columns=}.")

    stations = frame[columns.station].str.strip()
    dates = _parse_dates(frame[columns.date].str.strip())
    values = pd.to_numeric(frame[columns.value], errors="coerce").astype(np.float64)
    valid = (stations != "") & dates.notna() & np.isfinite(values)
    has_location = (
        columns.latitude in frame.columns and columns.longitude in frame.columns
    )
    if has_location:
        latitudes = pd.to_numeric(frame[columns.latitude], errors="coerce")
        longitudes = pd.to_numeric(frame[columns.longitude], errors="coerce")
        valid &= np.isfinite(latitudes.astype(np.float64))
        valid &= np.isfinite(longitudes.astype(np.float64))

    skipped_rows = int((~valid).sum())
    if skipped_rows > 0:
        log.warning(f"Skipped {skipped_rows} invalid rows of {path}.")
    if not valid.any():
        raise InputFormatError(f"Observation file {path} has zero valid rows.")

    records = [
        ObservationRecord(
            station=stations[row],
            timestamp=dates[row].date(),
            value=float(values[row]),
            latitude=float(latitudes[row]) if has_location else None,
            longitude=float(longitudes[row]) if has_location else None,
        )
        for row in frame.index[valid.to_numpy()]
    ]
    log.debug(f"Loaded {len(records)} observations from {path}.")
    return LoadedObservations(records=records, skipped_rows=skipped_rows)


def monthly_average(
    records: typing.Sequence[ObservationRecord], window: MonthWindow
) -> list[StationSeries]:
    """Average the observations of each station per calendar month.

    Returns one series per station, sorted by station id. A station's
    location is that of its first record.
    """
    frame = pd.DataFrame(
        {
            "station": [record.station for record in records],
            "month": pd.DatetimeIndex(
                [record.timestamp for record in records]
            ).to_period("M"),
            "value": [record.value for record in records],
        }
    )
    locations: dict[str, tuple[float | None, float | None]] = dict()
    for record in records:
        locations.setdefault(record.station, (record.latitude, record.longitude))
    means = frame.groupby(["station", "month"])["value"].mean()
    series = []
    for station in sorted(locations):
        values = means.loc[station].reindex(window.months).to_numpy(dtype=np.float64)
        latitude, longitude = locations[station]
        series.append(
            StationSeries(
                station=station,
                latitude=latitude,
                longitude=longitude,
                months=window.labels(),
                values=values,
            )
        )
    return series


def impute_from_neighbors(
    series: typing.Sequence[StationSeries], log: logging.Logger | None = None
) -> tuple[list[StationSeries], list[ImputationRecord]]:
    """Fill missing months from the nearest station observed that month.

    Stations are compared by great-circle distance; equidistant donors
    are resolved in favor of the lower station id. If no station
    observed a month, the station's own observed mean is used. Observed
    cells are never changed and imputed values are never used as donors.

    Returns
    -------
    series : `list` [`StationSeries`]
        Complete series, sorted by station id.
    imputations : `list` [`ImputationRecord`]
        One record per filled cell.

    Raises
    ------
    InputFormatError
        If a station without location needs a donor.
    ProcessingError
        If a station has no observed value at all and no donor for some
        month.
    """
    log = log or logging.getLogger(__name__)
    ordered = sorted(series, key=lambda s: s.station)
    observed = np.array([s.values for s in ordered], dtype=np.float64)
    missing = np.isnan(observed)
    if not missing.any():
        return list(ordered), []
    if not all(s.has_location for s in ordered):
        raise InputFormatError(
            "Station locations are required to impute missing months."
        )

    coordinates = np.radians([[s.latitude, s.longitude] for s in ordered])
    distances = haversine_distances(coordinates)
    filled = observed.copy()
    imputations = []
    for i, station in enumerate(ordered):
        # Stable sort keeps lower station ids first among equal distances.
        donors = [j for j in np.argsort(distances[i], kind="stable") if j != i]
        for month in np.flatnonzero(missing[i]):
            donor = next((j for j in donors if not missing[j, month]), None)
            if donor is None:
                own = observed[i][~missing[i]]
                if own.size == 0:
                    raise ProcessingError(
                        f"Cannot impute {station.station} {station.months[month]}: "
                        "no station observed it and the station has no data."
                    )
                filled[i, month] = own.mean()
                donor = i
            else:
                filled[i, month] = observed[donor, month]
            imputations.append(
                ImputationRecord(
                    station=station.station,
                    month=station.months[month],
                    donor=ordered[donor].station,
                )
            )
    log.info(f"Imputed {len(imputations)} missing monthly values.")
    return [
        dataclasses.replace(s, values=filled[i]) for i, s in enumerate(ordered)
    ], imputations


def zscale(series: typing.Sequence[StationSeries]) -> list[StationSeries]:
    """Scale each series to zero mean and unit sample standard deviation
    (divisor n - 1).

    Raises
    ------
    ValueError
        If a series has missing values.
    ProcessingError
        If a series has fewer than two values or is constant.
    """
    scaled = []
    for s in series:
        if np.any(np.isnan(s.values)):
            raise ValueError(f"Station {s.station} has missing values.")
        if s.values.size < 2:
            raise ProcessingError(f"Station {s.station} needs at least 2 values.")
        deviation = s.values - s.values.mean()
        sd = np.std(s.values, ddof=1)
        if sd == 0:
            raise ProcessingError(f"Station {s.station} has a constant series.")
        scaled.append(dataclasses.replace(s, values=deviation / sd))
    return scaled


def to_point_cloud(series: typing.Sequence[StationSeries]) -> PointCloud:
    """Return one point per station, sorted by station id."""
    ordered = sorted(series, key=lambda s: s.station)
    return PointCloud(
        points=np.array([s.values for s in ordered], dtype=np.float64),
        ids=tuple(s.station for s in ordered),
    )


def write_imputation_report(
    imputations: typing.Sequence[ImputationRecord], path: str | pathlib.Path
) -> None:
    """Write the imputation report as CSV ``station,month,donor``."""
    frame = pd.DataFrame(
        [dataclasses.astuple(record) for record in imputations],
        columns=["station", "month", "donor"],
    )
    frame.to_csv(path, index=False, lineterminator="\n")


def run_ingest(
    path: str | pathlib.Path,
    window: MonthWindow,
    columns: ColumnMapping | None = None,
    delimiter: str = ",",
    log: logging.Logger | None = None,
) -> IngestResult:
    """Load, average, impute and scale station observations."""
    log = log or logging.getLogger(__name__)
    loaded = load_observations(path, columns=columns, delimiter=delimiter, log=log)
    series = monthly_average(loaded.records, window)
    complete, imputations = impute_from_neighbors(series, log=log)
    cloud = to_point_cloud(zscale(complete))
    log.info(f"Ingested {cloud.n} stations over {len(window)} months.")
    return IngestResult(
        cloud=cloud,
        months=window.labels(),
        imputations=imputations,
        skipped_rows=loaded.skipped_rows,
    )
