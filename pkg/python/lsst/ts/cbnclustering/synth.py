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
    "BENCHMARK13_LAYOUT",
    "DATASET_COLUMNS",
    "ShapeSpec",
    "SyntheticDataset",
    "benchmark13",
    "generate",
    "read_layout",
]

import dataclasses
import logging
import pathlib
import typing

import jsonschema
import numpy as np
import pandas as pd
import yaml

from .cbn import Partition
from .core import FLOAT_FORMAT, PointCloud
from .enums import NOISE_LABEL, ShapeKind
from .schemas import registry

BENCHMARK13_LAYOUT = pathlib.Path(__file__).parent / "data" / "benchmark13.yaml"

DATASET_COLUMNS = ("x", "y", "label", "is_noise")

# Minimum number of candidates drawn per rejection sampling round.
MIN_BATCH = 64


@dataclasses.dataclass(frozen=True)
class ShapeSpec:
    """A planar cluster shape with a uniform point sampler.

    Shapes are defined in a local frame, scaled by ``scale``, rotated
    counterclockwise by ``rotation`` radians and moved to ``center``.
    In the local frame:

    * disk: radius ``scale``.
    * annulus: radii ``inner_ratio * scale`` to ``scale``.
    * rectangle: |x| <= scale, |y| <= aspect * scale.
    * crescent: the disk of radius ``scale`` minus the disk of radius
      ``inner_ratio * scale`` centered at (offset * scale, 0).
    * sine_strip: |x| <= scale and a band of width ``aspect * scale``
      around y = amplitude * scale * sin(pi * x / scale).

    Parameters
    ----------
    kind : `ShapeKind`
        Shape kind.
    center : `tuple` [`float`, `float`]
        Center in world coordinates.
    scale : `float`
        Size; > 0.
    count : `int`
        Number of points to sample; >= 1.
    rotation : `float`, optional
        Rotation in radians.
    inner_ratio : `float`, optional
        Inner radius over outer radius of annuli and crescents; in [0, 1).
    aspect : `float`, optional
        Relative height of rectangles, relative width of sine strips.
    offset : `float`, optional
        Relative offset of the disk cut out of a crescent.
    amplitude : `float`, optional
        Relative amplitude of a sine strip.
    """

    kind: ShapeKind
    center: tuple[float, float]
    scale: float
    count: int
    rotation: float = 0.0
    inner_ratio: float = 0.5
    aspect: float = 0.5
    offset: float = 0.4
    amplitude: float = 0.25

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 2:
            raise ValueError(f"Need a 2-D center; got {self.center}.")
        if self.count < 1:
            raise ValueError(f"{self.count=} must be >= 1.")
        if not self.scale > 0:
            raise ValueError(f"{self.scale=} must be > 0.")
        if not 0 <= self.inner_ratio < 1:
            raise ValueError(f"{self.inner_ratio=} must be in [0, 1).")
        if not self.aspect > 0:
            raise ValueError(f"{self.aspect=} must be > 0.")
        if self.offset < 0 or self.amplitude < 0:
            raise ValueError(f"Need offset and amplitude >= 0; got {self}.")

    @property
    def half_extent(self) -> tuple[float, float]:
        """Half width and half height of the shape in the local frame."""
        s = self.scale
        match self.kind:
            case ShapeKind.RECTANGLE:
                return s, self.aspect * s
            case ShapeKind.SINE_STRIP:
                return s, (self.amplitude + self.aspect / 2) * s
            case _:
                return s, s

    def world_bounds(self) -> tuple[float, float, float, float]:
        """Return (xmin, ymin, xmax, ymax) of the rotated local extent."""
        hx, hy = self.half_extent
        cos, sin = abs(np.cos(self.rotation)), abs(np.sin(self.rotation))
        dx = hx * cos + hy * sin
        dy = hx * sin + hy * cos
        x, y = self.center
        return x - dx, y - dy, x + dx, y + dy

    def _contains_local(self, local: np.ndarray) -> np.ndarray:
        x, y = local[:, 0], local[:, 1]
        s = self.scale
        radius2 = x**2 + y**2
        match self.kind:
            case ShapeKind.DISK:
                return radius2 <= s**2
            case ShapeKind.ANNULUS:
                return (radius2 <= s**2) & (radius2 >= (self.inner_ratio * s) ** 2)
            case ShapeKind.RECTANGLE:
                return (np.abs(x) <= s) & (np.abs(y) <= self.aspect * s)
            case ShapeKind.CRESCENT:
                cut2 = (x - self.offset * s) ** 2 + y**2
                return (radius2 <= s**2) & (cut2 > (self.inner_ratio * s) ** 2)
            case ShapeKind.SINE_STRIP:
                curve = self.amplitude * s * np.sin(np.pi * x / s)
                return (np.abs(x) <= s) & (np.abs(y - curve) <= self.aspect * s / 2)
            case _:
                raise ValueError(f"Unknown {self.kind=}.")

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """Map world coordinates to the local frame."""
        cos, sin = np.cos(self.rotation), np.sin(self.rotation)
        shifted = np.asarray(points, dtype=np.float64) - np.array(self.center)
        return shifted @ np.array([[cos, -sin], [sin, cos]])

    def to_world(self, local: np.ndarray) -> np.ndarray:
        """Map local coordinates to world coordinates."""
        cos, sin = np.cos(self.rotation), np.sin(self.rotation)
        return local @ np.array([[cos, sin], [-sin, cos]]) + np.array(self.center)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Return which of the (n, 2) world ``points`` lie in the shape."""
        return self._contains_local(self.to_local(points))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw ``count`` points uniformly from the shape by rejection
        sampling from its local extent."""
        hx, hy = self.half_extent
        accepted: list[np.ndarray] = []
        remaining = self.count
        while remaining > 0:
            batch = max(MIN_BATCH, 2 * remaining)
            candidates = np.column_stack(
                (rng.uniform(-hx, hx, size=batch), rng.uniform(-hy, hy, size=batch))
            )
            kept = candidates[self._contains_local(candidates)][:remaining]
            accepted.append(kept)
            remaining -= len(kept)
        return self.to_world(np.concatenate(accepted))


@dataclasses.dataclass(frozen=True)
class SyntheticDataset:
    """A labeled synthetic point cloud.

    Attributes
    ----------
    cloud : `PointCloud`
        The points; shape points first, in shape order, then noise.
    truth : `Partition`
        Shape index of every point; noise points carry `NOISE_LABEL`.
    noise : `numpy.ndarray`
        Boolean noise flag of every point.
    seed : `int`
        Seed the dataset was generated with.
    """

    cloud: PointCloud
    truth: Partition
    noise: np.ndarray
    seed: int

    def to_frame(self) -> pd.DataFrame:
        points = self.cloud.points
        return pd.DataFrame(
            {
                "x": points[:, 0],
                "y": points[:, 1],
                "label": self.truth.labels,
                "is_noise": self.noise.astype(np.int64),
            },
            columns=list(DATASET_COLUMNS),
        )

    def write_csv(self, path: str | pathlib.Path) -> None:
        """Write the dataset as CSV with columns ``x,y,label,is_noise``."""
        self.to_frame().to_csv(
            path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )


def generate(
    specs: typing.Sequence[ShapeSpec],
    noise_count: int,
    box: typing.Sequence[float],
    seed: int,
    log: logging.Logger | None = None,
) -> SyntheticDataset:
    """Generate a labeled dataset of shaped clusters and uniform noise.

    All draws come from one `numpy.random.PCG64` stream seeded with
    ``seed``, so the output is identical across runs and platforms.

    Parameters
    ----------
    specs : sequence of `ShapeSpec`
        The shapes; shape i gets ground-truth label i.
    noise_count : `int`
        Number of noise points drawn uniformly in ``box``.
    box : sequence of `float`
        Bounding box (xmin, ymin, xmax, ymax).
    seed : `int`
        Random seed.
    log : `logging.Logger` or `None`, optional
        Logger.

    Raises
    ------
    ValueError
        If there are no shapes, the box is degenerate, the noise count is
        negative or a shape does not fit in the box.
    """
    log = log or logging.getLogger(__name__)
    if len(specs) == 0:
        raise ValueError("Need at least one shape.")
    if len(box) != 4:
        raise ValueError(f"Need a box (xmin, ymin, xmax, ymax); got {box}.")
    xmin, ymin, xmax, ymax = (float(value) for value in box)
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"Degenerate {box=}.")
    if noise_count < 0:
        raise ValueError(f"{noise_count=} must be >= 0.")
    for spec in specs:
        sxmin, symin, sxmax, symax = spec.world_bounds()
        if sxmin < xmin or symin < ymin or sxmax > xmax or symax > ymax:
            raise ValueError(f"Shape {spec} does not fit in {box=}.")

    rng = np.random.Generator(np.random.PCG64(seed))
    points = [spec.sample(rng) for spec in specs]
    labels = [np.full(spec.count, label) for label, spec in enumerate(specs)]
    points.append(
        np.column_stack(
            (
                rng.uniform(xmin, xmax, size=noise_count),
                rng.uniform(ymin, ymax, size=noise_count),
            )
        )
    )
    labels.append(np.full(noise_count, NOISE_LABEL))
    all_labels = np.concatenate(labels)
    log.debug(
        f"Generated {len(all_labels)} points in {len(specs)} shapes with {noise_count=}."
    )
    return SyntheticDataset(
        cloud=PointCloud(points=np.concatenate(points)),
        truth=Partition(labels=all_labels),
        noise=all_labels == NOISE_LABEL,
        seed=seed,
    )


def read_layout(
    path: str | pathlib.Path,
) -> tuple[tuple[float, float, float, float], list[ShapeSpec]]:
    """Read a YAML shape layout.

    Returns
    -------
    box : `tuple` [`float`, `float`, `float`, `float`]
        Bounding box (xmin, ymin, xmax, ymax).
    specs : `list` [`ShapeSpec`]
        The shapes.

    Raises
    ------
    jsonschema.ValidationError
        If the layout does not match the ``shape_layout`` schema.
    """
    with open(path, "r") as f:
        layout = yaml.safe_load(f)
    jsonschema.validate(layout, registry["shape_layout"])
    box = tuple(float(value) for value in layout["box"])
    specs = [ShapeSpec(**shape) for shape in layout["shapes"]]
    return box, specs  # type: ignore[return-value]


def benchmark13(seed: int = 0, noise_count: int = 0) -> SyntheticDataset:
    """Generate the 13-shape benchmark of 3800 points.

    The layout is a face (ring outline, two disk eyes, two bar brows, a
    wavy nose and a crescent mouth) flanked by two columns of three
    shapes each. The smallest gap between shapes is 2, several times the
    typical spacing of neighboring points.
    """
    box, specs = read_layout(BENCHMARK13_LAYOUT)
    return generate(specs, noise_count, box, seed)
