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

__all__ = ["THREADS_ENV_VAR", "default_threads", "load_config", "merge_config"]

import os
import pathlib
import types
import typing

import jsonschema
import yaml

from .schemas import registry, schema_defaults

# Environment variable supplying the default parallelism degree.
THREADS_ENV_VAR = "CBN_THREADS"


def default_threads() -> int:
    """Return the parallelism degree from ``CBN_THREADS``, or 1."""
    value = os.environ.get(THREADS_ENV_VAR, "")
    try:
        threads = int(value)
    except ValueError:
        return 1
    return max(threads, 1)


def load_config(
    schema_name: str, path: str | pathlib.Path | None = None
) -> dict[str, typing.Any]:
    """Load and validate a YAML configuration file.

    Parameters
    ----------
    schema_name : `str`
        Name of the JSON schema in the registry, e.g. ``config_cluster``.
    path : `str`, `pathlib.Path` or `None`, optional
        Path of the YAML file. If None only the schema defaults are
        returned.

    Returns
    -------
    config : `dict` [`str`, `typing.Any`]
        Schema defaults overridden by the values in the file.

    Raises
    ------
    jsonschema.ValidationError
        If the file contents do not match the schema.
    """
    if schema_name not in registry:
        raise RuntimeError(f"Unknown {schema_name=}.")
    config = schema_defaults(schema_name)
    if path is None:
        return config
    with open(path, "r") as f:
        data = yaml.safe_load(f) or dict()
    jsonschema.validate(data, registry[schema_name])
    config.update(data)
    return config


def merge_config(
    config: dict[str, typing.Any], overrides: dict[str, typing.Any]
) -> types.SimpleNamespace:
    """Apply command line values on top of a loaded configuration.

    Parameters
    ----------
    config : `dict` [`str`, `typing.Any`]
        Configuration as returned by `load_config`.
    overrides : `dict` [`str`, `typing.Any`]
        Values given on the command line. None means "not given".

    Returns
    -------
    merged : `types.SimpleNamespace`
        The merged configuration.
    """
    merged = dict(config)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return types.SimpleNamespace(**merged)
