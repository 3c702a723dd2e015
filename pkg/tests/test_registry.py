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

import unittest

import jsonschema
from lsst.ts import cbnclustering


class RegistryTestCase(unittest.TestCase):
    def test_registry(self) -> None:
        # Make sure that the expected schemas are in the registry.
        registry = dict(cbnclustering.registry)
        for name in ["baseline", "cluster", "generate", "ingest"]:
            registry.pop(f"config_{name}")
        registry.pop("shape_layout")

        # Make sure that no other schemas are in the registry.
        assert len(registry) == 0

    def test_schemas_are_valid(self) -> None:
        for name, schema in cbnclustering.registry.items():
            with self.subTest(name=name):
                jsonschema.Draft7Validator.check_schema(schema)

    def test_defaults_validate(self) -> None:
        for name in ["baseline", "cluster", "generate", "ingest"]:
            schema_name = f"config_{name}"
            with self.subTest(name=schema_name):
                defaults = cbnclustering.schema_defaults(schema_name)
                jsonschema.validate(defaults, cbnclustering.registry[schema_name])

    def test_schema_defaults(self) -> None:
        defaults = cbnclustering.schema_defaults("config_cluster")
        assert defaults["k"] == 12
        assert defaults["tau0"] == "auto"
        assert defaults["grid_size"] == 100
        assert "threads" not in defaults
        assert cbnclustering.schema_defaults("shape_layout") == dict()
