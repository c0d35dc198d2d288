# Copyright 2026 The GMR Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Guided policy search with generative motor reflex policies.

The numerical core is native; this module converts configs and results
between Python dicts and the JSON the core speaks.
"""

from __future__ import annotations

import json
from typing import Any

from gmr._gmr import (
    ContractViolation,
    GmrPolicy,
    NumericalError,
    env_step,
    export_plot_data,
    fit_dynamics,
    lqr_gains,
    reflex_kl,
)
from gmr import _gmr

__all__ = [
    "ContractViolation",
    "GmrPolicy",
    "NumericalError",
    "compare",
    "default_config",
    "env_step",
    "export_plot_data",
    "fit_dynamics",
    "load_config",
    "lqr_gains",
    "normalize_config",
    "reflex_kl",
    "train",
]


def default_config() -> dict[str, Any]:
    """The two-condition point-mass experiment with every field filled in."""
    return json.loads(_gmr.default_config_json())


def normalize_config(config: dict[str, Any]) -> dict[str, Any]:
    """Validates `config` and returns it with defaults made explicit."""
    return json.loads(_gmr.normalize_config_json(json.dumps(config)))


def load_config(path: str) -> dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        return normalize_config(json.load(f))


def train(config: dict[str, Any], out_dir: str = "") -> dict[str, Any]:
    """Runs guided policy search; writes the run directory when `out_dir` is set."""
    return json.loads(_gmr.train_json(json.dumps(config), out_dir))


def compare(config: dict[str, Any], out_dir: str = "") -> dict[str, Any]:
    """Trains GMR and the baseline on shared data and evaluates both."""
    return json.loads(_gmr.compare_json(json.dumps(config), out_dir))
