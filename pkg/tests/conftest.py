"""Shared fixtures for the mecal test-suite."""
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from models.schemas import MeasurementTable, StructuralTruth  # noqa: E402
from services.simulation import setting_preset, simulate_measurements  # noqa: E402
from tests.helpers import table_from_arrays  # noqa: E402
from utils.rng import seeded_rng  # noqa: E402


@pytest.fixture
def noiseless_table() -> MeasurementTable:
    """Five genes in A on exact lines y = 1 + 2x, z = -1 + 0.5x, plus one B-A and one C-B gene."""
    mu = np.arange(5, dtype=float)
    genes = [f"g{i}" for i in range(1, 8)]
    x = {g: float(v) for g, v in zip(genes[:5], mu)}
    y = {g: float(1 + 2 * v) for g, v in zip(genes[:5], mu)}
    z = {g: float(-1 + 0.5 * v) for g, v in zip(genes[:5], mu)}
    y["g6"], z["g6"] = 4.0, -0.25  # level 1.5
    z["g7"] = 0.5  # level 3.0
    return MeasurementTable(genes=genes, x=x, y=y, z=z)


@pytest.fixture
def setting1() -> StructuralTruth:
    return setting_preset(1)


@pytest.fixture
def make_table() -> Callable[..., tuple]:
    """Factory for tables simulated from a parameter set; returns ``(table, mu)``."""

    def _make(theta: StructuralTruth, sizes: Sequence[int], seed: int = 0, mu: Optional[np.ndarray] = None):
        rng = seeded_rng(seed, "test-table")
        if mu is None:
            mu = rng.normal(0.0, 5.0, sizes[2])
        x, y, z = simulate_measurements(theta, mu, rng)
        return table_from_arrays(x, y, z, sizes), mu

    return _make
