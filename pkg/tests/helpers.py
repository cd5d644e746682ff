"""Builders shared by several test modules."""
from typing import Optional, Sequence

import numpy as np

from models.schemas import MeasurementTable
from services.simulation import gene_ids

RAW_HEADER = "gene_id,platform,replicate,value\n"


def raw_csv(rows: Sequence[str], header: str = RAW_HEADER) -> bytes:
    """Raw record table from ``gene,platform,replicate,value`` lines."""
    return (header + "".join(r + "\n" for r in rows)).encode("utf-8")


def table_from_arrays(
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
    sizes: Optional[Sequence[int]] = None,
) -> MeasurementTable:
    """Nested prefixes: the first n genes are in A, the first m in B."""
    l = len(z)
    n, m, _ = sizes or (l, l, l)
    ids = gene_ids(l)
    return MeasurementTable(
        genes=ids,
        x={g: float(v) for g, v in zip(ids[:n], x[:n])},
        y={g: float(v) for g, v in zip(ids[:m], y[:m])},
        z={g: float(v) for g, v in zip(ids, z)},
    )
