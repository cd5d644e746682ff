"""Residual diagnostics over set A."""
from typing import Dict, Iterable, List

import numpy as np
import pandas as pd
from scipy.stats import norm

from models.errors import InsufficientDataError
from models.schemas import MeasurementTable, ResidualRow, Source, StructuralFit
from services.core_model import check_path, gls_estimate

COMPONENTS = ("e1", "e2", "e3")


def residual_frame(rows: Iterable[ResidualRow]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in rows], columns=["gene_id", *COMPONENTS])


def qq_pairs(rows: List[ResidualRow]) -> pd.DataFrame:
    """
    Sorted residuals against standard-normal quantiles at plotting positions (i - 0.5) / n.

    ``standardized`` is (e - mean) / sd with the n-1 sd; it is empty when the sd is zero.
    """
    n = len(rows)
    if n == 0:
        raise InsufficientDataError("QQ pairs need at least one gene in A")
    quantiles = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    frames = []
    for component in COMPONENTS:
        values = np.sort(np.array([getattr(r, component) for r in rows], dtype=float))
        sd = values.std(ddof=1) if n > 1 else 0.0
        standardized = (values - values.mean()) / sd if sd > 0 else np.full(n, np.nan)
        frames.append(
            pd.DataFrame(
                {
                    "component": component,
                    "rank": np.arange(1, n + 1),
                    "quantile": quantiles,
                    "residual": values,
                    "standardized": standardized,
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def qq_slope(qq: pd.DataFrame, component: str) -> float:
    """Least-squares slope of sorted raw residuals on normal quantiles."""
    part = qq[qq["component"] == component]
    slope, _ = np.polyfit(part["quantile"].to_numpy(), part["residual"].to_numpy(), 1)
    return float(slope)


def residual_summary(rows: List[ResidualRow]) -> pd.DataFrame:
    """Mean, sd and mean / SE per residual component."""
    n = len(rows)
    if n < 2:
        raise InsufficientDataError("residual summary needs at least 2 genes in A")
    out = []
    for component in COMPONENTS:
        values = np.array([getattr(r, component) for r in rows], dtype=float)
        mean, sd = float(values.mean()), float(values.std(ddof=1))
        out.append({"component": component, "n": n, "mean": mean, "sd": sd,
                    "z": mean / (sd / np.sqrt(n)) if sd > 0 else 0.0})
    return pd.DataFrame(out, columns=["component", "n", "mean", "sd", "z"])


def agreement_with_xyz(table: MeasurementTable, fit: StructuralFit) -> Dict[str, float]:
    """Pearson correlation of X, Y, Z and the yz estimate with the xyz estimate over A."""
    _, x, y, z = table.a_arrays()
    if len(x) < 3:
        raise InsufficientDataError("agreement needs at least 3 genes in A")
    check_path(fit, Source.XYZ)
    mu_xyz, _ = gls_estimate(fit, Source.XYZ, x, y, z)
    mu_yz, _ = gls_estimate(fit, Source.YZ, y=y, z=z)
    series = {"x": x, "y": y, "z": z, "yz": mu_yz}
    return {name: float(np.corrcoef(values, mu_xyz)[0, 1]) for name, values in series.items()}


def diagnostics_text(summary: pd.DataFrame, agreement: Dict[str, float], slopes: Dict[str, float]) -> str:
    lines = ["Residual summary", summary.to_string(index=False), "", "QQ slopes (raw residuals)"]
    lines.extend(f"{k} = {v!r}" for k, v in slopes.items())
    lines.append("")
    lines.append("Correlation with xyz estimate over A")
    lines.extend(f"{k} = {v!r}" for k, v in agreement.items())
    return "\n".join(lines) + "\n"
