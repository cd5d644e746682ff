"""CSV and YAML serialization for tables, fits and reports."""
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import pandas as pd
import yaml
from pydantic import ValidationError

from models.errors import InputFileError, ParseError
from models.schemas import THETA_NAMES, CalibratedEstimate, StructuralFit

PathLike = Union[str, Path]


def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    """RFC-4180 CSV with LF endings; floats keep full precision, NaN becomes an empty cell."""
    path = Path(path)
    frame.to_csv(path, index=False, lineterminator="\n", na_rep="")
    return path


def calibrated_frame(estimates: Iterable[CalibratedEstimate]) -> pd.DataFrame:
    rows = [
        {
            "gene_id": e.gene_id,
            "set": e.set.value,
            "mu_hat": e.mu_hat,
            "se": e.se if e.se is not None else float("nan"),
            "source": e.source.value,
        }
        for e in estimates
    ]
    return pd.DataFrame(rows, columns=["gene_id", "set", "mu_hat", "se", "source"])


def fit_to_dict(fit: StructuralFit) -> Dict[str, Any]:
    data = fit.model_dump(mode="json")
    for name in THETA_NAMES:
        data[name] = float(getattr(fit, name))
    return data


def write_fit_yaml(fit: StructuralFit, path: PathLike) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        yaml.safe_dump(fit_to_dict(fit), f, sort_keys=False)
    return path


def read_fit_yaml(path: PathLike) -> StructuralFit:
    """Load a fit written by :func:`write_fit_yaml`."""
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"fit file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ParseError(f"fit file {path} is not valid YAML: {e}")
    if not isinstance(data, dict):
        raise ParseError(f"fit file {path} must hold a mapping")
    try:
        return StructuralFit(**data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first.get("loc", ()))
        raise ParseError(f"fit file {path}: {field}: {first.get('msg')}")


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def fit_report_text(fit: StructuralFit, notes: Optional[List[str]] = None) -> str:
    """Key-value block with the seven estimates, SEs, mu_spread and warnings."""
    lines = [f"n = {fit.n}", f"alpha3_form = {fit.alpha3_form.value}"]
    for i, name in enumerate(THETA_NAMES):
        lines.append(f"{name} = {_fmt(getattr(fit, name))}")
        if fit.se is not None:
            lines.append(f"{name}_se = {_fmt(fit.se[i])}")
    lines.append(f"mu_spread = {_fmt(fit.mu_spread)}")
    lines.append(f"warnings = {','.join(w.value for w in fit.warnings)}")
    for note in notes or []:
        lines.append(f"note = {note}")
    return "\n".join(lines) + "\n"


def write_text(text: str, path: PathLike) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return path
