"""Pydantic models for mecal."""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


THETA_NAMES: Tuple[str, ...] = (
    "alpha2", "alpha3", "beta2", "beta3", "sigma1_sq", "sigma2_sq", "sigma3_sq",
)


class Platform(str, Enum):
    """Measurement platform of a raw record."""
    PCR = "PCR"
    MICROARRAY = "MICROARRAY"
    RNASEQ = "RNASEQ"


class Scale(str, Enum):
    LINEAR = "linear"
    LOG2 = "log2"


class CollapseOrder(str, Enum):
    """Order of log2 and replicate averaging for linear-scale input."""
    LOG_THEN_MEAN = "log-then-mean"
    MEAN_THEN_LOG = "mean-then-log"


class GeneSet(str, Enum):
    A = "A"
    B_MINUS_A = "B-A"
    C_MINUS_B = "C-B"


class Source(str, Enum):
    """Which platforms feed a calibrated estimate."""
    XYZ = "xyz"
    YZ = "yz"
    Z = "z"


SOURCE_FOR_SET: Dict[GeneSet, Source] = {
    GeneSet.A: Source.XYZ,
    GeneSet.B_MINUS_A: Source.YZ,
    GeneSet.C_MINUS_B: Source.Z,
}


class Alpha3Form(str, Enum):
    """beta3: alpha3 = z_bar - beta3 * x_bar. printed: alpha3 = z_bar - beta2 * x_bar."""
    BETA3 = "beta3"
    PRINTED = "printed"


class FitWarning(str, Enum):
    NEGATIVE_VARIANCE = "NEGATIVE_VARIANCE"
    NONPOSITIVE_SPREAD = "NONPOSITIVE_SPREAD"


class VarianceMode(str, Enum):
    LEADING = "leading"
    BOOTSTRAP = "bootstrap"


class Measurement(str, Enum):
    """DE arm: calibrated estimates or raw RNA-Seq mapped through the Z path."""
    CALIBRATED = "calibrated"
    RNASEQ_RAW = "rnaseq"


class TableFormat(BaseModel):
    """Delimiter of an input table; None means auto-detect from the header."""
    delimiter: Optional[Literal[",", "\t"]] = None


class RawRecord(BaseModel):
    """One row of a raw measurement table."""
    model_config = ConfigDict(frozen=True)

    gene_id: str
    platform: Platform
    replicate: int = Field(ge=0)
    value: float

    @field_validator("value")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("value must be finite")
        return v


class MeasurementTable(BaseModel):
    """Log2 expression values per gene with nested membership A ⊂ B ⊂ C."""
    model_config = ConfigDict(frozen=True)

    genes: List[str] = Field(default_factory=list)
    x: Dict[str, float] = Field(default_factory=dict)
    y: Dict[str, float] = Field(default_factory=dict)
    z: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_nesting(self) -> "MeasurementTable":
        if len(set(self.genes)) != len(self.genes):
            raise ValueError("gene ids must be unique")
        if set(self.z) != set(self.genes):
            raise ValueError("every gene must carry a z value")
        if not set(self.y) <= set(self.z):
            raise ValueError("B must be a subset of C")
        if not set(self.x) <= set(self.y):
            raise ValueError("A must be a subset of B")
        return self

    @property
    def set_sizes(self) -> Tuple[int, int, int]:
        return len(self.x), len(self.y), len(self.z)

    def membership(self, gene_id: str) -> GeneSet:
        if gene_id in self.x:
            return GeneSet.A
        if gene_id in self.y:
            return GeneSet.B_MINUS_A
        return GeneSet.C_MINUS_B

    def genes_in(self, gene_set: GeneSet) -> List[str]:
        return [g for g in self.genes if self.membership(g) == gene_set]

    def a_arrays(self) -> Tuple[List[str], np.ndarray, np.ndarray, np.ndarray]:
        """Genes in A (table order) with their x, y, z vectors."""
        ids = [g for g in self.genes if g in self.x]
        return (
            ids,
            np.array([self.x[g] for g in ids], dtype=float),
            np.array([self.y[g] for g in ids], dtype=float),
            np.array([self.z[g] for g in ids], dtype=float),
        )


class SampleMoments(BaseModel):
    """Means and n-1 denominator (co)variances over A."""
    x_bar: float
    y_bar: float
    z_bar: float
    s_xx: float
    s_yy: float
    s_zz: float
    s_xy: float
    s_xz: float
    s_yz: float
    n: int


class StructuralTruth(BaseModel):
    """Generating values of the seven structural parameters."""
    alpha2: float
    alpha3: float
    beta2: float
    beta3: float
    sigma1_sq: float = Field(gt=0)
    sigma2_sq: float = Field(gt=0)
    sigma3_sq: float = Field(gt=0)

    def theta(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in THETA_NAMES], dtype=float)


class StructuralFit(BaseModel):
    """Moment estimates of the structural parameters."""
    alpha2: float
    alpha3: float
    beta2: float
    beta3: float
    sigma1_sq: float
    sigma2_sq: float
    sigma3_sq: float
    mu_spread: Optional[float] = None
    se: Optional[List[float]] = None
    warnings: List[FitWarning] = Field(default_factory=list)
    moments: Optional[SampleMoments] = None
    alpha3_form: Alpha3Form = Alpha3Form.BETA3

    @field_validator("se")
    @classmethod
    def _seven(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and len(v) != len(THETA_NAMES):
            raise ValueError(f"se must have {len(THETA_NAMES)} entries")
        return v

    @property
    def n(self) -> int:
        return self.moments.n if self.moments else 0

    def theta(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in THETA_NAMES], dtype=float)

    def variance_scale(self) -> float:
        """Largest sample variance over A; reference magnitude for zero tolerances."""
        if self.moments is None:
            return max(abs(self.sigma1_sq), abs(self.sigma2_sq), abs(self.sigma3_sq), 1.0)
        return max(self.moments.s_xx, self.moments.s_yy, self.moments.s_zz)


class CalibratedEstimate(BaseModel):
    """Calibrated expression of one gene on the qRT-PCR scale."""
    gene_id: str
    set: GeneSet
    mu_hat: float
    variance: float
    source: Source
    se: Optional[float] = None

    @model_validator(mode="after")
    def _fill_se(self) -> "CalibratedEstimate":
        if self.se is None and self.variance >= 0:
            object.__setattr__(self, "se", math.sqrt(self.variance))
        return self


class VarianceComponents(BaseModel):
    """Leading-order variances of the three calibrated estimators."""
    gamma_A: float
    gamma_BA: float
    gamma_CB: float

    def for_set(self, gene_set: GeneSet) -> float:
        return {
            GeneSet.A: self.gamma_A,
            GeneSet.B_MINUS_A: self.gamma_BA,
            GeneSet.C_MINUS_B: self.gamma_CB,
        }[gene_set]


class PlatformReproducibility(BaseModel):
    """Error variance of each platform on the common qRT-PCR scale."""
    pcr: float
    microarray: float
    rnaseq: float
    ranking: List[Platform]


class ResidualRow(BaseModel):
    gene_id: str
    e1: float
    e2: float
    e3: float


class ConditionPair(BaseModel):
    """Per-gene estimates and variances under two conditions."""
    gene_ids: List[str]
    mu_hat_1: List[float]
    var_1: List[float]
    mu_hat_2: List[float]
    var_2: List[float]

    @model_validator(mode="after")
    def _same_length(self) -> "ConditionPair":
        n = len(self.gene_ids)
        if any(len(v) != n for v in (self.mu_hat_1, self.var_1, self.mu_hat_2, self.var_2)):
            raise ValueError("all condition vectors must cover the same genes")
        return self


class DEResult(BaseModel):
    """Differential-expression call for one gene."""
    gene_id: str
    set: GeneSet
    mu1: float
    mu2: float
    se1: float
    se2: float
    z_stat: float
    p_value: float = Field(ge=0, le=1)
    q_value: float = Field(ge=0, le=1)
    rejected: bool


class DEReport(BaseModel):
    """Output of one DE arm with per-set rejection counts."""
    measurement: Measurement
    fdr: float
    results: List[DEResult]
    counts: Dict[str, int]
    warnings: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)

    def rejected_ids(self) -> List[str]:
        return [r.gene_id for r in self.results if r.rejected]


class MuLaw(BaseModel):
    """Law of the true expression levels in a simulation."""
    kind: Literal["normal", "fixed"] = "normal"
    mean: float = 0.0
    var: float = Field(default=25.0, gt=0)
    values: Optional[List[float]] = None

    @model_validator(mode="after")
    def _values_for_fixed(self) -> "MuLaw":
        if self.kind == "fixed" and not self.values:
            raise ValueError("fixed mu_law requires a non-empty values list")
        return self


class SimConfig(BaseModel):
    """One accuracy-style Monte-Carlo experiment."""
    theta: StructuralTruth
    mu_law: MuLaw = Field(default_factory=MuLaw)
    n_train_grid: List[int] = Field(default_factory=lambda: [20, 50, 100, 300])
    n_test: int = Field(default=1000, ge=1)
    replications: int = Field(default=200, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    dataset_sizes: Optional[Tuple[int, int, int]] = None
    alpha3_form: Alpha3Form = Alpha3Form.BETA3

    @field_validator("n_train_grid")
    @classmethod
    def _grid(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("n_train_grid must not be empty")
        if any(n < 4 for n in v):
            raise ValueError("n_train_grid values must be >= 4")
        return sorted(set(v))

    @field_validator("dataset_sizes")
    @classmethod
    def _sizes(cls, v: Optional[Tuple[int, int, int]]) -> Optional[Tuple[int, int, int]]:
        if v is not None and not (0 <= v[0] <= v[1] <= v[2]):
            raise ValueError("dataset_sizes must satisfy n <= m <= l")
        return v


class DESimConfig(BaseModel):
    """Two-condition differential-expression simulation."""
    genes_total: int = Field(default=5000, ge=1)
    genes_de: int = Field(default=500, ge=0)
    effect_low: float = Field(default=0.5, gt=0)
    effect_high: float = Field(default=2.0, gt=0)
    set_sizes: Tuple[int, int, int] = (500, 3000, 5000)
    theta: StructuralTruth
    rnaseq_sigma3_sq: Optional[float] = Field(default=None, gt=0)
    mu_law: MuLaw = Field(default_factory=MuLaw)
    fdr_grid: List[float] = Field(default_factory=lambda: [0.01, 0.05, 0.1])
    fpr_grid: List[float] = Field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1, 0.2])
    replications: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    alpha3_form: Alpha3Form = Alpha3Form.BETA3

    @model_validator(mode="after")
    def _consistent(self) -> "DESimConfig":
        n, m, l = self.set_sizes
        if not (0 <= n <= m <= l <= self.genes_total):
            raise ValueError("set_sizes must satisfy n <= m <= l <= genes_total")
        if self.genes_de > self.genes_total:
            raise ValueError("genes_de must not exceed genes_total")
        if self.effect_low >= self.effect_high:
            raise ValueError("effect_low must be below effect_high")
        if any(not 0 < q < 1 for q in self.fdr_grid + self.fpr_grid):
            raise ValueError("fdr_grid and fpr_grid values must lie in (0, 1)")
        return self


@dataclass
class ExperimentReport:
    """Frames written as figure-analogue CSVs plus the metadata echoed in the manifest."""
    kind: str
    config: Dict[str, Any]
    seed: int
    amse: Optional[pd.DataFrame] = None
    variance_curves: Optional[pd.DataFrame] = None
    roc: Optional[pd.DataFrame] = None
    bh: Optional[pd.DataFrame] = None
    tpr_at_fpr: Optional[pd.DataFrame] = None
    skipped: Dict[str, int] = field(default_factory=dict)
    negative_variance: Dict[str, int] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)


class RunManifest(BaseModel):
    """Everything needed to re-run one CLI invocation."""
    subcommand: str
    argv: List[str]
    config: Dict[str, Any]
    inputs: Dict[str, str] = Field(default_factory=dict)
    seed: int
    version: str
    outputs: List[str] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)
    extra: Dict[str, Any] = Field(default_factory=dict)
    timing: Dict[str, Any] = Field(default_factory=dict)
