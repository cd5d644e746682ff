"""Two-condition differential expression with Benjamini-Hochberg control."""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.stats import norm

from models.errors import DomainError
from models.schemas import (
    Alpha3Form,
    ConditionPair,
    DEReport,
    DEResult,
    GeneSet,
    Measurement,
    MeasurementTable,
    Source,
    StructuralFit,
)
from services.core_model import calibrate, fit_table, gls_estimate

SET_ORDER = (GeneSet.A, GeneSet.B_MINUS_A, GeneSet.C_MINUS_B)
RAW_ARM_NOTE = (
    "rnaseq arm: Z mapped through (Z - alpha3) / beta3 with variance sigma3_sq / beta3^2 "
    "from each condition's own fit"
)


def z_scores(mu_1: np.ndarray, var_1: np.ndarray, mu_2: np.ndarray, var_2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized two-sided z-test; variances must already be positive."""
    z = (np.asarray(mu_1, dtype=float) - np.asarray(mu_2, dtype=float)) / np.sqrt(
        np.asarray(var_1, dtype=float) + np.asarray(var_2, dtype=float)
    )
    p = np.clip(2.0 * norm.sf(np.abs(z)), np.finfo(float).tiny, 1.0)
    return z, p


def z_test(pair: ConditionPair) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-gene z statistic and two-sided p-value for mu_1 == mu_2.

    Raises:
        DomainError: a variance is not positive
    """
    for g, v1, v2 in zip(pair.gene_ids, pair.var_1, pair.var_2):
        if not (v1 > 0 and v2 > 0):
            raise DomainError(f"z-test needs positive variances; gene {g} has ({v1!r}, {v2!r})")
    return z_scores(pair.mu_hat_1, pair.var_1, pair.mu_hat_2, pair.var_2)


def bh_adjust(p_values: Sequence[float], fdr: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Benjamini-Hochberg step-up.

    Returns:
        (q_values, rejected) aligned with the input; ties keep input order
    """
    p = np.asarray(p_values, dtype=float)
    if not 0 < fdr < 1:
        raise DomainError(f"fdr must lie in (0, 1), got {fdr!r}")
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise DomainError("p-values must lie in [0, 1]")
    m = len(p)
    rejected = np.zeros(m, dtype=bool)
    q = np.ones(m)
    if m == 0:
        return q, rejected

    order = np.argsort(p, kind="stable")
    ranked = p[order]
    ranks = np.arange(1, m + 1)
    passing = np.nonzero(ranked <= ranks * fdr / m)[0]
    if passing.size:
        rejected[order[: passing[-1] + 1]] = True

    adjusted = np.minimum.accumulate((ranked * m / ranks)[::-1])[::-1]
    q[order] = np.minimum(adjusted, 1.0)
    return q, rejected


def _report_set(t1: MeasurementTable, t2: MeasurementTable, gene_id: str) -> GeneSet:
    """Less informative of the two memberships."""
    return max(t1.membership(gene_id), t2.membership(gene_id), key=SET_ORDER.index)


def _raw_arm(table: MeasurementTable, fit: StructuralFit, genes: List[str]) -> Tuple[List[float], List[float]]:
    mu, variance = gls_estimate(fit, Source.Z, z=[table.z[g] for g in genes])
    return [float(v) for v in mu], [variance] * len(genes)


def _calibrated_arm(
    table: MeasurementTable,
    fit: StructuralFit,
    genes: List[str],
    variances: Optional[Dict[str, float]],
) -> Tuple[List[float], List[float]]:
    by_gene = {c.gene_id: c for c in calibrate(table, fit, variances)}
    return [by_gene[g].mu_hat for g in genes], [by_gene[g].variance for g in genes]


def de_pipeline(
    table_1: MeasurementTable,
    table_2: MeasurementTable,
    fdr: float = 0.01,
    measurement: Measurement = Measurement.CALIBRATED,
    fits: Optional[Tuple[StructuralFit, StructuralFit]] = None,
    variances: Optional[Tuple[Dict[str, float], Dict[str, float]]] = None,
    alpha3_form: Alpha3Form = Alpha3Form.BETA3,
) -> DEReport:
    """
    Fit each condition, map to the qRT-PCR scale, z-test the shared genes, apply BH.

    Args:
        table_1: Condition 1 measurements
        table_2: Condition 2 measurements
        fdr: BH level
        measurement: Calibrated estimates or the raw RNA-Seq arm
        fits: Precomputed fits per condition
        variances: Per-gene variances per condition (calibrated arm only)
        alpha3_form: Intercept convention used when fitting

    Returns:
        DEReport with per-gene results and per-set counts
    """
    if not 0 < fdr < 1:
        raise DomainError(f"fdr must lie in (0, 1), got {fdr!r}")
    fit_1, fit_2 = fits or (fit_table(table_1, alpha3_form), fit_table(table_2, alpha3_form))

    shared_2 = set(table_2.genes)
    genes = [g for g in table_1.genes if g in shared_2]
    warnings: List[str] = []
    only_1 = len(table_1.genes) - len(genes)
    only_2 = len(table_2.genes) - len(genes)
    if only_1 or only_2:
        message = (
            f"gene sets differ: {only_1} only in condition 1, {only_2} only in condition 2; "
            f"testing {len(genes)} shared genes"
        )
        logger.warning(message)
        warnings.append(message)

    notes: List[str] = []
    if measurement == Measurement.RNASEQ_RAW:
        mu_1, var_1 = _raw_arm(table_1, fit_1, genes)
        mu_2, var_2 = _raw_arm(table_2, fit_2, genes)
        notes.append(RAW_ARM_NOTE)
    else:
        v1, v2 = variances or (None, None)
        mu_1, var_1 = _calibrated_arm(table_1, fit_1, genes, v1)
        mu_2, var_2 = _calibrated_arm(table_2, fit_2, genes, v2)

    pair = ConditionPair(gene_ids=genes, mu_hat_1=mu_1, var_1=var_1, mu_hat_2=mu_2, var_2=var_2)
    z, p = z_test(pair)
    q, rejected = bh_adjust(p, fdr)

    results: List[DEResult] = []
    counts = {s.value: 0 for s in SET_ORDER}
    for i, g in enumerate(genes):
        gene_set = _report_set(table_1, table_2, g)
        results.append(
            DEResult(
                gene_id=g,
                set=gene_set,
                mu1=mu_1[i],
                mu2=mu_2[i],
                se1=float(np.sqrt(var_1[i])),
                se2=float(np.sqrt(var_2[i])),
                z_stat=float(z[i]),
                p_value=float(p[i]),
                q_value=float(q[i]),
                rejected=bool(rejected[i]),
            )
        )
        if rejected[i]:
            counts[gene_set.value] += 1
    counts["Total"] = int(rejected.sum())

    logger.info("DE ({}) at fdr={}: {} of {} genes rejected", measurement.value, fdr, counts["Total"], len(genes))
    return DEReport(measurement=measurement, fdr=fdr, results=results, counts=counts, warnings=warnings, notes=notes)


def de_frame(report: DEReport) -> pd.DataFrame:
    """Per-gene DE table: gene_id,set,mu1,mu2,se1,se2,z,p,q,rejected."""
    rows = [
        {
            "gene_id": r.gene_id,
            "set": r.set.value,
            "mu1": r.mu1,
            "mu2": r.mu2,
            "se1": r.se1,
            "se2": r.se2,
            "z": r.z_stat,
            "p": r.p_value,
            "q": r.q_value,
            "rejected": "true" if r.rejected else "false",
        }
        for r in report.results
    ]
    return pd.DataFrame(rows, columns=["gene_id", "set", "mu1", "mu2", "se1", "se2", "z", "p", "q", "rejected"])


def summarize_de(calibrated: Optional[DEReport], rnaseq: Optional[DEReport]) -> pd.DataFrame:
    """Rejection counts by set (rows A, B-A, C-B, Total) per arm, with their overlap when both ran."""
    index = [s.value for s in SET_ORDER] + ["Total"]
    frame = pd.DataFrame(index=pd.Index(index, name="set"))
    if calibrated is not None:
        frame["Calibration"] = [calibrated.counts[k] for k in index]
    if rnaseq is not None:
        frame["RNA-Seq"] = [rnaseq.counts[k] for k in index]
    if calibrated is not None and rnaseq is not None:
        shared = set(calibrated.rejected_ids()) & set(rnaseq.rejected_ids())
        by_set = {s.value: 0 for s in SET_ORDER}
        for r in calibrated.results:
            if r.gene_id in shared:
                by_set[r.set.value] += 1
        frame["Overlap"] = [by_set[k] for k in index[:-1]] + [len(shared)]
    return frame


def summary_text(summary: pd.DataFrame, fdr: float, notes: Sequence[str] = ()) -> str:
    lines = [f"Differentially expressed genes at FDR {fdr}", summary.to_string(), ""]
    lines.extend(f"note: {n}" for n in notes)
    return "\n".join(lines).rstrip("\n") + "\n"
