"""
Three-platform measurement-error system.

    X = mu + e1,  Y = alpha2 + beta2 * mu + e2,  Z = alpha3 + beta3 * mu + e3

Structural parameters are moment estimates over genes measured on all three
platforms (set A). Calibrated expression maps every gene to the qRT-PCR scale by
precision-weighted least squares over the platforms that measured it.
"""
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from models.errors import (
    CalibrationBlockedError,
    DegenerateCovarianceError,
    DomainError,
    InsufficientDataError,
)
from models.schemas import (
    SOURCE_FOR_SET,
    Alpha3Form,
    CalibratedEstimate,
    FitWarning,
    GeneSet,
    MeasurementTable,
    Platform,
    PlatformReproducibility,
    ResidualRow,
    SampleMoments,
    Source,
    StructuralFit,
    VarianceComponents,
)

DEGENERATE_RTOL = 1e-12
ZERO_VARIANCE_RTOL = 1e-10
MIN_FIT_GENES = 4

# variance components each calibration path relies on
PATH_COMPONENTS: Dict[Source, Tuple[str, ...]] = {
    Source.XYZ: ("sigma1_sq", "sigma2_sq", "sigma3_sq"),
    Source.YZ: ("sigma2_sq", "sigma3_sq"),
    Source.Z: ("sigma3_sq",),
}


def moments_from_arrays(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> SampleMoments:
    """Means and n-1 denominator (co)variances of three aligned vectors."""
    n = len(x)
    if n < 2:
        raise InsufficientDataError(f"moments need at least 2 genes in A, got {n}")
    cov = np.cov(np.vstack([x, y, z]), ddof=1)
    return SampleMoments(
        x_bar=float(np.mean(x)),
        y_bar=float(np.mean(y)),
        z_bar=float(np.mean(z)),
        s_xx=float(cov[0, 0]),
        s_yy=float(cov[1, 1]),
        s_zz=float(cov[2, 2]),
        s_xy=float(cov[0, 1]),
        s_xz=float(cov[0, 2]),
        s_yz=float(cov[1, 2]),
        n=n,
    )


def compute_moments(table: MeasurementTable) -> SampleMoments:
    """Sample moments over exactly the genes of set A."""
    _, x, y, z = table.a_arrays()
    return moments_from_arrays(x, y, z)


def fit_structural(moments: SampleMoments, alpha3_form: Alpha3Form = Alpha3Form.BETA3) -> StructuralFit:
    """
    Moment estimates of (alpha2, alpha3, beta2, beta3, sigma1^2, sigma2^2, sigma3^2).

    Negative variance estimates are returned unchanged and flagged.

    Raises:
        DegenerateCovarianceError: a cross-covariance used as a denominator is numerically zero
    """
    m = moments
    scale = max(m.s_xx, m.s_yy, m.s_zz)
    tol = DEGENERATE_RTOL * scale
    for name in ("s_xz", "s_xy", "s_yz"):
        value = getattr(m, name)
        if value == 0 or abs(value) < tol:
            raise DegenerateCovarianceError(name, value)

    beta2 = m.s_yz / m.s_xz
    beta3 = m.s_yz / m.s_xy
    mu_spread = m.s_xy * m.s_xz / m.s_yz
    alpha2 = m.y_bar - beta2 * m.x_bar
    alpha3 = m.z_bar - (beta3 if alpha3_form == Alpha3Form.BETA3 else beta2) * m.x_bar
    sigma1_sq = m.s_xx - mu_spread
    sigma2_sq = m.s_yy - m.s_xy * m.s_yz / m.s_xz
    sigma3_sq = m.s_zz - m.s_yz * m.s_xz / m.s_xy

    warnings: List[FitWarning] = []
    negative = [n for n, v in (("sigma1_sq", sigma1_sq), ("sigma2_sq", sigma2_sq), ("sigma3_sq", sigma3_sq)) if v < 0]
    if negative:
        warnings.append(FitWarning.NEGATIVE_VARIANCE)
    if mu_spread <= 0:
        warnings.append(FitWarning.NONPOSITIVE_SPREAD)

    return StructuralFit(
        alpha2=float(alpha2),
        alpha3=float(alpha3),
        beta2=float(beta2),
        beta3=float(beta3),
        sigma1_sq=float(sigma1_sq),
        sigma2_sq=float(sigma2_sq),
        sigma3_sq=float(sigma3_sq),
        mu_spread=float(mu_spread),
        warnings=warnings,
        moments=m,
        alpha3_form=alpha3_form,
    )


def fit_table(table: MeasurementTable, alpha3_form: Alpha3Form = Alpha3Form.BETA3) -> StructuralFit:
    """Fit the structural parameters on set A of ``table``."""
    n = table.set_sizes[0]
    if n < MIN_FIT_GENES:
        raise InsufficientDataError(f"structural fit needs at least {MIN_FIT_GENES} genes in A, got {n}")
    fit = fit_structural(compute_moments(table), alpha3_form)
    if FitWarning.NEGATIVE_VARIANCE in fit.warnings:
        logger.warning(
            "Negative variance estimate(s): sigma1_sq={:.4g} sigma2_sq={:.4g} sigma3_sq={:.4g} (n={})",
            fit.sigma1_sq, fit.sigma2_sq, fit.sigma3_sq, n,
        )
    if FitWarning.NONPOSITIVE_SPREAD in fit.warnings:
        logger.warning("Non-positive spread estimate mu_spread={:.4g}", fit.mu_spread)
    logger.info("Fitted structural parameters on n={} genes", n)
    return fit


def _zero_tol(fit: StructuralFit) -> float:
    return ZERO_VARIANCE_RTOL * fit.variance_scale()


def _mapped(fit: StructuralFit, source: Source, x, y, z) -> List[Tuple[np.ndarray, float]]:
    """Measurements mapped to the qRT-PCR scale with their error variance on that scale."""
    terms: List[Tuple[np.ndarray, float]] = []
    if source == Source.XYZ:
        terms.append((np.asarray(x, dtype=float), fit.sigma1_sq))
    if source in (Source.XYZ, Source.YZ):
        terms.append(((np.asarray(y, dtype=float) - fit.alpha2) / fit.beta2, fit.sigma2_sq / fit.beta2 ** 2))
    terms.append(((np.asarray(z, dtype=float) - fit.alpha3) / fit.beta3, fit.sigma3_sq / fit.beta3 ** 2))
    return terms


def gls_estimate(
    fit: StructuralFit,
    source: Source,
    x: Optional[Sequence[float]] = None,
    y: Optional[Sequence[float]] = None,
    z: Optional[Sequence[float]] = None,
    clip_negative: bool = False,
) -> Tuple[np.ndarray, float]:
    """
    Vectorized calibrated estimates along one path, without positivity checks.

    Each platform enters with weight proportional to its precision on the qRT-PCR scale.
    Components within tolerance of zero (and negative ones when ``clip_negative``) are
    treated as exact: the estimate is the plain mean over those platforms, variance 0.

    Returns:
        (mu_hat array, path variance)
    """
    if fit.beta3 == 0 or (source != Source.Z and fit.beta2 == 0):
        raise DomainError("calibration needs nonzero beta2 and beta3")
    terms = _mapped(fit, source, x, y, z)
    if source == Source.Z:
        return terms[0][0], terms[0][1]

    tol = _zero_tol(fit)
    exact = [u for u, v in terms if abs(v) <= tol or (clip_negative and v < 0)]
    if exact:
        return np.mean(np.vstack(exact), axis=0), 0.0
    precision = sum(1.0 / v for _, v in terms)
    numerator = sum(u / v for u, v in terms)
    return numerator / precision, 1.0 / precision


def path_variance(fit: StructuralFit, source: Source, clip_negative: bool = False) -> float:
    """Leading-order variance of one calibration path."""
    _, variance = gls_estimate(fit, source, [0.0], [0.0], [0.0], clip_negative=clip_negative)
    return variance


def check_path(fit: StructuralFit, source: Source) -> None:
    """Raise if a variance component the path needs is negative beyond tolerance."""
    if source == Source.Z:
        return
    tol = _zero_tol(fit)
    for component in PATH_COMPONENTS[source]:
        value = getattr(fit, component)
        if value < -tol:
            raise CalibrationBlockedError(component, value, source.value)


def variance_leading(fit: StructuralFit) -> VarianceComponents:
    """Leading-order variances (gamma_A, gamma_BA, gamma_CB) of the three calibrated estimators."""
    for component in PATH_COMPONENTS[Source.XYZ]:
        value = getattr(fit, component)
        if not value > 0:
            raise DomainError(f"leading-order variances need positive variance components; {component} = {value!r}")
    if fit.beta2 == 0 or fit.beta3 == 0:
        raise DomainError("leading-order variances need nonzero beta2 and beta3")
    precision_y = fit.beta2 ** 2 / fit.sigma2_sq
    precision_z = fit.beta3 ** 2 / fit.sigma3_sq
    return VarianceComponents(
        gamma_A=1.0 / (1.0 / fit.sigma1_sq + precision_y + precision_z),
        gamma_BA=1.0 / (precision_y + precision_z),
        gamma_CB=fit.sigma3_sq / fit.beta3 ** 2,
    )


def calibrate(
    table: MeasurementTable,
    fit: StructuralFit,
    variances: Optional[Dict[str, float]] = None,
) -> List[CalibratedEstimate]:
    """
    Calibrated estimate for every gene, routed by set membership.

    Args:
        table: Measurements
        fit: Structural fit
        variances: Optional per-gene variances (e.g. bootstrap); default is the path variance

    Raises:
        CalibrationBlockedError: a path needed by some gene depends on a negative variance component
    """
    sizes = table.set_sizes
    if sizes[0]:
        check_path(fit, Source.XYZ)
    if sizes[1] > sizes[0]:
        check_path(fit, Source.YZ)

    mu_hat: Dict[str, float] = {}
    path_var: Dict[Source, float] = {}
    for gene_set, source in SOURCE_FOR_SET.items():
        ids = table.genes_in(gene_set)
        if not ids:
            continue
        x = [table.x[g] for g in ids] if source == Source.XYZ else None
        y = [table.y[g] for g in ids] if source != Source.Z else None
        z = [table.z[g] for g in ids]
        estimates, variance = gls_estimate(fit, source, x, y, z)
        path_var[source] = variance
        mu_hat.update(zip(ids, (float(v) for v in estimates)))

    out: List[CalibratedEstimate] = []
    for g in table.genes:
        gene_set = table.membership(g)
        source = SOURCE_FOR_SET[gene_set]
        variance = variances[g] if variances is not None and g in variances else path_var[source]
        out.append(CalibratedEstimate(gene_id=g, set=gene_set, mu_hat=mu_hat[g], variance=float(variance), source=source))
    return out


def residuals(
    table: MeasurementTable,
    fit: StructuralFit,
    calibrated: Iterable[CalibratedEstimate],
) -> List[ResidualRow]:
    """Per-gene residuals (e1, e2, e3) over set A from the xyz calibrated estimates."""
    mu = {c.gene_id: c.mu_hat for c in calibrated if c.source == Source.XYZ}
    rows: List[ResidualRow] = []
    for g in table.genes:
        if g not in table.x or g not in mu:
            continue
        m = mu[g]
        rows.append(
            ResidualRow(
                gene_id=g,
                e1=table.x[g] - m,
                e2=table.y[g] - fit.alpha2 - fit.beta2 * m,
                e3=table.z[g] - fit.alpha3 - fit.beta3 * m,
            )
        )
    return rows


def platform_reproducibility(fit: StructuralFit) -> PlatformReproducibility:
    """Error variance of each platform on the qRT-PCR scale, ranked best first."""
    if fit.beta2 == 0 or fit.beta3 == 0:
        raise DomainError("reproducibility needs nonzero beta2 and beta3")
    values = {
        Platform.PCR: fit.sigma1_sq,
        Platform.MICROARRAY: fit.sigma2_sq / fit.beta2 ** 2,
        Platform.RNASEQ: fit.sigma3_sq / fit.beta3 ** 2,
    }
    ranking = sorted(values, key=lambda p: values[p])
    return PlatformReproducibility(
        pcr=values[Platform.PCR],
        microarray=values[Platform.MICROARRAY],
        rnaseq=values[Platform.RNASEQ],
        ranking=ranking,
    )
