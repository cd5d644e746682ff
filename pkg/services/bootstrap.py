"""Parametric functional bootstrap for structural standard errors and calibrated variances."""
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from models.errors import DegenerateCovarianceError, DomainError, InstabilityError
from models.schemas import (
    SOURCE_FOR_SET,
    THETA_NAMES,
    GeneSet,
    MeasurementTable,
    Source,
    StructuralFit,
    VarianceMode,
)
from services.core_model import (
    calibrate,
    check_path,
    fit_structural,
    gls_estimate,
    moments_from_arrays,
    path_variance,
    variance_leading,
)
from utils.parallel import ordered_map
from utils.rng import seeded_rng

MIN_REPS = 100
MAX_DISCARD_FRACTION = 0.10


def _check_request(fit: StructuralFit, reps: int) -> None:
    if reps < MIN_REPS:
        raise DomainError(f"bootstrap needs at least {MIN_REPS} replicates, got {reps}")
    variance_leading(fit)


def _check_discards(discarded: int, reps: int, what: str) -> None:
    if discarded > MAX_DISCARD_FRACTION * reps:
        raise InstabilityError(
            f"{discarded} of {reps} {what} replicates were degenerate "
            f"(limit {MAX_DISCARD_FRACTION:.0%}); the fit is unstable at this sample size"
        )
    if discarded:
        logger.warning("Discarded {} of {} degenerate {} replicates", discarded, reps, what)


def _simulate(fit: StructuralFit, mu: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One draw of (X, Y, Z) at fixed true levels ``mu``."""
    e = rng.standard_normal((3, len(mu)))
    x = mu + np.sqrt(fit.sigma1_sq) * e[0]
    y = fit.alpha2 + fit.beta2 * mu + np.sqrt(fit.sigma2_sq) * e[1]
    z = fit.alpha3 + fit.beta3 * mu + np.sqrt(fit.sigma3_sq) * e[2]
    return x, y, z


def _refit(fit: StructuralFit, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> Optional[StructuralFit]:
    try:
        refit = fit_structural(moments_from_arrays(x, y, z), fit.alpha3_form)
    except DegenerateCovarianceError:
        return None
    return refit if np.all(np.isfinite(refit.theta())) else None


def bootstrap_thetas(
    table: MeasurementTable,
    fit: StructuralFit,
    reps: int = 500,
    seed: int = 0,
    threads: int = 1,
) -> np.ndarray:
    """Structural estimates refitted on ``reps`` datasets simulated at the fitted system (rows = kept replicates)."""
    _check_request(fit, reps)
    a_ids = table.genes_in(GeneSet.A)
    calibrated = {c.gene_id: c.mu_hat for c in calibrate(table, fit) if c.source == Source.XYZ}
    mu = np.array([calibrated[g] for g in a_ids], dtype=float)

    def one(r: int) -> Optional[np.ndarray]:
        refit = _refit(fit, *_simulate(fit, mu, seeded_rng(seed, "bootstrap-theta", r)))
        return None if refit is None else refit.theta()

    draws = ordered_map(one, range(reps), threads)
    kept = [d for d in draws if d is not None]
    _check_discards(reps - len(kept), reps, "structural bootstrap")
    return np.vstack(kept)


def bootstrap_se(
    table: MeasurementTable,
    fit: StructuralFit,
    reps: int = 500,
    seed: int = 0,
    threads: int = 1,
) -> List[float]:
    """
    Bootstrap standard errors of the seven structural estimates.

    True levels are held at their calibrated estimates (functional model); each replicate
    redraws the three error vectors, refits, and the SD over replicates is returned in
    the order alpha2, alpha3, beta2, beta3, sigma1_sq, sigma2_sq, sigma3_sq.
    """
    thetas = bootstrap_thetas(table, fit, reps, seed, threads)
    se = np.std(thetas, axis=0, ddof=1)
    logger.info("Bootstrap SEs from {} replicates: {}", len(thetas), dict(zip(THETA_NAMES, np.round(se, 4))))
    return [float(v) for v in se]


def estimate_variance(
    fit: StructuralFit,
    table: MeasurementTable,
    mode: VarianceMode = VarianceMode.LEADING,
    reps: int = 500,
    seed: int = 0,
    threads: int = 1,
) -> Dict[str, float]:
    """
    Per-gene variance of the calibrated estimate.

    LEADING returns the path variance by set membership. BOOTSTRAP resamples the whole
    pipeline (refit, recalibrate) at fixed true levels and returns the per-gene sample
    variance, which includes the finite-n inflation away from the mean level.
    """
    if mode == VarianceMode.LEADING:
        sources = {SOURCE_FOR_SET[table.membership(g)] for g in table.genes}
        for source in sources:
            check_path(fit, source)
        by_source = {s: path_variance(fit, s) for s in sources}
        return {g: by_source[SOURCE_FOR_SET[table.membership(g)]] for g in table.genes}

    _check_request(fit, reps)
    estimates = calibrate(table, fit)
    mu = np.array([c.mu_hat for c in estimates], dtype=float)
    in_a = np.array([c.set == GeneSet.A for c in estimates])
    groups = {s: np.array([SOURCE_FOR_SET[c.set] == s for c in estimates]) for s in Source}

    def one(r: int) -> Optional[np.ndarray]:
        x, y, z = _simulate(fit, mu, seeded_rng(seed, "bootstrap-calibrated", r))
        refit = _refit(fit, x[in_a], y[in_a], z[in_a])
        if refit is None:
            return None
        out = np.empty(len(mu))
        for source, mask in groups.items():
            if not mask.any():
                continue
            out[mask], _ = gls_estimate(
                refit,
                source,
                x[mask] if source == Source.XYZ else None,
                y[mask] if source != Source.Z else None,
                z[mask],
                clip_negative=True,
            )
        return out if np.all(np.isfinite(out)) else None

    draws = ordered_map(one, range(reps), threads)
    kept = [d for d in draws if d is not None]
    _check_discards(reps - len(kept), reps, "calibration bootstrap")
    variances = np.var(np.vstack(kept), axis=0, ddof=1)
    return {c.gene_id: float(v) for c, v in zip(estimates, variances)}
