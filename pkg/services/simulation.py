"""Seeded generators and Monte-Carlo harnesses for accuracy and DE studies."""
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from models.errors import DegenerateCovarianceError, DomainError, ExperimentError
from models.schemas import (
    DESimConfig,
    ExperimentReport,
    FitWarning,
    MeasurementTable,
    MuLaw,
    SimConfig,
    Source,
    StructuralFit,
    StructuralTruth,
)
from services.core_model import fit_structural, gls_estimate, moments_from_arrays, path_variance
from services.inference import bh_adjust, z_scores
from utils.parallel import ordered_map
from utils.rng import seeded_rng

MAX_SKIP_FRACTION = 0.10
ESTIMATORS = ("xyz", "yz", "z", "x")
ROC_GRID = np.linspace(0.0, 1.0, 201)
GENERATOR_NOTE = (
    "RNA-Seq measurements are generated from the linear error model, not from simulated reads; "
    "with sigma3_sq = 1 a gene outside B is tested with variance 2, so TPR at FPR 0.05 sits near "
    "0.19 (calibrated) and 0.15 (RNA-Seq), far below read-level simulations with 5M reads per sample; "
    "lower rnaseq_sigma3_sq to approach them"
)

SETTINGS: Dict[int, StructuralTruth] = {
    1: StructuralTruth(alpha2=9, alpha3=5, beta2=0.75, beta3=1, sigma1_sq=0.8, sigma2_sq=1.2, sigma3_sq=1),
    2: StructuralTruth(alpha2=0.02, alpha3=0.2, beta2=0.9, beta3=0.95, sigma1_sq=0.5, sigma2_sq=1, sigma3_sq=0.75),
    3: StructuralTruth(alpha2=-5, alpha3=5, beta2=1.3, beta3=1.2, sigma1_sq=0.2, sigma2_sq=1, sigma3_sq=1.2),
}

Params = Union[StructuralTruth, StructuralFit]


def setting_preset(k: int) -> StructuralTruth:
    """Parameter preset 1, 2 or 3."""
    if k not in SETTINGS:
        raise DomainError(f"unknown setting {k}; choose 1, 2 or 3")
    return SETTINGS[k].model_copy()


def draw_mu(law: MuLaw, size: int, rng: np.random.Generator) -> np.ndarray:
    if law.kind == "fixed":
        return np.resize(np.asarray(law.values, dtype=float), size)
    return rng.normal(law.mean, np.sqrt(law.var), size)


def simulate_measurements(theta: Params, mu: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """X, Y, Z for every level in ``mu``; errors are drawn as one (3, len(mu)) block."""
    e = rng.standard_normal((3, len(mu)))
    x = mu + np.sqrt(theta.sigma1_sq) * e[0]
    y = theta.alpha2 + theta.beta2 * mu + np.sqrt(theta.sigma2_sq) * e[1]
    z = theta.alpha3 + theta.beta3 * mu + np.sqrt(theta.sigma3_sq) * e[2]
    return x, y, z


def gene_ids(count: int) -> List[str]:
    width = len(str(count))
    return [f"g{j + 1:0{width}d}" for j in range(count)]


def generate_dataset(config: SimConfig, rep_index: int = 0) -> Tuple[MeasurementTable, Dict[str, float]]:
    """
    One simulated table with nested prefixes A, B, C and the true levels.

    Sizes come from ``config.dataset_sizes``; by default every gene is in A and the count
    is the largest training size.
    """
    n, m, l = config.dataset_sizes or (max(config.n_train_grid),) * 3
    rng = seeded_rng(config.seed, "dataset", rep_index)
    mu = draw_mu(config.mu_law, l, rng)
    x, y, z = simulate_measurements(config.theta, mu, rng)
    ids = gene_ids(l)
    table = MeasurementTable(
        genes=ids,
        x={g: float(v) for g, v in zip(ids[:n], x[:n])},
        y={g: float(v) for g, v in zip(ids[:m], y[:m])},
        z={g: float(v) for g, v in zip(ids, z)},
    )
    return table, {g: float(v) for g, v in zip(ids, mu)}


def _fit_or_none(x: np.ndarray, y: np.ndarray, z: np.ndarray, alpha3_form) -> Optional[StructuralFit]:
    try:
        fit = fit_structural(moments_from_arrays(x, y, z), alpha3_form)
    except DegenerateCovarianceError:
        return None
    return fit if np.all(np.isfinite(fit.theta())) else None


def _check_skips(skipped: int, total: int, label: str) -> None:
    if skipped > MAX_SKIP_FRACTION * total:
        raise ExperimentError(
            f"{skipped} of {total} replications skipped for {label} (limit {MAX_SKIP_FRACTION:.0%})"
        )
    if skipped:
        logger.warning("Skipped {} of {} replications for {}", skipped, total, label)


def run_accuracy_experiment(config: SimConfig, threads: int = 1) -> ExperimentReport:
    """
    aMSE and variance-vs-level curves of the calibrated estimators and the raw X baseline.

    True levels of the training and test genes are drawn once; every replication redraws
    the measurement errors, fits on the first n training genes for each n in the grid and
    calibrates the whole test set three ways. Negative variance estimates are not
    constrained; a path whose component came out negative treats that platform as exact.
    """
    grid = config.n_train_grid
    n_max = max(grid)
    mu_train = draw_mu(config.mu_law, n_max, seeded_rng(config.seed, "mu-train"))
    mu_test = draw_mu(config.mu_law, config.n_test, seeded_rng(config.seed, "mu-test"))

    def one(r: int) -> Dict[int, Optional[Tuple[bool, Dict[str, np.ndarray]]]]:
        rng = seeded_rng(config.seed, "accuracy", r)
        xt, yt, zt = simulate_measurements(config.theta, mu_train, rng)
        xs, ys, zs = simulate_measurements(config.theta, mu_test, rng)
        out: Dict[int, Optional[Tuple[bool, Dict[str, np.ndarray]]]] = {}
        for n in grid:
            fit = _fit_or_none(xt[:n], yt[:n], zt[:n], config.alpha3_form)
            if fit is None:
                out[n] = None
                continue
            estimates = {
                "xyz": gls_estimate(fit, Source.XYZ, xs, ys, zs, clip_negative=True)[0],
                "yz": gls_estimate(fit, Source.YZ, y=ys, z=zs, clip_negative=True)[0],
                "z": gls_estimate(fit, Source.Z, z=zs)[0],
                "x": xs,
            }
            finite = all(np.all(np.isfinite(v)) for v in estimates.values())
            out[n] = (FitWarning.NEGATIVE_VARIANCE in fit.warnings, estimates) if finite else None
        return out

    logger.info("Accuracy experiment: grid={} replications={} n_test={}", grid, config.replications, config.n_test)
    results = ordered_map(one, range(config.replications), threads)

    report = ExperimentReport(kind="accuracy", config=config.model_dump(mode="json"), seed=config.seed)
    amse_rows: List[Dict[str, Any]] = []
    curves: List[pd.DataFrame] = []
    for n in grid:
        kept = [res[n] for res in results if res[n] is not None]
        report.skipped[str(n)] = config.replications - len(kept)
        _check_skips(report.skipped[str(n)], config.replications, f"n={n}")
        report.negative_variance[str(n)] = sum(1 for neg, _ in kept if neg)
        for name in ESTIMATORS:
            draws = np.vstack([est[name] for _, est in kept])
            amse_rows.append({"estimator": name, "n": n, "amse": float(np.mean((draws - mu_test) ** 2))})
            if name != "x" and len(kept) > 1:
                curves.append(
                    pd.DataFrame({"estimator": name, "n": n, "mu": mu_test, "emp_var": draws.var(axis=0, ddof=1)})
                )

    report.amse = pd.DataFrame(amse_rows, columns=["estimator", "n", "amse"])
    report.variance_curves = (
        pd.concat(curves, ignore_index=True) if curves else pd.DataFrame(columns=["estimator", "n", "mu", "emp_var"])
    )
    negative_total = sum(report.negative_variance.values())
    if negative_total:
        report.notes.append(
            f"{negative_total} fitted replications had negative variance estimates; "
            "the affected platform was treated as exact when calibrating"
        )
    return report


def roc_curve(p_values: Sequence[float], labels: Sequence[bool]) -> Tuple[np.ndarray, np.ndarray]:
    """
    ROC of the rule "call positive when p <= threshold", swept over every observed p.

    Tied p-values enter together. The curve starts at (0, 0) and ends at (1, 1).
    """
    p = np.asarray(p_values, dtype=float)
    y = np.asarray(labels, dtype=bool)
    positives, negatives = int(y.sum()), int((~y).sum())
    if positives == 0 or negatives == 0:
        raise ExperimentError("ROC needs at least one positive and one negative gene")
    order = np.argsort(p, kind="stable")
    p_sorted, y_sorted = p[order], y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(~y_sorted)
    group_end = np.r_[p_sorted[1:] != p_sorted[:-1], True]
    fpr = np.r_[0.0, fp[group_end] / negatives]
    tpr = np.r_[0.0, tp[group_end] / positives]
    return fpr, tpr


def tpr_at_fpr(fpr: np.ndarray, tpr: np.ndarray, targets: Sequence[float]) -> np.ndarray:
    """Largest attainable TPR with FPR no greater than each target."""
    fpr = np.asarray(fpr, dtype=float)
    tpr = np.asarray(tpr, dtype=float)
    return np.array([tpr[fpr <= t + 1e-12].max() for t in targets])


def variance_curvature(mu: Sequence[float], emp_var: Sequence[float]) -> Tuple[float, float]:
    """Quadratic coefficient of a least-squares fit emp_var ~ 1 + mu + mu^2, with its standard error."""
    mu = np.asarray(mu, dtype=float)
    v = np.asarray(emp_var, dtype=float)
    if len(mu) < 4:
        raise DomainError("curvature needs at least 4 points")
    c = mu - mu.mean()
    design = np.column_stack([np.ones_like(c), c, c ** 2])
    coef, _, _, _ = np.linalg.lstsq(design, v, rcond=None)
    resid = v - design @ coef
    sigma_sq = float(resid @ resid) / (len(v) - 3)
    cov = sigma_sq * np.linalg.inv(design.T @ design)
    return float(coef[2]), float(np.sqrt(cov[2, 2]))


def _arms(
    theta: StructuralTruth,
    mu: np.ndarray,
    sizes: Tuple[int, int, int],
    config: DESimConfig,
    rng: np.random.Generator,
) -> Optional[Dict[str, Tuple[np.ndarray, np.ndarray]]]:
    """Calibrated and raw-RNA-Seq (estimate, variance) vectors for one condition."""
    n, m, l = sizes
    x, y, z = simulate_measurements(theta, mu, rng)
    fit = _fit_or_none(x[:n], y[:n], z[:n], config.alpha3_form)
    if fit is None:
        return None
    parts = [
        (gls_estimate(fit, Source.XYZ, x[:n], y[:n], z[:n], clip_negative=True)[0], path_variance(fit, Source.XYZ, True), n),
        (gls_estimate(fit, Source.YZ, y=y[n:m], z=z[n:m], clip_negative=True)[0], path_variance(fit, Source.YZ, True), m - n),
        (gls_estimate(fit, Source.Z, z=z[m:l])[0], path_variance(fit, Source.Z), l - m),
    ]
    variances = [v for _, v, count in parts if count]
    if any(not (v > 0 and np.isfinite(v)) for v in variances):
        return None
    calibrated = (np.concatenate([e for e, _, _ in parts]), np.concatenate([np.full(k, v) for _, v, k in parts]))
    raw_mu, raw_var = gls_estimate(fit, Source.Z, z=z[:l])
    if not raw_var > 0:
        return None
    return {"calibrated": calibrated, "rnaseq": (raw_mu, np.full(l, raw_var))}


def run_de_experiment(config: DESimConfig, threads: int = 1) -> ExperimentReport:
    """
    ROC and BH operating characteristics of the calibrated arm against the raw RNA-Seq arm.

    Each replication draws condition-1 levels, shifts a random subset of genes by an
    effect uniform on [-high, -low] U [low, high], generates both conditions from the
    error model with sets A, B, C as index prefixes, fits each condition on its own A
    and tests the genes of C.
    """
    if config.genes_de < 1:
        raise ExperimentError("DE experiment needs genes_de >= 1; ROC is undefined without positives")
    l = config.set_sizes[2]
    theta = config.theta
    if config.rnaseq_sigma3_sq is not None:
        theta = theta.model_copy(update={"sigma3_sq": config.rnaseq_sigma3_sq})

    def one(r: int) -> Optional[Dict[str, Any]]:
        rng = seeded_rng(config.seed, "de", r)
        mu_1 = draw_mu(config.mu_law, config.genes_total, rng)
        de_idx = rng.choice(config.genes_total, size=config.genes_de, replace=False)
        effect = rng.uniform(config.effect_low, config.effect_high, config.genes_de) * rng.choice([-1.0, 1.0], config.genes_de)
        mu_2 = mu_1.copy()
        mu_2[de_idx] += effect
        labels = np.zeros(config.genes_total, dtype=bool)
        labels[de_idx] = True
        labels = labels[:l]
        if labels.all() or not labels.any():
            return None

        cond_1 = _arms(theta, mu_1, config.set_sizes, config, rng)
        cond_2 = _arms(theta, mu_2, config.set_sizes, config, rng)
        if cond_1 is None or cond_2 is None:
            return None

        out: Dict[str, Any] = {"roc": {}, "tpr": {}, "bh": {}}
        for arm in ("calibrated", "rnaseq"):
            (m1, v1), (m2, v2) = cond_1[arm], cond_2[arm]
            _, p = z_scores(m1, v1, m2, v2)
            fpr, tpr = roc_curve(p, labels)
            out["roc"][arm] = tpr_at_fpr(fpr, tpr, ROC_GRID)
            out["tpr"][arm] = tpr_at_fpr(fpr, tpr, config.fpr_grid)
            rows = []
            for q in config.fdr_grid:
                _, rejected = bh_adjust(p, q)
                hits = int(rejected.sum())
                false_hits = int((rejected & ~labels).sum())
                rows.append((q, hits, false_hits, false_hits / hits if hits else 0.0, (hits - false_hits) / labels.sum()))
            out["bh"][arm] = rows
        return out

    logger.info(
        "DE experiment: {} genes, {} DE, sets {}, replications={}",
        config.genes_total, config.genes_de, config.set_sizes, config.replications,
    )
    results = ordered_map(one, range(config.replications), threads)
    kept = [(r, res) for r, res in enumerate(results) if res is not None]
    report = ExperimentReport(kind="de", config=config.model_dump(mode="json"), seed=config.seed)
    report.skipped["replications"] = config.replications - len(kept)
    _check_skips(report.skipped["replications"], config.replications, "DE experiment")

    roc_frames, tpr_rows, bh_rows = [], [], []
    dominated = 0
    for arm in ("calibrated", "rnaseq"):
        mean_tpr = np.mean([res["roc"][arm] for _, res in kept], axis=0)
        roc_frames.append(pd.DataFrame({"arm": arm, "fpr": np.r_[0.0, ROC_GRID], "tpr": np.r_[0.0, mean_tpr]}))
    for r, res in kept:
        if np.all(res["tpr"]["calibrated"] >= res["tpr"]["rnaseq"]):
            dominated += 1
        for arm in ("calibrated", "rnaseq"):
            tpr_rows.extend(
                {"replication": r, "arm": arm, "fpr": f, "tpr": float(t)}
                for f, t in zip(config.fpr_grid, res["tpr"][arm])
            )
            bh_rows.extend(
                {"replication": r, "arm": arm, "fdr": q, "rejections": hits, "false_discoveries": false_hits,
                 "fdp": fdp, "tpr": float(power)}
                for q, hits, false_hits, fdp, power in res["bh"][arm]
            )

    report.roc = pd.concat(roc_frames, ignore_index=True)
    report.tpr_at_fpr = pd.DataFrame(tpr_rows, columns=["replication", "arm", "fpr", "tpr"])
    report.bh = pd.DataFrame(
        bh_rows, columns=["replication", "arm", "fdr", "rejections", "false_discoveries", "fdp", "tpr"]
    )
    means = report.tpr_at_fpr.groupby(["arm", "fpr"])["tpr"].mean()
    report.summary = {
        "replications_used": len(kept),
        "calibrated_dominates": dominated,
        "mean_tpr": {arm: {str(f): float(means[(arm, f)]) for f in config.fpr_grid} for arm in ("calibrated", "rnaseq")},
        "rnaseq_sigma3_sq": theta.sigma3_sq,
    }
    report.notes.append(GENERATOR_NOTE)
    report.notes.append(f"RNA-Seq error variance sigma3_sq = {theta.sigma3_sq} in both conditions")
    return report
