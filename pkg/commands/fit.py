"""`fit`: structural parameter estimation."""
import argparse

from loguru import logger

from commands.common import RunContext
from models.errors import DomainError
from models.schemas import FitWarning
from services.bootstrap import bootstrap_se
from services.core_model import fit_table, platform_reproducibility
from services.ingest import table_frame
from utils.tables import fit_report_text, write_fit_yaml


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        "fit",
        parents=parents,
        help="Estimate the structural parameters from genes measured on all three platforms",
        description="Estimate alpha2, alpha3, beta2, beta3 and the three error variances on set A.",
    )
    parser.add_argument("input", help="Raw record table (gene_id,platform,replicate,value) or canonical table")
    parser.add_argument(
        "--bootstrap",
        type=int,
        metavar="REPS",
        help="Also compute bootstrap standard errors with REPS replicates, at least 100 (default: off)",
    )
    parser.set_defaults(handler=cmd_fit)


def cmd_fit(ctx: RunContext) -> int:
    args: argparse.Namespace = ctx.args
    ctx.command = {"input": args.input, "bootstrap": args.bootstrap}
    with ctx.store() as store:
        table = ctx.read_table(args.input)
        fit = fit_table(table, ctx.defaults.alpha3_form)

        if args.bootstrap is not None:
            se = bootstrap_se(table, fit, args.bootstrap, ctx.defaults.seed, ctx.defaults.threads)
            fit = fit.model_copy(update={"se": se})

        if FitWarning.NEGATIVE_VARIANCE in fit.warnings:
            ctx.warn("negative variance estimate(s); calibration paths using them are blocked")
        if FitWarning.NONPOSITIVE_SPREAD in fit.warnings:
            ctx.warn("non-positive spread estimate of the true expression levels")

        lines = []
        try:
            repro = platform_reproducibility(fit)
        except DomainError:
            repro = None
        if repro is not None:
            lines = [
                f"reproducibility_pcr = {repro.pcr!r}",
                f"reproducibility_microarray = {repro.microarray!r}",
                f"reproducibility_rnaseq = {repro.rnaseq!r}",
                f"reproducibility_ranking = {','.join(p.value for p in repro.ranking)}",
            ]
            ctx.extra["reproducibility"] = repro.model_dump(mode="json")

        report = fit_report_text(fit) + "".join(line + "\n" for line in lines)
        store.write_text("fit_report.txt", report)
        write_fit_yaml(fit, store.path("fit.yaml"))
        store.write_frame("table.csv", table_frame(table))
        ctx.extra["n"] = fit.n
        store.commit(ctx.manifest())
    logger.info("Fit complete: beta2={:.4g} beta3={:.4g}", fit.beta2, fit.beta3)
    return 0
