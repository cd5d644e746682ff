"""`diagnose`: residuals and normal QQ pairs over set A."""
from commands.common import RunContext, add_fit_flag
from models.errors import InsufficientDataError
from services.core_model import calibrate, residuals
from services.diagnostics import (
    COMPONENTS,
    agreement_with_xyz,
    diagnostics_text,
    qq_pairs,
    qq_slope,
    residual_frame,
    residual_summary,
)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        "diagnose",
        parents=parents,
        help="Residuals of the three platform models and normal QQ pairs",
        description="Residuals e1 = X - mu, e2 = Y - alpha2 - beta2 mu, e3 = Z - alpha3 - beta3 mu over set A.",
    )
    parser.add_argument("input", help="Raw record table or canonical table")
    add_fit_flag(parser)
    parser.set_defaults(handler=cmd_diagnose)


def cmd_diagnose(ctx: RunContext) -> int:
    args = ctx.args
    ctx.command = {"input": args.input, "fit": args.fit}
    with ctx.store() as store:
        table = ctx.read_table(args.input)
        if table.set_sizes[0] == 0:
            raise InsufficientDataError("diagnostics need at least one gene in A")
        fit = ctx.obtain_fit(table)
        rows = residuals(table, fit, calibrate(table, fit))
        qq = qq_pairs(rows)
        summary = residual_summary(rows)
        slopes = {c: qq_slope(qq, c) for c in COMPONENTS}
        agreement = agreement_with_xyz(table, fit)

        store.write_frame("residuals.csv", residual_frame(rows))
        store.write_frame("qq.csv", qq)
        store.write_text("diagnostics.txt", diagnostics_text(summary, agreement, slopes))
        ctx.extra["qq_slopes"] = slopes
        ctx.extra["agreement"] = agreement
        store.commit(ctx.manifest())
    return 0
