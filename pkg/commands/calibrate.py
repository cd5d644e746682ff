"""`calibrate`: calibrated expression on the qRT-PCR scale."""
from commands.common import RunContext, add_fit_flag, add_var_mode
from models.schemas import VarianceMode
from services.bootstrap import estimate_variance
from services.core_model import calibrate
from utils.tables import calibrated_frame


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        "calibrate",
        parents=parents,
        help="Calibrated expression with standard errors for every gene",
        description="Map every gene to the qRT-PCR scale using all platforms that measured it.",
    )
    parser.add_argument("input", help="Raw record table or canonical table")
    add_fit_flag(parser)
    add_var_mode(parser)
    parser.set_defaults(handler=cmd_calibrate)


def cmd_calibrate(ctx: RunContext) -> int:
    args = ctx.args
    ctx.command = {"input": args.input, "fit": args.fit}
    with ctx.store() as store:
        table = ctx.read_table(args.input)
        fit = ctx.obtain_fit(table)
        variances = None
        if ctx.defaults.var_mode == VarianceMode.BOOTSTRAP:
            variances = estimate_variance(
                fit, table, VarianceMode.BOOTSTRAP, ctx.defaults.bootstrap_reps, ctx.defaults.seed, ctx.defaults.threads
            )
        estimates = calibrate(table, fit, variances)
        negative = sum(1 for e in estimates if e.se is None)
        if negative:
            ctx.warn(f"{negative} gene(s) have a negative variance estimate; their se is left empty")
        store.write_frame("calibrated.csv", calibrated_frame(estimates))
        n, m, l = table.set_sizes
        ctx.extra["counts"] = {"A": n, "B-A": m - n, "C-B": l - m}
        store.commit(ctx.manifest())
    return 0
