"""`de`: two-condition differential expression."""
from commands.common import DEFAULTS, RunContext, add_var_mode, open_unit
from models.schemas import Measurement, VarianceMode
from services.bootstrap import estimate_variance
from services.core_model import fit_table
from services.inference import de_frame, de_pipeline, summarize_de, summary_text


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        "de",
        parents=parents,
        help="Differential expression between two conditions with BH control",
        description="Fit and calibrate each condition independently, z-test shared genes, adjust with Benjamini-Hochberg.",
    )
    parser.add_argument("input1", help="Condition 1 table")
    parser.add_argument("input2", help="Condition 2 table")
    parser.add_argument("--fdr", type=open_unit, help=f"BH false discovery rate in (0, 1) (default: {DEFAULTS.fdr})")
    parser.add_argument(
        "--arm",
        choices=["calibrated", "rnaseq", "both"],
        help=f"Test calibrated estimates, raw RNA-Seq, or both (default: {DEFAULTS.arm})",
    )
    add_var_mode(parser)
    parser.set_defaults(handler=cmd_de)


def cmd_de(ctx: RunContext) -> int:
    args = ctx.args
    d = ctx.defaults
    ctx.command = {"input1": args.input1, "input2": args.input2}
    with ctx.store() as store:
        table_1 = ctx.read_table(args.input1)
        table_2 = ctx.read_table(args.input2)
        fits = (fit_table(table_1, d.alpha3_form), fit_table(table_2, d.alpha3_form))

        reports = {}
        if d.arm in ("calibrated", "both"):
            variances = None
            if d.var_mode == VarianceMode.BOOTSTRAP:
                variances = tuple(
                    estimate_variance(fit, table, VarianceMode.BOOTSTRAP, d.bootstrap_reps, d.seed + i, d.threads)
                    for i, (fit, table) in enumerate(zip(fits, (table_1, table_2)))
                )
            reports[Measurement.CALIBRATED] = de_pipeline(
                table_1, table_2, d.fdr, Measurement.CALIBRATED, fits=fits, variances=variances
            )
            store.write_frame("de_calibrated.csv", de_frame(reports[Measurement.CALIBRATED]))
        if d.arm in ("rnaseq", "both"):
            reports[Measurement.RNASEQ_RAW] = de_pipeline(table_1, table_2, d.fdr, Measurement.RNASEQ_RAW, fits=fits)
            store.write_frame("de_rnaseq.csv", de_frame(reports[Measurement.RNASEQ_RAW]))

        notes = []
        for report in reports.values():
            for w in report.warnings:
                if w not in ctx.warnings:
                    ctx.warnings.append(w)
            notes.extend(report.notes)
        ctx.notes.extend(notes)

        summary = summarize_de(reports.get(Measurement.CALIBRATED), reports.get(Measurement.RNASEQ_RAW))
        store.write_text("de_summary.txt", summary_text(summary, d.fdr, notes))
        ctx.extra["counts"] = {m.value: r.counts for m, r in reports.items()}
        store.commit(ctx.manifest())
    return 0
