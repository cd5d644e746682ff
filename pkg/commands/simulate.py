"""`simulate`: datasets and Monte-Carlo experiments from parameter presets."""
from typing import Any, Dict

import pandas as pd
from pydantic import ValidationError

from commands.common import DEFAULTS, RunContext, int_list, positive_int
from config import validation_to_config_error
from models.errors import ConfigError
from models.schemas import Alpha3Form, DESimConfig, SimConfig
from services.ingest import table_frame
from services.simulation import (
    generate_dataset,
    run_accuracy_experiment,
    run_de_experiment,
    setting_preset,
    variance_curvature,
)

MODES = ("dataset", "accuracy", "de")


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        "simulate",
        parents=parents,
        help="Simulated datasets, accuracy curves and DE ROC experiments",
        description="Simulate from the three-platform error model under parameter setting 1, 2 or 3.",
    )
    parser.add_argument("--mode", choices=MODES, default="dataset", help="What to simulate (default: dataset)")
    parser.add_argument("--setting", type=int, choices=[1, 2, 3], help=f"Parameter preset (default: {DEFAULTS.setting})")
    parser.add_argument("--n", type=positive_int, help="dataset: genes, all in A (default: largest --n-train value)")
    parser.add_argument("--sizes", type=int_list, help="dataset/de: set sizes n,m,l of A, B, C (default: all genes in A / 500,3000,5000)")
    parser.add_argument("--rep-index", type=int, default=0, help="dataset: replication index of the draw (default: 0)")
    parser.add_argument(
        "--replications",
        type=positive_int,
        help=f"accuracy/de: Monte-Carlo replications (default: {DEFAULTS.replications} for accuracy, 1 for de)",
    )
    parser.add_argument(
        "--n-train",
        type=int_list,
        help=f"accuracy: training sizes (default: {','.join(str(n) for n in DEFAULTS.n_train_grid)})",
    )
    parser.add_argument("--n-test", type=positive_int, help=f"accuracy: test genes (default: {DEFAULTS.n_test})")
    parser.add_argument("--genes", type=positive_int, help="de: genes in total (default: 5000)")
    parser.add_argument("--genes-de", type=int, help="de: differentially expressed genes (default: 500)")
    parser.add_argument("--rnaseq-sigma3-sq", type=float, help="de: RNA-Seq error variance (default: 1.0)")
    parser.add_argument(
        "--alpha3-form",
        choices=[a.value for a in Alpha3Form],
        help=f"Intercept convention for alpha3 when refitting (default: {DEFAULTS.alpha3_form.value})",
    )
    parser.set_defaults(handler=cmd_simulate)


def _section(ctx: RunContext, key: str) -> Dict[str, Any]:
    value = (ctx.config.get("simulation") or {}).get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError("must be a mapping", f"simulation.{key}")
    return dict(value)


def _common(ctx: RunContext) -> Dict[str, Any]:
    d = ctx.defaults
    theta = {**setting_preset(d.setting).model_dump(), **_section(ctx, "theta")}
    return {"theta": theta, "mu_law": _section(ctx, "mu_law"), "seed": d.seed, "alpha3_form": d.alpha3_form}


def _sizes(args):
    if args.sizes is not None:
        if len(args.sizes) != 3:
            raise ConfigError("expected three comma-separated sizes n,m,l", "sizes")
        return tuple(args.sizes)
    return (args.n,) * 3 if args.n else None


def build_sim_config(ctx: RunContext) -> SimConfig:
    d = ctx.defaults
    try:
        return SimConfig(
            **_common(ctx),
            n_train_grid=d.n_train_grid,
            n_test=d.n_test,
            replications=d.replications,
            dataset_sizes=_sizes(ctx.args),
        )
    except ValidationError as e:
        raise validation_to_config_error(e, "simulation")


def build_de_config(ctx: RunContext) -> DESimConfig:
    args = ctx.args
    de = _section(ctx, "de")
    de["replications"] = args.replications if args.replications is not None else de.get("replications", 1)
    for flag, key in (("genes", "genes_total"), ("genes_de", "genes_de"), ("rnaseq_sigma3_sq", "rnaseq_sigma3_sq")):
        if getattr(args, flag) is not None:
            de[key] = getattr(args, flag)
    if args.sizes is not None:
        de["set_sizes"] = _sizes(args)
    de.setdefault("rnaseq_sigma3_sq", 1.0)
    try:
        return DESimConfig(**{**de, **_common(ctx)})
    except ValidationError as e:
        raise validation_to_config_error(e, "simulation.de")


def cmd_simulate(ctx: RunContext) -> int:
    args = ctx.args
    threads = ctx.defaults.threads
    ctx.command = {"mode": args.mode}
    with ctx.store() as store:
        if args.mode == "dataset":
            config = build_sim_config(ctx)
            table, truth = generate_dataset(config, args.rep_index)
            store.write_frame("dataset.csv", table_frame(table))
            store.write_frame("truth.csv", pd.DataFrame({"gene_id": list(truth), "mu": list(truth.values())}))
            ctx.extra["set_sizes"] = list(table.set_sizes)
        elif args.mode == "accuracy":
            config = build_sim_config(ctx)
            report = run_accuracy_experiment(config, threads)
            store.write_frame("amse_curves.csv", report.amse)
            store.write_frame("variance_curves.csv", report.variance_curves)
            curvature: Dict[str, Dict[str, list]] = {}
            for (name, n), part in report.variance_curves.groupby(["estimator", "n"], sort=False):
                curvature.setdefault(name, {})[str(n)] = list(variance_curvature(part["mu"], part["emp_var"]))
            ctx.extra.update(skipped=report.skipped, negative_variance=report.negative_variance, curvature=curvature)
            ctx.notes.extend(report.notes)
        else:
            config = build_de_config(ctx)
            report = run_de_experiment(config, threads)
            store.write_frame("roc.csv", report.roc)
            store.write_frame("de_fdr.csv", report.bh)
            store.write_frame("tpr_at_fpr.csv", report.tpr_at_fpr)
            ctx.extra.update(skipped=report.skipped, summary=report.summary)
            ctx.notes.extend(report.notes)
        ctx.command["simulation"] = config.model_dump(mode="json")
        store.commit(ctx.manifest())
    return 0
