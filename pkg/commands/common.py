"""Flag parsing, config resolution and manifest plumbing shared by every subcommand."""
import argparse
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from loguru import logger
from pydantic import ValidationError

from config import APP_VERSION, RunDefaults, load_settings, resolve_defaults, validation_to_config_error
from models.schemas import (
    Alpha3Form,
    CollapseOrder,
    FitWarning,
    MeasurementTable,
    RunManifest,
    Scale,
    StructuralFit,
    TableFormat,
    VarianceMode,
)
from services.artifact_store import ArtifactStore, file_digest
from services.core_model import fit_table
from services.ingest import filter_expression_range, load_table, read_bytes
from utils.tables import read_fit_yaml

DEFAULTS = RunDefaults()

# CLI dest -> RunDefaults field
FLAG_FIELDS: Dict[str, str] = {
    "seed": "seed",
    "threads": "threads",
    "scale": "scale",
    "collapse": "collapse",
    "fdr": "fdr",
    "arm": "arm",
    "var_mode": "var_mode",
    "bootstrap": "bootstrap_reps",
    "replications": "replications",
    "setting": "setting",
    "alpha3_form": "alpha3_form",
    "n_test": "n_test",
    "n_train": "n_train_grid",
}


def parse_range(value: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(v) for v in value.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {value!r}")
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"range lower bound must be below upper bound, got {value!r}")
    return lo, hi


def open_unit(value: str) -> float:
    try:
        q = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {value!r}")
    if not 0 < q < 1:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {value!r}")
    return q


def positive_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}")
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value!r}")
    return n


def int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def global_flags() -> argparse.ArgumentParser:
    """Parent parser with the flags every subcommand accepts."""
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("run options")
    group.add_argument("--seed", type=int, help=f"Random seed (default: {DEFAULTS.seed})")
    group.add_argument("--threads", type=positive_int, help=f"Worker threads for replicate loops (default: {DEFAULTS.threads})")
    group.add_argument("--out", default=".", help="Output directory (default: current directory)")
    group.add_argument("--config", help="YAML config file; see config.sample.yaml (default: none)")
    group.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default: MECAL_LOG_LEVEL or INFO)")
    return parent


def input_flags() -> argparse.ArgumentParser:
    """Parent parser with the ingestion flags."""
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("input options")
    group.add_argument(
        "--range",
        type=parse_range,
        help=f"Keep genes in A only when LO <= x <= HI; write as --range=LO:HI "
        f"(default: {DEFAULTS.range_lo:g}:{DEFAULTS.range_hi:g})",
    )
    group.add_argument("--scale", choices=[s.value for s in Scale], help=f"Scale of input values (default: {DEFAULTS.scale.value})")
    group.add_argument(
        "--collapse",
        choices=[c.value for c in CollapseOrder],
        help=f"Replicate averaging order for linear input (default: {DEFAULTS.collapse.value})",
    )
    group.add_argument("--delimiter", choices=["comma", "tab"], help="Input delimiter (default: detected from header)")
    group.add_argument(
        "--alpha3-form",
        choices=[a.value for a in Alpha3Form],
        help=f"Intercept convention for alpha3 (default: {DEFAULTS.alpha3_form.value})",
    )
    return parent


def add_var_mode(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--var-mode",
        choices=[m.value for m in VarianceMode],
        help=f"Per-gene variance: leading-order or full bootstrap (default: {DEFAULTS.var_mode.value})",
    )
    parser.add_argument(
        "--bootstrap",
        type=int,
        metavar="REPS",
        help=f"Bootstrap replicates for --var-mode bootstrap (default: {DEFAULTS.bootstrap_reps})",
    )


@dataclass
class RunContext:
    """Resolved state of one invocation; collects what ends up in the manifest."""

    subcommand: str
    argv: List[str]
    args: argparse.Namespace
    config: Dict[str, Any]
    defaults: RunDefaults
    inputs: Dict[str, str] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)
    command: Dict[str, Any] = field(default_factory=dict)
    dispatch: Optional[Callable[..., int]] = None

    @classmethod
    def resolve(cls, subcommand: str, argv: List[str], args: argparse.Namespace, config: Dict[str, Any]) -> "RunContext":
        base = resolve_defaults(config, load_settings())
        overrides: Dict[str, Any] = {}
        for dest, name in FLAG_FIELDS.items():
            value = getattr(args, dest, None)
            if value is not None:
                overrides[name] = value
        if getattr(args, "range", None) is not None:
            overrides["range_lo"], overrides["range_hi"] = args.range
        try:
            defaults = RunDefaults(**{**base.model_dump(), **overrides}) if overrides else base
        except ValidationError as e:
            raise validation_to_config_error(e, "flags")
        return cls(subcommand=subcommand, argv=list(argv), args=args, config=config, defaults=defaults)

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)

    def table_format(self) -> TableFormat:
        delimiter = getattr(self.args, "delimiter", None)
        return TableFormat(delimiter={"comma": ",", "tab": "\t", None: None}[delimiter])

    def read_table(self, path: str) -> MeasurementTable:
        """Load, collapse, build and range-filter one input; records its digest."""
        data = read_bytes(path)
        self.inputs[str(path)] = file_digest(path)
        table = load_table(data, self.defaults.scale, self.defaults.collapse, self.table_format())
        filtered = filter_expression_range(table, self.defaults.range_lo, self.defaults.range_hi)
        demoted = table.set_sizes[0] - filtered.set_sizes[0]
        self.extra.setdefault("filter", {})[str(path)] = {
            "n_before": table.set_sizes[0],
            "n_after": filtered.set_sizes[0],
            "set_sizes": list(filtered.set_sizes),
        }
        if demoted:
            self.notes.append(
                f"{path}: range {self.defaults.range_lo:g}:{self.defaults.range_hi:g} demoted {demoted} gene(s) from A"
            )
        return filtered

    def manifest(self) -> RunManifest:
        config = {"run": self.defaults.model_dump(mode="json"), "command": self.command}
        if "simulation" in self.config:
            config["simulation"] = self.config["simulation"]
        return RunManifest(
            subcommand=self.subcommand,
            argv=self.argv,
            config=config,
            inputs=self.inputs,
            seed=self.defaults.seed,
            version=APP_VERSION,
            warnings=self.warnings,
            notes=self.notes,
            extra=self.extra,
        )

    def store(self) -> ArtifactStore:
        return ArtifactStore(Path(self.args.out))

    def obtain_fit(self, table: MeasurementTable) -> StructuralFit:
        """Fit from ``--fit`` when given, else fitted inline on the input's set A."""
        path = getattr(self.args, "fit", None)
        if path:
            self.inputs[str(path)] = file_digest(path)
            fit = read_fit_yaml(path)
            self.notes.append(f"structural fit read from {path}")
        else:
            fit = fit_table(table, self.defaults.alpha3_form)
        if FitWarning.NEGATIVE_VARIANCE in fit.warnings:
            self.warn("negative variance estimate(s) in the structural fit")
        return fit


def add_fit_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--fit", help="fit.yaml written by `fit` (default: fit inline on the input)")
