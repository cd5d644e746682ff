"""`rerun`: re-execute a recorded invocation from its manifest."""
from pathlib import Path
from typing import List, Sequence

from loguru import logger

from commands.common import RunContext
from models.errors import ConfigError, InputFileError
from services.artifact_store import file_digest, read_manifest

STRIPPED_FLAGS = ("--out", "--config")


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        "rerun",
        help="Re-run a command from its manifest.json into a new output directory",
        description="Replays the recorded arguments with the recorded resolved configuration.",
    )
    parser.add_argument("manifest", help="manifest.json, or the directory holding it")
    parser.add_argument("--out", required=True, help="New output directory")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default: MECAL_LOG_LEVEL or INFO)")
    parser.set_defaults(handler=cmd_rerun)


def strip_flags(argv: Sequence[str], names: Sequence[str]) -> List[str]:
    """Drop ``--name VALUE`` and ``--name=VALUE`` occurrences."""
    out: List[str] = []
    skip = False
    for token in argv:
        if skip:
            skip = False
            continue
        if token in names:
            skip = True
            continue
        if any(token.startswith(f"{name}=") for name in names):
            continue
        out.append(token)
    return out


def cmd_rerun(ctx: RunContext) -> int:
    manifest = read_manifest(ctx.args.manifest)
    if manifest.subcommand == "rerun" or not manifest.argv:
        raise ConfigError("manifest does not record a re-runnable command", "argv")
    if Path(ctx.args.out).resolve() == Path(ctx.args.manifest).resolve().parent:
        logger.warning("Re-running into the directory of the original manifest; its files will be replaced")

    for path, digest in manifest.inputs.items():
        try:
            current = file_digest(path)
        except InputFileError:
            current = None
        if current != digest:
            ctx.warn(f"input {path} changed since the recorded run ({digest} -> {current})")

    config = {"run": manifest.config.get("run", {})}
    if "simulation" in manifest.config:
        config["simulation"] = manifest.config["simulation"]
    argv = strip_flags(manifest.argv, STRIPPED_FLAGS) + ["--out", ctx.args.out]
    logger.info("Re-running `{}` into {}", " ".join(argv), ctx.args.out)
    return ctx.dispatch(argv, config=config)
