"""Parsing and preprocessing of raw measurement tables."""
import csv
import math
from collections import OrderedDict
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from models.errors import (
    DomainError,
    DuplicateRecordError,
    EnumValueError,
    InputFileError,
    NestingError,
    ParseError,
)
from models.schemas import (
    CollapseOrder,
    GeneSet,
    MeasurementTable,
    Platform,
    RawRecord,
    Scale,
    TableFormat,
)

RAW_HEADER = ["gene_id", "platform", "replicate", "value"]
CANONICAL_HEADER = ["gene_id", "set", "x", "y", "z"]

CollapsedValues = Dict[Tuple[str, Platform], float]


def _decode(stream: Union[bytes, BinaryIO]) -> str:
    data = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    try:
        return bytes(data).decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise ParseError(f"input is not valid UTF-8: {e}") from e


def _detect_delimiter(header_line: str, fmt: TableFormat) -> str:
    if fmt.delimiter is not None:
        return fmt.delimiter
    return "\t" if "\t" in header_line else ","


def _rows(text: str, fmt: TableFormat) -> Tuple[List[str], List[Tuple[int, List[str]]]]:
    """Split text into the header and (line number, fields) pairs, skipping blank lines."""
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty input: header row required", line=1)
    delimiter = _detect_delimiter(lines[0], fmt)
    reader = csv.reader(lines, delimiter=delimiter)
    header: Optional[List[str]] = None
    rows: List[Tuple[int, List[str]]] = []
    for line_no, fields in enumerate(reader, start=1):
        if header is None:
            header = [f.strip() for f in fields]
            continue
        if not fields or all(not f.strip() for f in fields):
            continue
        rows.append((line_no, fields))
    return header or [], rows


def parse_table(stream: Union[bytes, BinaryIO], fmt: Optional[TableFormat] = None) -> List[RawRecord]:
    """
    Parse a raw table with header ``gene_id,platform,replicate,value``.

    Args:
        stream: Bytes or binary file object (UTF-8)
        fmt: Delimiter choice; auto-detected from the header when unset

    Returns:
        One RawRecord per data row, in input order
    """
    fmt = fmt or TableFormat()
    header, rows = _rows(_decode(stream), fmt)
    if header != RAW_HEADER:
        raise ParseError(f"expected header {','.join(RAW_HEADER)}, got {','.join(header)}", line=1)

    records: List[RawRecord] = []
    seen: Dict[Tuple[str, Platform, int], int] = {}
    for line_no, fields in rows:
        if len(fields) != len(RAW_HEADER):
            raise ParseError(f"expected {len(RAW_HEADER)} fields, found {len(fields)}", line=line_no)
        gene_id, platform_raw, replicate_raw, value_raw = (f.strip() for f in fields)
        if not gene_id:
            raise ParseError("empty gene_id", line=line_no)
        try:
            platform = Platform(platform_raw)
        except ValueError:
            allowed = "|".join(p.value for p in Platform)
            raise EnumValueError(f"unknown platform {platform_raw!r} (expected {allowed})", line=line_no)
        try:
            replicate = int(replicate_raw)
        except ValueError:
            raise ParseError(f"replicate {replicate_raw!r} is not an integer", line=line_no)
        if replicate < 0:
            raise ParseError(f"replicate {replicate} is negative", line=line_no)
        try:
            value = float(value_raw)
        except ValueError:
            raise ParseError(f"value {value_raw!r} is not a number", line=line_no)
        if not math.isfinite(value):
            raise ParseError(f"value {value_raw!r} is not finite", line=line_no)

        key = (gene_id, platform, replicate)
        if key in seen:
            raise DuplicateRecordError(
                f"duplicate record ({gene_id}, {platform.value}, {replicate}); first seen on line {seen[key]}",
                line=line_no,
            )
        seen[key] = line_no
        records.append(RawRecord(gene_id=gene_id, platform=platform, replicate=replicate, value=value))

    logger.debug("Parsed {} raw records", len(records))
    return records


def collapse_replicates(
    records: Iterable[RawRecord],
    scale: Scale,
    order: CollapseOrder = CollapseOrder.LOG_THEN_MEAN,
) -> CollapsedValues:
    """
    Average technical replicates into one log2 value per (gene, platform).

    Linear input is log2-transformed before averaging unless ``order`` asks for
    mean-then-log. Replicates are averaged in replicate-index order, so the result
    does not depend on row order.
    """
    grouped: "OrderedDict[Tuple[str, Platform], List[RawRecord]]" = OrderedDict()
    for record in records:
        grouped.setdefault((record.gene_id, record.platform), []).append(record)

    collapsed: CollapsedValues = OrderedDict()
    for key, group in grouped.items():
        group = sorted(group, key=lambda r: r.replicate)
        values = np.array([r.value for r in group], dtype=float)
        if scale == Scale.LINEAR:
            for r in group:
                if r.value <= 0:
                    raise DomainError(
                        f"non-positive linear value {r.value!r} for gene {r.gene_id} "
                        f"({r.platform.value}, replicate {r.replicate}); log2 undefined"
                    )
            if order == CollapseOrder.LOG_THEN_MEAN:
                collapsed[key] = float(np.mean(np.log2(values)))
            else:
                collapsed[key] = float(np.log2(np.mean(values)))
        else:
            collapsed[key] = float(np.mean(values))
    return collapsed


def build_table(collapsed: CollapsedValues) -> MeasurementTable:
    """Derive set membership from platform coverage and validate A ⊂ B ⊂ C."""
    genes: List[str] = []
    x: Dict[str, float] = {}
    y: Dict[str, float] = {}
    z: Dict[str, float] = {}
    target = {Platform.PCR: x, Platform.MICROARRAY: y, Platform.RNASEQ: z}
    for (gene_id, platform), value in collapsed.items():
        if gene_id not in x and gene_id not in y and gene_id not in z:
            genes.append(gene_id)
        target[platform][gene_id] = value

    offenders = [g for g in genes if (g in x and g not in y) or g not in z]
    if offenders:
        shown = ", ".join(offenders[:20]) + (" ..." if len(offenders) > 20 else "")
        raise NestingError(
            f"{len(offenders)} gene(s) violate A ⊂ B ⊂ C (PCR requires microarray and RNA-Seq; "
            f"microarray requires RNA-Seq): {shown}",
            genes=offenders,
        )

    table = MeasurementTable(genes=genes, x=x, y=y, z=z)
    logger.debug("Built table with (n, m, l) = {}", table.set_sizes)
    return table


def filter_expression_range(table: MeasurementTable, lo: float = -6.0, hi: float = 4.0) -> MeasurementTable:
    """Demote genes of A whose x lies outside [lo, hi] to B-A; y and z are kept."""
    if not lo < hi:
        raise DomainError(f"range lower bound {lo} must be below upper bound {hi}")
    kept = {g: v for g, v in table.x.items() if lo <= v <= hi}
    demoted = len(table.x) - len(kept)
    if demoted:
        logger.info("Range filter [{}, {}] demoted {} gene(s) out of A", lo, hi, demoted)
    return MeasurementTable(genes=list(table.genes), x=kept, y=dict(table.y), z=dict(table.z))


def parse_canonical_table(stream: Union[bytes, BinaryIO], fmt: Optional[TableFormat] = None) -> MeasurementTable:
    """Parse a ``gene_id,set,x,y,z`` table as written by :func:`table_frame`."""
    fmt = fmt or TableFormat()
    header, rows = _rows(_decode(stream), fmt)
    if header != CANONICAL_HEADER:
        raise ParseError(f"expected header {','.join(CANONICAL_HEADER)}", line=1)
    collapsed: CollapsedValues = OrderedDict()
    declared: Dict[str, str] = {}
    for line_no, fields in rows:
        if len(fields) != len(CANONICAL_HEADER):
            raise ParseError(f"expected {len(CANONICAL_HEADER)} fields, found {len(fields)}", line=line_no)
        gene_id, set_raw, *cells = (f.strip() for f in fields)
        try:
            GeneSet(set_raw)
        except ValueError:
            raise EnumValueError(f"unknown set {set_raw!r}", line=line_no)
        if gene_id in declared:
            raise DuplicateRecordError(f"duplicate gene {gene_id}", line=line_no)
        declared[gene_id] = set_raw
        for platform, cell in zip((Platform.PCR, Platform.MICROARRAY, Platform.RNASEQ), cells):
            if cell == "":
                continue
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"value {cell!r} is not a number", line=line_no)
            if not math.isfinite(value):
                raise ParseError(f"value {cell!r} is not finite", line=line_no)
            collapsed[(gene_id, platform)] = value
    table = build_table(collapsed)
    mismatched = [g for g, s in declared.items() if g in table.z and table.membership(g).value != s]
    if mismatched:
        raise NestingError(f"declared set disagrees with platform coverage for {len(mismatched)} gene(s)", mismatched)
    return table


def table_frame(table: MeasurementTable) -> pd.DataFrame:
    """Canonical ``gene_id,set,x,y,z`` frame; absent cells are NaN (written empty)."""
    return pd.DataFrame(
        {
            "gene_id": table.genes,
            "set": [table.membership(g).value for g in table.genes],
            "x": [table.x.get(g, np.nan) for g in table.genes],
            "y": [table.y.get(g, np.nan) for g in table.genes],
            "z": [table.z.get(g, np.nan) for g in table.genes],
        },
        columns=CANONICAL_HEADER,
    )


def read_bytes(path: Union[str, Path]) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise InputFileError(f"input file not found: {path}")
    return p.read_bytes()


def load_table(
    data: bytes,
    scale: Scale = Scale.LOG2,
    order: CollapseOrder = CollapseOrder.LOG_THEN_MEAN,
    fmt: Optional[TableFormat] = None,
) -> MeasurementTable:
    """Build a table from either a raw record file or a canonical table file."""
    first_line = _decode(data).split("\n", 1)[0]
    delimiter = _detect_delimiter(first_line, fmt or TableFormat())
    header = [h.strip() for h in first_line.strip("\r").split(delimiter)]
    if header == CANONICAL_HEADER:
        return parse_canonical_table(data, fmt)
    records = parse_table(data, fmt)
    return build_table(collapse_replicates(records, scale, order))
