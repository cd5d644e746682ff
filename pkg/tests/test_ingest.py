"""Tests for raw-table parsing, replicate collapsing, nesting and range filtering."""
import io
import math

import numpy as np
import pytest

from models.errors import DomainError, DuplicateRecordError, EnumValueError, NestingError, ParseError
from models.schemas import CollapseOrder, GeneSet, Platform, Scale, TableFormat
from services.ingest import (
    build_table,
    collapse_replicates,
    filter_expression_range,
    load_table,
    parse_table,
    table_frame,
)
from tests.helpers import raw_csv

FULL_GENE = ["g1,PCR,0,1.5", "g1,MICROARRAY,0,3.0", "g1,RNASEQ,0,2.0"]


class TestParseTable:

    def test_parses_rows_in_order(self):
        records = parse_table(raw_csv(FULL_GENE))
        assert [r.platform for r in records] == [Platform.PCR, Platform.MICROARRAY, Platform.RNASEQ]
        assert records[0].gene_id == "g1"
        assert records[1].value == 3.0

    def test_accepts_file_objects_bom_and_blank_lines(self):
        data = "\ufeff".encode("utf-8") + raw_csv(["g1,PCR,0,1.5", "", "g1,RNASEQ,0,2.0"])
        records = parse_table(io.BytesIO(data))
        assert len(records) == 2

    def test_tab_delimiter_is_detected(self):
        data = b"gene_id\tplatform\treplicate\tvalue\ng1\tPCR\t0\t1.5\n"
        assert parse_table(data)[0].value == 1.5

    def test_explicit_delimiter(self):
        data = b"gene_id\tplatform\treplicate\tvalue\ng1\tPCR\t0\t1.5\n"
        assert parse_table(data, TableFormat(delimiter="\t"))[0].platform == Platform.PCR

    def test_wrong_header(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_table(b"gene,platform,rep,value\ng1,PCR,0,1\n")

    def test_unknown_platform_reports_line(self):
        with pytest.raises(EnumValueError, match="line 3") as exc:
            parse_table(raw_csv(["g1,PCR,0,1.5", "g1,NANOSTRING,0,2.0"]))
        assert exc.value.exit_code == 3

    def test_duplicate_triple(self):
        with pytest.raises(DuplicateRecordError, match="first seen on line 2"):
            parse_table(raw_csv(["g1,PCR,0,1.5", "g1,PCR,0,1.7"]))

    @pytest.mark.parametrize("value", ["nan", "inf", "-inf", "abc", ""])
    def test_non_finite_or_non_numeric_value(self, value):
        with pytest.raises(ParseError):
            parse_table(raw_csv([f"g1,PCR,0,{value}"]))

    @pytest.mark.parametrize("replicate", ["-1", "x", "1.5"])
    def test_bad_replicate(self, replicate):
        with pytest.raises(ParseError):
            parse_table(raw_csv([f"g1,PCR,{replicate},1.0"]))

    def test_field_count(self):
        with pytest.raises(ParseError, match="expected 4 fields"):
            parse_table(raw_csv(["g1,PCR,0"]))

    def test_empty_input(self):
        with pytest.raises(ParseError):
            parse_table(b"")


class TestCollapse:

    def test_log2_input_is_averaged(self):
        records = parse_table(raw_csv(["g1,PCR,0,1.0", "g1,PCR,1,2.0"]))
        assert collapse_replicates(records, Scale.LOG2)[("g1", Platform.PCR)] == pytest.approx(1.5)

    def test_linear_log_then_mean(self):
        records = parse_table(raw_csv(["g1,PCR,0,2", "g1,PCR,1,8"]))
        collapsed = collapse_replicates(records, Scale.LINEAR, CollapseOrder.LOG_THEN_MEAN)
        assert collapsed[("g1", Platform.PCR)] == pytest.approx(2.0)

    def test_linear_mean_then_log(self):
        records = parse_table(raw_csv(["g1,PCR,0,2", "g1,PCR,1,8"]))
        collapsed = collapse_replicates(records, Scale.LINEAR, CollapseOrder.MEAN_THEN_LOG)
        assert collapsed[("g1", Platform.PCR)] == pytest.approx(math.log2(5.0))

    def test_non_positive_linear_value(self):
        records = parse_table(raw_csv(["g1,PCR,0,2", "g1,PCR,1,0"]))
        with pytest.raises(DomainError) as exc:
            collapse_replicates(records, Scale.LINEAR)
        assert exc.value.exit_code == 4

    def test_row_order_does_not_matter(self):
        rows = [f"g1,RNASEQ,{i},{v}" for i, v in enumerate([0.1, 1e8, -1e8, 0.3, 0.7])]
        forward = collapse_replicates(parse_table(raw_csv(rows)), Scale.LOG2)
        backward = collapse_replicates(parse_table(raw_csv(rows[::-1])), Scale.LOG2)
        assert forward == backward

    @pytest.mark.parametrize("order", list(CollapseOrder))
    def test_linear_row_order_does_not_matter(self, order):
        rows = [f"g1,PCR,{i},{v}" for i, v in enumerate([0.25, 3.0, 1e6, 7.5])]
        rows += [f"g2,MICROARRAY,{i},{v}" for i, v in enumerate([12.0, 0.01, 4.0])]
        forward = collapse_replicates(parse_table(raw_csv(rows)), Scale.LINEAR, order)
        shuffled = [rows[k] for k in (5, 2, 0, 6, 3, 1, 4)]
        assert dict(collapse_replicates(parse_table(raw_csv(shuffled)), Scale.LINEAR, order)) == dict(forward)


class TestBuildTable:

    def test_membership_from_coverage(self):
        rows = FULL_GENE + ["g2,MICROARRAY,0,1.0", "g2,RNASEQ,0,1.0", "g3,RNASEQ,0,0.5"]
        table = build_table(collapse_replicates(parse_table(raw_csv(rows)), Scale.LOG2))
        assert table.genes == ["g1", "g2", "g3"]
        assert table.set_sizes == (1, 2, 3)
        assert [table.membership(g) for g in table.genes] == [GeneSet.A, GeneSet.B_MINUS_A, GeneSet.C_MINUS_B]

    def test_pcr_without_microarray_violates_nesting(self):
        rows = FULL_GENE + ["g2,PCR,0,1.0", "g2,RNASEQ,0,1.0"]
        with pytest.raises(NestingError) as exc:
            build_table(collapse_replicates(parse_table(raw_csv(rows)), Scale.LOG2))
        assert exc.value.genes == ["g2"]
        assert exc.value.exit_code == 5

    def test_missing_rnaseq_violates_nesting(self):
        rows = FULL_GENE + ["g2,MICROARRAY,0,1.0"]
        with pytest.raises(NestingError, match="g2"):
            build_table(collapse_replicates(parse_table(raw_csv(rows)), Scale.LOG2))


class TestRangeFilter:

    def test_demotes_out_of_range_genes_to_b(self, noiseless_table):
        filtered = filter_expression_range(noiseless_table, 0.5, 3.5)
        assert filtered.set_sizes == (3, 6, 7)
        assert filtered.membership("g1") == GeneSet.B_MINUS_A
        assert filtered.y["g1"] == noiseless_table.y["g1"]
        assert filtered.z["g5"] == noiseless_table.z["g5"]

    def test_bounds_are_inclusive(self, noiseless_table):
        assert filter_expression_range(noiseless_table, 0.0, 4.0).set_sizes == noiseless_table.set_sizes

    def test_filtering_twice_changes_nothing(self, noiseless_table):
        once = filter_expression_range(noiseless_table, 0.5, 3.5)
        assert filter_expression_range(once, 0.5, 3.5) == once

    def test_empty_interval(self, noiseless_table):
        with pytest.raises(DomainError):
            filter_expression_range(noiseless_table, 2.0, 2.0)


class TestLoadTable:

    def test_canonical_table_is_detected(self, noiseless_table):
        text = table_frame(noiseless_table).to_csv(index=False, lineterminator="\n", na_rep="")
        table = load_table(text.encode("utf-8"))
        assert table.genes == noiseless_table.genes
        assert table.set_sizes == noiseless_table.set_sizes
        np.testing.assert_allclose(
            [table.z[g] for g in table.genes], [noiseless_table.z[g] for g in noiseless_table.genes]
        )

    def test_canonical_set_must_match_coverage(self):
        data = b"gene_id,set,x,y,z\ng1,C-B,1.0,2.0,3.0\n"
        with pytest.raises(NestingError):
            load_table(data)

    def test_raw_table(self):
        table = load_table(raw_csv(FULL_GENE))
        assert table.x == {"g1": 1.5}
