import io

import numpy as np
import pytest

from odlglm.errors import SchemaError
from odlglm.report import build_report, read_records, trace_auc


def test_auc_examples():
    assert trace_auc(range(1, 85), [0.05] * 84) == pytest.approx(-np.log10(0.05))
    assert trace_auc(range(1, 10), [1.0] * 9) == 0.0
    assert trace_auc([1, 2], [1.0, 0.01]) == pytest.approx(1.0)
    assert trace_auc([2, 1], [0.01, 1.0]) == pytest.approx(1.0)
    assert trace_auc([3], [0.1]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        trace_auc([], [])


HEADER = "batch_index,coord,lambda,beta_lasso,beta_debiased,se,ci_low,ci_high,p_value\n"


def test_read_and_build():
    text = HEADER + "1,2,0.05,0,0.1,1,-1.86,2.06,0.1\n2,2,0.05,0,0.2,1,-1.76,2.16,0.01\n"
    rep = build_report(read_records(io.StringIO(text)))
    assert rep["traces"] == [(1, 2, pytest.approx(1.0)), (2, 2, pytest.approx(2.0))]
    assert rep["auc"] == [(2, pytest.approx(1.5))]
    assert rep["bands"][1] == (2, 2, 0.2, -1.76, 2.16)


def test_failed_records_skipped():
    text = HEADER + "1,1,0.05,0,nan,nan,nan,nan,nan\n2,1,0.05,0,0.1,1,-1,1,1\n"
    rep = build_report(read_records(io.StringIO(text)))
    assert len(rep["traces"]) == 1 and rep["auc"] == [(1, 0.0)]


def test_schema_errors():
    with pytest.raises(SchemaError, match="p_value"):
        read_records(io.StringIO("batch_index,coord\n1,1\n"))
    with pytest.raises(SchemaError, match="line 2"):
        read_records(io.StringIO(HEADER + "1,1,x,0,0,0,0,0,0\n"))
