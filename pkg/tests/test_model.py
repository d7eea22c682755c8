import math

import numpy as np
import pytest

from fewmeta import (Dataset, DatasetError, HeterogeneityEstimate, IntervalEstimate,
                     MetaAnalysisError, validate_dataset)
from fewmeta.model import require_pooled


def test_validate_keeps_order_and_ids():
    d = validate_dataset([("b", 1.0, 0.5), ("a", -1.0, 0.2)])
    assert d.ids == ["b", "a"]
    assert d.k == 2
    np.testing.assert_allclose(d.s2, [0.25, 0.04], rtol=1e-15)


@pytest.mark.parametrize("rows, fragment", [
    ([("a", 1.0, 0.5), ("a", 2.0, 0.5)], "duplicate"),
    ([("a", math.nan, 0.5)], "not finite"),
    ([("a", 1.0, 0.0)], "> 0"),
    ([("a", 1.0, -1.0)], "> 0"),
    ([("a", 1.0, math.inf)], "> 0"),
    ([], "empty"),
])
def test_validate_rejects_bad_rows(rows, fragment):
    with pytest.raises(DatasetError, match=fragment):
        validate_dataset(rows)


def test_error_names_study():
    with pytest.raises(DatasetError) as info:
        validate_dataset([("ok", 0.0, 1.0), ("bad", 0.0, -2.0)])
    assert info.value.study_id == "bad"


def test_arrays_are_read_only():
    d = Dataset.from_arrays([0.1, 0.2], [0.3, 0.4])
    with pytest.raises(ValueError):
        d.y[0] = 5.0


def test_shift_and_scale():
    d = Dataset.from_arrays([0.1, 0.2], [0.3, 0.4])
    np.testing.assert_allclose(d.shifted(1.0).y, [1.1, 1.2])
    s = d.scaled(2.0)
    np.testing.assert_allclose(s.y, [0.2, 0.4])
    np.testing.assert_allclose(s.se, [0.6, 0.8])


def test_require_pooled():
    with pytest.raises(DatasetError, match="at least 2"):
        require_pooled(Dataset.from_arrays([0.1], [0.3]))


def test_heterogeneity_estimate_checks():
    assert HeterogeneityEstimate(0.5, "DL").tau2 == 0.25
    with pytest.raises(MetaAnalysisError):
        HeterogeneityEstimate(-0.1, "DL")


def test_interval_helpers():
    iv = IntervalEstimate(-1.0, 2.0, 0.95, "NORM")
    assert iv.width == 3.0
    assert iv.contains(0.0) and not iv.contains(2.5)
    with pytest.raises(MetaAnalysisError):
        IntervalEstimate(2.0, 1.0, 0.95, "NORM")
