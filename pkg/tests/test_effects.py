import math

import pytest

from fewmeta import DatasetError, TwoByTwoTable, dataset_from_tables, log_odds_ratio


def test_log_odds_ratio_matches_hand_calculation():
    y, se = log_odds_ratio(TwoByTwoTable(10, 50, 20, 50))
    assert y == pytest.approx(math.log((10 * 30) / (40 * 20)), abs=1e-14)
    assert se == pytest.approx(math.sqrt(1 / 10 + 1 / 40 + 1 / 20 + 1 / 30), abs=1e-14)


def test_symmetric_table_gives_exact_zero():
    assert log_odds_ratio(TwoByTwoTable(5, 20, 5, 20))[0] == 0.0


def test_zero_cell_gets_half_added_everywhere():
    y, se = log_odds_ratio(TwoByTwoTable(0, 10, 3, 12))
    a, b, c, d = 0.5, 10.5, 3.5, 9.5
    assert y == pytest.approx(math.log(a * d / (b * c)), abs=1e-14)
    assert se == pytest.approx(math.sqrt(1 / a + 1 / b + 1 / c + 1 / d), abs=1e-14)


def test_swapping_arms_negates_estimate():
    t = TwoByTwoTable(7, 31, 12, 29)
    y, se = log_odds_ratio(t)
    y2, se2 = log_odds_ratio(t.swapped())
    assert y2 == pytest.approx(-y, abs=1e-14)
    assert se2 == pytest.approx(se, abs=1e-14)


@pytest.mark.parametrize("args", [(11, 10, 1, 5), (-1, 10, 1, 5), (1, 0, 1, 5), (1.5, 10, 1, 5)])
def test_invalid_tables(args):
    with pytest.raises(DatasetError):
        TwoByTwoTable(*args)


def test_integer_valued_floats_are_accepted():
    assert TwoByTwoTable(3.0, 10.0, 2.0, 9.0).cells() == (3, 7, 2, 7)


def test_correction_only_flags_affected_study():
    d = dataset_from_tables([("a", TwoByTwoTable(0, 10, 3, 12)),
                             ("b", TwoByTwoTable(4, 10, 3, 12))])
    assert d.corrected == (True, False)
    # the uncorrected study is untouched by the other one's correction
    assert d.y[1] == pytest.approx(math.log(4 * 9 / (6 * 3)), abs=1e-14)
