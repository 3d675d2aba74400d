import pytest
import typer

from abcdkit.helpers import parse_bins, parse_pair


def test_parse_bins():
    assert parse_bins("5-9,10-14") == [(5, 9), (10, 14)]
    assert parse_bins(" 0-0 , ") == [(0, 0)]
    assert parse_bins("") == []


@pytest.mark.parametrize("raw", ("5", "5-x", "a-9"))
def test_parse_bins_rejects(raw):
    with pytest.raises(typer.BadParameter):
        parse_bins(raw)


def test_parse_pair():
    assert parse_pair("10, 90") == (10.0, 90.0)
    for raw in ("10", "10,20,30", "low,high"):
        with pytest.raises(typer.BadParameter):
            parse_pair(raw)
