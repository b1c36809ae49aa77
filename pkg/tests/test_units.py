import pytest

from ffabc import units
from ffabc.units import UnitError, convert, parse_quantity


def test_diffusion_literature_value():
    # 1 cm^2/s = 1e14 nm^2 / 1e12 ps
    assert parse_quantity("1.3e-5 cm^2/s", "diffusion") == pytest.approx(1.3e-3)


@pytest.mark.parametrize(
    "text, kind, expected",
    [
        ("2.556 A", "length", 0.2556),
        ("5 fs", "time", 0.005),
        ("1 kJ/mol", "energy", 1.66053906717),
        ("10.2 K", "energy", 0.140826198),
        ("6.64 yg", "mass", 6.64),
        ("1 amu", "mass", 1.6605390666),
        ("12 K", "temperature", 12.0),
        ("0.0479 A^-3", "number_density", 47.9),
    ],
)
def test_conversions(text, kind, expected):
    assert parse_quantity(text, kind) == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("bad", [5, 5.0, "5", "5 parsecs", "abc nm"])
def test_rejects_missing_or_unknown_units(bad):
    with pytest.raises(UnitError):
        parse_quantity(bad, "length")


def test_unknown_kind():
    with pytest.raises(UnitError):
        convert(1.0, "nm", "luminosity")
    assert "diffusion" in units.kinds()
