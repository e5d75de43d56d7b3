import math

import numpy as np
import pytest

from prvdyn.errors import DomainError
from prvdyn.fluid import FluidModel, choking_factor
from prvdyn.geometry import (
    DischargeCoefficient,
    EffectiveAreaModel,
    ValveGeometry,
    effective_area,
    effective_area_derivative,
    flow_through_area,
    quartic_coefficients,
    seat_area,
)

CK_GAS = choking_factor(FluidModel("gas", rho=5.0))


def expand_quartic(phi, Cd, Ck):
    """Expand 1 + (Ck Cd)^2 r (r + cos phi), r = A_ft/A0 written in y, with numpy polynomials."""
    s, c = math.sin(phi), math.cos(phi)
    r = np.polynomial.Polynomial([0.0, s, -s * s * c / 4.0])
    full = 1.0 + (Ck * Cd) ** 2 * r * (r + c)
    coef = np.zeros(5)
    coef[: full.coef.size] = full.coef
    return coef


def test_seat_area():
    assert seat_area(ValveGeometry()) == pytest.approx(8.0676e-4, rel=1e-4)
    assert seat_area(ValveGeometry(D=2 / math.sqrt(math.pi))) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(DomainError):
        ValveGeometry(D=0.0)


def test_flow_through_area_disk_full_lift():
    g = ValveGeometry()
    assert flow_through_area(g, 0.0) == 0.0
    # disk at x = D/4: pi x D equals the seat area
    assert flow_through_area(g, g.D / 4) == pytest.approx(g.A0, rel=1e-14)


def test_flow_through_area_small_lift_slope():
    g = ValveGeometry(phi=2 * math.pi / 3)
    x = 1e-9
    assert flow_through_area(g, x) / x == pytest.approx(math.pi * g.D * math.sin(g.phi), rel=1e-6)


@pytest.mark.parametrize(
    "phi,expected",
    [
        (math.pi / 2, (0.0, 0.4055, 0.0, 0.0)),
        (math.pi / 3, (0.1756, 0.2851, -0.0658, 0.0036)),
        (math.pi / 4, (0.2028, 0.1774, -0.0507, 0.0032)),
    ],
)
def test_quartic_table(phi, expected):
    got = quartic_coefficients(phi, 0.93, CK_GAS)
    for a, b in zip(got, expected):
        assert abs(a - b) <= 2e-4


def test_quartic_parity():
    for phi in (0.3, 0.9, 1.2):
        a = quartic_coefficients(phi, 0.9, 1.1)
        b = quartic_coefficients(math.pi - phi, 0.9, 1.1)
        assert a[0] == pytest.approx(-b[0]) and a[2] == pytest.approx(-b[2])
        assert a[1] == pytest.approx(b[1]) and a[3] == pytest.approx(b[3])


def test_quartic_reconstruction():
    for phi, Cd, Ck in [(0.4, 0.8, 0.7), (1.9, 0.93, 1.41), (2.7, 0.6, 0.5)]:
        coef = expand_quartic(phi, Cd, Ck)
        assert coef[0] == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(coef[1:], quartic_coefficients(phi, Cd, Ck), rtol=1e-13, atol=1e-15)


def test_effective_area_examples():
    g = ValveGeometry()
    poly = EffectiveAreaModel.polynomial(0.0, 1.0)
    assert effective_area(poly, g, 0.0) == pytest.approx(g.A0)
    assert effective_area(poly, g, g.D / 4) == pytest.approx(2 * g.A0)
    ana = EffectiveAreaModel.analytic(g, CK_GAS)
    a2 = quartic_coefficients(math.pi / 2, 0.93, CK_GAS)[1]
    assert effective_area(ana, g, g.D / 4) == pytest.approx((1 + a2) * g.A0, rel=1e-12)
    assert effective_area(ana, g, 0.0) == pytest.approx(g.A0)


def test_effective_area_disk_momentum_form():
    g = ValveGeometry()
    ana = EffectiveAreaModel.analytic(g, CK_GAS)
    for x in (1e-4, 3e-3, g.x_stop):
        r = flow_through_area(g, x) / g.A0
        assert effective_area(ana, g, x) == pytest.approx(g.A0 * (1 + CK_GAS ** 2 * 0.93 ** 2 * r * r), rel=1e-13)


def test_effective_area_derivative_examples():
    g = ValveGeometry()
    assert effective_area_derivative(EffectiveAreaModel(), g, 1e-3) == 0.0
    poly = EffectiveAreaModel.polynomial(0.0, 1.0)
    assert effective_area_derivative(poly, g, g.D / 8) == pytest.approx(g.A0 * 1.0 * 4 / g.D, rel=1e-12)
    g3 = ValveGeometry(phi=math.pi / 3)
    ana = EffectiveAreaModel.analytic(g3, CK_GAS)
    a1 = quartic_coefficients(math.pi / 3, 0.93, CK_GAS)[0]
    assert effective_area_derivative(ana, g3, 0.0) == pytest.approx(g3.A0 * a1 * 4 / g3.D, rel=1e-12)


def test_effective_area_derivative_matches_differences():
    g = ValveGeometry(phi=2.0, cd=DischargeCoefficient.from_table("disc_45"))
    ana = EffectiveAreaModel.analytic(g, CK_GAS)
    for x in (0.0011, 0.0047):
        h = 1e-8
        fd = (effective_area(ana, g, x + h) - effective_area(ana, g, x - h)) / (2 * h)
        assert effective_area_derivative(ana, g, x) == pytest.approx(fd, rel=1e-6)


def test_tabulated_model(tmp_path):
    path = tmp_path / "aeff.csv"
    path.write_text("# lift_fraction,value\n0,1\n0.5,1.2\n1.0,1.5\n")
    g = ValveGeometry()
    m = EffectiveAreaModel.from_csv(path)
    assert m.ratio(g, 0.25 * g.x_max) == pytest.approx(1.1)
    with pytest.raises(DomainError):
        m.ratio(g, 1.01 * g.x_max)


def test_geometry_validation():
    with pytest.raises(DomainError):
        ValveGeometry(e1=1.5)
    with pytest.raises(DomainError):
        ValveGeometry(x_stop=0.02)
    assert ValveGeometry(phi=2 * math.pi / 3).alpha == pytest.approx(math.pi / 3)


def test_discharge_table_interpolation():
    cd = DischargeCoefficient.from_table("disc_90")
    assert cd.slope(0.5) != 0.0 or cd(0.5) == cd(0.7)
    assert cd(0.0) == cd(0.2)
