import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fsd.geomatch import EARTH_RADIUS_M, haversine_m, query_boxes
from fsd.geomatch import _kernels as K
from fsd.geomatch.geo import POLE_CLAMP_DEG, check_coords

lats = st.floats(-90.0, 90.0, allow_nan=False)
lons = st.floats(-180.0, 180.0, allow_nan=False, exclude_max=True)

# spherical law of cosines at 50 digits, R = 6371008.8 m (frozen from mpmath)
LOC_0_001 = 1111.9508023353291


def law_of_cosines(a, b):
    with mp.workdps(50):
        la1, lo1, la2, lo2 = (mp.radians(mp.mpf(x)) for x in (*a, *b))
        c = mp.sin(la1) * mp.sin(la2) + mp.cos(la1) * mp.cos(la2) * mp.cos(lo2 - lo1)
        c = max(min(c, 1), -1)
        return float(mp.mpf("6371008.8") * mp.acos(c))


def test_identity():
    assert haversine_m((0.0, 0.0), (0.0, 0.0)) == 0.0


def test_antipodal_half_circumference():
    assert haversine_m((0.0, 0.0), (0.0, 180.0)) == pytest.approx(math.pi * EARTH_RADIUS_M, abs=1.0)
    assert haversine_m((0.0, 0.0), (0.0, 180.0)) == pytest.approx(20015114.44, abs=1.0)


def test_short_arc_against_extended_precision():
    d = haversine_m((0.0, 0.0), (0.0, 0.01))
    assert law_of_cosines((0.0, 0.0), (0.0, 0.01)) == pytest.approx(LOC_0_001, rel=1e-12)
    assert d == pytest.approx(LOC_0_001, rel=1e-6)


@given(lats, lons, lats, lons)
def test_matches_law_of_cosines(a1, o1, a2, o2):
    d = haversine_m((a1, o1), (a2, o2))
    assert d == pytest.approx(law_of_cosines((a1, o1), (a2, o2)), rel=1e-9, abs=1e-3)


@given(lats, lons, lats, lons)
def test_symmetric_and_bounded(a1, o1, a2, o2):
    d = haversine_m((a1, o1), (a2, o2))
    assert d == haversine_m((a2, o2), (a1, o1))
    assert 0.0 <= d <= math.pi * EARTH_RADIUS_M + 1e-6


def test_vector_kernel_agrees():
    rng = np.random.default_rng(3)
    la, lo = rng.uniform(-90, 90, 500), rng.uniform(-180, 180, 500)
    out = K.distances(10.0, 20.0, la, lo, np.empty(500))
    ref = [haversine_m((10.0, 20.0), (a, b)) for a, b in zip(la, lo)]
    assert np.allclose(out, ref, rtol=1e-12, atol=1e-6)
    assert np.allclose(K.haversine_np(10.0, 20.0, la, lo), ref, rtol=1e-12, atol=1e-6)


def test_check_coords():
    check_coords(90.0, -180.0)
    for bad in [(91.0, 0.0), (0.0, 180.0), (float("nan"), 0.0)]:
        with pytest.raises(ValueError):
            check_coords(*bad)


def inside(boxes, lat, lon):
    return any(b[0] <= lon <= b[2] and b[1] <= lat <= b[3] for b in boxes)


@given(lats, lons, lats, lons)
def test_boxes_cover_every_point_at_the_limit(clat, clon, plat, plon):
    # the point lies exactly on the boundary of the cap it defines
    d = haversine_m((clat, clon), (plat, plon))
    assume(d < 5_000_000)
    assert inside(query_boxes(clat, clon, d), plat, plon)


@given(st.floats(-80, 80), lons, st.floats(1.0, 50_000.0), st.floats(0, 2 * math.pi))
def test_boxes_cover_destination_points(clat, clon, dist, bearing):
    # destination point at ``dist`` along ``bearing``
    phi, lam, delta = math.radians(clat), math.radians(clon), dist / EARTH_RADIUS_M
    phi2 = math.asin(math.sin(phi) * math.cos(delta) + math.cos(phi) * math.sin(delta) * math.cos(bearing))
    lam2 = lam + math.atan2(math.sin(bearing) * math.sin(delta) * math.cos(phi),
                            math.cos(delta) - math.sin(phi) * math.sin(phi2))
    plat = math.degrees(phi2)
    plon = (math.degrees(lam2) + 180.0) % 360.0 - 180.0
    limit = haversine_m((clat, clon), (plat, plon))
    assert inside(query_boxes(clat, clon, limit), plat, plon)


def test_antimeridian_split():
    boxes = query_boxes(0.0, 179.999, 1000.0)
    assert len(boxes) == 2
    assert boxes[0][2] == 180.0 and boxes[1][0] == -180.0
    assert inside(boxes, 0.0, -179.995)


def test_pole_clamp():
    (box,) = query_boxes(POLE_CLAMP_DEG - 0.001, 0.0, 1000.0)
    assert box[0] == -180.0 and box[2] == 180.0


def test_shrunk_inflation_shrinks_box():
    (full,) = query_boxes(10.0, 10.0, 1000.0)
    (half,) = query_boxes(10.0, 10.0, 1000.0, inflation=0.5)
    assert half[2] - half[0] < full[2] - full[0]
