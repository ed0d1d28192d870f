"""Spherical-earth distance and conservative degree-space bounding boxes."""
from __future__ import annotations

import math

from . import _kernels

EARTH_RADIUS_M = _kernels.EARTH_RADIUS_M
# |lat| beyond which a search box spans every longitude
POLE_CLAMP_DEG = 85.0
# slack on top of the exact extent so rounding can never prune a true match
DEFAULT_INFLATION = 1.0 + 1e-6
_PAD_DEG = 1e-9


def haversine_m(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in metres between two ``(lat, lon)`` pairs."""
    return float(_kernels.haversine(float(a[0]), float(a[1]), float(b[0]), float(b[1])))


def check_coords(lat: float, lon: float):
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon < 180.0) or math.isnan(lat + lon):
        raise ValueError(f"coordinates out of range: ({lat}, {lon})")


def query_boxes(lat: float, lon: float, dist_m: float,
                inflation: float = DEFAULT_INFLATION) -> list[tuple[float, float, float, float]]:
    """Boxes ``(min_lon, min_lat, max_lon, max_lat)`` covering a spherical cap.

    Latitude extent is the angular radius; longitude extent is
    ``asin(sin(d) / cos(lat))``, the exact widest point of the cap.  Caps
    reaching past ``POLE_CLAMP_DEG`` span all longitudes, and caps crossing
    the antimeridian come back as two boxes.
    """
    delta = dist_m / EARTH_RADIUS_M
    dlat = math.degrees(delta) * inflation + _PAD_DEG
    lat_lo = max(-90.0, lat - dlat)
    lat_hi = min(90.0, lat + dlat)
    if abs(lat) + dlat >= POLE_CLAMP_DEG or delta >= math.pi / 2:
        return [(-180.0, lat_lo, 180.0, lat_hi)]
    ratio = min(1.0, math.sin(delta) / math.cos(math.radians(lat)))
    dlon = math.degrees(math.asin(ratio)) * inflation + _PAD_DEG
    if dlon >= 180.0:
        return [(-180.0, lat_lo, 180.0, lat_hi)]
    lo, hi = lon - dlon, lon + dlon
    if lo < -180.0:
        return [(lo + 360.0, lat_lo, 180.0, lat_hi), (-180.0, lat_lo, hi, lat_hi)]
    if hi >= 180.0:
        return [(lo, lat_lo, 180.0, lat_hi), (-180.0, lat_lo, hi - 360.0, lat_hi)]
    return [(lo, lat_lo, hi, lat_hi)]
