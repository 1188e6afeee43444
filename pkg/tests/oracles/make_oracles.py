"""Regenerate the frozen oracle values in oracles.json.

Everything here is computed with mpmath at 50 digits directly from closed
forms, without importing the package.  Run from the repository root:

    python3 tests/oracles/make_oracles.py
"""

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50


def c_of_r(r):
    s = 4 * mp.e ** r / (1 + mp.e ** r) ** 2
    return 1 / (4 * mp.pi / 3 * (1 - s ** 3))


def octagon_euclid_area():
    """Regular octagon with angles pi/4: straight-edged octagon minus eight circular segments."""
    n = 8
    rv = mp.mpf(2) ** mp.mpf(-0.25)
    # side geodesic: circle orthogonal to the unit circle through two adjacent vertices
    v0 = rv
    v1 = rv * mp.expjpi(mp.mpf(2) / n)
    mid = mp.expjpi(mp.mpf(1) / n)  # direction of the side midpoint
    # centre c*mid with |c*mid - v0|^2 = c^2 - 1
    c = (1 + rv ** 2) / (2 * rv * mp.cos(mp.pi / n))
    radius = mp.sqrt(c ** 2 - 1)
    chord = abs(v1 - v0)
    theta = 2 * mp.asin(chord / (2 * radius))
    segment = radius ** 2 / 2 * (theta - mp.sin(theta))
    polygon = n / 2 * rv ** 2 * mp.sin(2 * mp.pi / n)
    return polygon - n * segment, radius, c * mid


def main():
    c1 = c_of_r(1)
    ball = 4 * mp.pi * mp.sinh(mp.mpf(1) / 2) ** 2
    c0 = 2 / (3 * c1 ** 2 * ball)
    area, side_radius, side_centre = octagon_euclid_area()
    s = mp.sqrt(99)
    out = {
        "c_of_r": {str(r): mp.nstr(c_of_r(mp.mpf(r)), 30) for r in ("0.001", "0.5", "1", "1.5285709194", "2", "5", "30")},
        "b_of_eps_60": mp.nstr(32 * c_of_r(mp.mpf(30)), 30),
        "unit_ball_area": mp.nstr(ball, 30),
        "c0": mp.nstr(c0, 30),
        "hol_bound": mp.nstr(-81 * c0 / (6400 * mp.pi ** 2), 30),
        "thickness_threshold": mp.nstr(mp.log((10 + s) / (10 - s)), 30),
        "bolza_injectivity_radius": mp.nstr(mp.acosh(1 + mp.sqrt(2)), 30),
        "bolza_systole": mp.nstr(2 * mp.acosh(1 + mp.sqrt(2)), 30),
        "bolza_vertex_radius": mp.nstr(mp.mpf(2) ** mp.mpf(-0.25), 30),
        "bolza_vertex_distance": mp.nstr(2 * mp.atanh(mp.mpf(2) ** mp.mpf(-0.25)), 30),
        "bolza_euclid_area": mp.nstr(area, 30),
        "bolza_side_circle_radius": mp.nstr(side_radius, 30),
        "bolza_side_circle_centre_abs": mp.nstr(abs(side_centre), 30),
    }
    path = Path(__file__).with_name("oracles.json")
    path.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")
    print(path.read_text())


if __name__ == "__main__":
    main()
