#!/usr/bin/env python3
"""Recompute the buck-boost terminal ellipsoid level shipped as
``sampled_nmpc.models.BUCK_TERMINAL_LEVEL``.

Scans decades for the largest quadratic sublevel set whose boundary stays in
the state box, maps to admissible inputs under the printed feedback gain and
is invariant with nonincreasing quadratic value, then bisects.  The shipped
constant is this value rounded down slightly so closed-inequality membership
checks keep a margin over floating-point rounding.
"""

import argparse

from sampled_nmpc.models import BUCK_TERMINAL_LEVEL, calibrate_buck_terminal_level


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--boundary-points", type=int, default=10_000)
    parser.add_argument("--bisection-steps", type=int, default=40)
    args = parser.parse_args()
    level = calibrate_buck_terminal_level(boundary_points=args.boundary_points,
                                          bisection_steps=args.bisection_steps)
    print(f"calibrated level: {level:.6f}")
    print(f"shipped constant: {BUCK_TERMINAL_LEVEL} (rounded down for margin)")


if __name__ == "__main__":
    main()
