#!/usr/bin/env python3
"""Grid-search the default cost-model coefficients.

The shipped defaults are not measured costs (those are confidential); they are
the first quarter-person-day grid point that reproduces the documented
break-even behaviour at t=30 test types:

    break_even(n=1)  == 6
    break_even(n=5)  == 3
    break_even(n=10) == 2

plus three sanity requirements: the automated pipeline keeps a non-zero
residual review cost (v >= 0.25, there is still an on-demand reviewer),
authoring a full report template takes at least a working week (T >= 5, it is
substantial manual work), and at n=5, r=100 the relative saving exceeds 50%.

Scan order (all quarter-day grids, ascending): manual per-test cost m,
residual review cost v, template authoring T, setup C0; the per-template
annotation cost A is then the smallest feasible grid point.  The first hit is
printed and shipped in src/boardcheck/data/defaults.toml.
"""

import sys
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from boardcheck.costmodel import (  # noqa: E402
    CostCoefficients,
    CostInputs,
    break_even,
    effort_asis,
    effort_kgllm,
    savings,
)

STEP = Decimal("0.25")
TARGETS = {1: 6, 5: 3, 10: 2}
TEST_TYPES = 30


def grid(start: Decimal, stop: Decimal, step: Decimal = STEP):
    value = start
    while value <= stop:
        yield value
        value += step


def satisfies(coeffs: CostCoefficients) -> bool:
    for n, expected in TARGETS.items():
        if break_even(n, TEST_TYPES, coeffs) != expected:
            return False
    saved = savings(CostInputs(5, 100, TEST_TYPES), coeffs)
    return saved is not None and saved > Fraction(1, 2)


def search() -> CostCoefficients:
    for m in grid(STEP, Decimal("2.0")):
        for v in grid(STEP, m - STEP):
            for t_auth in grid(Decimal("5"), Decimal("20")):
                for c0 in grid(Decimal("0"), Decimal("150")):
                    # A must keep break_even(1)=6: (C0 + A - T) in [5D, 6D).
                    d = TEST_TYPES * (m - v)
                    low = 5 * d - c0 + t_auth
                    if low < 0:
                        low = Decimal("0")
                    # Snap up to the grid.
                    periods = -(-low // STEP)
                    for a in grid(periods * STEP, 6 * d - c0 + t_auth):
                        coeffs = CostCoefficients(
                            template_authoring=t_auth,
                            manual_per_test=m,
                            pipeline_setup=c0,
                            template_annotation=a,
                            residual_review_per_test=v,
                        )
                        if satisfies(coeffs):
                            return coeffs
    raise SystemExit("no feasible coefficient set on the scanned grid")


def main() -> None:
    coeffs = search()
    print("found coefficients (person-days):")
    print(f"  template_authoring       = {coeffs.template_authoring}")
    print(f"  manual_per_test          = {coeffs.manual_per_test}")
    print(f"  pipeline_setup           = {coeffs.pipeline_setup}")
    print(f"  template_annotation      = {coeffs.template_annotation}")
    print(f"  residual_review_per_test = {coeffs.residual_review_per_test}")
    print()
    for n, expected in TARGETS.items():
        r = break_even(n, TEST_TYPES, coeffs)
        print(f"  break_even(n={n}, t={TEST_TYPES}) = {r} (expected {expected})")
    for n in (5, 10):
        inputs = CostInputs(n, 100, TEST_TYPES)
        saved = savings(inputs, coeffs)
        print(
            f"  savings at n={n}, r=100: {float(saved):.1%} "
            f"(as-is {effort_asis(inputs, coeffs)}, automated {effort_kgllm(inputs, coeffs)})"
        )


if __name__ == "__main__":
    main()
