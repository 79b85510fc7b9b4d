#!/usr/bin/env python3
"""Smoke test for the zrp_py extension module.

Build the extension first:

    cargo build -p zrp-py --release

then run this script; it loads the cdylib straight from the cargo target
directory and exercises the main surface.
"""

import importlib.util
import math
import pathlib
import sys


def load_module():
    root = pathlib.Path(__file__).resolve().parents[1]
    candidates = [
        root / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libzrp_py.so", "zrp_py.so", "libzrp_py.dylib", "zrp_py.pyd")
    ]
    for path in candidates:
        if path.exists():
            spec = importlib.util.spec_from_file_location("zrp_py", path)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            return module
    sys.exit("zrp_py cdylib not found; run `cargo build -p zrp-py --release` first")


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    zrp = load_module()

    # flux model of the constant rate: Phi(a) = a / (1 + a)
    g = zrp.RateFunction.constant(1.0)
    assert g.rate(0) == 0.0 and g.rate(5) == 1.0
    model = zrp.FluxModel(g)
    assert model.convexity == "strictly_concave"
    approx(model.flux_at(1.0), 0.5, 1e-8)
    approx(model.fugacity_radius, 1.0, 0.0)

    # conjugate: Psi(x) = (1 - sqrt(-x))^2
    value, argmax, boundary = model.conjugate_at(-0.25)
    approx(value, 0.25, 1e-6)
    approx(argmax, 1.0, 1e-3)
    assert not boundary

    # equilibrium time (1 + sqrt(alpha))^2 / (2p - 1)
    approx(zrp.equilibrium_time(model, 1.0, 1.0), 4.0, 1e-4)
    approx(zrp.equilibrium_time(model, 1.0, 0.75), 8.0, 1e-4)

    # fronts L(t) = S(t) = (sqrt(t) - 1)^2
    l, s, lp, sp = zrp.front_functions(model, 1.0, 1.0, 2.25)
    approx(l, 0.25, 1e-5)
    approx(s, 0.25, 1e-5)

    # profile values
    approx(zrp.dirac_profile(model, 1.0, 1.0, 4.0, 1.0), 0.0, 1e-6)
    approx(zrp.segment_profile(model, 1.0, 1.0, 2.0, 1.0), 1.0, 1e-9)

    # strong-asymmetry condition at p = 1, alpha = 1
    holds, lhs, rhs = zrp.check_condition_5(model, 1.0, 1.0)
    assert holds
    approx(lhs, 1.0, 1e-9)
    approx(rhs, 0.5, 1e-3)

    # simulator determinism and conservation
    spec = zrp.ProcessSpec.segment(5, 3, 0.8, g)
    t1 = zrp.simulate(spec, "wedge", 4.0, [1.0, 4.0], seed=42)
    t2 = zrp.simulate(spec, "wedge", 4.0, [1.0, 4.0], seed=42)
    assert t1 == t2
    assert all(sum(occ) == 3 for _, occ in t1)

    # exact oracles on the two-state chain
    spec2 = zrp.ProcessSpec.segment(2, 1, 1.0, g)
    states, law = zrp.transient_law(spec2, [1, 0], 1.0)
    approx(law[states.index([1, 0])], math.exp(-1.0), 1e-10)
    values = zrp.tv_curve_exact(spec2, [0.5, 1.0, 2.0])
    for t, v in zip([0.5, 1.0, 2.0], values):
        approx(v, math.exp(-t), 1e-10)
    approx(zrp.mixing_time([1.3, 1.4], values=[math.exp(-1.3), math.exp(-1.4)], theta=0.25),
           math.log(4.0), 2e-3)

    # stationary law on two sites at p = 3/4
    states, law = zrp.stationary_law(zrp.ProcessSpec.segment(2, 1, 0.75, g))
    approx(law[states.index([1, 0])], 0.25, 1e-12)

    # exclusion bridge
    assert zrp.sep_to_zrp([1, 1, 0, 0, 1], 3) == [2, 0, 1]
    assert zrp.zrp_to_sep([2, 0, 1]) == [1, 1, 0, 0, 1]
    assert zrp.conjugation_residual(4, 3, 0.7) == 0.0

    # coupling coalescence on the two-state chain is the single jump time
    t = zrp.coalescence_time(spec2, 100.0, seed=7)
    assert t is not None and t > 0.0

    print("smoke test passed")


if __name__ == "__main__":
    main()
