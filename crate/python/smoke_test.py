"""Smoke test for the pyfracvirial extension.

Build first:
    cargo build --release -p fracvirial-py --features extension-module
then run:
    python3 python/smoke_test.py
"""

import cmath
import importlib.util
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import pyfracvirial
        return pyfracvirial
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libpyfracvirial.so"
        if lib.exists():
            tmp = pathlib.Path(tempfile.mkdtemp())
            target = tmp / "pyfracvirial.so"
            shutil.copy(lib, target)
            spec = importlib.util.spec_from_file_location("pyfracvirial", target)
            mod = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(mod)
            return mod
    sys.exit("pyfracvirial not built; see the module docstring")


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    fv = load()
    failures = []

    def check(name, ok):
        print(("PASS " if ok else "FAIL ") + name)
        if not ok:
            failures.append(name)

    # Plane wave: (-Delta)^s e^{ikx} = |k|^{2s} e^{ikx}.
    g = fv.Grid(1, math.pi, 64)
    xs = [p[0] for p in g.positions()]
    k, s = 3, 0.7
    wave = fv.Field(g, [cmath.exp(1j * k * x) for x in xs])
    lap = wave.frac_laplacian(s).values
    err = max(abs(a - k ** (2 * s) * b) for a, b in zip(lap, wave.values))
    check("plane wave eigenvalue", err < 1e-10)
    bal = wave.balakrishnan(s).values
    check("resolvent integral matches multiplier", max(abs(a - b) for a, b in zip(lap, bal)) < 1e-6 * k ** (2 * s))

    # Half-wave ground state Q = 2/(1+x^2) has mass 2 pi.
    p = fv.Params(1, 0.5, 0.5)
    q, info = fv.ground_state(p, fv.Grid(1, 256.0, 4096))
    check("half-wave ground state mass", close(info["mass"], 2 * math.pi, 1e-3))
    check("ground state peak", close(q.max_abs(), 2.0, 1e-3))

    # Short linear-looking run conserves mass and energy.
    p2 = fv.Params(2, 0.8, 1.0)
    g2 = fv.Grid(2, 24.0, 128)
    a0 = fv.zero_energy_amplitude(g2, 1.5, p2)
    u0 = fv.Field.gaussian(g2, 0.3 * a0, 1.5)
    check("small Gaussian has positive energy", u0.energy(p2) > 0)
    log, last = fv.evolve(u0, p2, 0.01, 0.1, radii=[2.0], rhs_stride=5)
    check("mass conserved", abs(log["mass"][-1] - log["mass"][0]) < 1e-10 * log["mass"][0])
    check("run log has snapshots", len(log["times"]) == 11 and last is not None)
    rep = u0.virial_rhs(p2, 2.0)
    check("virial report terms add up", close(rep["hessian_term"] + rep["biharmonic_term"] + rep["nonlinear_term"], rep["rhs_total"], 1e-10))

    cert = fv.cutoff_certificate(1.0, 0.8, 2)
    check("cutoff certificate", cert["eta"] > 0 and cert["psi"]["min_margin"] >= 0 and cert["min_inequality"] >= -1e-12)

    op = fv.DomainOperator(-1.0, 1.0, 127, 0.8)
    ev = op.eigenvalues
    check("domain eigenvalues positive and increasing", ev[0] > 0 and all(b >= a for a, b in zip(ev, ev[1:])))
    check("Pohozaev estimate on first eigenfunction", op.pohozaev_check(op.eigenfunction(0))["passed"])

    try:
        fv.Params(2, 1.5, 1.0)
        check("invalid s rejected", False)
    except ValueError:
        check("invalid s rejected", True)

    rep = fv.run_suite("cutoff-certificate")
    check("cutoff-certificate suite", rep["passed"])

    if failures:
        sys.exit(f"{len(failures)} smoke checks failed")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
