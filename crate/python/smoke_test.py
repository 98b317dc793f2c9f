#!/usr/bin/env python3
"""Smoke test for the advdiff_py extension module.

Locates the compiled cdylib in the workspace target directory, imports it
under the importable name, and exercises one entry point per exposed
surface: duality defect, penalized control, lower-bound witness, decay
ratio, exponential fit, and the resolution policy.  Exits nonzero on the
first failed check.

Usage: build the extension first, then run this script from anywhere:

    cargo build -p advdiff_py --release
    python3 python/smoke_test.py
"""

import math
import pathlib
import random
import shutil
import sys
import sysconfig
import tempfile

WORKSPACE = pathlib.Path(__file__).resolve().parent.parent


def locate_cdylib() -> pathlib.Path:
    stems = {
        "linux": ("libadvdiff_py.so",),
        "darwin": ("libadvdiff_py.dylib",),
        "win32": ("advdiff_py.dll",),
    }
    names = stems.get(sys.platform, ("libadvdiff_py.so", "libadvdiff_py.dylib"))
    candidates = [
        WORKSPACE / "target" / profile / name
        for profile in ("release", "debug")
        for name in names
    ]
    found = [p for p in candidates if p.exists()]
    if not found:
        sys.exit(
            "advdiff_py cdylib not found; run `cargo build -p advdiff_py` first "
            f"(looked at {', '.join(str(c) for c in candidates)})"
        )
    # Prefer the most recently built profile.
    return max(found, key=lambda p: p.stat().st_mtime)


def import_extension():
    lib = locate_cdylib()
    tmp = tempfile.mkdtemp(prefix="advdiff_py_")
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    target = pathlib.Path(tmp) / f"advdiff_py{suffix}"
    shutil.copy2(lib, target)
    sys.path.insert(0, tmp)
    import advdiff_py  # noqa: E402

    return advdiff_py


def main() -> None:
    mod = import_extension()
    print(f"imported advdiff_py {mod.__version__} from {mod.__file__}")

    # Duality: the discrete forward/adjoint pair closes the duality product
    # to round-off for arbitrary data.
    rng = random.Random(7)
    n_space, n_time = 41, 40
    u0 = [rng.uniform(-1, 1) for _ in range(n_space)]
    phi_t = [rng.uniform(-1, 1) for _ in range(n_space)]
    v = [rng.uniform(-1, 1) for _ in range(n_time + 1)]
    defect = mod.duality_defect(0.1, 0.5, 1.0, n_space, n_time, u0, v, phi_t)
    assert defect < 1e-10, f"duality defect {defect:.3e} exceeds 1e-10"
    print(f"duality defect {defect:.3e} < 1e-10")

    # Penalized control: small solve, residual must match the sqrt-penalty
    # law within an order of magnitude and CG must converge.
    r = mod.compute_control(0.1, 0.0, 2.0, 101, 200, 1e-6, location="gamma0")
    assert r["converged"], "CG did not converge"
    assert r["terminal_residual"] < 1e-2, f"residual {r['terminal_residual']:.3e}"
    assert len(r["control"]) == 201
    print(
        f"control: residual {r['terminal_residual']:.3e}, "
        f"cost quotient {r['cost_quotient']:.3e}, {r['cg_iterations']} CG iterations"
    )

    # Lower-bound witness: quotient is positive and the off-regime flag is
    # clear on a short horizon.
    w = mod.witness_quotient(0.1, 0.5, 0.1, 201, 100)
    assert w["quotient"] > 0 and not w["off_regime"]
    print(f"witness quotient {w['quotient']:.3e}, initial norm {w['initial_norm']:.3f}")

    # Decay ratio: backward contraction keeps it at or below one.
    ratio = mod.decay_ratio(0.1, 0.0, 4.0, 201, 200, 1.0, 3.0)
    assert 0 < ratio <= 1 + 1e-12, f"decay ratio {ratio}"
    print(f"decay ratio {ratio:.3e} <= 1")

    # Exponential fit: recover a planted slope exactly.
    pts = [(1 / e, 3.0 - 0.2 / e) for e in (0.1, 0.07, 0.05, 0.04)]
    fit = mod.fit_exponential(pts)
    assert abs(fit["slope"] + 0.2) < 1e-9 and abs(fit["r_squared"] - 1) < 1e-12
    print(f"exponential fit slope {fit['slope']:.12f}, r^2 {fit['r_squared']:.12f}")

    # Resolution policy.
    assert mod.n_space_for(0.1) == 201 and mod.n_space_for(0.004) == 1000
    print("resolution policy: n_space_for(0.1) = 201, n_space_for(0.004) = 1000")

    print("smoke test passed")


if __name__ == "__main__":
    main()
