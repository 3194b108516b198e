#!/usr/bin/env python3
"""Smoke test of the mmsd_py extension module.

Builds nothing itself: it locates the compiled cdylib under target/
(release preferred), exposes it under the importable name, and exercises
the main types and operations end to end.

    cargo build -p mmsd-py --release
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def locate_cdylib() -> Path:
    candidates = [
        REPO / "target" / "release" / "libmmsd_py.so",
        REPO / "target" / "debug" / "libmmsd_py.so",
        REPO / "target" / "release" / "libmmsd_py.dylib",
        REPO / "target" / "debug" / "libmmsd_py.dylib",
    ]
    for path in candidates:
        if path.exists():
            return path
    sys.exit("libmmsd_py not found; run `cargo build -p mmsd-py --release` first")


def import_module():
    lib = locate_cdylib()
    staging = Path(tempfile.mkdtemp(prefix="mmsd_py_"))
    target = staging / ("mmsd_py" + (".so" if lib.suffix == ".so" else ".so"))
    shutil.copy2(lib, target)
    sys.path.insert(0, str(staging))
    import mmsd_py  # noqa: E402

    return mmsd_py


def approx(a, b, tol):
    return abs(a - b) <= tol


def main() -> int:
    m = import_module()
    checks = 0

    def ok(name, cond):
        nonlocal checks
        checks += 1
        print(f"  [{'ok' if cond else 'FAIL'}] {name}")
        if not cond:
            raise SystemExit(f"smoke test failed at: {name}")

    print("mmsd_py smoke test")

    # Basis construction and geometry identities.
    ubar = m.Basis.identity_block(8, 2)
    ok("identity block shape", ubar.n == 8 and ubar.p == 2)
    u = m.Basis.uniform(8, 2, seed=42)
    u_again = m.Basis.uniform(8, 2, seed=42)
    ok("seeded draws are identical", u.matrix() == u_again.matrix())

    d2 = m.squared_distance(u, ubar)
    angles = m.principal_angles(u, ubar)
    sum_sin2 = sum(math.sin(t) ** 2 for t in angles)
    ok("distance doubles the angle sum", approx(d2, 2.0 * sum_sin2, 1e-9))
    ok("afe complements distance", approx(m.afe(u, ubar), 1.0 - d2 / 4.0, 1e-12))

    # Orthonormalization returns the range of the input.
    rows = [[2.0 * v for v in row] for row in u.matrix()]
    ortho = m.orthonormalize(rows)
    ok("orthonormalize preserves the span", m.squared_distance(ortho, u) < 1e-12)

    # Spectral extraction.
    diag = [[3.0 if i == j and i == 0 else 2.0 if i == j and i == 1 else (1.0 if i == j else 0.0)
             for j in range(4)] for i in range(4)]
    top = m.top_p_eigvecs(diag, 2)
    e12 = m.Basis.from_matrix([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    ok("top eigenvectors of a diagonal", m.squared_distance(top, e12) < 1e-12)

    # Data generation, closed form, chain agreement.
    truth = m.draw_from_prior(ubar, kappa=20.0, prior="bingham", seed=7)
    y = m.generate_linear_data(truth, sigma2_s=3.16, sigma2_n=1.0, k=4, seed=8)
    closed = m.mmsd_closed_form(y, ubar, kappa=20.0, sigma2_n=1.0)
    chain = m.run_lm_chain(y, ubar, 20.0, 1.0, "bingham", n_bi=10, n_r=800, seed=9)
    ok("chain length", len(chain) == 800)
    mcmc = chain.mmsd()
    ok("closed form and chain agree", m.squared_distance(closed, mcmc) < 0.05)
    ok("log-density trace recorded", len(chain.log_density()) == 800)

    # SVD estimator with scarce snapshots still yields a full basis.
    est = m.svd_estimator(y, 2)
    ok("svd estimate is well formed", est.n == 8 and est.p == 2)

    # Truncated gamma sampling respects its support.
    draws = m.truncated_gamma(shape=6.0, rate=10.0, lo=0.1, hi=0.9, n=2000, seed=3)
    ok("truncated gamma support", all(0.1 <= x <= 0.9 for x in draws))
    mean = sum(draws) / len(draws)
    ok("truncated gamma mean is plausible", 0.45 < mean < 0.65)

    print(f"all {checks} checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
