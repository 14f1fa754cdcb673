import os
import sys

import numpy as np

# Ensure project root is importable when running directly
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from bundletr.config import SolverConfig
from bundletr.driver import TrustRegionBundle
from bundletr.problems import counterexample_quadratic


def run_case(title: str, cfg: SolverConfig):
    named = counterexample_quadratic()
    solver = TrustRegionBundle(named.problem, named.C, cfg)
    result = solver.solve(named.x0)
    print(f"== {title}: status={result.status.value} x={np.round(result.x, 8).tolist()} f={result.f:.10g}")
    for r in result.trace:
        z = "-" if r.z is None else np.round(r.z, 6).tolist()
        print(f"  j={r.j:<3d} k={r.k:<3d} R={r.R:<8.4g} z={z!s:<22} rho={r.rho:<8.4g} "
              f"rho~={r.rho_tilde:<8.4g} {r.kind.value}")


def main():
    oscillating = SolverConfig(
        gamma=0.5, gamma_tilde=0.75, Gamma=0.8, Q_policy="zero",
        max_planes=3, keep_newest=1, max_inner=12, fallback_enabled=False,
    )
    repaired = SolverConfig(
        gamma=0.5, gamma_tilde=0.75, Gamma=0.8, Q_policy="scaled_identity", Q_delta=0.5,
        trial_mode="backtrack", fallback_enabled=True, eps_stop=1e-14,
    )
    run_case("Q = 0, keep newest cut only", oscillating)
    run_case("Q = 0.5 I, full bundle, fall-back", repaired)


if __name__ == "__main__":
    main()
