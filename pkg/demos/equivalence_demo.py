"""The lift X~ + xi(nu) is Killing exactly when nu solves the moment map
equation: solved sections pass both tests, perturbed ones fail both."""

from gauge_killing.analysis import killing_lift_check, perturbed_section
from gauge_killing.catalog import get_example
from gauge_killing.metric import ConnectionMetric
from gauge_killing.moment import MomentMapProblem, solve


def main():
    for eid in ("hopf", "frame-s2", "su2-box", "twisted-U1"):
        ex = get_example(eid)
        gA = ConnectionMetric(ex.bundle)
        bump = next(iter(ex.sections.values()))
        for name in ex.base.killing:
            X = ex.field(name)
            sol = solve(MomentMapProblem.for_example(ex, X, 0.05))
            tol = max(1e-7, 10 * sol.continuum_residual) if sol.solvable else max(1e-7, sol.threshold)
            good = killing_lift_check(ex.bundle, gA, X, sol.section, tol=tol, n_samples=80)
            bad = killing_lift_check(ex.bundle, gA, X, perturbed_section(sol.section, bump, 0.1), tol=tol, n_samples=80)
            print(f"{eid:11s} {name:9s} solvable={str(sol.solvable):5s} solved: {good.verdict:9s} perturbed: {bad.verdict}")


if __name__ == "__main__":
    main()
