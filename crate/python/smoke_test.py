"""Smoke test for the crowdtune Python module.

Build and install first:  pip install --no-build-isolation -e crates/py
"""

import json
import math
from pathlib import Path

import crowdtune as ct

FIXTURE = Path(__file__).resolve().parent.parent / "crates/core/tests/fixtures/ml_mini"


def main():
    cfg = ct.SimConfig(n_users=12, n_groups=3, n_rounds=50, seed=7)
    rec = ct.simulate(cfg, dim=5)
    assert len(rec) == 50
    assert rec.final_distance < rec.initial_distance
    assert rec.to_json() == ct.simulate(cfg, dim=5).to_json()
    assert sum(rec.ledger.values()) > len(rec.ledger)

    pop = ct.Population.synthetic(8, 4, seed=3)
    assert len(pop) == 8 and pop.dim == 4
    assert ct.Population.from_json(pop.to_json()).vectors() == pop.vectors()

    rec, est = ct.shapley(ct.SimConfig(n_users=8, n_groups=2, n_rounds=40, seed=1), population=pop, estimator="exact")
    assert est.estimator == "exact" and len(est.phi) == 8
    assert est.efficiency_gap() < 1e-9
    _, kern = ct.shapley(ct.SimConfig(n_users=8, n_groups=2, n_rounds=40, seed=1), population=pop, estimator="kernel", budget=254)
    assert max(abs(a - b) for a, b in zip(est.phi, kern.phi)) < 1e-6
    print(f"exact phi {['%.4f' % p for p in est.phi]}  pearson {est.pearson:.4f}")

    assert math.isclose(ct.pearson([1, 2, 3], [2, 4, 6.5]), 0.9986, abs_tol=1e-3)

    ml = ct.Population.movielens(FIXTURE / "u.data", FIXTURE / "u.item")
    assert ml.dim == 19 and len(ml) == 6
    assert ml.vectors()[3][5] == 1.0

    t = ct.tournament(seed=4)
    assert [c for c, _ in t["baseline"]] == [33, 66, 100]
    assert t["final_distance"] < t["baseline"][-1][1]

    for bad in (lambda: ct.SimConfig(n_rounds=0), lambda: ct.tournament(clones=1), lambda: ct.SimConfig(grouping="nope")):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")
    try:
        ct.Population.movielens("missing.data", FIXTURE / "u.item")
    except OSError as e:
        assert "missing.data" in str(e)
    else:
        raise AssertionError("expected OSError")

    print(json.dumps({"initial": rec.initial_distance, "final": rec.final_distance}))
    print("python smoke test passed")


if __name__ == "__main__":
    main()
