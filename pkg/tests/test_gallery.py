import json

import numpy as np
import pytest

import dcprog as dc
from dcprog.gallery import (
    EXAMPLES,
    ExampleSpec,
    build_instance,
    exhaustive_bls,
    list_examples,
    resolve,
    run_example,
    sweep_values,
)
from dcprog.report import RunReport

NAMES = ["circle-packing", "boolean-ls", "path-planning", "collision-avoidance",
         "sparse-recovery", "phase-retrieval", "filter-design", "sparse-singular-vectors"]

# small instances so building every example stays cheap
TINY = {
    "circle-packing": {"n": 4},
    "boolean-ls": {"n": 4, "m": 4},
    "path-planning": {"n": 8, "obstacles": 2},
    "collision-avoidance": {"T": 30},
    "sparse-recovery": {"n": 12, "m": 8, "cardinality": 2},
    "phase-retrieval": {"n": 3, "m": 9},
    "filter-design": {"n": 4, "N": 20},
    "sparse-singular-vectors": {"n": 6, "mu": 2.0},
}

# constraint families that are nonconvex, with their relational direction
NONCONVEX = {
    "circle-packing": ("separation", ">="),
    "boolean-ls": ("boolean", "=="),
    "path-planning": ("obstacles", ">="),
    "collision-avoidance": ("separation", ">="),
    "phase-retrieval": ("magnitudes", "=="),
    "filter-design": ("passband_lower", ">="),
    "sparse-singular-vectors": ("unit_norm", "=="),
}


def test_registry_order_and_size():
    assert [s.name for s in list_examples()] == NAMES
    assert list(EXAMPLES) == NAMES


def test_default_instance_sizes():
    d = {s.name: s.params for s in list_examples()}
    assert d["circle-packing"]["n"] == 14
    assert (d["filter-design"]["n"], d["filter-design"]["N"]) == (10, 100)
    assert d["phase-retrieval"]["m"] == 3 * d["phase-retrieval"]["n"]


@pytest.mark.parametrize("spec", list_examples(), ids=NAMES)
def test_spec_round_trip(spec):
    back = ExampleSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert back == spec


@pytest.mark.parametrize("name", NAMES)
def test_examples_are_dccp(name):
    inst = build_instance(ExampleSpec(name, TINY[name]))
    assert dc.is_dccp(inst.problem)
    if name in NONCONVEX:
        fam, relop = NONCONVEX[name]
        cons = inst.families[fam]
        assert cons and all(c.relop == relop and not c.is_dcp() for c in cons)
        assert not dc.is_dcp(inst.problem)
    # every constraint belongs to exactly one family
    listed = [c for cs in inst.families.values() for c in cs]
    assert sorted(map(id, listed)) == sorted(map(id, inst.problem.constraints))


def test_sparse_l1_is_convex():
    inst = build_instance(ExampleSpec("sparse-recovery", {**TINY["sparse-recovery"], "objective": "l1"}))
    assert dc.is_dcp(inst.problem)


def test_data_depends_on_seed_only():
    a = build_instance(ExampleSpec("boolean-ls", TINY["boolean-ls"], seed=3))
    b = build_instance(ExampleSpec("boolean-ls", TINY["boolean-ls"], seed=3, ccp={"restarts": 4}))
    c = build_instance(ExampleSpec("boolean-ls", TINY["boolean-ls"], seed=4))
    assert np.array_equal(a.data["A"], b.data["A"])
    assert not np.array_equal(a.data["A"], c.data["A"])


def test_resolve_errors():
    with pytest.raises(KeyError):
        resolve(ExampleSpec("no-such-example"))
    with pytest.raises(KeyError):
        resolve(ExampleSpec("boolean-ls", {"bogus": 1}))
    with pytest.raises(ValueError):
        resolve(ExampleSpec("boolean-ls", {"n": 2.5}))
    with pytest.raises(ValueError):
        resolve(ExampleSpec("boolean-ls", ccp={"mu": 0.5}))


def test_params_are_coerced():
    _, params, ccp = resolve(ExampleSpec("boolean-ls", {"n": "6", "snr": "3"}, seed=9))
    assert params["n"] == 6 and isinstance(params["n"], int) and params["snr"] == 3.0
    assert ccp.rng_seed == 9


def test_boolean_identity_run():
    rep = run_example(ExampleSpec("boolean-ls", {"n": 2, "m": 2, "snr": 1e12}))
    assert rep.converged and rep.metrics["ber"] == 0.0
    assert rep.metrics["relative_gap"] == pytest.approx(0.0, abs=1e-6)


def test_path_without_obstacles_is_straight():
    rep = run_example(ExampleSpec("path-planning", {"n": 10, "obstacles": 0}))
    assert rep.converged
    assert rep.metrics["L"] == pytest.approx(10 * np.sqrt(2), rel=1e-5)
    assert rep.metrics["min_clearance"] is None


def test_exhaustive_bls_small():
    A = np.array([[2.0, 0.0], [0.0, 1.0]])
    val, x = exhaustive_bls(A, np.array([-2.0, 1.0]))
    assert val == pytest.approx(0.0) and np.array_equal(x, [-1.0, 1.0])
    with pytest.raises(ValueError):
        exhaustive_bls(np.zeros((1, 25)), np.zeros(1))


def test_sweep_values_inclusive():
    assert sweep_values(1, 16 / 7, 17) == pytest.approx([1 + i * 16 / 7 for i in range(8)])
    assert sweep_values(1, 0.2, 10)[-1] == pytest.approx(10.0)
    assert len(sweep_values(1, 0.2, 10)) == 46
    with pytest.raises(ValueError):
        sweep_values(0, 0, 1)


def test_report_json_round_trip_and_metrics():
    rep = run_example(ExampleSpec("sparse-singular-vectors", TINY["sparse-singular-vectors"], seed=2))
    back = RunReport.from_json(rep.to_json())
    assert back.to_json() == rep.to_json()
    # metrics come from the stored solution, not from solver state
    inst = build_instance(ExampleSpec("sparse-singular-vectors", TINY["sparse-singular-vectors"], seed=2))
    x = np.asarray(rep.solution["x"]).ravel()
    assert rep.metrics["norm_Ax"] == pytest.approx(np.linalg.norm(inst.data["A"] @ x), rel=1e-12)
    assert rep.feasibility["unit_norm"] == pytest.approx(max(0.0, abs(np.linalg.norm(x) - 1)), abs=1e-12)


def test_same_spec_same_json():
    spec = ExampleSpec("circle-packing", TINY["circle-packing"], seed=5)
    assert run_example(spec).to_json(timing=False) == run_example(spec).to_json(timing=False)
