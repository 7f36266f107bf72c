import pytest

from hegnn.verify import FAULTS, check_legendre_identity, check_parity, check_gradients, injected_gate_fault, run_all
from hegnn import autodiff as ad


def test_full_report_passes():
    report = run_all(seed=3, quick=True)
    assert report["passed"], [c for c in report["checks"] if not c["passed"]]
    names = {c["name"] for c in report["checks"]}
    assert {"equivariance", "parity", "legendre_identity", "grad_model", "projector", "traces"} <= names


def test_parity_fault_is_caught():
    assert check_parity(0).passed
    assert not check_parity(0, fault="parity").passed


def test_gate_fault_is_caught_and_restored():
    original = ad.silu
    res = check_gradients(0, seeds=1, fault="gate")
    assert not any(r.passed for r in res)
    assert ad.silu is original
    with injected_gate_fault():
        assert ad.silu is not original
    assert ad.silu is original


def test_unknown_fault():
    assert set(FAULTS) == {"parity", "gate"}
    with pytest.raises(ValueError):
        run_all(fault="bogus", quick=True)


def test_legendre_identity_on_random_graphs():
    assert check_legendre_identity(seed=1, cases=50).passed
