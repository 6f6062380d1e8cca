"""Audit pipeline: distances, membership inference, curves, and reports."""

import json

import numpy as np
import pytest

from qmulab import audit, learn, pqc, unlearn


@pytest.fixture(scope="module")
def probes(moons):
    return audit.probe_set(moons, cap=8)


class TestDistanceAudit:
    def test_identical_params_are_certified(self, small_template, quick_model, probes):
        th = quick_model.theta
        out = audit.distance_audit(small_template, th, th, th, probes)
        assert out["after"]["trace_distance"] == pytest.approx(0.0, abs=1e-9)
        assert out["certified"]

    def test_moving_toward_reference_contracts(self, small_template, quick_model, probes, rng):
        ref = pqc.ParamVector(quick_model.theta.values + rng.normal(0, 0.5, len(quick_model.theta)))
        halfway = pqc.ParamVector(0.5 * (quick_model.theta.values + ref.values))
        out = audit.distance_audit(small_template, quick_model.theta, halfway, ref, probes)
        assert out["contracted"]
        assert out["after"]["trace_distance"] < out["before"]["trace_distance"]

    def test_probe_shape_validated(self, small_template, quick_model):
        with pytest.raises(ValueError):
            audit.distance_audit(small_template, quick_model.theta, quick_model.theta,
                                 quick_model.theta, np.zeros((4, 5)))

    def test_infidelity_and_trace_distance_agree_at_zero(self, small_template, quick_model, probes):
        out = audit.model_distance(small_template, quick_model.theta, quick_model.theta, probes)
        assert out["infidelity"] == pytest.approx(0.0, abs=1e-9)


class TestMembership:
    def test_outputs_in_range(self, small_template, quick_model, moons):
        out = audit.membership_inference(
            small_template, quick_model.theta, moons,
            moons.forget_indices(), moons.retained_train_indices(), moons.test_indices())
        assert -1.0 <= out["advantage"] <= 1.0
        assert 0.0 <= out["auc"] <= 1.0

    def test_empty_sets_rejected(self, small_template, quick_model, moons):
        with pytest.raises(ValueError):
            audit.membership_inference(
                small_template, quick_model.theta, moons,
                [], moons.retained_train_indices(), moons.test_indices())

    def test_auc_separated_scores(self):
        # Members scored strictly above non-members -> AUC 1.
        assert audit._auc(np.array([3.0, 4.0]), np.array([1.0, 2.0])) == 1.0
        assert audit._auc(np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 0.0
        assert audit._auc(np.array([1.0]), np.array([1.0])) == 0.5


class TestForgettingCurve:
    def test_distances_per_snapshot(self, small_template, quick_model, moons, probes):
        cfg = unlearn.QmuIConfig(max_iters=3, batch_size=4,
                                 fine_tune=learn.TrainConfig(epochs=2, seed=7))
        _, trace = unlearn.qmu_i(quick_model, moons, cfg)
        curve = audit.forgetting_curve(trace, small_template, quick_model.theta, probes)
        assert len(curve.distances) == len(trace.thetas)
        assert curve.distances[0] == pytest.approx(0.0, abs=1e-9)
        assert curve.flatness(k=2) >= 0.0

    def test_monotone_iterations_enforced(self):
        with pytest.raises(ValueError):
            audit.ForgettingCurve(iterations=[0, 2, 1], distances=[0.0, 0.1, 0.2])

    def test_empty_trace_rejected(self, small_template, quick_model, probes):
        with pytest.raises(ValueError):
            audit.forgetting_curve(unlearn.UnlearnTrace(mechanism="x"),
                                   small_template, quick_model.theta, probes)


class TestRetention:
    def test_deltas_against_pre_metrics(self, quick_model, moons):
        pre = audit.retention_metrics(quick_model, moons)
        post = audit.retention_metrics(quick_model, moons, pre_metrics=pre)
        assert post["delta_retained_accuracy"] == pytest.approx(0.0)
        assert "forget_accuracy" in post


class TestReports:
    def _report(self):
        return audit.UnlearnReport(
            mechanism="test",
            distances={"after": {"trace_distance": 0.01}},
            membership={"advantage": 0.0},
            retention={"retained_accuracy": 0.9},
            dp_ledger={"epsilon": 0.0, "rounds": []},
            reproducibility={"seed": 7},
        )

    def test_digest_ignores_timestamp(self):
        d = self._report().to_dict()
        with_ts = dict(d, timestamp="2020-01-01T00:00:00")
        assert audit.report_digest(d) == audit.report_digest(with_ts)

    def test_digest_sensitive_to_content(self):
        a = self._report().to_dict()
        b = self._report().to_dict()
        b["retention"]["retained_accuracy"] = 0.8
        assert audit.report_digest(a) != audit.report_digest(b)

    def test_emit_and_load_roundtrip(self, tmp_path):
        path = tmp_path / "report.json"
        digest = audit.emit_report(self._report(), path)
        back = audit.load_report(path)
        assert back["digest"] == digest
        assert audit.report_digest(back) == digest
        assert "timestamp" in back

    def test_missing_fields_rejected(self, tmp_path):
        rep = self._report()
        rep.distances = None
        with pytest.raises(audit.ReportValidationError):
            audit.emit_report(rep, tmp_path / "bad.json")

    def test_numpy_values_serialize(self, tmp_path):
        rep = self._report()
        rep.notes["array"] = np.arange(3)
        rep.notes["flag"] = np.bool_(True)
        rep.notes["scalar"] = np.float64(0.5)
        digest = audit.emit_report(rep, tmp_path / "np.json")
        back = audit.load_report(tmp_path / "np.json")
        assert back["notes"]["array"] == [0, 1, 2]
        assert back["digest"] == digest

    def test_canonical_payload_is_sorted_json(self):
        payload = audit.canonical_payload({"b": 1, "a": 2, "digest": "x", "timestamp": "t"})
        assert json.loads(payload) == {"a": 2, "b": 1}
        assert payload.index('"a"') < payload.index('"b"')


class TestParamGapBound:
    def test_positive_and_finite(self, quick_model, moons):
        b = audit.param_gap_bound(quick_model, moons, moons.forget_indices(), 1e-2)
        assert np.isfinite(b) and b >= 0.0

    def test_empty_sample_set(self, quick_model, moons):
        with pytest.raises(ValueError):
            audit.param_gap_bound(quick_model, moons, [], 1e-2)
