import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from candidefit.fitting import (DISTRUST_THRESHOLD, FitDivergedError, LandmarkFrame, LMSettings,
                                ResidualSystem, DistrustRecord, distrust, extract_action_units,
                                fit_frame, fit_frames, format_distrust_table, lm_minimize, pack,
                                personalize, rank_by_distrust, reprojection_error, residuals,
                                select_trusted, unpack)
from candidefit.geometry import PoseParams, init_pose
from candidefit.synth import render_frame, render_points, yaw_pose

JAW = 0  # slot of "AU26/27 jaw drop"


def _frame(model, corr, s=100.0, yaw=0.0, au=None, su=None, tau=0):
    p = yaw_pose(model, s, yaw, (320.0, 240.0), a_shape=su, a_action=au)
    return render_frame(model, corr, p, tau=tau)[0], p


def test_residuals_zero_at_truth(model, corr):
    frame, p = _frame(model, corr, yaw=0.2, au=np.full(8, 0.3))
    r = residuals(p, frame, model, corr)
    assert r.shape == (2 * corr.n_active,)
    assert np.max(np.abs(r)) < 1e-12


def test_residual_sign_and_translation(model, corr):
    frame, p = _frame(model, corr)
    moved = LandmarkFrame(0, frame.points + [1.0, 0.0])
    r = residuals(p, moved, model, corr)
    assert np.allclose(r[0::2], -1.0) and np.allclose(r[1::2], 0.0, atol=1e-12)
    assert reprojection_error(p, moved, model, corr) == pytest.approx(corr.n_active / 2)


def test_single_landmark_perturbation_energy(model, corr):
    frame, p = _frame(model, corr)
    pts = frame.points.copy()
    pts[corr.active_2d[5]] += [3.0, 4.0]
    assert reprojection_error(p, LandmarkFrame(0, pts), model, corr) == pytest.approx(12.5)


def test_pack_unpack_inverse(model):
    p = PoseParams(2.5, [0.1, -0.2, 0.3], [4, 5], np.arange(15) / 10, np.arange(8) / 10)
    q = unpack(pack(p), model.n_shape)
    for k in ("w", "t", "a_shape", "a_action"):
        assert np.allclose(getattr(p, k), getattr(q, k))
    assert q.s == pytest.approx(p.s)


@pytest.mark.parametrize("phase", ["global", "shape", "action", "all"])
def test_jacobian_matches_central_differences(model, corr, rng, phase):
    system = ResidualSystem.for_phase(model, corr, phase)
    frame, _ = _frame(model, corr, yaw=0.3)
    target = system.target(frame)
    theta = pack(PoseParams(rng.uniform(50, 150), rng.uniform(-0.5, 0.5, 3), rng.uniform(0, 300, 2),
                            rng.normal(0, 0.5, 15), rng.uniform(0, 1, 8)))
    J = system.jacobian_full(theta)
    h = 1e-6
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        fd = (system.residuals_full(theta + e, target) - system.residuals_full(theta - e, target)) / (2 * h)
        assert np.allclose(J[:, k], fd, rtol=1e-4, atol=1e-4 * max(1.0, np.abs(fd).max()))


def test_system_requires_free_parameter(model, corr):
    with pytest.raises(ValueError, match="at least one"):
        ResidualSystem(model, corr, np.zeros(6 + 15 + 8, dtype=bool))
    with pytest.raises(ValueError, match="unknown phase"):
        ResidualSystem.for_phase(model, corr, "bogus")


def test_lm_at_truth_converges_immediately(model, corr):
    frame, p = _frame(model, corr, yaw=0.2, au=np.full(8, 0.5))
    res = lm_minimize(ResidualSystem.for_phase(model, corr, "action"), p, frame)
    assert res.iterations <= 2
    assert res.error <= 1e-12


def test_lm_recovers_pose_from_init(model, corr):
    frame, p = _frame(model, corr, s=1.5, yaw=0.4)
    res = fit_frame(frame, model, corr, phase="global")
    assert res.params.s == pytest.approx(1.5, abs=1e-6)
    assert np.allclose(res.params.w, p.w, atol=1e-5)
    assert res.rmse <= 1e-6


def test_lm_history_is_non_increasing(model, corr, rng):
    frame, _ = _frame(model, corr, yaw=0.35, au=rng.uniform(0, 1, 8))
    noisy = LandmarkFrame(0, frame.points + rng.normal(0, 0.5, frame.points.shape))
    res = fit_frame(noisy, model, corr)
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 0)
    assert res.rmse <= 1.0


def test_noise_propagation_monte_carlo(model, corr):
    """Recovered AUs scatter as predicted by the linearized covariance sigma^2 (J^T J)^-1."""
    base, truth = _frame(model, corr, yaw=0.2, au=np.full(8, 0.5))
    sigma = 0.5
    rng = np.random.default_rng(7)
    est = []
    for _ in range(100):
        f = LandmarkFrame(0, base.points + rng.normal(0, sigma, base.points.shape))
        est.append(fit_frame(f, model, corr).params.a_action)
    est = np.array(est)
    system = ResidualSystem.for_phase(model, corr, "action")
    J = system.jacobian_full(pack(truth))[:, system.mask]
    cov = sigma ** 2 * np.linalg.inv(J.T @ J)
    sd = np.sqrt(np.diag(cov))[-8:]
    assert np.all(np.abs(est.mean(axis=0) - 0.5) <= 3 * sd)
    ratio = est.std(axis=0, ddof=1) / sd
    assert np.all((ratio > 0.7) & (ratio < 1.3))


def test_divergence_raises(model, corr):
    class Broken(ResidualSystem):
        def residuals_full(self, theta, target):
            r = super().residuals_full(theta, target)
            return r if theta[0] == self._start else r * np.nan

    frame, p = _frame(model, corr)
    system = Broken(model, corr, ResidualSystem.for_phase(model, corr, "global").mask)
    system._start = math.log(90.0)
    with pytest.raises(FitDivergedError, match="diverged"):
        lm_minimize(system, p.copy(s=90.0), frame)


def test_jaw_drop_round_trip(model, corr):
    au = np.zeros(8)
    au[JAW] = 0.8
    for yaw, tol in ((0.0, 1e-4), (0.4, 1e-3)):
        frame, _ = _frame(model, corr, yaw=yaw, au=au)
        a = fit_frame(frame, model, corr).params.a_action
        assert a[JAW] == pytest.approx(0.8, abs=tol)
        assert np.max(np.abs(np.delete(a, JAW))) <= 1e-5


def test_neutral_frames_give_zero_action(model, corr):
    frames = [_frame(model, corr, s=80 + 10 * i, yaw=0.1 * i, tau=i)[0] for i in range(4)]
    A = extract_action_units(frames, model, corr)
    assert A.shape == (4, 8)
    assert np.max(np.abs(A)) <= 1e-6


def test_smile_recovered_on_recipe_slots(model, corr):
    from candidefit.synth import load_recipes, recipe_slots
    recipes = load_recipes(intensity_range=(1.0, 1.0))
    slots = recipe_slots(recipes["smile"], model)
    au = np.zeros(8)
    au[slots] = 1.0
    frame, _ = _frame(model, corr, yaw=0.2, au=au)
    a = fit_frame(frame, model, corr).params.a_action
    assert set(np.flatnonzero(np.abs(a) > 1e-6)) == set(slots)


def test_fit_frames_threads_keep_order(model, corr, rng):
    frames = [_frame(model, corr, yaw=y, au=rng.uniform(0, 1, 8), tau=i)[0]
              for i, y in enumerate(np.linspace(-0.4, 0.4, 6))]
    serial = fit_frames(frames, model, corr, workers=1)
    threaded = fit_frames(frames, model, corr, workers=3)
    for a, b in zip(serial, threaded):
        assert a.tau == b.tau
        assert np.array_equal(a.params.a_action, b.params.a_action)


def test_fit_record_fields(model, corr):
    frame, _ = _frame(model, corr)
    rec = fit_frame(frame, model, corr).to_record()
    assert set(rec) == {"tau", "s", "w", "t", "a_shape", "a_action", "rmse", "iterations"}
    assert len(rec["w"]) == 3 and len(rec["t"]) == 2 and len(rec["a_action"]) == 8


# -- distrust ---------------------------------------------------------------

def test_distrust_known_values():
    assert distrust(0.0, 0.3) == 0.5
    assert distrust(0.0, 0.0) == 0.5
    assert distrust(1.0, 0.0) == 0.0
    assert distrust(-0.707, 0.038) <= 0.0005
    assert distrust(0.234, 0.169) == pytest.approx(0.244, abs=1e-3)
    with pytest.raises(ValueError):
        distrust(1.0, -1.0)


@given(st.floats(-5, 5), st.floats(1e-3, 5))
def test_distrust_symmetric_and_bounded(mu, sigma):
    d = distrust(mu, sigma)
    assert d == distrust(-mu, sigma)
    assert 0.0 <= d <= 0.5


@given(st.floats(0.01, 3), st.floats(0.01, 3), st.floats(0.05, 2))
def test_distrust_monotone(m1, m2, sigma):
    if abs(m1 - m2) < 1e-3:
        return
    lo, hi = sorted((m1, m2))
    if distrust(hi, sigma) > 0 and distrust(lo, sigma) < 0.5:
        assert distrust(hi, sigma) < distrust(lo, sigma)
    s_lo, s_hi = sigma, sigma * 1.5
    if distrust(m1, s_lo) > 1e-300:
        assert distrust(m1, s_hi) > distrust(m1, s_lo)


def test_distrust_matches_piecewise_integral():
    from statistics import NormalDist
    for mu, sigma in ((0.3, 0.2), (-0.3, 0.2), (1.2, 0.9)):
        F = NormalDist(mu, sigma).cdf(mu / 2)
        expected = F if mu >= 0 else 1 - F
        assert distrust(mu, sigma) == pytest.approx(expected, abs=1e-15)


def test_rank_and_select():
    recs = [DistrustRecord.from_stats(n, m, v) for n, m, v in
            (("a", 0.0, 1.0), ("b", 1.0, 0.01), ("c", 0.3, 0.04))]
    ranked = rank_by_distrust(recs)
    assert [r.unit_name for r in ranked] == ["b", "c", "a"]
    assert [r.unit_name for r in select_trusted(ranked)] == ["b", "c"]
    table = format_distrust_table(recs)
    lines = table.splitlines()
    assert lines.index("-" * 60) == 4  # rule sits between trusted and distrusted rows


def test_personalize_requires_two_frames(model, corr):
    frame, _ = _frame(model, corr)
    with pytest.raises(ValueError, match="insufficient frames"):
        personalize([frame], model, corr)


def test_personalize_recovers_trusted_units(model, corr):
    rng = np.random.default_rng(3)
    su = np.zeros(15)
    strong = [0, 3]  # two clearly nonzero identity units
    su[strong] = [0.8, -0.6]
    frames = []
    for i in range(6):
        p = yaw_pose(model, 100.0, rng.uniform(-0.3, 0.3), (320, 240), a_shape=su)
        frames.append(render_frame(model, corr, p, noise_sigma=0.3, rng=rng, tau=i)[0])
    pers = personalize(frames, model, corr)
    assert len(pers.records) == 15
    assert [r.distrust for r in pers.records] == sorted(r.distrust for r in pers.records)
    trusted = {r.unit_name for r in pers.records if r.distrust < DISTRUST_THRESHOLD}
    for k in strong:
        assert model.shape_names[k] in trusted
        assert pers.shape_coeffs[k] == pytest.approx(su[k], abs=0.1)
    zeroed = [k for k, name in enumerate(model.shape_names) if name not in trusted]
    assert np.all(pers.shape_coeffs[zeroed] == 0)
    back = type(pers).from_dict(pers.to_dict())
    assert np.array_equal(back.shape_coeffs, pers.shape_coeffs)


def test_frozen_shape_used_in_action_fit(model, corr):
    su = np.zeros(15)
    su[0] = 0.5
    au = np.zeros(8)
    au[3] = 0.6
    frame, _ = _frame(model, corr, yaw=0.2, su=su, au=au)
    a = fit_frame(frame, model, corr, a_shape=su).params.a_action
    assert np.allclose(a, au, atol=1e-6)
    start = init_pose(frame, model, corr, a_shape=su)
    assert np.array_equal(start.a_shape, su)
