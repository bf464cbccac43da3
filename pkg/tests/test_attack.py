import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lockinfer.attack import (
    AttackProfile,
    ConfigurationError,
    KeySpaceTooLarge,
    SchemaError,
    TransitionEstimate,
    clamp_transition,
    estimate_transitions,
    infer_key_deterministic,
    infer_transition,
    published_profile,
    phase_scores,
    rank_keys_exhaustive,
    rank_keys_lazy,
    rank_observation,
    rank_of_truth,
    round_half_up,
    score_transition_candidates,
)
from lockinfer.lockmodel import (
    CCW,
    CW,
    PADLOCK,
    SAFE,
    KeySet,
    LockSpec,
    PhaseSpec,
    implemented_key_set,
    key_to_transitions,
)
from lockinfer.regression import AVERAGED, NEGATIVE, POSITIVE, LinearModel
from lockinfer.segmentation import segment_phases
from lockinfer.signal import DisplacementFeatures
from lockinfer.synth import synthesize_unlock_trace
from oracles import ranking_by_sort

TINY = LockSpec("tiny", 6, (PhaseSpec(CW, 13, 18), PhaseSpec(CCW, 7, 12), PhaseSpec(CW, 1, 6)))


def _profile_with(models, strategy, spec=PADLOCK):
    return AttackProfile(spec, models, strategy)


def test_positive_inversion_and_rounding():
    models = {(1, POSITIVE): LinearModel(0.1, 0.5)}
    prof = _profile_with(models, (POSITIVE, POSITIVE, POSITIVE))
    tb = infer_transition(DisplacementFeatures(10.54, -1.0), 1, prof)
    assert tb == pytest.approx(100.4)
    assert round_half_up(tb) == 100


def test_clamp_at_range_edge():
    assert clamp_transition(130.0, PADLOCK.phases[0]) == (120, True)
    assert clamp_transition(80.4, PADLOCK.phases[0]) == (81, True)
    assert clamp_transition(100.5, PADLOCK.phases[0]) == (101, False)


def test_averaged_strategy():
    models = {(1, POSITIVE): LinearModel(0.1, 0.0), (1, NEGATIVE): LinearModel(-0.1, 0.0)}
    prof = _profile_with(models, (AVERAGED, AVERAGED, AVERAGED))
    assert infer_transition(DisplacementFeatures(10.0, -10.2), 1, prof) == pytest.approx(101.0)


def test_missing_model_is_configuration_error():
    prof = _profile_with({(1, POSITIVE): LinearModel(0.1, 0.0)}, (NEGATIVE, NEGATIVE, NEGATIVE))
    with pytest.raises(ConfigurationError, match="no negative model"):
        infer_transition(DisplacementFeatures(1.0, -1.0), 1, prof)


def test_profile_validation():
    with pytest.raises(ConfigurationError):
        AttackProfile(PADLOCK, {}, (POSITIVE,))
    with pytest.raises(ConfigurationError):
        AttackProfile(PADLOCK, {}, ("median",) * 3)


def test_default_strategies():
    assert published_profile(PADLOCK).strategy == (AVERAGED, AVERAGED, NEGATIVE)
    assert published_profile(SAFE).strategy == (AVERAGED, POSITIVE, NEGATIVE, NEGATIVE)
    assert published_profile(PADLOCK).sigma(3) == 4.82


def test_zero_noise_trace_recovers_key(padlock_profile):
    trace, _ = synthesize_unlock_trace((10, 30, 0), padlock_profile)
    key, est = infer_key_deterministic(segment_phases(trace, PADLOCK), padlock_profile)
    assert key == (10, 30, 0)
    assert est.rounded == (110, 60, 30) and not any(est.clamped)


def test_deterministic_inference_commutes():
    prof = published_profile(PADLOCK)
    feats = [DisplacementFeatures(8.0, -12.0), DisplacementFeatures(5.0, -7.0), DisplacementFeatures(2.5, -1.5)]
    key, est = infer_key_deterministic(feats, prof)
    from lockinfer.lockmodel import transitions_to_key

    assert key == transitions_to_key(est.rounded, 0, PADLOCK)
    with pytest.raises(ConfigurationError):
        estimate_transitions(feats[:2], prof)


# ---- scoring --------------------------------------------------------------


def test_scores_symmetric_about_centre():
    ph = PADLOCK.phases[2]
    s = score_transition_candidates(20.0, 4.82, ph)
    assert int(np.argmax(s)) == 19
    assert s[19 - 5] == pytest.approx(s[19 + 5])


@given(st.floats(1.5, 39.5), st.floats(0.5, 30))
def test_score_peaks_at_rounded_mean(mean, sigma):
    s = score_transition_candidates(mean, sigma, PADLOCK.phases[2])
    assert s[round_half_up(mean) - 1] >= s.max() - 1e-12


def test_sigma_floor():
    a = score_transition_candidates(20.0, 0.0, PADLOCK.phases[2])
    b = score_transition_candidates(20.0, 0.5, PADLOCK.phases[2])
    assert np.array_equal(a, b)
    prof = AttackProfile(PADLOCK, {(i, s): LinearModel(0.1, 0.0, 0.0) for i in (1, 2, 3) for s in (POSITIVE, NEGATIVE)},
                         (AVERAGED,) * 3)
    assert prof.sigma(1) == 0.5


# ---- ranking --------------------------------------------------------------


def _random_scores(rng, spec, kind="gauss"):
    out = []
    for ph in spec.phases:
        if kind == "gauss":
            out.append(score_transition_candidates(rng.uniform(ph.transition_min - 5, ph.transition_max + 5),
                                                   rng.uniform(0.5, 15), ph))
        else:  # coarse values so many ties appear
            out.append(rng.integers(0, 3, ph.width).astype(float))
    return out


@pytest.mark.parametrize("kind", ["gauss", "ties"])
def test_tiny_lock_against_sort_oracle(rng, kind):
    for _ in range(20):
        scores = _random_scores(rng, TINY, kind)
        start = int(rng.integers(0, 6))
        want = ranking_by_sort(scores, TINY, start)
        ex = rank_keys_exhaustive(scores, TINY, start)
        lz = rank_keys_lazy(scores, TINY, TINY.key_space_size, start)
        assert [tuple(k) for k in ex.keys.tolist()] == want
        assert [tuple(k) for k in lz.keys.tolist()] == want


def test_tiny_restricted_against_sort_oracle(rng):
    members = {tuple(int(v) for v in rng.integers(0, 6, 3)) for _ in range(40)}
    ks = KeySet(frozenset(members), "file", TINY)
    for _ in range(10):
        scores = _random_scores(rng, TINY, "ties")
        want = ranking_by_sort(scores, TINY, 0, members)
        assert [tuple(k) for k in rank_keys_exhaustive(scores, TINY, 0, ks).keys.tolist()] == want
        assert [tuple(k) for k in rank_keys_lazy(scores, TINY, len(ks), 0, ks).keys.tolist()] == want


def test_lazy_full_padlock_equals_exhaustive(rng):
    scores = _random_scores(rng, PADLOCK)
    ex = rank_keys_exhaustive(scores, PADLOCK)
    lz = rank_keys_lazy(scores, PADLOCK, 64_000)
    assert len(ex) == len(lz) == 64_000
    assert np.array_equal(ex.keys, lz.keys) and np.array_equal(ex.scores, lz.scores)


def test_scores_non_increasing_and_unique(rng):
    ranked = rank_keys_lazy(_random_scores(rng, PADLOCK), PADLOCK, 500)
    assert np.all(np.diff(ranked.scores) <= 0)
    assert len({tuple(k) for k in ranked.keys.tolist()}) == 500


def test_uniform_scores_give_lexicographic_order():
    flat = [np.zeros(40)] * 3
    ranked = rank_keys_exhaustive(flat, PADLOCK)
    assert [tuple(k) for k in ranked.keys[:3].tolist()] == [(0, 0, 0), (0, 0, 1), (0, 0, 2)]
    assert np.all(np.diff(ranked.keys @ np.array([1600, 40, 1])) > 0)
    # a very wide Gaussian collapses to exact ties too
    wide = [score_transition_candidates(60.0, 1e12, ph) for ph in PADLOCK.phases]
    assert np.array_equal(rank_keys_exhaustive(wide, PADLOCK).keys, ranked.keys)
    assert np.array_equal(rank_keys_lazy(wide, PADLOCK, 100).keys, ranked.keys[:100])


def test_scale_invariance(rng):
    scores = _random_scores(rng, PADLOCK)
    base = rank_keys_exhaustive(scores, PADLOCK).keys
    for c in (0.25, 7.0):
        shifted = [scores[0], scores[1] + math.log(c), scores[2]]
        assert np.array_equal(rank_keys_exhaustive(shifted, PADLOCK).keys[:2000], base[:2000])


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 60), st.integers(0, 2**31 - 1))
def test_prefix_property(r, seed):
    scores = _random_scores(np.random.default_rng(seed), PADLOCK)
    a = rank_keys_lazy(scores, PADLOCK, r).keys
    b = rank_keys_lazy(scores, PADLOCK, r + 1).keys
    assert np.array_equal(a, b[:r])


def test_restricted_is_filtered_unrestricted(rng):
    ks = implemented_key_set(PADLOCK)
    scores = _random_scores(rng, PADLOCK)
    full = rank_keys_exhaustive(scores, PADLOCK)
    mask = [tuple(k) in ks.keys for k in full.keys.tolist()]
    want = full.keys[np.array(mask)][:50]
    got = rank_keys_lazy(scores, PADLOCK, 50, key_set=ks)
    assert np.array_equal(got.keys, want)
    assert got.key_space_size == 4000
    assert all(tuple(k) in ks for k in got.keys.tolist())


def test_top1_is_deterministic_answer():
    prof = published_profile(PADLOCK)
    est = TransitionEstimate((100.3, 60.8, 12.2), (100, 61, 12), (False,) * 3)
    ranked = rank_keys_lazy(phase_scores(est, prof), PADLOCK, 1)
    from lockinfer.lockmodel import transitions_to_key

    assert tuple(ranked.keys[0]) == transitions_to_key((100, 61, 12), 0, PADLOCK)


def test_r_beyond_space_returns_everything():
    scores = [np.zeros(6)] * 3
    assert len(rank_keys_lazy(scores, TINY, 10_000)) == 216


def test_bad_r():
    with pytest.raises(ValueError):
        rank_keys_lazy([np.zeros(6)] * 3, TINY, 0)


def test_exhaustive_guard():
    with pytest.raises(KeySpaceTooLarge):
        rank_keys_exhaustive([np.zeros(100)] * 4, SAFE)


def test_safe_lazy_top_r_without_materialising():
    prof = published_profile(SAFE)
    theta = key_to_transitions((25, 50, 75, 0), 0, SAFE)
    est = TransitionEstimate(tuple(float(t) for t in theta), theta, (False,) * 4)
    ranked = rank_keys_lazy(phase_scores(est, prof), SAFE, 200)
    assert rank_of_truth(ranked, (25, 50, 75, 0)) == 1
    assert ranked.key_space_size == 100**4


def test_rank_of_truth():
    scores = [np.arange(6.0)[::-1]] * 3
    ranked = rank_keys_exhaustive(scores, TINY)
    assert rank_of_truth(ranked, tuple(ranked.keys[0])) == 1
    assert rank_of_truth(ranked.top(3), tuple(ranked.keys[10])) is None


def test_rank_observation_zero_noise(padlock_profile):
    trace, _ = synthesize_unlock_trace((39, 0, 39), padlock_profile)
    ranked, _ = rank_observation(segment_phases(trace, PADLOCK).features, padlock_profile, 10)
    assert rank_of_truth(ranked, (39, 0, 39)) == 1


def test_ranked_csv(tmp_path, rng):
    ranked = rank_keys_lazy(_random_scores(rng, PADLOCK), PADLOCK, 3)
    ranked.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "rank,key,log_score" and lines[1].startswith("1,") and len(lines) == 4


# ---- persistence ----------------------------------------------------------


def test_profile_round_trip(tmp_path, padlock_profile):
    padlock_profile.save(tmp_path / "p.json")
    back = AttackProfile.load(tmp_path / "p.json")
    assert back.strategy == padlock_profile.strategy
    assert back.models == padlock_profile.models
    assert back.spin_profile == padlock_profile.spin_profile
    assert [back.sigma(i) for i in (1, 2, 3)] == [padlock_profile.sigma(i) for i in (1, 2, 3)]


def test_schema_version_checked(tmp_path):
    d = published_profile(PADLOCK).to_dict()
    d["schema_version"] = 99
    (tmp_path / "p.json").write_text(json.dumps(d))
    with pytest.raises(SchemaError, match="schema_version"):
        AttackProfile.load(tmp_path / "p.json")


def test_custom_lock_profile_round_trip():
    models = {(i, s): LinearModel(0.1 if s == POSITIVE else -0.1, 0.0, 1.0) for i in (1, 2, 3) for s in (POSITIVE, NEGATIVE)}
    prof = AttackProfile(TINY, models, (AVERAGED,) * 3)
    back = AttackProfile.from_dict(json.loads(json.dumps(prof.to_dict())))
    assert back.spec == TINY
