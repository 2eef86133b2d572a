import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import enumerate_column, harmonic_bound, lsq_harmonic_oracle
from ftg.denoisers import Denoiser, ToyDenoiser
from ftg.errors import InfeasibleConstraintError, InvalidInputError
from ftg.guidance import (Conditions, GuidanceConfig, SamplerPlan,
                          cfg_combine, correct_harmonic, correct_joint,
                          correct_rhythm, ddim_step, ddpm_step, predict_x0,
                          sample, sample_batch)
from ftg.metrics import out_of_key_rate
from ftg.pianoroll import ONSET, PITCHES, PianoRoll, binarize, LatentRoll
from ftg.rngs import make_rng
from ftg.schedule import linear_schedule
from ftg.theory import (ChordProgression, ColumnSpec, ConstraintMask,
                        KeySequence, KeySignature, R_AT_LEAST, R_EXACTLY,
                        R_FREE, R_NONE, build_constraint_mask,
                        rhythm_controls_from_pattern)

SCHED = linear_schedule(T=100)


def free_mask(length, key="C"):
    keys = KeySequence.constant(KeySignature.parse(key), length)
    return build_constraint_mask(keys)


def rhythm_mask(length, specs, key="C", restrict=False):
    keys = KeySequence.constant(KeySignature.parse(key), length)
    return build_constraint_mask(keys, specs,
                                 restrict_to_in_key=restrict)


def random_state(rng, length=4, batch=False, scale=1.0):
    shape = (3, 2, length, PITCHES) if batch else (2, length, PITCHES)
    return (rng.standard_normal(shape) * scale,
            rng.standard_normal(shape) * scale)


# ---------------------------------------------------------------- basics


def test_cfg_combine_and_w_resolution():
    e_c = np.zeros((2, 4, 128))
    e_cr = np.ones((2, 4, 128))
    np.testing.assert_array_equal(cfg_combine(e_c, e_cr, 0.0), e_c)
    np.testing.assert_array_equal(cfg_combine(e_c, e_cr, 1.0), e_cr)
    np.testing.assert_array_equal(cfg_combine(e_c, e_cr, 2.0), 2.0 * e_cr)
    assert GuidanceConfig().resolve_w(has_rhythm=True) == 1.0
    assert GuidanceConfig().resolve_w(has_rhythm=False) == 0.0
    assert GuidanceConfig(w=3.5).resolve_w(has_rhythm=False) == 3.5


def test_predict_x0_inverts_forward():
    rng = make_rng(0)
    x0 = rng.standard_normal((2, 4, 128))
    eps = rng.standard_normal((2, 4, 128))
    t = 37
    ab = SCHED.alpha_bar[t]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps
    np.testing.assert_allclose(predict_x0(x_t, eps, t, SCHED), x0, atol=1e-9)


# ----------------------------------------------------- harmonic correction


def test_harmonic_identity_off_mask():
    rng = make_rng(1)
    eps, x = random_state(rng)
    mask = free_mask(4)
    out = correct_harmonic(eps, x, 20, mask, SCHED)
    in_key = ~mask.key_mask
    np.testing.assert_array_equal(out[:, in_key], eps[:, in_key])


def test_harmonic_enforces_margin_on_mask():
    rng = make_rng(2)
    eps, x = random_state(rng, scale=3.0)
    mask = free_mask(4, key="D")
    for t in (1, 20, 99):
        out = correct_harmonic(eps, x, t, mask, SCHED)
        p = predict_x0(x, out, t, SCHED)
        assert (p[:, mask.key_mask] <= 0.5 - 1e-6 + 1e-15).all()


def test_harmonic_is_per_cell_max_form():
    rng = make_rng(3)
    eps, x = random_state(rng)
    mask = free_mask(4)
    t = 15
    out = correct_harmonic(eps, x, t, mask, SCHED)
    bound = harmonic_bound(x, t, SCHED, 1e-6)
    want = np.where(mask.key_mask[None], np.maximum(eps, bound), eps)
    np.testing.assert_array_equal(out, want)


def test_harmonic_matches_lsq_oracle():
    rng = make_rng(4)
    for t in (1, 33, 100):
        eps = rng.standard_normal((2, 2, 16))
        x = rng.standard_normal((2, 2, 16))
        cells = rng.random((2, 16)) < 0.4
        eps_full = np.zeros((2, 2, PITCHES))
        x_full = np.zeros((2, 2, PITCHES))
        eps_full[:, :, :16], x_full[:, :, :16] = eps, x
        mask_grid = np.zeros((2, PITCHES), dtype=bool)
        mask_grid[:, :16] = cells
        mask = ConstraintMask(mask_grid, np.full(2, R_FREE, np.int8),
                              np.ones(2, np.int32))
        ours = correct_harmonic(eps_full, x_full, t, mask, SCHED)
        oracle = lsq_harmonic_oracle(eps_full, x_full, t,
                                     np.broadcast_to(mask_grid, eps_full.shape),
                                     SCHED, 1e-6)
        assert np.abs(ours - oracle).max() < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 100))
def test_harmonic_idempotent_and_nonexpansive(seed, t):
    rng = make_rng(seed)
    eps = rng.uniform(-50, 50, (2, 4, PITCHES))
    x = rng.uniform(-50, 50, (2, 4, PITCHES))
    mask = free_mask(4, key="G")
    once = correct_harmonic(eps, x, t, mask, SCHED)
    twice = correct_harmonic(once, x, t, mask, SCHED)
    np.testing.assert_array_equal(once, twice)
    # nonexpansive toward any feasible point
    bound = harmonic_bound(x, t, SCHED, 1e-6)
    feasible = np.where(mask.key_mask[None], bound + np.abs(eps), eps)
    assert (np.linalg.norm(once - feasible)
            <= np.linalg.norm(eps - feasible) + 1e-12)


# ------------------------------------------------------ rhythm correction


def column_state(p_values, t, kappa=1e-6):
    """Build (eps, x_t) whose predicted onset-channel X0 starts at p_values."""
    length = 1
    x = np.zeros((2, length, PITCHES))
    eps = np.zeros((2, length, PITCHES))
    ab = SCHED.alpha_bar[t]
    x[ONSET, 0, :len(p_values)] = 1.0
    eps[ONSET, 0, :len(p_values)] = (
        (x[ONSET, 0, :len(p_values)] - np.sqrt(ab) * np.asarray(p_values))
        / np.sqrt(1 - ab))
    return eps, x


def test_exactly_two_with_two_above_threshold_moves_nothing():
    p = [0.9, 0.6, 0.4, 0.3, 0.1, 0.0]
    t = 25
    eps, x = column_state(p, t)
    cand = np.zeros((1, PITCHES), dtype=bool)
    cand[0, :6] = True
    mask = rhythm_mask(1, (ColumnSpec("exactly", 2),))
    out = correct_rhythm(eps, x, t, mask, SCHED, candidates=cand)
    np.testing.assert_array_equal(out, eps)
    got = binarize(LatentRoll(predict_x0(x, out, t, SCHED))).data[ONSET, 0, :6]
    assert list(np.flatnonzero(got)) == [0, 1]


def test_exactly_n_binarizes_to_n_onsets():
    rng = make_rng(5)
    t = 40
    for trial in range(20):
        eps, x = random_state(rng, length=3, scale=2.0)
        specs = (ColumnSpec("exactly", 1), ColumnSpec("exactly", 3),
                 ColumnSpec("free"))
        mask = rhythm_mask(3, specs)
        out = correct_rhythm(eps, x, t, mask, SCHED)
        roll = binarize(LatentRoll(predict_x0(x, out, t, SCHED)))
        counts = roll.data[ONSET].sum(axis=1)
        assert counts[0] == 1 and counts[1] == 3


def test_at_least_and_none_columns():
    rng = make_rng(6)
    t = 70
    eps, x = random_state(rng, length=2, scale=2.0)
    mask = rhythm_mask(2, (ColumnSpec("at_least", 4), ColumnSpec("none")))
    out = correct_rhythm(eps, x, t, mask, SCHED)
    roll = binarize(LatentRoll(predict_x0(x, out, t, SCHED)))
    assert roll.data[ONSET, 0].sum() >= 4
    assert roll.data[ONSET, 1].sum() == 0
    # sustain channel untouched by rhythm rules
    np.testing.assert_array_equal(out[1], eps[1])


def test_rhythm_matches_enumeration_oracle():
    rng = make_rng(7)
    t = 30
    for kind, n in (("exactly", 2), ("at_least", 2), ("none", 1)):
        for trial in range(10):
            eps, x = random_state(rng, length=1, scale=1.5)
            cand = np.zeros((1, PITCHES), dtype=bool)
            cols = rng.choice(PITCHES, size=9, replace=False)
            cand[0, cols] = True
            mask = rhythm_mask(1, (ColumnSpec(kind, n),))
            ours = correct_rhythm(eps, x, t, mask, SCHED, candidates=cand)
            want = eps.copy()
            want[ONSET, 0] = enumerate_column(
                eps[ONSET, 0], x[ONSET, 0], t, SCHED, 1e-6, cand[0],
                mask.rhythm_kinds[0], int(mask.rhythm_n[0]))
            np.testing.assert_array_equal(ours, want)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 100),
       st.sampled_from(["exactly", "at_least", "none"]), st.integers(1, 5))
def test_rhythm_idempotent(seed, t, kind, n):
    rng = make_rng(seed)
    eps = rng.uniform(-50, 50, (2, 2, PITCHES))
    x = rng.uniform(-50, 50, (2, 2, PITCHES))
    mask = rhythm_mask(2, (ColumnSpec(kind, n), ColumnSpec("free")))
    once = correct_rhythm(eps, x, t, mask, SCHED)
    twice = correct_rhythm(once, x, t, mask, SCHED)
    np.testing.assert_array_equal(once, twice)


def test_infeasible_raises_before_touching_data():
    eps = np.zeros((2, 2, PITCHES))
    x = np.zeros((2, 2, PITCHES))
    cand = np.zeros((2, PITCHES), dtype=bool)
    cand[0, :3] = True
    cand[1, :] = True
    mask = rhythm_mask(2, (ColumnSpec("exactly", 5), ColumnSpec("free")))
    with pytest.raises(InfeasibleConstraintError) as err:
        correct_rhythm(eps, x, 10, mask, SCHED, candidates=cand)
    assert err.value.columns == [0]
    assert err.value.required == [5]
    assert err.value.candidates == [3]


def test_joint_restricts_forced_onsets_to_in_key():
    rng = make_rng(8)
    eps, x = random_state(rng, length=2, scale=2.0)
    keys = KeySequence.constant(KeySignature.parse("C"), 2)
    mask = build_constraint_mask(
        keys, (ColumnSpec("exactly", 3), ColumnSpec("at_least", 2)))
    t = 50
    out = correct_joint(eps, x, t, mask, SCHED)
    roll = binarize(LatentRoll(predict_x0(x, out, t, SCHED)), mask)
    onset_pcs = {h % 12 for h in np.nonzero(roll.data[ONSET][0])[0]}
    assert onset_pcs.isdisjoint({1, 3, 6, 8, 10})
    assert roll.data[ONSET, 0].sum() == 3
    assert roll.data[ONSET, 1].sum() >= 2
    assert not roll.data[:, mask.key_mask].any()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 100))
def test_joint_idempotent(seed, t):
    rng = make_rng(seed)
    eps = rng.uniform(-50, 50, (2, 2, PITCHES))
    x = rng.uniform(-50, 50, (2, 2, PITCHES))
    keys = KeySequence.constant(KeySignature.parse("F"), 2)
    mask = build_constraint_mask(
        keys, (ColumnSpec("exactly", 2), ColumnSpec("none")))
    once = correct_joint(eps, x, t, mask, SCHED)
    np.testing.assert_array_equal(once, correct_joint(once, x, t, mask, SCHED))


# ------------------------------------------------------------ step updates


def test_final_step_is_deterministic_projection():
    rng = make_rng(9)
    x_t = rng.standard_normal((2, 4, PITCHES))
    eps = rng.standard_normal((2, 4, PITCHES))
    out = ddpm_step(x_t, eps, 1, SCHED, noise=rng.standard_normal(x_t.shape))
    np.testing.assert_allclose(out, predict_x0(x_t, eps, 1, SCHED), atol=0)


def test_ddim_eta_zero_ignores_noise():
    rng = make_rng(10)
    x_t = rng.standard_normal((2, 4, PITCHES))
    eps = rng.standard_normal((2, 4, PITCHES))
    a = ddim_step(x_t, eps, 50, 30, SCHED, noise=rng.standard_normal(x_t.shape),
                  eta=0.0)
    b = ddim_step(x_t, eps, 50, 30, SCHED, noise=None, eta=0.0)
    np.testing.assert_array_equal(a, b)


def test_step_pairs_structure():
    plan = SamplerPlan(mode="ddim", num_steps=10)
    pairs = plan.step_pairs(SCHED)
    assert pairs[0][0] == 100 and pairs[-1][1] == 0
    ts = [t for t, _ in pairs] + [0]
    assert all(a > b for a, b in zip(ts, ts[1:]))
    assert [t_prev for _, t_prev in pairs] == ts[1:]
    full = SamplerPlan(mode="ddpm").step_pairs(SCHED)
    assert len(full) == 100 and full[0] == (100, 99) and full[-1] == (1, 0)
    explicit = SamplerPlan(mode="ddim", timesteps=(1, 7, 50)).step_pairs(SCHED)
    assert explicit == [(50, 7), (7, 1), (1, 0)]
    with pytest.raises(InvalidInputError):
        SamplerPlan(mode="ddim", timesteps=(7, 7, 50)).step_pairs(SCHED)


# --------------------------------------------------------------- sampling


class CountingDenoiser(Denoiser):
    supports_conditions = True
    supports_melody = True

    def __init__(self):
        self.calls = 0

    def predict_batch(self, x, t):
        self.calls += 1
        return np.zeros((x.shape[0], 2) + x.shape[2:])


def test_sampler_is_deterministic_per_seed():
    den = ToyDenoiser(width=4, temb_dim=8, seed=0)
    cond = Conditions(length=16,
                      chords=ChordProgression.from_symbols(["C"], 16))
    plan = SamplerPlan(mode="ddim", num_steps=5)
    a = sample(den, cond, SCHED, plan=plan, seed=7)
    b = sample(den, cond, SCHED, plan=plan, seed=7)
    np.testing.assert_array_equal(a.latent.data, b.latent.data)
    np.testing.assert_array_equal(a.roll.data, b.roll.data)
    c = sample(den, cond, SCHED, plan=plan, seed=8)
    assert np.abs(a.latent.data - c.latent.data).max() > 0


def test_ddpm_equals_full_ddim_with_eta_one():
    den = ToyDenoiser(width=4, temb_dim=8, seed=1)
    cond = Conditions(length=8, chords=ChordProgression.from_symbols(["C"], 8))
    a = sample(den, cond, SCHED, plan=SamplerPlan(mode="ddpm"), seed=3)
    taus = tuple(range(1, SCHED.T + 1))
    b = sample(den, cond, SCHED,
               plan=SamplerPlan(mode="ddim", timesteps=taus, eta=1.0), seed=3)
    np.testing.assert_array_equal(a.latent.data, b.latent.data)


def test_sampler_zero_violations_and_rhythm_enforcement():
    den = ToyDenoiser(width=4, temb_dim=8, seed=2)
    rhythm, specs = rhythm_controls_from_pattern("xo.o", 16)
    cond = Conditions(length=16,
                      chords=ChordProgression.from_symbols(["C", "G"], 8),
                      rhythm=rhythm, rhythm_spec=specs)
    res = sample(den, cond, SCHED, plan=SamplerPlan(mode="ddim", num_steps=6),
                 seed=11)
    assert out_of_key_rate(res.roll, res.keys) == 0.0
    onsets = res.roll.onsets().any(axis=1)
    assert onsets[[0, 4, 8, 12]].all()
    assert not onsets[[1, 3, 5, 7, 9, 11, 13, 15]].any()


def test_w_zero_skips_conditional_rhythm_pass():
    den = CountingDenoiser()
    cond = Conditions(length=8, chords=ChordProgression.from_symbols(["C"], 8))
    plan = SamplerPlan(mode="ddim", num_steps=4)
    sample(den, cond, SCHED, GuidanceConfig(w=0.0), plan, seed=0)
    once = den.calls
    den.calls = 0
    rhythm, specs = rhythm_controls_from_pattern("x...", 8)
    cond_r = Conditions(length=8, chords=ChordProgression.from_symbols(["C"], 8),
                        rhythm=rhythm, rhythm_spec=specs)
    sample(den, cond_r, SCHED, GuidanceConfig(), plan, seed=0)
    assert den.calls == 2 * once


def test_out_of_key_chord_warns_and_still_clamps():
    den = ToyDenoiser(width=4, temb_dim=8, seed=0)
    keys = KeySequence.constant(KeySignature.parse("C"), 16)
    cond = Conditions(length=16,
                      chords=ChordProgression.from_symbols(["D"], 16),
                      keys=keys)
    with pytest.warns(UserWarning):
        res = sample(den, cond, SCHED,
                     plan=SamplerPlan(mode="ddim", num_steps=4), seed=0)
    assert res.warnings
    assert out_of_key_rate(res.roll, res.keys) == 0.0


def test_sample_batch_matches_stacked_single_samples():
    den = ToyDenoiser(width=4, temb_dim=8, seed=4)
    cond = Conditions(length=8, chords=ChordProgression.from_symbols(["F"], 8))
    plan = SamplerPlan(mode="ddim", num_steps=5)
    x0, bins, keys, mask, warns = sample_batch(den, cond, SCHED, None, plan,
                                               seed=5, n_samples=3)
    assert x0.shape == (3, 2, 8, PITCHES)
    assert bins.shape == (3, 2, 8, PITCHES)
    for b in bins:
        assert not b[:, mask.key_mask].any()
