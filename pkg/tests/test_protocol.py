"""Tests for the factorized discrete evaluator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from rotordistill.noise import NoiseParams, error_ensemble
from rotordistill.protocol import (
    OutcomeTuple,
    ProtocolParams,
    build_tables,
    class_masses,
    compat_set,
    conditional_fidelity,
    four_level_closed_form,
    loss_dict,
    optimal_mc,
    outcome_probability,
    rotation_dict,
    run_protocol,
    stage1_likelihoods,
    success_set,
    wrap_signed,
)


@st.composite
def protocol_configs(draw):
    d = draw(st.sampled_from([4, 8, 16]))
    m_i = draw(st.sampled_from([m for m in (2, 4, 8, 16) if m <= d]))
    m_c = draw(st.sampled_from([m for m in (2, 4, 8, 16) if m <= m_i]))
    m_f = draw(st.sampled_from([m for m in (2, 4) if m <= m_c]))
    return ProtocolParams(d, m_i, m_c, m_f)


class TestParams:
    def test_deltas(self):
        p = ProtocolParams(16, 8, 4, 2)
        assert (p.delta_i, p.delta_c, p.delta_f) == (2, 4, 2)

    @pytest.mark.parametrize(
        "args",
        [
            (12, 4, 2, 2, 0.0),  # not a power of two
            (16, 8, 16, 2, 0.0),  # m_c > m_i
            (16, 8, 4, 8, 0.0),  # m_f > m_c
            (16, 16, 4, 2, 0.1),  # f_cut below 1/m_f^2
            (16, 16, 4, 2, 1.0),  # f_cut not < 1
            (4, 4, 2, 1, 0.0),  # m_f < 2
        ],
    )
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            ProtocolParams(*args)

    def test_f_cut_zero_and_threshold(self):
        ProtocolParams(16, 16, 4, 2, 0.0)
        ProtocolParams(16, 16, 4, 2, 0.25)
        ProtocolParams(16, 16, 4, 2, 0.9)


class TestWrap:
    @given(x=st.integers(-100, 100), d=st.sampled_from([2, 4, 8, 16]))
    def test_range_and_congruence(self, x, d):
        w = wrap_signed(x, d)
        assert -d // 2 < w <= d // 2
        assert (w - x) % d == 0


class TestStage1Likelihoods:
    def test_total_mass(self):
        # summed over outcomes and classes the table mass is m_i / m_c
        p = ProtocolParams(16, 8, 4, 2)
        deph, _ = build_tables(p, NoiseParams(0.0, 0.02, 16.0), 0)
        like = stage1_likelihoods(p, deph)
        assert_allclose(like.sum(), p.m_i / p.m_c, rtol=1e-12)

    def test_symmetric_table_gives_symmetric_classes(self):
        # q_s = q_{-s} makes class u and class -u mirror images
        p = ProtocolParams(8, 8, 4, 2)
        deph, _ = build_tables(p, NoiseParams(0.0, 0.05, 16.0), 0)
        like = stage1_likelihoods(p, deph)
        for a1 in range(p.delta_c):
            for b1 in range(p.delta_c):
                for u in range(p.m_c):
                    assert_allclose(
                        like[a1, b1, u],
                        like[b1, a1, (-u) % p.m_c],
                        rtol=1e-13,
                    )


class TestRotationDict:
    def test_four_level_tie_breaks_to_zero(self):
        # outcome (0, 1): classes 0 and 1 carry the exact same likelihood
        # q_0 q_1; the tie must resolve to the smaller signed class
        p = ProtocolParams(4, 4, 2, 2)
        deph, _ = build_tables(p, NoiseParams(0.0, 0.03, 16.0), 0)
        rot = rotation_dict(p, deph)
        assert rot.u_star[0, 1] == 0
        assert rot.u_star[1, 0] == 0
        assert rot.u_b(0, 1) == 0

    def test_aligned_outcomes_need_no_correction(self):
        p = ProtocolParams(16, 16, 4, 2)
        deph, _ = build_tables(p, NoiseParams(0.0, 0.01, 16.0), 0)
        rot = rotation_dict(p, deph)
        for a1 in range(p.delta_c):
            assert rot.u_star[a1, a1] == 0


class TestLossDict:
    def test_no_loss_gives_zero_corrections(self):
        p = ProtocolParams(16, 16, 4, 2)
        _, loss = build_tables(p, NoiseParams(0.0, 0.01, 16.0), 0)
        ld = loss_dict(p, loss)
        assert (ld.table == 0).all()

    def test_class_masses_normalized(self):
        p = ProtocolParams(16, 16, 8, 2)
        _, loss = build_tables(p, NoiseParams(0.05, 0.0, 16.0))
        w = class_masses(p, loss)
        assert_allclose(w.sum(), 1.0, atol=1e-12)
        assert w[0] == max(w)  # losing nothing stays most likely


class TestPredicates:
    def test_success_subset_of_compat(self):
        p = ProtocolParams(8, 8, 4, 2)
        noise = NoiseParams(0.05, 0.03, 16.0)
        deph, loss = build_tables(p, noise, 2)
        rot, ld = rotation_dict(p, deph), loss_dict(p, loss)
        for outcome in (OutcomeTuple(0, 1, 0, 1), OutcomeTuple(1, 1, 1, 0)):
            compat = compat_set(outcome, p, stage=2)
            succ = success_set(
                outcome, p, rot.u_b(outcome.a1, outcome.b1),
                ld.v_b(outcome.a2, outcome.b2),
            )
            hits = 0
            for err, _ in error_ensemble(deph, loss):
                if succ(err):
                    hits += 1
                    assert compat(err)
            assert hits > 0

    def test_predicate_masses_match_factorized_values(self):
        # the closed-form fidelity and probability must equal literal
        # sums of ensemble mass over the predicate sets
        p = ProtocolParams(8, 4, 4, 2)
        noise = NoiseParams(0.04, 0.05, 16.0)
        deph, loss = build_tables(p, noise, 2)
        rot, ld = rotation_dict(p, deph), loss_dict(p, loss)
        for outcome in (
            OutcomeTuple(0, 0, 0, 0),
            OutcomeTuple(1, 0, 1, 1),
            OutcomeTuple(0, 1, 1, 0),
        ):
            compat = compat_set(outcome, p, stage=2)
            succ = success_set(
                outcome, p, rot.u_b(outcome.a1, outcome.b1),
                ld.v_b(outcome.a2, outcome.b2),
            )
            m_compat = m_succ = 0.0
            for err, w in error_ensemble(deph, loss):
                m_compat += w * compat(err)
                m_succ += w * succ(err)
            f = conditional_fidelity(outcome, p, deph, loss, rot, ld)
            pr = outcome_probability(outcome, p, deph, loss)
            assert_allclose(f, m_succ / m_compat, rtol=1e-11)
            assert_allclose(pr, p.m_f / p.m_i * m_compat, rtol=1e-11)


class TestRunProtocol:
    @given(cfg=protocol_configs(), gl=st.floats(0.0, 0.08), gp=st.floats(0.0, 0.08))
    @settings(max_examples=20, deadline=None)
    def test_probabilities_sum_to_one(self, cfg, gl, gp):
        rep = run_protocol(cfg, NoiseParams(gl, gp, 16.0))
        assert_allclose(sum(r.probability for r in rep.records), 1.0, atol=1e-10)

    @given(cfg=protocol_configs(), gl=st.floats(0.0, 0.05), gp=st.floats(0.0, 0.05))
    @settings(max_examples=20, deadline=None)
    def test_f_avg_range_in_operating_regime(self, cfg, gl, gp):
        rep = run_protocol(cfg, NoiseParams(gl, gp, 16.0))
        assert rep.f_avg is not None
        assert 1.0 / cfg.m_f**2 - 1e-12 <= rep.f_avg <= 1.0 + 1e-12

    def test_four_level_closed_form_matches(self):
        for gp in (1e-3, 1e-2, 5e-2):
            rep = run_protocol(
                ProtocolParams(4, 4, 2, 2, 0.5), NoiseParams(0.0, gp, 16.0)
            )
            f, pa = four_level_closed_form(gp)
            assert_allclose(rep.f_avg, f, atol=1e-12)
            assert_allclose(rep.p_abort, pa, atol=1e-12)

    def test_misaligned_outcomes_abort_at_half(self):
        # a1 != b1 leaves an even mixture: fidelity exactly 1/2, which
        # does not exceed f_cut = 1/2 and is discarded
        rep = run_protocol(
            ProtocolParams(4, 4, 2, 2, 0.5), NoiseParams(0.0, 0.02, 16.0)
        )
        for r in rep.records:
            if r.outcome.a1 != r.outcome.b1 and r.probability > 0:
                assert_allclose(r.fidelity, 0.5, atol=1e-12)
                assert not r.kept

    def test_zero_probability_outcomes(self):
        # no dephasing: misaligned stage-1 outcomes cannot occur
        rep = run_protocol(
            ProtocolParams(8, 8, 4, 2), NoiseParams(0.02, 0.0, 16.0)
        )
        for r in rep.records:
            if r.outcome.a1 != r.outcome.b1:
                assert r.probability == 0.0
                assert r.fidelity == 0.0
                assert not r.kept

    def test_all_abort(self):
        rep = run_protocol(
            ProtocolParams(4, 4, 2, 2, 0.99), NoiseParams(0.0, 0.3, 16.0)
        )
        assert rep.all_aborted
        assert rep.f_avg is None
        assert_allclose(rep.p_abort, 1.0, atol=1e-10)

    def test_kept_mean_dominates_raw_mean(self):
        # discarding the worst outcomes can only raise the average
        noise = NoiseParams(0.02, 0.03, 16.0)
        raw = run_protocol(ProtocolParams(16, 16, 4, 2, 0.0), noise)
        cut = run_protocol(ProtocolParams(16, 16, 4, 2, 0.5), noise)
        assert cut.f_avg >= raw.f_avg - 1e-12

    def test_noise_monotonicity(self):
        # more dephasing, lower kept fidelity (loss fixed)
        fids = [
            run_protocol(
                ProtocolParams(16, 16, 4, 2), NoiseParams(0.01, gp, 16.0)
            ).f_avg
            for gp in (0.005, 0.01, 0.02, 0.05)
        ]
        assert all(a > b for a, b in zip(fids, fids[1:]))

    def test_tail_cap_diagnostic(self):
        # n_bar big enough that the d-1 cap binds; the run must not
        # reject, it must surface the discarded mass instead
        rep = run_protocol(
            ProtocolParams(16, 16, 4, 2), NoiseParams(0.1, 0.0, 49.0)
        )
        assert rep.diagnostics["l_max"] == 15
        assert rep.diagnostics["loss_tail_mass"] > 1e-10


class TestOptimalMc:
    def test_pure_dephasing_wants_coarsest(self):
        mc, _ = optimal_mc(16, 16, 2, 0.0, NoiseParams(0.0, 0.03, 16.0))
        assert mc == 2

    def test_pure_loss_wants_finest(self):
        mc, _ = optimal_mc(16, 16, 2, 0.0, NoiseParams(0.03, 0.0, 16.0))
        assert mc == 16

    def test_tie_breaks_small(self):
        # noiseless: every m_c gives fidelity 1, the smallest must win
        mc, f = optimal_mc(16, 16, 2, 0.0, NoiseParams(0.0, 0.0, 16.0))
        assert mc == 2
        assert_allclose(f, 1.0, atol=1e-12)
