import json
import math
from dataclasses import replace

import numpy as np
import pytest

from hkcollapse.minkowski import Boost
from hkcollapse.scenarios import (
    EPR_WINDOWS,
    Geometry,
    GeometryError,
    ScenarioConfig,
    build_engine,
    build_model,
    current_oracle,
    dual_flags,
    epr_statistics,
    run_dual_trigger_probe,
    run_epr,
    run_epr_scenarios,
    run_single_capture,
    run_three_component_conservation,
    run_trials,
)


class TestConfig:
    def test_roundtrip(self):
        cfg = ScenarioConfig("epr_singlet", trials=10, seed=3, boost=(0.6, 0, 0), windows={"d1": (0, 1), "d2": (1, 2)})
        back = ScenarioConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back == cfg
        assert ScenarioConfig.from_dict(cfg.resolved().to_dict()) == cfg.resolved()

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            ScenarioConfig.from_dict({"name": "epr_singlet", "colour": "red"})

    @pytest.mark.parametrize("kw", [dict(name="nope"), dict(window_mode="late"), dict(trials=0), dict(g=-1.0),
                                    dict(boost=(1.2, 0, 0)), dict(method="euler")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ScenarioConfig(**kw)

    def test_defaults(self):
        cfg = ScenarioConfig("epr_singlet").resolved()
        assert cfg.g == pytest.approx(math.pi / 1.6)
        assert cfg.windows == EPR_WINDOWS["overlap"]
        assert cfg.t_end == 1.4
        norm = build_model(cfg).hamiltonian_norm
        assert cfg.dt == pytest.approx(1e-3 / max(norm, 1.0))

    def test_timelike_geometry_rejected(self):
        geo = Geometry(a=(0.0, -1.0), m=(0.0, -1.2))
        with pytest.raises(GeometryError):
            build_model(ScenarioConfig("epr_singlet", geometry=geo).resolved())

    def test_late_anchor_rejected(self):
        geo = Geometry(m=(0.7, -3.0))
        with pytest.raises(GeometryError):
            build_model(ScenarioConfig("epr_singlet", geometry=geo).resolved())

    def test_fast_particle_rejected(self):
        with pytest.raises(GeometryError):
            Geometry(particle_speed=1.0)


class TestZeroCoupling:
    @pytest.mark.parametrize("name", ["single_capture", "epr_singlet", "dual_trigger_probe"])
    def test_no_collapse(self, name):
        cfg = ScenarioConfig(name, g=0.0, trials=40)
        outs = run_trials(cfg)
        assert all(len(o.ledger) == 0 for o in outs)
        init = build_model(cfg.resolved()).initial.to_vector()
        for o in outs:
            assert np.allclose(np.abs(o.final_state.to_vector()), np.abs(init), atol=1e-12)

    def test_conservation_stays_put(self):
        rep = run_three_component_conservation(ScenarioConfig("three_component_conservation", g=0.0))
        assert rep["final_ready_population"] == 0.0
        assert rep["conservation_residual"] < 1e-10


class TestSingleCapture:
    def test_fraction_matches_oracle(self):
        rep = run_single_capture(ScenarioConfig("single_capture", trials=3000, seed=5, dt=2e-3))
        p = rep["oracle"]["discrete"]
        assert abs(rep["capture_fraction"] - p) <= 3 * rep["sigma"]
        assert abs(rep["oracle"]["continuum"] - p) < 1e-2
        assert rep["captured_single_component"]
        assert sum(rep["histogram"]["counts"]) == rep["captures"]

    def test_oracle_closed_form(self):
        # hazard integrates to d_omega * sin^2(g T) when all current flows in
        cfg = ScenarioConfig("single_capture", g=math.pi / 4, trials=1).resolved()
        rep = run_single_capture(cfg)
        assert rep["oracle"]["integrated_hazard"] == pytest.approx(math.sin(math.pi / 4) ** 2, abs=1e-6)

    def test_wrong_scenario(self):
        with pytest.raises(ValueError):
            run_single_capture(ScenarioConfig("epr_singlet"))


class TestEPR:
    def test_small_run(self):
        rep = run_epr(ScenarioConfig("epr_singlet", trials=300, seed=1))
        assert rep["n_both"] > 0
        assert rep["anticorrelation_rate"] == 1.0
        assert rep["conservation_residual"] < 1e-10
        assert rep["frame_invariance"] == "pass"
        assert rep["n_spacelike_vertex_pairs"] == rep["n_two_collapse"]

    def test_staggered_windows(self):
        which = run_epr_scenarios(ScenarioConfig("epr_singlet", trials=100, seed=2))
        assert which["d1_first"]["d2"] == 0 and which["d1_first"]["d1"] > 0
        assert which["d2_first"]["d1"] == 0 and which["d2_first"]["d2"] > 0
        assert which["overlap"]["d1"] > 0 and which["overlap"]["d2"] > 0

    def test_boost_leaves_choices_unchanged(self):
        cfg = ScenarioConfig("epr_singlet", trials=40, seed=4)
        lab = run_trials(cfg)
        moved = run_trials(replace(cfg, boost=(0.6, 0.0, 0.0)))
        assert [o.ledger.order() for o in lab] == [o.ledger.order() for o in moved]
        assert [o.first_outcome_spin for o in lab] == [o.first_outcome_spin for o in moved]

    def test_frame_check_reports_reversal(self):
        rep = run_epr(ScenarioConfig("epr_singlet", trials=200, seed=42), boosts=[Boost((0.6, 0, 0)), Boost((-0.6, 0, 0))])
        total = sum(c["coordinate_order_reversed"] for c in rep["frame_checks"])
        assert total > 0
        assert all(c["pass"] for c in rep["frame_checks"])

    def test_statistics_empty_safe(self):
        st = epr_statistics([])
        assert st["p_first_up"] is None and st["trials"] == 0


def test_determinism_across_workers():
    cfg = ScenarioConfig("epr_singlet", trials=24, seed=9)
    one = run_trials(cfg, workers=1, reduce=dual_flags)
    many = run_trials(cfg, workers=8, reduce=dual_flags)
    assert one == many
    a = [o.ledger.to_list() for o in run_trials(cfg)]
    b = [o.ledger.to_list() for o in run_trials(cfg, indices=range(24))]
    assert a == b


def test_subset_indices_match_full_run():
    cfg = ScenarioConfig("epr_singlet", trials=20, seed=9)
    full = run_trials(cfg)
    part = run_trials(cfg, indices=[3, 17])
    assert [o.ledger for o in part] == [full[3].ledger, full[17].ledger]


def test_dual_probe_small():
    rep = run_dual_trigger_probe(ScenarioConfig("dual_trigger_probe", trials=400, seed=3), control_trials=200)
    assert rep["disjoint_dual"] == 0
    assert [r["dt"] for r in rep["rates"]] == [4e-3, 2e-3]
    assert all(r["trials"] == 400 for r in rep["rates"])


def test_dual_record_has_two_vertices():
    cfg = ScenarioConfig("dual_trigger_probe", trials=2000, seed=3).resolved()
    outs = run_trials(cfg, reduce=dual_flags, max_collapses=1)
    led = next(o[3] for o in outs if o[1])
    r = led[0]
    assert r.is_dual and len(r.vertices) == 2
    assert r.captured == ("d1", "d2")
    assert r.chosen_component_id in ("up:cap_up:down:cap_down", "down:cap_down:up:cap_up")


class TestConservationReport:
    def test_exact(self):
        rep = run_three_component_conservation(ScenarioConfig("three_component_conservation"))
        assert rep["conservation_residual"] <= 1e-10
        assert rep["loss_gain_mismatch"] <= 1e-9
        assert rep["max_abs_cross_term"] == 0.0
        assert rep["picture_norm_mismatch"] <= 1e-9
        assert 0 < rep["final_ready_population"] <= 1

    def test_rk4(self):
        rep = run_three_component_conservation(ScenarioConfig("three_component_conservation", dt=1e-3, method="rk4"))
        assert rep["conservation_residual"] <= 1e-6

    def test_current_oracle(self):
        rep = current_oracle()
        assert rep["max_rel_error"] <= 1e-8


def test_engine_uses_resolved_dt():
    eng = build_engine(ScenarioConfig("single_capture", dt=0.01))
    assert eng.trigger.dt == 0.01
    assert eng.n_steps == 150
