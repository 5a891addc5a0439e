"""Property checks behind ``hkcollapse verify``.

Each check returns a :class:`CheckResult`; ``quick`` runs the statistical
checks at 10^3 trials with 4 sigma bands instead of 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dynamics as dyn
from .landscape import check_influence_limitation, frame_invariance_report, random_boosts, spacetime_grid
from .minkowski import in_backward_cone
from .qrules import query_state_at, sample_trigger, trial_rng
from .scenarios import (
    ScenarioConfig,
    build_engine,
    build_model,
    current_oracle,
    epr_statistics,
    run_three_component_conservation,
    run_trials,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<24} {self.detail}"


def _capture_hamiltonian(inject_nonhermitian: bool) -> tuple[np.ndarray, np.ndarray, int, int]:
    cfg = ScenarioConfig("three_component_conservation").resolved()
    model = build_model(cfg)
    reg = model.registry
    h = model.total_hamiltonian().total()
    ab = reg.flat_index(reg.tuple_from_labels(a="free", b="armed"))
    c = reg.flat_index(reg.tuple_from_labels(a="absorbed", b="captured"))
    if inject_nonhermitian:
        # negative control: an anti-Hermitian leak on the ab diagonal
        h = h.copy()
        h[ab, ab] += -0.05j
    return h, model.initial.to_vector(), ab, c


def check_hermiticity(inject_nonhermitian: bool = False) -> CheckResult:
    h, _, _, _ = _capture_hamiltonian(inject_nonhermitian)
    epr = build_model(ScenarioConfig("epr_singlet").resolved()).total_hamiltonian().total()
    bad = [n for n, m in (("capture", h), ("epr", epr)) if not dyn.check_hermitian(m)]
    return CheckResult("hermiticity", not bad, "all generators Hermitian" if not bad else f"non-Hermitian: {bad}")


def check_conservation(inject_nonhermitian: bool = False) -> CheckResult:
    h, psi0, _, _ = _capture_hamiltonian(inject_nonhermitian)
    exact = dyn.conservation_residual(dyn.evolve(psi0, h, 1e-3, 1000, "exact"))
    rk4 = dyn.conservation_residual(dyn.evolve(psi0, h, 1e-3, 1000, "rk4"))
    ok = exact <= 1e-10 and rk4 <= 1e-6
    if ok and not inject_nonhermitian:
        rep = run_three_component_conservation(ScenarioConfig("three_component_conservation"))
        ok = rep["loss_gain_mismatch"] <= 1e-9 and rep["max_abs_cross_term"] == 0.0
    return CheckResult("conservation", ok, f"exact {exact:.2e} (<=1e-10), rk4 {rk4:.2e} (<=1e-6)")


def check_current() -> CheckResult:
    r = current_oracle()
    return CheckResult("current_oracle", r["max_rel_error"] <= 1e-8, f"rel err {r['max_rel_error']:.2e} (<=1e-8)")


def check_cone_partition(n: int = 100) -> CheckResult:
    cfg = ScenarioConfig("epr_singlet", trials=1, seed=42).resolved()
    engine = build_engine(cfg)
    res = None
    for i in range(50):
        res = engine.run(trial_rng(cfg.seed, i))
        if len(res.ledger) >= 2:
            break
    ledger = res.ledger
    a = ledger[0].vertex
    bad = 0
    grid = spacetime_grid(ledger, n)
    for e in grid:
        s = query_state_at(e, res.pre_collapse, ledger, res.states)
        if in_backward_cone(e, a):
            bad += s is not res.pre_collapse
        else:
            bad += s is res.pre_collapse
    lim = check_influence_limitation(ledger, n)
    return CheckResult("cone_partition", bad == 0 and lim, f"{len(grid)} points, {bad} misassigned, influence limited: {lim}")


def check_frame_invariance(n_boosts: int = 200) -> CheckResult:
    cfg = ScenarioConfig("epr_singlet", trials=5, seed=7).resolved()
    outs = run_trials(cfg)
    flips = changes = order = 0
    for o in outs:
        rep = frame_invariance_report(o.ledger, random_boosts(n_boosts, 0.99, seed=o.trial_index), grid=10)
        flips += rep["classification_flips"]
        changes += rep["peak_changes"]
        order += rep["order_changes"]
    ok = flips == 0 and changes == 0 and order == 0
    return CheckResult("frame_invariance", ok, f"{n_boosts} boosts x {len(outs)} ledgers: {flips} flips, "
                       f"{changes} peak changes, {order} order changes")


def check_trigger(steps: int, nsig: float, seed: int = 11) -> CheckResult:
    rng = np.random.default_rng(seed)
    r, dt = 5.0, 1e-3
    hits = sum(sample_trigger([("x", r)], dt, rng) is not None for _ in range(steps))
    p = r * dt
    sigma = math.sqrt(p * (1 - p) / steps)
    dev = abs(hits / steps - p) / sigma
    return CheckResult("trigger_rate", dev <= nsig, f"{hits}/{steps} vs p={p:g}: {dev:.2f} sigma (<= {nsig:g})")


def check_singlet(trials: int, nsig: float) -> CheckResult:
    outs = run_trials(ScenarioConfig("epr_singlet", trials=trials, seed=42))
    st = epr_statistics(outs)
    p = st["p_first_up"]
    sigma = math.sqrt(0.25 / st["n_first"])
    dev = abs(p - 0.5) / sigma
    anti = st["n_anticorrelated"] == st["n_both"]
    return CheckResult("singlet_statistics", dev <= nsig and anti,
                       f"p_up {p:.4f} ({dev:.2f} sigma <= {nsig:g}), anticorrelated {st['n_anticorrelated']}/{st['n_both']}")


def run_checks(quick: bool = False, inject_nonhermitian: bool = False) -> list[CheckResult]:
    trials, nsig = (1000, 4.0) if quick else (5000, 3.0)
    steps = 10 ** 5 if quick else 10 ** 6
    return [
        check_hermiticity(inject_nonhermitian),
        check_conservation(inject_nonhermitian),
        check_current(),
        check_cone_partition(50 if quick else 100),
        check_frame_invariance(50 if quick else 200),
        check_trigger(steps, nsig),
        check_singlet(trials, nsig),
    ]
