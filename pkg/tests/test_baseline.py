import numpy as np
import pytest

from camg import engine
from camg.model import GameConfig
from camg.sim import (
    BASELINE_SALT,
    BaselineStalled,
    BaselineTimeout,
    baseline_phase_shift,
    phase_template,
    run_baseline,
)


def test_template_shape():
    assert phase_template(1).tolist() == [1, 1, 0]
    assert phase_template(3).tolist() == [1, 1, 0, 1, 0, 1, 0]
    assert phase_template(5).sum() == 6


@pytest.mark.parametrize("trigger", ["start_day", "attendance"])
def test_distinct_phases_coordinate_in_one_period(trigger):
    assert baseline_phase_shift(GameConfig(1), initial_phases=[0, 1, 2], trigger=trigger) == 1
    assert baseline_phase_shift(GameConfig(4), initial_phases=list(range(9)), trigger=trigger) == 1


def test_zero_probability_cannot_recover():
    with pytest.raises(BaselineTimeout):
        baseline_phase_shift(GameConfig(1), readjust_prob=0.0, initial_phases=[0, 0, 1])


def test_stall_is_reported_as_a_timeout_subclass():
    with pytest.raises(BaselineStalled):
        baseline_phase_shift(GameConfig(1), readjust_prob=0.0, initial_phases=[0, 0, 0])


def test_timeout_after_max_rounds():
    # N=1 with start days (0, 0, 1): the literal rule keeps cycling
    with pytest.raises(BaselineTimeout):
        baseline_phase_shift(GameConfig(1), readjust_prob=1.0, max_rounds=50, initial_phases=[0, 0, 1])


def test_argument_validation():
    with pytest.raises(ValueError):
        baseline_phase_shift(GameConfig(1), readjust_prob=1.5)
    with pytest.raises(ValueError):
        baseline_phase_shift(GameConfig(1), trigger="sometimes")
    with pytest.raises(ValueError):
        baseline_phase_shift(GameConfig(2), initial_phases=[0, 1])
    with pytest.raises(ValueError):
        run_baseline(GameConfig(1), 0.1, 0)


def _outcome_reference(cfg, trial, p, rounds, trigger):
    try:
        return ("ok", baseline_phase_shift(cfg, p, rounds, trial, trigger))
    except BaselineStalled:
        return ("stalled",)
    except BaselineTimeout:
        return ("timeout",)


@pytest.mark.parametrize("trigger", ["start_day", "attendance"])
@pytest.mark.parametrize("n_big", [1, 2, 3])
def test_compiled_kernel_matches_reference(trigger, n_big):
    cfg = GameConfig(n_big, 5)
    for trial in range(15):
        ref = _outcome_reference(cfg, trial, 0.3, 300, trigger)
        status, periods = engine.baseline_kernel(
            n_big, np.uint64(cfg.master_seed ^ BASELINE_SALT), trial, 0.3, 300, trigger == "attendance"
        )
        fast = {engine.OK: ("ok", periods), engine.CAP_HIT: ("timeout",), engine.STALLED: ("stalled",)}[status]
        assert fast == ref


def test_report_counts_and_lower_bound():
    rep = run_baseline(GameConfig(1, 2), 0.1, 1000, max_rounds=500)
    assert rep.periods.trials == 1000
    assert rep.periods.mean >= 1
    assert rep.mean_days == pytest.approx(3 * rep.periods.mean)
    assert 0 < rep.timeouts < 1000
    assert rep.to_dict()["timeouts"] == rep.timeouts


def test_attendance_trigger_converges_for_small_n():
    rep = run_baseline(GameConfig(2, 2), 0.1, 200, max_rounds=20_000, trigger="attendance")
    assert rep.timeouts == 0 and rep.stalled == 0
    assert rep.periods.mean > 5


def test_baseline_is_deterministic():
    a = run_baseline(GameConfig(2, 11), 0.2, 100, 300)
    b = run_baseline(GameConfig(2, 11), 0.2, 100, 300)
    assert a.to_dict() == b.to_dict()
