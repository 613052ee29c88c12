import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tandemq.config import RunConfig
from tandemq.distributions import DistSpec
from tandemq.env import QosSpec
from tandemq.sim import NetworkConfig
from tandemq.tuning import SweepResult, SweepRow, lambda_sweep, select_lambda, slot_length_advisor

# violation falls and sum-rate rises with lambda; 14 is the first to meet 0.1
TABLE = [
    SweepRow(8, 0.21, 0.01, 4.9, 0.02),
    SweepRow(10, 0.16, 0.01, 5.2, 0.02),
    SweepRow(12, 0.125, 0.01, 5.5, 0.02),
    SweepRow(14, 0.095, 0.01, 5.8, 0.02),
    SweepRow(16, 0.07, 0.01, 6.1, 0.02),
]


def test_select_first_feasible_lambda():
    sel = select_lambda(TABLE, 0.1)
    assert sel.lambda_star == 14 and sel.constraint_met


def test_select_uses_ci_slack():
    rows = [SweepRow(12, 0.105, 0.01, 5.5, 0.02), SweepRow(14, 0.09, 0.01, 5.8, 0.02)]
    assert select_lambda(rows, 0.1).lambda_star == 12


def test_select_fallback_flags_unmet_constraint():
    rows = [SweepRow(8, 0.3, 0.01, 4.9, 0.02), SweepRow(10, 0.2, 0.01, 5.2, 0.02)]
    sel = select_lambda(rows, 0.1)
    assert sel.lambda_star == 10 and not sel.constraint_met


def test_select_tie_goes_to_smaller_lambda():
    rows = [SweepRow(16, 0.05, 0.01, 5.0, 0.02), SweepRow(14, 0.08, 0.01, 5.0, 0.02)]
    assert select_lambda(rows, 0.1).lambda_star == 14


def test_select_empty_raises():
    with pytest.raises(ValueError):
        select_lambda([], 0.1)


@given(st.permutations(TABLE))
def test_select_order_invariant(rows):
    assert select_lambda(list(rows), 0.1).lambda_star == 14


def test_advisor_default_grid():
    rep = slot_length_advisor(QosSpec(), RunConfig.from_dict({}).network)
    assert rep["recommended_slot_lengths"] == [15.0, 30.0, 100.0]
    assert all(t > rep["d_ub"] for t in rep["recommended_slot_lengths"])
    assert len(rep["stages"]) == 3


def test_advisor_relaxation_entry():
    net = NetworkConfig((1,), DistSpec.exponential(2.0), (DistSpec.exponential(1.0),), (0.75,), (1.0,))
    rep = slot_length_advisor(QosSpec(arrival_rate=0.5), net)
    assert rep["stages"][0]["relaxation_at_mu_max"] == pytest.approx(4.0)
    assert rep["stages"][0]["relaxation_at_mu_min"] > rep["stages"][0]["relaxation_at_mu_max"]


def test_sweep_csv_round_trip(tmp_path):
    res = SweepResult([SweepRow(14, 0.095, 0.004, 5.8, 0.01, (0,), "ck/a"),
                       SweepRow(14, 0.105, 0.005, 5.7, 0.01, (1,), "ck/b")])
    res.to_csv(tmp_path / "s.csv")
    header = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert header == "lambda,seed,violation_prob,violation_ci,sum_rate,sum_rate_ci,checkpoint_path"
    back = SweepResult.from_csv(tmp_path / "s.csv")
    assert back.rows == res.rows
    agg = back.by_lambda()
    assert len(agg) == 1 and agg[0].violation_prob == pytest.approx(0.1)
    assert agg[0].seeds == (0, 1)


def test_single_cell_sweep(tmp_path):
    cfg = RunConfig.from_dict({
        "episode": {"episode_duration": 300.0},
        "agent": {"warmup": 20, "batch_size": 16, "buffer_capacity": 5000},
        "evaluation": {"n_seeds": 1, "horizon": 3000.0, "window_len": 500.0},
    })
    res = lambda_sweep(cfg, [14.0], [0], episodes=2, out_dir=tmp_path)
    assert len(res.rows) == 1
    row = res.rows[0]
    assert 0 <= row.violation_prob <= 1 and not math.isnan(row.violation_ci)
    assert (tmp_path / "lambda_14" / "seed_0" / "agent.ckpt").exists()
    with pytest.raises(ValueError):
        lambda_sweep(cfg, [], [0])
