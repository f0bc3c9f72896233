"""Index formulas, schedule argmaxes, estimator updates, and policy purity."""
import math

import pytest

from clqsim.model import (
    ArrivalModel,
    NetworkInstance,
    ScheduleSet,
    SingleQueueInstance,
    single_to_network,
)
from clqsim.policies import (
    ObservationMismatch,
    PolicyError,
    PolicyHandle,
    PolicyState,
    Runner,
    backpressure_select,
    feasible_schedules,
    lcb_transition,
    maxweight_select,
    observe,
    ucb_index,
    ucb_select,
)


class TestUcbIndex:
    def test_unvisited_clamps_to_one(self):
        assert ucb_index(0.0, 0, 1) == 1.0
        assert ucb_index(0.7, 0, 1_000) == 1.0

    def test_hand_value(self):
        # 0.2 + sqrt(2 ln(e^2) / 32) = 0.2 + sqrt(1/8)
        got = ucb_index(0.2, 32, math.e**2)
        assert got == pytest.approx(0.2 + math.sqrt(0.125), abs=1e-15)
        assert got == pytest.approx(0.55355, abs=5e-6)

    def test_upper_clamp(self):
        assert ucb_index(0.9, 2, 10) == 1.0

    def test_monotone_in_t_and_count(self):
        assert ucb_index(0.3, 10, 50) <= ucb_index(0.3, 10, 500)
        assert ucb_index(0.3, 40, 50) <= ucb_index(0.3, 10, 50)


class TestLcbTransition:
    def test_unvisited_is_zero(self):
        assert lcb_transition(0.9, 0, 10) == 0.0

    def test_hand_value(self):
        got = lcb_transition(0.5, 32, math.e**2)
        assert got == pytest.approx(0.5 - math.sqrt(0.125), abs=1e-15)
        assert got == pytest.approx(0.14645, abs=5e-6)

    def test_lower_clamp(self):
        assert lcb_transition(0.05, 8, 10) == 0.0

    def test_never_exceeds_estimate(self):
        for c in (1, 4, 100):
            assert lcb_transition(0.4, c, 7) <= 0.4


class TestUcbSelect:
    def test_empty_queue_idles(self):
        state = PolicyState(k=3, n=1)
        assert ucb_select(state, 0) is None

    def test_cold_start_picks_lowest_index(self):
        state = PolicyState(k=3, n=1)
        assert ucb_select(state, 5) == 0

    def test_tie_break(self):
        state = PolicyState(k=3, n=1)
        state.t = 100
        # Indices engineered to (low, tie, tie): server 1 wins the tie.
        state.counts = [400, 100, 100]
        state.succ = [40, 55, 55]
        i1 = ucb_index(0.1, 400, 100)
        i2 = ucb_index(0.55, 100, 100)
        assert i1 < i2
        assert ucb_select(state, 1) == 1


class TestFeasibleSchedules:
    def test_empty_system(self):
        s = ScheduleSet.closure([(1, 1)], 2)
        assert feasible_schedules(s, (0, 0), [0, 0]) == [(0, 0)]

    def test_long_queues_allow_everything(self):
        s = ScheduleSet.closure([(1, 1)], 2)
        assert set(feasible_schedules(s, (0, 1), [3, 3])) == set(s.schedules)

    def test_two_servers_one_job(self):
        s = ScheduleSet.closure([(1, 1)], 2)
        got = set(feasible_schedules(s, (0, 0), [1]))
        assert got == {(0, 0), (1, 0), (0, 1)}


class TestMaxWeight:
    def test_empty_queue_zero_schedule(self):
        s = ScheduleSet.singletons(2)
        assert maxweight_select([0], (0.5, 0.9), s, (0, 0)) == (0, 0)

    def test_long_queue_beats_fast_server(self):
        s = ScheduleSet(schedules=((1, 0), (0, 1), (0, 0)))
        got = maxweight_select([3, 1], (0.5, 0.9), s, (0, 1))
        assert got == (1, 0)  # weight 1.5 > 0.9

    def test_stored_order_tie_break(self):
        s = ScheduleSet(schedules=((0, 1), (1, 0), (0, 0)))
        got = maxweight_select([1, 1], (0.5, 0.5), s, (0, 1))
        assert got == (0, 1)


class TestBackPressure:
    def test_penalty_excludes_feeding_server(self):
        s = ScheduleSet.closure([(1, 1)], 2)
        r_lower = ((0.0, 0.8), (0.0, 0.0))
        got = backpressure_select([1, 5], (0.9, 0.2), r_lower, s, (0, 1))
        assert got == (0, 1)

    def test_zero_penalty_matches_maxweight(self):
        s = ScheduleSet.closure([(1, 1)], 2)
        zeros = ((0.0, 0.0), (0.0, 0.0))
        for q in ([1, 5], [4, 2], [0, 3]):
            bp = backpressure_select(q, (0.9, 0.2), zeros, s, (0, 1))
            mw = maxweight_select(q, (0.9, 0.2), s, (0, 1))
            assert bp == mw

    def test_empty_queue_zero_schedule(self):
        s = ScheduleSet.closure([(1, 1)], 2)
        zeros = ((0.0, 0.0), (0.0, 0.0))
        assert backpressure_select([0, 0], (0.9, 0.2), zeros, s, (0, 1)) == (0, 0)


class TestObserve:
    def test_no_selection_no_change(self):
        state = PolicyState(k=2, n=1)
        observe(state, (0, 0), {}, {})
        assert state.counts == [0, 0]

    def test_running_mean(self):
        state = PolicyState(k=1, n=1)
        state.counts = [3]
        state.succ = [1]
        observe(state, (1,), {0: 1}, {})
        assert state.counts == [4]
        assert state.mu_hat == [0.5]

    def test_transition_indicator(self):
        state = PolicyState(k=1, n=3)
        observe(state, (1,), {0: 1}, {0: 2})
        assert state.r_hat[0] == [0.0, 0.0, 1.0]
        observe(state, (1,), {0: 1}, {})  # success that exits
        assert state.r_hat[0] == [0.0, 0.0, 0.5]

    def test_mismatch_rejected(self):
        state = PolicyState(k=2, n=1)
        with pytest.raises(ObservationMismatch):
            observe(state, (1, 0), {1: 1}, {})


class TestPolicyHandle:
    def test_parse_round_trip(self):
        for name in ("ucb", "mw-ucb", "bp-ucb", "oracle-best", "oracle-mw", "oracle-bp", "round-robin"):
            assert PolicyHandle.parse(name).cli_name == name

    def test_fixed_parse(self):
        h = PolicyHandle.parse("fixed:3")
        assert h.fixed_server == 3
        assert h.cli_name == "fixed:3"

    def test_unknown_rejected(self):
        with pytest.raises(PolicyError):
            PolicyHandle.parse("greedy")

    def test_learning_flags(self):
        assert PolicyHandle.parse("ucb").learning
        assert PolicyHandle.parse("bp-ucb").learning
        assert not PolicyHandle.parse("oracle-mw").learning
        assert not PolicyHandle.parse("fixed:0").learning


class TestRunner:
    def test_oracle_best_is_pure(self):
        inst = SingleQueueInstance(3, 0.4, (0.2, 0.9, 0.5))
        r = Runner(PolicyHandle.parse("oracle-best"), inst)
        picks = [r.select_server(4, t) for t in range(1, 30)]
        assert set(picks) == {1}

    def test_fixed_server(self):
        inst = SingleQueueInstance(3, 0.4, (0.2, 0.9, 0.5))
        r = Runner(PolicyHandle.parse("fixed:2"), inst)
        assert r.select_server(1, 1) == 2

    def test_round_robin_cycles(self):
        inst = SingleQueueInstance(3, 0.4, (0.2, 0.9, 0.5))
        r = Runner(PolicyHandle.parse("round-robin"), inst)
        assert [r.select_server(1, t) for t in range(1, 5)] == [0, 1, 2, 0]

    def test_oracle_mw_ignores_observations(self):
        net = single_to_network(SingleQueueInstance(2, 0.3, (0.3, 0.6)))
        r = Runner(PolicyHandle.parse("oracle-mw"), net)
        first = r.select_schedule([2], 1)
        assert first == (0, 1)
        assert r.select_schedule([2], 50) == first

    def test_oracle_bp_uses_true_transition_rates(self):
        # Server 0 (mu=0.9) pushes everything to queue 1; with queue 1
        # long the oracle must keep server 0 idle.
        net = NetworkInstance(
            n=2,
            k=2,
            arrivals=ArrivalModel(support=((1, 0), (0, 0)), probs=(0.4, 0.6)),
            mu=(0.9, 0.2),
            schedules=ScheduleSet.closure([(1, 1)], 2),
            server_queue=(0, 1),
            transitions=((0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
        )
        r = Runner(PolicyHandle.parse("oracle-bp"), net)
        assert r.select_schedule([1, 5], 1) == (0, 1)
