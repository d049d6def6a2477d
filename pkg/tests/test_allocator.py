import logging
from itertools import combinations

import numpy as np
import pytest
from scipy.optimize import linprog

from src.allocator import (
    TIME_TOL,
    allocate_fixed_set,
    classify_case,
    exchange_search,
    greedy_fill,
    reduce_feasible_set,
    select_and_allocate,
    swap_sets,
    upper_bound_allocation,
    waterfill_allocate,
)
from src.economics import effective_rate, effective_time, time_lower_bound, time_upper_bound
from src.errors import PreconditionError
from src.schemas import CaseLabel, SecondaryUser, SensingDesign, SystemParams

DESIGN = SensingDesign(pfa_local=0.1, k_threshold=1)


class TestGreedyFill:
    def test_hand_trace(self):
        assert greedy_fill([1, 2], [5, 6], [2, 1], 10, [0, 1]) == [5, 5]

    def test_no_slack_after_lower_bounds(self):
        assert greedy_fill([1, 2], [5, 6], [2, 1], 3, [0, 1]) == [1, 2]

    def test_equal_priorities_lowest_id_first(self):
        assert greedy_fill([0, 0], [3, 3], [1, 1], 4, [7, 2]) == [1, 3]

    def test_lower_bounds_over_budget(self):
        assert greedy_fill([2, 2], [3, 3], [1, 1], 3, [0, 1]) is None

    def test_matches_linear_program(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            n = int(rng.integers(1, 8))
            lower = rng.uniform(0, 1, n)
            upper = lower + rng.uniform(0, 2, n)
            priority = rng.uniform(0.1, 5, n)
            budget = float(rng.uniform(lower.sum(), upper.sum()))
            times = greedy_fill(lower, upper, priority, budget, list(range(n)))

            lp = linprog(
                -priority,
                A_ub=np.ones((1, n)),
                b_ub=[budget],
                bounds=list(zip(lower, upper)),
                method="highs",
            )
            assert lp.status == 0
            assert float(np.dot(priority, times)) == pytest.approx(-lp.fun, rel=1e-7)
            assert sum(times) <= budget + 1e-12

    def test_threshold_structure(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            n = 6
            lower = rng.uniform(0, 1, n)
            upper = lower + rng.uniform(0.1, 2, n)
            priority = rng.uniform(0.1, 5, n)
            budget = float(rng.uniform(lower.sum(), upper.sum()))
            times = greedy_fill(lower, upper, priority, budget, list(range(n)))
            # At most one SU sits strictly between its bounds and it ranks below every saturated SU
            partial = [i for i in range(n) if lower[i] + 1e-12 < times[i] < upper[i] - 1e-12]
            assert len(partial) <= 1
            for i in range(n):
                for j in range(n):
                    if priority[i] > priority[j] and times[j] > lower[j] + 1e-12:
                        assert times[i] == pytest.approx(upper[i])


class TestCases:
    def test_small_buffers_are_case1(self, params, geom, make_users):
        users = make_users([1.0, 0.5, 2.0], buffer_bits=10)
        assert classify_case(users, DESIGN, geom, params) is CaseLabel.CASE1

    def test_default_buffers_are_case2(self, params, geom, make_users):
        users = make_users([1.0, 0.5, 2.0])
        assert classify_case(users, DESIGN, geom, params) is CaseLabel.CASE2

    def test_slim_margin_is_case3(self, params, geom, make_users):
        users = make_users([1.0], buffer_bits=10**9, pay_rate=0.0, earn_rate=1e-6)
        assert classify_case(users, DESIGN, geom, params) is CaseLabel.CASE3

    def test_labels_follow_bound_sums(self, params, geom, make_users):
        for buffer_bits in (10, 100, 300, 1000):
            users = make_users([0.3, 1.0, 3.0, 0.9], buffer_bits=buffer_bits)
            l_active = len(users)
            budget = effective_time(params, l_active)
            upper = sum(time_upper_bound(su, DESIGN, geom, params, l_active) for su in users)
            lower = sum(time_lower_bound(su, DESIGN, geom, params, l_active) for su in users)
            label = classify_case(users, DESIGN, geom, params)
            if upper <= budget + TIME_TOL:
                assert label is CaseLabel.CASE1
            elif lower > budget + TIME_TOL:
                assert label is CaseLabel.CASE3
            else:
                assert label is CaseLabel.CASE2

    def test_rejects_unreduced_sets(self, params, geom, make_users):
        with pytest.raises(PreconditionError):
            classify_case(make_users([1.0], pay_rate=1.0, earn_rate=1.0), DESIGN, geom, params)
        with pytest.raises(PreconditionError):
            classify_case([], DESIGN, geom, params)


class TestReduce:
    def test_comfortable_set_unchanged(self, params, geom, make_users):
        users = make_users([0.2, 1.0, 5.0], buffer_bits=10**6)
        assert reduce_feasible_set(users, DESIGN, geom, params) == users

    def test_drops_tiny_buffers_and_losers(self, params, geom, make_users):
        users = make_users([1.0, 1.0, 1.0, 1.0], buffer_bits=[1000, 0, 1000, 1])
        losers = [users[0].model_copy(update={"id": 9, "earn_rate": 0.1})]
        thin = [SecondaryUser(id=8, gain_to_fc=1.0, buffer_bits=1, pay_rate=0.1, earn_rate=0.101)]
        kept = reduce_feasible_set(users + losers + thin, DESIGN, geom, params)
        assert [su.id for su in kept] == [0, 2, 3]

    def test_kept_sus_have_ordered_bounds(self, params, geom):
        rng = np.random.default_rng(3)
        users = [
            SecondaryUser(
                id=i,
                gain_to_fc=float(rng.exponential()) + 1e-6,
                buffer_bits=int(rng.integers(0, 50)),
                pay_rate=0.1,
                earn_rate=float(rng.uniform(0.05, 1.0)),
            )
            for i in range(30)
        ]
        l_active = len(users)
        design = SensingDesign(pfa_local=0.3, k_threshold=2)
        kept = {su.id for su in reduce_feasible_set(users, design, geom, params)}
        for su in users:
            lower = time_lower_bound(su, design, geom, params, l_active)
            ordered = lower is not None and lower < time_upper_bound(su, design, geom, params, l_active)
            assert (su.id in kept) == ordered


class TestFixedSetAllocation:
    def test_waterfill_needs_case2(self, params, geom, make_users):
        with pytest.raises(PreconditionError):
            waterfill_allocate(make_users([1.0, 2.0], buffer_bits=10), DESIGN, geom, params)

    def test_upper_bounds_need_case1(self, params, geom, make_users):
        with pytest.raises(PreconditionError):
            upper_bound_allocation(make_users([1.0, 2.0]), DESIGN, geom, params)

    def test_waterfill_exhausts_budget(self, params, geom, make_users):
        users = make_users([0.2, 1.0, 4.0, 0.7])
        result = waterfill_allocate(users, DESIGN, geom, params)
        assert result.case is CaseLabel.CASE2
        assert sum(result.times) == pytest.approx(effective_time(params, 4), abs=1e-12)
        # one top payer absorbs the slack, everyone else stays at the break-even time
        best = max(range(4), key=lambda i: result.rates[i] * users[i].pay_rate)
        for i, su in enumerate(users):
            if i != best:
                assert result.times[i] == pytest.approx(time_lower_bound(su, DESIGN, geom, params, 4), rel=1e-9)
        assert all(u >= -1e-12 for u in result.su_utilities)

    def test_case3_gives_nothing(self, params, geom, make_users):
        users = make_users([1.0], buffer_bits=10**9, pay_rate=0.0, earn_rate=1e-6)
        assert allocate_fixed_set(users, DESIGN, geom, params) is None

    def test_case1_removal_costs_utility(self, params, geom, make_users):
        users = make_users([1.0, 0.5, 2.0, 1.5], buffer_bits=10)
        full = allocate_fixed_set(users, DESIGN, geom, params)
        assert full.fc_utility == pytest.approx(0.1 * 10 * 4, rel=1e-9)
        for subset in combinations(users, 3):
            assert allocate_fixed_set(list(subset), DESIGN, geom, params).fc_utility < full.fc_utility


class TestSelectAndAllocate:
    def test_case1_clears_everyone(self, params, geom, make_users):
        users = make_users([1.0, 0.3, 2.0, 0.8, 1.1], buffer_bits=10)
        result = select_and_allocate(users, DESIGN, geom, params)
        assert result.feasible and all(result.active)
        for su, t in zip(users, result.times):
            assert t == pytest.approx(time_upper_bound(su, DESIGN, geom, params, 5), rel=1e-12)
        assert result.fc_utility == pytest.approx(sum(su.pay_rate * su.buffer_bits for su in users), rel=1e-9)

    def test_detection_floor_unreachable(self, geom, make_users):
        params = SystemParams(zeta=0.99)
        result = select_and_allocate(make_users([1.0] * 5), DESIGN, geom, params)
        assert not result.feasible
        assert result.fc_utility == 0.0
        assert not any(result.active)

    def test_too_few_profitable_sus(self, params, geom, make_users):
        design = SensingDesign(pfa_local=0.5, k_threshold=3)
        users = make_users([1.0, 1.0, 1.0], buffer_bits=[1000, 1000, 0])
        assert not select_and_allocate(users, design, geom, params).feasible
        assert not select_and_allocate([], design, geom, params).feasible

    def test_result_is_aligned_with_input(self, params, geom, make_users):
        users = make_users([0.5, 2.0, 1.0], buffer_bits=[1000, 0, 1000], first_id=10)
        result = select_and_allocate(users, DESIGN, geom, params)
        assert result.user_ids == [10, 11, 12]
        assert not result.active[1] and result.times[1] == 0.0

    @pytest.mark.parametrize("seed", range(8))
    def test_budget_and_box_constraints(self, params, geom, seed):
        rng = np.random.default_rng(seed)
        users = [
            SecondaryUser(
                id=i,
                gain_to_fc=float(rng.exponential()) + 1e-9,
                buffer_bits=int(rng.integers(5, 2000)),
                pay_rate=float(rng.uniform(0.05, 0.5)),
                earn_rate=float(rng.uniform(1.0, 20.0)),
            )
            for i in range(6)
        ]
        for pfa in (0.2, 0.5, 0.8):
            for k in (1, 2, 3):
                design = SensingDesign(pfa_local=pfa, k_threshold=k)
                result = select_and_allocate(users, design, geom, params)
                if not result.feasible:
                    continue
                l_active = result.n_selected
                assert l_active >= k
                assert sum(result.times) <= effective_time(params, l_active) + 1e-12
                for su, on, t in zip(users, result.active, result.times):
                    if not on:
                        assert t == 0.0
                        continue
                    assert t >= time_lower_bound(su, design, geom, params, l_active) - 1e-12
                    assert t <= time_upper_bound(su, design, geom, params, l_active) + 1e-12

    @pytest.mark.parametrize("gains", [[0.3, 0.8, 1.0, 1.7, 2.5], [2.0, 0.4, 1.2, 0.9, 3.1], [1.0, 1.1, 1.2, 1.3, 1.4]])
    def test_eliminating_the_cheapest_payer_is_best(self, params, geom, make_users, gains):
        design = SensingDesign(pfa_local=0.3, k_threshold=2)
        users = make_users(gains)
        assert classify_case(users, design, geom, params) is CaseLabel.CASE2
        payments = [effective_rate(su, design, geom, params, 5) * su.pay_rate for su in users]
        weakest = min(range(5), key=lambda i: (payments[i], users[i].id))
        full = allocate_fixed_set(users, design, geom, params).fc_utility
        scores = []
        for drop in range(5):
            rest = users[:drop] + users[drop + 1 :]
            assert classify_case(rest, design, geom, params) is CaseLabel.CASE2
            scores.append(allocate_fixed_set(rest, design, geom, params).fc_utility)
        assert scores[weakest] >= max(scores) * (1 - 1e-12)
        assert scores[weakest] > full


class TestExchange:
    def _instance(self, params, geom):
        reference = SecondaryUser(id=0, gain_to_fc=1.0)
        capacity = effective_rate(reference, DESIGN, geom, params, 3) * effective_time(params, 3)
        fractions = [0.2, 0.26, 0.3, 0.57, 0.1]
        users = [
            SecondaryUser(id=i, gain_to_fc=1.0, buffer_bits=round(f * capacity))
            for i, f in enumerate(fractions)
        ]
        return users[:3], users[3:]

    def test_matches_enumeration(self, params, geom):
        kept, excluded = self._instance(params, geom)
        assert classify_case(kept, DESIGN, geom, params) is CaseLabel.CASE1
        best_set, best = exchange_search(kept, excluded, DESIGN, geom, params)

        oracle = max(
            (allocate_fixed_set(list(s), DESIGN, geom, params) for s in combinations(kept + excluded, 3)),
            key=lambda r: r.fc_utility if r is not None else float("-inf"),
        )
        assert len(best_set) == 3
        assert best.fc_utility == pytest.approx(oracle.fc_utility, rel=1e-12)
        assert best.case is CaseLabel.CASE2

    def test_nothing_to_swap(self, params, geom):
        kept, _ = self._instance(params, geom)
        best_set, best = exchange_search(kept, [], DESIGN, geom, params)
        assert best_set == kept
        assert best.fc_utility == pytest.approx(allocate_fixed_set(kept, DESIGN, geom, params).fc_utility)

    def test_overlap_rejected(self, params, geom):
        kept, excluded = self._instance(params, geom)
        with pytest.raises(PreconditionError):
            exchange_search(kept, excluded + kept[:1], DESIGN, geom, params)

    def test_swap_sets_keep_size(self, params, geom):
        kept, excluded = self._instance(params, geom)
        groups = swap_sets(kept, excluded, 1, DESIGN, geom, params)
        assert len(groups) == 6
        assert all(len(g) == 3 for g in groups)
        # smallest kept buffer goes out for the largest excluded one
        assert [su.id for su in groups[0]] == [1, 2, 3]
        assert [su.id for su in groups[4]] == [1, 2, 3]
        with pytest.raises(PreconditionError):
            swap_sets(kept, excluded, 3, DESIGN, geom, params)

    @pytest.mark.parametrize(
        "fractions,n_kept",
        [
            ([0.2, 0.26, 0.3, 0.57, 0.1], 3),
            ([0.1, 0.15, 0.2, 0.25, 0.3, 0.05, 0.4], 4),
            ([0.3, 0.3, 0.3, 0.9, 0.9, 0.9], 3),
            ([0.05, 0.1, 0.6, 0.7, 0.8, 0.02], 2),
        ],
    )
    def test_depth_levels_are_bounded(self, params, geom, caplog, fractions, n_kept):
        reference = SecondaryUser(id=0, gain_to_fc=1.0)
        capacity = effective_rate(reference, DESIGN, geom, params, n_kept) * effective_time(params, n_kept)
        users = [
            SecondaryUser(id=i, gain_to_fc=1.0, buffer_bits=max(1, round(f * capacity)))
            for i, f in enumerate(fractions)
        ]
        kept, excluded = users[:n_kept], users[n_kept:]
        with caplog.at_level(logging.DEBUG, logger="src.allocator"):
            exchange_search(kept, excluded, DESIGN, geom, params)

        levels = [r.getMessage() for r in caplog.records if r.getMessage().startswith("exchange depth")]
        depths = [int(message.split()[2].rstrip(":")) for message in levels]
        assert 1 <= len(depths) <= min(len(kept), len(excluded))
        assert depths == list(range(1, len(depths) + 1))
        stops = [i for i, message in enumerate(levels) if "stopping" in message]
        assert stops in ([], [len(levels) - 1])
