"""SU selection and time allocation for one sensing design."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from itertools import combinations

from src.economics import (
    effective_rate,
    effective_time,
    payment_total,
    sensing_cost,
    su_utility,
    time_lower_bound,
    time_upper_bound,
)
from src.errors import PreconditionError
from src.schemas import (
    AllocationResult,
    CaseLabel,
    SecondaryUser,
    SensingDesign,
    SensingGeometry,
    SystemParams,
)
from src.sensing import min_active_users

logger = logging.getLogger(__name__)

TIME_TOL = 1e-12


@dataclass(frozen=True)
class _SetView:
    """Per-SU bounds of a candidate set, all evaluated at L = len(users)."""

    users: list[SecondaryUser]
    rates: list[float]
    lower: list[float]
    upper: list[float]
    budget: float
    case: CaseLabel

    @property
    def priorities(self) -> list[float]:
        return [rate * su.pay_rate for rate, su in zip(self.rates, self.users)]


def _view(
    users: Sequence[SecondaryUser],
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
) -> _SetView:
    if not users:
        raise PreconditionError("candidate set is empty")
    users = list(users)
    l_active = len(users)
    rates, lower, upper = [], [], []
    for su in users:
        lb = time_lower_bound(su, design, geom, params, l_active)
        if lb is None:
            raise PreconditionError(f"SU {su.id} is never profitable; reduce the set first")
        rates.append(effective_rate(su, design, geom, params, l_active))
        lower.append(lb)
        upper.append(time_upper_bound(su, design, geom, params, l_active))

    budget = effective_time(params, l_active)
    if sum(upper) <= budget + TIME_TOL:
        case = CaseLabel.CASE1
    elif sum(lower) > budget + TIME_TOL:
        case = CaseLabel.CASE3
    else:
        case = CaseLabel.CASE2
    return _SetView(users, rates, lower, upper, budget, case)


def _result(
    view: _SetView,
    times: list[float],
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
) -> AllocationResult:
    l_active = len(view.users)
    return AllocationResult(
        user_ids=[su.id for su in view.users],
        active=[True] * l_active,
        times=times,
        rates=view.rates,
        fc_utility=payment_total(times, view.rates, [su.pay_rate for su in view.users]),
        su_utilities=[
            su_utility(su, design, geom, params, l_active, t, True)
            for su, t in zip(view.users, times)
        ],
        case=view.case,
        feasible=True,
        design=design,
    )


def infeasible_result(
    all_sus: Sequence[SecondaryUser], design: SensingDesign | None, case: CaseLabel | None = None
) -> AllocationResult:
    n = len(all_sus)
    return AllocationResult(
        user_ids=[su.id for su in all_sus],
        active=[False] * n,
        times=[0.0] * n,
        rates=[0.0] * n,
        fc_utility=0.0,
        su_utilities=[0.0] * n,
        case=case,
        feasible=False,
        design=design,
    )


def expand_result(result: AllocationResult, universe: Sequence[SecondaryUser]) -> AllocationResult:
    """Re-index a result over a subset onto the full SU list; absent SUs are inactive."""
    position = {uid: i for i, uid in enumerate(result.user_ids)}
    active, times, rates, utilities = [], [], [], []
    for su in universe:
        i = position.get(su.id)
        if i is None:
            active.append(False)
            times.append(0.0)
            rates.append(0.0)
            utilities.append(0.0)
        else:
            active.append(result.active[i])
            times.append(result.times[i])
            rates.append(result.rates[i])
            utilities.append(result.su_utilities[i])
    return result.model_copy(
        update={
            "user_ids": [su.id for su in universe],
            "active": active,
            "times": times,
            "rates": rates,
            "su_utilities": utilities,
        }
    )


def _better(incumbent: AllocationResult | None, candidate: AllocationResult | None) -> AllocationResult | None:
    if candidate is None:
        return incumbent
    if incumbent is None or candidate.fc_utility > incumbent.fc_utility:
        return candidate
    return incumbent


def classify_case(
    users: Sequence[SecondaryUser],
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
) -> CaseLabel:
    """
    Time regime of a candidate set.

    Case1: sum of upper bounds fits the budget. Case3: sum of lower bounds
    exceeds it. Case2 otherwise.
    """
    return _view(users, design, geom, params).case


def reduce_feasible_set(
    all_sus: Sequence[SecondaryUser],
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
) -> list[SecondaryUser]:
    """
    Keep SUs whose lower time bound is below their upper bound.

    Both bounds share the factor 1/R_i, so the test reduces to
    sensing_cost < B_i * (b_i - a_i) and holds for every L at once.
    """
    cost = sensing_cost(params)
    kept = []
    for su in all_sus:
        if su.never_profitable or not cost < su.buffer_bits * (su.earn_rate - su.pay_rate):
            logger.debug("SU %s dropped: lower bound not below upper bound", su.id)
            continue
        kept.append(su)
    return kept


def greedy_fill(
    lower: Sequence[float],
    upper: Sequence[float],
    priority: Sequence[float],
    budget: float,
    ids: Sequence[int],
) -> list[float] | None:
    """
    Solve max sum(priority_i * t_i) s.t. lower_i <= t_i <= upper_i, sum(t) <= budget.

    Lower bounds are granted first, then the remaining budget goes to the
    highest priority first, each capped at its upper bound. Equal priorities
    are served lowest id first. Returns None when the lower bounds alone
    exceed the budget.
    """
    times = list(lower)
    remaining = budget - sum(times)
    if remaining < -TIME_TOL:
        return None
    order = sorted(range(len(times)), key=lambda i: (-priority[i], ids[i]))
    for i in order:
        if remaining <= 0.0:
            break
        grant = min(max(upper[i] - lower[i], 0.0), remaining)
        times[i] += grant
        remaining -= grant
    return times


def waterfill_allocate(
    users: Sequence[SecondaryUser],
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
) -> AllocationResult:
    """Lower bounds first, then greedy top-up by descending R_i * a_i. Case2 only."""
    view = _view(users, design, geom, params)
    if view.case is not CaseLabel.CASE2:
        raise PreconditionError(f"water-filling needs a Case2 set, got {view.case.value}")
    return _waterfill(view, design, geom, params)


def _waterfill(
    view: _SetView, design: SensingDesign, geom: SensingGeometry, params: SystemParams
) -> AllocationResult:
    times = greedy_fill(
        view.lower, view.upper, view.priorities, view.budget, [su.id for su in view.users]
    )
    return _result(view, times, design, geom, params)


def upper_bound_allocation(
    users: Sequence[SecondaryUser],
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
) -> AllocationResult:
    """Every SU clears its whole buffer. Case1 only."""
    view = _view(users, design, geom, params)
    if view.case is not CaseLabel.CASE1:
        raise PreconditionError(f"upper-bound allocation needs a Case1 set, got {view.case.value}")
    return _result(view, list(view.upper), design, geom, params)


def allocate_fixed_set(
    users: Sequence[SecondaryUser],
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
) -> AllocationResult | None:
    """Best times for a set that is all active: upper bounds in Case1, water-fill in Case2, None in Case3."""
    view = _view(users, design, geom, params)
    match view.case:
        case CaseLabel.CASE1:
            return _result(view, list(view.upper), design, geom, params)
        case CaseLabel.CASE2:
            return _waterfill(view, design, geom, params)
        case _:
            return None


def _ordered(
    users: Sequence[SecondaryUser], key: dict[int, float]
) -> list[SecondaryUser]:
    return sorted(users, key=lambda su: (-key[su.id], su.id))


def _swap(
    kept: list[SecondaryUser], outgoing: Sequence[SecondaryUser], incoming: Sequence[SecondaryUser]
) -> list[SecondaryUser]:
    gone = {su.id for su in outgoing}
    return sorted([su for su in kept if su.id not in gone] + list(incoming), key=lambda su: su.id)


def swap_sets(
    kept: Sequence[SecondaryUser],
    excluded: Sequence[SecondaryUser],
    n: int,
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
) -> tuple[list[SecondaryUser], ...]:
    """
    The six guided exchanges of depth n, in order G1..G6.

    Each ranking is descending (ties to the lowest id); all bounds and
    payments are evaluated at L = len(kept).

      G1: last n kept by upper bound  <-> first n excluded by upper bound
      G2: first n kept by upper bound <-> last n excluded by upper bound
      G3: last n kept by lower bound  <-> first n excluded by lower bound
      G4: first n kept by lower bound <-> last n excluded by lower bound
      G5: last n kept by buffer       <-> first n excluded by buffer
      G6: last n kept by payment      <-> first n excluded by payment
    """
    kept = list(kept)
    if not 1 <= n <= min(len(kept), len(excluded)):
        raise PreconditionError(f"swap depth {n} outside 1..{min(len(kept), len(excluded))}")
    l_active = len(kept)
    pool = kept + list(excluded)
    upper = {su.id: time_upper_bound(su, design, geom, params, l_active) for su in pool}
    lower = {su.id: time_lower_bound(su, design, geom, params, l_active) for su in pool}
    buffers = {su.id: float(su.buffer_bits) for su in pool}
    payments = {
        su.id: effective_rate(su, design, geom, params, l_active) * su.pay_rate for su in pool
    }

    def tail_for_head(key: dict[int, float]) -> list[SecondaryUser]:
        return _swap(kept, _ordered(kept, key)[-n:], _ordered(excluded, key)[:n])

    def head_for_tail(key: dict[int, float]) -> list[SecondaryUser]:
        return _swap(kept, _ordered(kept, key)[:n], _ordered(excluded, key)[-n:])

    return (
        tail_for_head(upper),
        head_for_tail(upper),
        tail_for_head(lower),
        head_for_tail(lower),
        tail_for_head(buffers),
        tail_for_head(payments),
    )


def exchange_search(
    kept: Sequence[SecondaryUser],
    excluded: Sequence[SecondaryUser],
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
) -> tuple[list[SecondaryUser], AllocationResult | None]:
    """
    Refine a Case1 set by exchanging members with previously excluded SUs.

    Returns the best same-size set found and its allocation. The kept set
    itself is always a candidate.
    """
    kept = sorted(kept, key=lambda su: su.id)
    excluded = sorted(excluded, key=lambda su: su.id)
    if {su.id for su in kept} & {su.id for su in excluded}:
        raise PreconditionError("kept and excluded sets overlap")

    best_set, best = kept, allocate_fixed_set(kept, design, geom, params)

    def consider(candidate: list[SecondaryUser]) -> None:
        nonlocal best_set, best
        scored = allocate_fixed_set(candidate, design, geom, params)
        if _better(best, scored) is not best:
            best_set, best = candidate, scored

    for n in range(1, min(len(kept), len(excluded)) + 1):
        g1, g2, g3, g4, g5, g6 = swap_sets(kept, excluded, n, design, geom, params)
        case = {
            name: classify_case(group, design, geom, params)
            for name, group in (("g1", g1), ("g2", g2), ("g3", g3), ("g4", g4))
        }
        if case["g1"] is CaseLabel.CASE1 and case["g2"] is CaseLabel.CASE1:
            logger.debug("exchange depth %d: extreme upper swaps stay Case1", n)
            consider(g5)
            continue
        if case["g3"] is CaseLabel.CASE2 and case["g4"] is CaseLabel.CASE2:
            logger.debug("exchange depth %d: extreme lower swaps are Case2, stopping", n)
            consider(g6)
            break
        if case["g4"] is CaseLabel.CASE3:
            logger.debug("exchange depth %d: every deeper swap is Case3, stopping", n)
            break
        logger.debug("exchange depth %d: full enumeration", n)
        for outgoing in combinations(kept, n):
            for incoming in combinations(excluded, n):
                consider(_swap(kept, outgoing, incoming))

    return best_set, best


def select_and_allocate(
    all_sus: Sequence[SecondaryUser],
    design: SensingDesign,
    geom: SensingGeometry,
    params: SystemParams,
) -> AllocationResult:
    """
    Choose the active set and transmission times for one (P_fa, k).

    Never raises for infeasible designs: the result carries feasible=False.
    """
    universe = list(all_sus)
    reduced = reduce_feasible_set(universe, design, geom, params)
    if len(reduced) < design.k_threshold:
        return infeasible_result(universe, design)
    l_lb = min_active_users(design, geom, params.zeta, len(reduced))
    if l_lb is None:
        logger.debug("design %s: detection floor unreachable with %d SUs", design, len(reduced))
        return infeasible_result(universe, design)

    view = _view(reduced, design, geom, params)
    if view.case is CaseLabel.CASE1:
        return expand_result(_result(view, list(view.upper), design, geom, params), universe)
    if len(reduced) == l_lb:
        if view.case is CaseLabel.CASE2:
            return expand_result(_waterfill(view, design, geom, params), universe)
        return infeasible_result(universe, design, CaseLabel.CASE3)

    best: AllocationResult | None = None
    current = sorted(reduced, key=lambda su: su.id)
    excluded: list[SecondaryUser] = []
    while True:
        view = _view(current, design, geom, params)
        if view.case is CaseLabel.CASE2:
            best = _better(best, _waterfill(view, design, geom, params))
        if len(current) <= l_lb:
            break

        j = min(range(len(current)), key=lambda i: (view.priorities[i], current[i].id))
        logger.debug("design %s: eliminating SU %s", design, current[j].id)
        excluded.append(current[j])
        current = current[:j] + current[j + 1 :]

        if classify_case(current, design, geom, params) is CaseLabel.CASE1:
            kept, found = exchange_search(current, excluded, design, geom, params)
            best = _better(best, found)
            if found is None or found.case is CaseLabel.CASE1:
                break
            kept_ids = {su.id for su in kept}
            current = kept
            excluded = [su for su in reduced if su.id not in kept_ids]

    if best is None:
        return infeasible_result(universe, design, CaseLabel.CASE3)
    return expand_result(best, universe)
