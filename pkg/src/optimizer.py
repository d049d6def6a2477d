"""Grid search over sensing designs, exhaustive reference search, two-stage baseline and the Hessian probe."""

import logging
import math
from collections.abc import Sequence
from itertools import combinations
from time import perf_counter

import numpy as np

from src.allocator import (
    allocate_fixed_set,
    classify_case,
    expand_result,
    greedy_fill,
    infeasible_result,
    select_and_allocate,
)
from src.config import settings
from src.economics import (
    effective_rate,
    effective_time,
    sensing_cost,
    su_utility,
)
from src.errors import DomainError, OracleCapExceeded
from src.schemas import (
    AllocationResult,
    DesignGrid,
    NonJointOutcome,
    OptimizationOutcome,
    ProbeParams,
    ProbePoint,
    SecondaryUser,
    SensingDesign,
    SensingGeometry,
    SurfacePoint,
    SystemParams,
    UtilityReport,
)
from src.sensing import continuous_binomial_tail, global_pd, global_pfa, local_pd

logger = logging.getLogger(__name__)

# Break-even utilities land within float noise of zero
NEGATIVE_UTILITY_TOL = 1e-12

PROBE_STEP_PFA = 1e-4
PROBE_STEP_K = 1e-3


def _rank(utility: float, design: SensingDesign) -> tuple[float, float, int]:
    """Order key of feasible points: higher utility, then smaller P_fa, then smaller k."""
    return utility, -design.pfa_local, -design.k_threshold


def joint_optimize(
    all_sus: Sequence[SecondaryUser],
    geom: SensingGeometry,
    params: SystemParams,
    grid: DesignGrid,
) -> OptimizationOutcome:
    """Run selection and allocation at every grid design and keep the best feasible one."""
    start = perf_counter()
    universe = list(all_sus)
    best: AllocationResult | None = None
    surface = []
    for design in grid.designs(len(universe)):
        result = select_and_allocate(universe, design, geom, params)
        surface.append(
            SurfacePoint(
                pfa=design.pfa_local,
                k=design.k_threshold,
                fc_utility=result.fc_utility,
                feasible=result.feasible,
            )
        )
        if result.feasible and (
            best is None or _rank(result.fc_utility, design) > _rank(best.fc_utility, best.design)
        ):
            best = result

    if best is None:
        logger.info("No feasible design on a grid of %d points", len(surface))
    return OptimizationOutcome(
        best_design=best.design if best else None,
        best_allocation=best,
        utility_surface=surface,
        wall_time=perf_counter() - start,
    )


def exhaustive_oracle(
    all_sus: Sequence[SecondaryUser],
    geom: SensingGeometry,
    params: SystemParams,
    grid: DesignGrid,
    cap: int | None = None,
) -> OptimizationOutcome:
    """
    Enumerate every SU subset at every grid design.

    Each subset is solved exactly with `greedy_fill`; a subset qualifies when
    k <= |S|, the fused detection probability at |S| meets zeta and its
    lower bounds fit the budget.
    """
    cap = settings.oracle_cap if cap is None else cap
    universe = list(all_sus)
    if len(universe) > cap:
        raise OracleCapExceeded(f"exhaustive search over {len(universe)} SUs exceeds the cap of {cap}")

    start = perf_counter()
    pool = [su for su in universe if not su.never_profitable]
    ids = [su.id for su in pool]
    cost = sensing_cost(params)
    best_key: tuple[float, float, int] | None = None
    best_choice: tuple[SensingDesign, tuple[int, ...]] | None = None
    surface = []

    for design in grid.designs(len(universe)):
        point_best: tuple[float, tuple[int, ...]] | None = None
        for size in range(design.k_threshold, len(pool) + 1):
            if global_pd(design, geom, size) < params.zeta:
                continue
            budget = effective_time(params, size)
            rates = [effective_rate(su, design, geom, params, size) for su in pool]
            lower = [cost / (r * (su.earn_rate - su.pay_rate)) for r, su in zip(rates, pool)]
            upper = [su.buffer_bits / r for r, su in zip(rates, pool)]
            priority = [r * su.pay_rate for r, su in zip(rates, pool)]
            for subset in combinations(range(len(pool)), size):
                if any(lower[i] > upper[i] for i in subset):
                    continue
                times = greedy_fill(
                    [lower[i] for i in subset],
                    [upper[i] for i in subset],
                    [priority[i] for i in subset],
                    budget,
                    [ids[i] for i in subset],
                )
                if times is None:
                    continue
                value = math.fsum(t * priority[i] for t, i in zip(times, subset))
                if point_best is None or value > point_best[0]:
                    point_best = (value, subset)

        surface.append(
            SurfacePoint(
                pfa=design.pfa_local,
                k=design.k_threshold,
                fc_utility=point_best[0] if point_best else 0.0,
                feasible=point_best is not None,
            )
        )
        if point_best is not None:
            key = _rank(point_best[0], design)
            if best_key is None or key > best_key:
                best_key, best_choice = key, (design, point_best[1])

    best = None
    if best_choice is not None:
        design, subset = best_choice
        allocation = allocate_fixed_set([pool[i] for i in subset], design, geom, params)
        best = expand_result(allocation, universe)
    return OptimizationOutcome(
        best_design=best.design if best else None,
        best_allocation=best,
        utility_surface=surface,
        wall_time=perf_counter() - start,
    )


def nonjoint_baseline(
    all_sus: Sequence[SecondaryUser],
    geom: SensingGeometry,
    params: SystemParams,
    grid: DesignGrid,
) -> NonJointOutcome:
    """
    Two-stage design: detection first, time second.

    Stage 1 keeps SUs with B_i(b_i - a_i) >= sensing cost, all of them active,
    and picks the grid design with the smallest fused P_FA whose fused P_D
    reaches zeta. Stage 2 shares the frame greedily by R_i * a_i with zero
    lower bounds, so some SUs may end up with negative utility.

    Zero lower bounds relax the joint problem on the same set and design, so
    the stage-2 utility can sit slightly above the joint optimum.
    `constrained_allocation` re-solves the stage-1 set and design with the
    break-even lower bounds (None when they do not fit the frame).
    """
    start = perf_counter()
    universe = list(all_sus)
    cost = sensing_cost(params)
    chosen = [su for su in universe if su.buffer_bits * (su.earn_rate - su.pay_rate) - cost >= 0]
    l_active = len(chosen)

    def infeasible() -> NonJointOutcome:
        return NonJointOutcome(
            best_allocation=infeasible_result(universe, None),
            report=UtilityReport(user_ids=[su.id for su in universe], utilities=[0.0] * len(universe)),
            wall_time=perf_counter() - start,
        )

    if l_active == 0 or effective_time(params, l_active) < 0:
        return infeasible()

    candidates = [
        design
        for design in grid.designs(l_active)
        if global_pd(design, geom, l_active) >= params.zeta
    ]
    if not candidates:
        return infeasible()
    design = min(
        candidates,
        key=lambda d: (global_pfa(d, l_active), d.pfa_local, -d.k_threshold),
    )

    rates = [effective_rate(su, design, geom, params, l_active) for su in chosen]
    times = greedy_fill(
        [0.0] * l_active,
        [su.buffer_bits / r for su, r in zip(chosen, rates)],
        [r * su.pay_rate for su, r in zip(chosen, rates)],
        effective_time(params, l_active),
        [su.id for su in chosen],
    )
    allocation = AllocationResult(
        user_ids=[su.id for su in chosen],
        active=[True] * l_active,
        times=times,
        rates=rates,
        fc_utility=math.fsum(t * r * su.pay_rate for t, r, su in zip(times, rates, chosen)),
        su_utilities=[
            su_utility(su, design, geom, params, l_active, t, True) for su, t in zip(chosen, times)
        ],
        case=classify_case(chosen, design, geom, params),
        feasible=True,
        design=design,
    )
    allocation = expand_result(allocation, universe)
    constrained = allocate_fixed_set(chosen, design, geom, params)
    return NonJointOutcome(
        best_design=design,
        best_allocation=allocation,
        constrained_allocation=expand_result(constrained, universe) if constrained else None,
        report=UtilityReport.from_allocation(allocation),
        wall_time=perf_counter() - start,
    )


def count_negative_utility(report: UtilityReport) -> int:
    return sum(1 for value in report.utilities if value < -NEGATIVE_UTILITY_TOL)


# Quasiconcavity probe


def default_probe_grid() -> list[float]:
    """Log-spaced small P_fa values followed by a linear sweep up to 0.99."""
    small = np.geomspace(1e-3, 0.1, 20, endpoint=False)
    large = np.linspace(0.1, 0.99, 90)
    return [float(v) for v in np.concatenate([small, large])]


def probe_utility(probe: ProbeParams, geom: SensingGeometry, pfa: float, k: float) -> float:
    """FC utility with fixed per-SU time, as a smooth function of (P_fa, k)."""
    idle_weight = probe.p_h0 * math.fsum(probe.r0) * probe.pay_time
    busy_weight = (1.0 - probe.p_h0) * math.fsum(probe.r1) * probe.pay_time
    pfa_global = continuous_binomial_tail(pfa, k, probe.m_total)
    pd_global = continuous_binomial_tail(local_pd(pfa, geom), k, probe.m_total)
    return idle_weight * (1.0 - pfa_global) + busy_weight * (1.0 - pd_global)


def probe_partials(
    probe: ProbeParams, geom: SensingGeometry, pfa: float, k: float
) -> tuple[float, float, float, float, float]:
    """(U_p, U_k, U_pp, U_kk, U_pk) of `probe_utility` by central differences."""
    hx, hy = PROBE_STEP_PFA, PROBE_STEP_K

    def u(dx: float = 0.0, dy: float = 0.0) -> float:
        return probe_utility(probe, geom, pfa + dx, k + dy)

    centre = u()
    ux = (u(hx) - u(-hx)) / (2 * hx)
    uy = (u(dy=hy) - u(dy=-hy)) / (2 * hy)
    uxx = (u(hx) - 2 * centre + u(-hx)) / hx**2
    uyy = (u(dy=hy) - 2 * centre + u(dy=-hy)) / hy**2
    uxy = (u(hx, hy) - u(hx, -hy) - u(-hx, hy) + u(-hx, -hy)) / (4 * hx * hy)
    return ux, uy, uxx, uyy, uxy


def bordered_hessian(probe: ProbeParams, geom: SensingGeometry, pfa: float, k: float) -> ProbePoint:
    """Bordered Hessian determinant and its 2x2 leading minor at (pfa, k)."""
    ux, uy, uxx, uyy, uxy = probe_partials(probe, geom, pfa, k)
    matrix = np.array([[0.0, ux, uy], [ux, uxx, uxy], [uy, uxy, uyy]])
    return ProbePoint(
        pfa=pfa,
        det_h=float(np.linalg.det(matrix)),
        det_ha=float(np.linalg.det(matrix[:2, :2])),
    )


def quasiconcavity_probe(
    probe: ProbeParams, pfa_grid: Sequence[float] | None = None
) -> list[ProbePoint]:
    """
    Bordered-Hessian determinants of the FC utility along a P_fa grid at k = probe.k_threshold.

    Quasiconcavity needs det[H_a] < 0 and det[H] > 0 everywhere; a strictly
    negative det[H] refutes it.
    """
    if pfa_grid is None:
        pfa_grid = probe.pfa_values if probe.pfa_values is not None else default_probe_grid()
    grid = list(pfa_grid)
    if not grid:
        raise DomainError("probe grid is empty")
    for pfa in grid:
        if not PROBE_STEP_PFA < pfa < 1.0 - PROBE_STEP_PFA:
            raise DomainError(f"probe P_fa {pfa} too close to the boundary for central differences")

    geom = SensingGeometry.from_db(probe.gamma_db, probe.n_samples)
    points = [bordered_hessian(probe, geom, pfa, probe.k_threshold) for pfa in grid]
    negatives = sum(1 for p in points if p.det_h < 0)
    logger.info("Hessian probe: %d of %d points with det[H] < 0", negatives, len(points))
    return points
