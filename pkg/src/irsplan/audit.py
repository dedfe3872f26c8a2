"""Independent re-checking of trajectory constraints.

This module is intentionally written as plain scalar arithmetic, separate
from the vectorized code paths that produce trajectories, so that every
artifact can be re-audited by logic that shares only the constraint
definitions with the planner. Used by the initializer, the descent loop,
the CLI ``audit`` verb, and the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .scenario import Scenario, los_class

ENDPOINT_TOL = 1e-9
STEP_TOL = 1e-6
MARGIN_TOL = 1e-6
RATE_REL_TOL = 1e-6


@dataclass
class AuditReport:
    ok: bool
    endpoint_error: float
    max_step: float
    worst_margin: float            # min over slots/obstacles of the quadratic form
    avg_rate: float                # bits/s under the fitted model
    violations: list = field(default_factory=list)
    max_step_bound: float = 0.0
    safety_level: float = 0.0
    required_rate: float = 0.0

    @property
    def worst_violation(self) -> float:
        """Largest constraint violation across families (0 when feasible)."""
        return max(
            0.0,
            self.endpoint_error,
            self.max_step - self.max_step_bound,
            self.safety_level - self.worst_margin,
            (self.required_rate - self.avg_rate) / self.required_rate
            if self.required_rate > 0 else 0.0,
        )

    def summary(self) -> str:
        verdict = "PASS" if self.ok else "FAIL"
        lines = [
            f"audit {verdict}: endpoint_err={self.endpoint_error:.3e} "
            f"max_step={self.max_step:.6f} worst_margin={self.worst_margin:.6f} "
            f"avg_rate_gbps={self.avg_rate / 1e9:.6f}"
        ]
        lines.extend(f"  violated: {v}" for v in self.violations)
        return "\n".join(lines)


def _slot_snr(fitted, d_ap: float, d_irs: float, snr_scale: float) -> float:
    # deliberate re-statement of the model form, kept independent of snrmodel
    return (
        fitted.gain_irs * d_irs ** (-fitted.exp_irs)
        + fitted.gain_cross * d_irs ** (-fitted.exp_irs / 2) * d_ap ** (-fitted.exp_ap / 2)
        + fitted.gain_direct * d_ap ** (-fitted.exp_ap)
    ) * snr_scale


def check_p3(traj, scenario: Scenario, model) -> AuditReport:
    """Audit the original problem's constraints at a trajectory.

    Checks endpoints (exact), per-slot step bounds, the true obstacle
    quadratics at the safety level, and the fitted-model average rate with
    visibility classes re-derived at each waypoint.
    """
    violations = []
    n = len(traj)
    if n != scenario.n_slots + 1:
        violations.append(f"waypoint count {n} != {scenario.n_slots + 1}")

    endpoint_error = max(
        math.hypot(traj[0][0] - scenario.q_start[0], traj[0][1] - scenario.q_start[1]),
        math.hypot(traj[-1][0] - scenario.q_goal[0], traj[-1][1] - scenario.q_goal[1]),
    )
    if endpoint_error > ENDPOINT_TOL:
        violations.append(f"endpoints off by {endpoint_error:.3e}")

    max_step = 0.0
    for k in range(1, n):
        step = math.hypot(traj[k][0] - traj[k - 1][0], traj[k][1] - traj[k - 1][1])
        max_step = max(max_step, step)
    if max_step > scenario.max_step + STEP_TOL:
        violations.append(f"step {max_step:.6f} exceeds {scenario.max_step}")

    worst_margin = math.inf
    for k in range(n):
        for obs in scenario.obstacles:
            dx = traj[k][0] - obs.center[0]
            dy = traj[k][1] - obs.center[1]
            pinv = obs.shape_inv
            margin = (dx * (pinv[0][0] * dx + pinv[0][1] * dy)
                      + dy * (pinv[1][0] * dx + pinv[1][1] * dy))
            worst_margin = min(worst_margin, margin)
            if margin < scenario.safety_level - MARGIN_TOL:
                violations.append(
                    f"slot {k}: obstacle margin {margin:.6f} < {scenario.safety_level}"
                )

    total_rate = 0.0
    dz_ap = scenario.z_robot - scenario.z_ap
    dz_irs = scenario.z_robot - scenario.z_irs
    for k in range(n):
        link = los_class(traj[k], scenario)
        fitted = model.fit_for(link)
        d_ap = math.sqrt((traj[k][0] - scenario.ap_pos[0]) ** 2
                         + (traj[k][1] - scenario.ap_pos[1]) ** 2 + dz_ap**2)
        d_irs = math.sqrt((traj[k][0] - scenario.irs_pos[0]) ** 2
                          + (traj[k][1] - scenario.irs_pos[1]) ** 2 + dz_irs**2)
        snr = _slot_snr(fitted, d_ap, d_irs, scenario.snr_scale)
        total_rate += scenario.bandwidth_hz * math.log2(1.0 + snr)
    avg_rate = total_rate / n if n else 0.0
    if avg_rate < scenario.min_avg_rate * (1.0 - RATE_REL_TOL):
        violations.append(
            f"avg rate {avg_rate / 1e9:.6f} Gbps < required "
            f"{scenario.min_avg_rate / 1e9:.6f} Gbps"
        )

    return AuditReport(
        ok=not violations,
        endpoint_error=endpoint_error,
        max_step=max_step,
        worst_margin=worst_margin,
        avg_rate=avg_rate,
        violations=violations,
        max_step_bound=scenario.max_step,
        safety_level=scenario.safety_level,
        required_rate=scenario.min_avg_rate,
    )


def check_p4(traj, sub, tol: float = 1e-6) -> list:
    """Audit a subproblem solution against the subproblem's own constraints.

    Returns a list of violation strings (empty means the solution satisfies
    every constraint of the convex subproblem to ``tol`` absolute).
    """
    scenario = sub.scenario
    violations = []
    n = scenario.n_slots + 1

    for k in range(1, n):
        step = math.hypot(traj[k][0] - traj[k - 1][0], traj[k][1] - traj[k - 1][1])
        if step > scenario.max_step + tol:
            violations.append(f"slot {k}: step {step:.8f} > D_max")
    for k in range(1, n - 1):
        move = math.hypot(traj[k][0] - sub.prev_traj[k][0],
                          traj[k][1] - sub.prev_traj[k][1])
        if move > sub.trust_radius + tol:
            violations.append(f"slot {k}: trust move {move:.8f} > {sub.trust_radius}")
    for row in sub.obstacle_rows:
        value = (row.coeff[0] * traj[row.slot][0] + row.coeff[1] * traj[row.slot][1]
                 + row.offset)
        if value < scenario.safety_level - tol:
            violations.append(
                f"slot {row.slot}: linearized obstacle {value:.8f} < "
                f"{scenario.safety_level}"
            )

    # true linearized rate evaluated from positions (not the epigraph vars)
    dz_ap = scenario.z_robot - scenario.z_ap
    dz_irs = scenario.z_robot - scenario.z_irs
    total = 0.0
    for k in range(n):
        lin = sub.linearization[k]
        d_ap = math.sqrt((traj[k][0] - scenario.ap_pos[0]) ** 2
                         + (traj[k][1] - scenario.ap_pos[1]) ** 2 + dz_ap**2)
        d_irs = math.sqrt((traj[k][0] - scenario.irs_pos[0]) ** 2
                          + (traj[k][1] - scenario.irs_pos[1]) ** 2 + dz_irs**2)
        total += (lin.value + lin.grad[0] * (d_ap - lin.d_ap0)
                  + lin.grad[1] * (d_irs - lin.d_irs0))
    required = (scenario.n_slots + 1) * scenario.min_avg_rate
    if total < required - tol * max(1.0, abs(required)):
        violations.append(
            f"linearized rate sum {total / 1e9:.6f} < required {required / 1e9:.6f} Gbps"
        )
    return violations
