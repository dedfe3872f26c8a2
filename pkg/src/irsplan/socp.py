"""Assembly of the per-iteration convex trajectory subproblem as an SOCP.

The subproblem minimizes the motion energy over the free waypoints
q_1..q_{K-1} subject to: per-slot step bounds, a trust region around the
previous trajectory, linearized obstacle half-planes, and the linearized
average-rate constraint. Endpoints are substituted out as constants.

Encodings (per slot k):
    u_k >= ||q_k - q_{k-1}||            3-cone, carries the linear energy term
    w_k >= ||q_k - q_{k-1}||^2 / dt     4-cone via ||(2 dq, w - dt)|| <= w + dt
    u_k <= D_max                        scalar cone (step bound)
    ||q_k - prev_k|| <= T               3-cone trust region (free slots)
    s_ap,k  >= 3D robot-AP distance     4-cone with the height offset constant
    s_irs,k >= 3D robot-IRS distance    4-cone
    linearized obstacles                scalar cones
    sum of slot rate minorants >= (K+1) r_min   one scalar cone

Because the rate gradients are nonpositive, replacing distances by their
cone over-estimators only tightens the rate constraint, so the epigraph
substitution is safe; the q-space rate audit re-checks the true minorant
after every solve. Rates are carried in Gbps inside the conic problem to
keep the matrix well scaled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic import ConicProblem, ConicSolution, solve
from .errors import AssemblyError
from .scenario import Scenario, motion_energy
from .snrmodel import RateLinearization

GBPS = 1e-9


@dataclass(frozen=True)
class LinearObstacle:
    """Tangent minorant of one obstacle quadratic at one slot's anchor.

    minorant(q) = coeff . q + offset  <=  (q - center)' P^-1 (q - center);
    the subproblem enforces minorant(q) >= safety_level.
    """

    slot: int
    coeff: np.ndarray
    offset: float

    def minorant(self, q) -> float:
        return float(self.coeff @ np.asarray(q, dtype=float)) + self.offset


@dataclass(frozen=True)
class P4Subproblem:
    problem: ConicProblem
    scenario: Scenario
    prev_traj: np.ndarray
    linearization: list            # RateLinearization per slot 0..K
    obstacle_rows: tuple           # LinearObstacle for free slots
    trust_radius: float
    energy_offset: float           # K * motor_v0 * dt, joules
    rate_constant_gbps: float      # constant slot contributions minus requirement

    @property
    def n_free(self) -> int:
        return self.scenario.n_slots - 1

    def dump(self, path) -> None:
        """Write the conic problem in the plain-text interchange format."""
        from .conic import dump_problem
        dump_problem(self.problem, path)

    def extract_trajectory(self, x: np.ndarray) -> np.ndarray:
        traj = np.empty((self.scenario.n_slots + 1, 2))
        traj[0] = self.scenario.q_start
        traj[-1] = self.scenario.q_goal
        if self.n_free:
            traj[1:-1] = x[: 2 * self.n_free].reshape(self.n_free, 2)
        return traj


@dataclass(frozen=True)
class SubproblemSolution:
    trajectory: np.ndarray
    objective: float               # true motion energy of the trajectory, joules
    status: str                    # optimal | max-iter | infeasible
    primal_residual: float
    dual_residual: float
    gap_residual: float
    iterations: int = 0

    @property
    def max_residual(self) -> float:
        return max(self.primal_residual, self.dual_residual, self.gap_residual)


def assemble_p4(scenario: Scenario, linearization, prev_traj,
                obstacle_rows, trust_radius: float) -> P4Subproblem:
    """Build the conic subproblem around the previous trajectory.

    ``linearization`` holds one RateLinearization per slot 0..K (anchored at
    prev_traj); ``obstacle_rows`` the affine obstacle constraints for free
    slots. The previous trajectory must be feasible for the subproblem at
    itself, which makes its energy an upper bound on the optimum.
    """
    prev_traj = np.asarray(prev_traj, dtype=float)
    k_slots = scenario.n_slots
    if prev_traj.shape != (k_slots + 1, 2):
        raise AssemblyError(f"previous trajectory must be ({k_slots + 1}, 2)")
    if len(linearization) != k_slots + 1:
        raise AssemblyError("need one rate linearization per slot")
    if trust_radius < 0:
        raise AssemblyError("trust radius must be nonnegative")
    for row in obstacle_rows:
        if not (1 <= row.slot <= k_slots - 1):
            raise AssemblyError("obstacle rows apply to free slots only")

    n_free = k_slots - 1
    dt = scenario.slot_duration
    q_start, q_goal = scenario.q_start, scenario.q_goal

    # variable layout: [q (2 each) | u (K) | w (K) | s_ap (n_free) | s_irs (n_free)]
    off_u = 2 * n_free
    off_w = off_u + k_slots
    off_sa = off_w + k_slots
    off_si = off_sa + n_free
    n_vars = off_si + n_free

    def q_index(k):
        """Column indices of waypoint k, or None if it is a fixed endpoint."""
        if k == 0 or k == k_slots:
            return None
        return 2 * (k - 1)

    def q_const(k):
        return q_start if k == 0 else q_goal

    c = np.zeros(n_vars)
    c[off_u:off_u + k_slots] = scenario.motor_v1
    c[off_w:off_w + k_slots] = scenario.motor_v2

    rows_g, rows_h, dims = [], [], []

    def add_row(coeffs, h_val):
        row = np.zeros(n_vars)
        for col, val in coeffs:
            row[col] += val
        rows_g.append(row)
        rows_h.append(h_val)

    def step_rows(k, scale):
        """Rows for scale*(q_k - q_{k-1}) as (coeffs, h) pairs, x then y."""
        out = []
        ia, ib = q_index(k), q_index(k - 1)
        for axis in range(2):
            coeffs = []
            h_val = 0.0
            if ia is None:
                h_val += scale * q_const(k)[axis]
            else:
                coeffs.append((ia + axis, -scale))
            if ib is None:
                h_val -= scale * q_const(k - 1)[axis]
            else:
                coeffs.append((ib + axis, scale))
            out.append((coeffs, h_val))
        return out

    for k in range(1, k_slots + 1):
        iu = off_u + (k - 1)
        iw = off_w + (k - 1)
        # (u_k, dq_k) in a 3-cone
        add_row([(iu, -1.0)], 0.0)
        for coeffs, h_val in step_rows(k, 1.0):
            add_row(coeffs, h_val)
        dims.append(3)
        # (w_k + dt, 2 dq_k, w_k - dt) in a 4-cone  <=>  w_k >= ||dq||^2/dt
        add_row([(iw, -1.0)], dt)
        for coeffs, h_val in step_rows(k, 2.0):
            add_row(coeffs, h_val)
        add_row([(iw, -1.0)], -dt)
        dims.append(4)
        # step bound through the norm epigraph
        add_row([(iu, 1.0)], scenario.max_step)
        dims.append(1)

    dz_ap = scenario.z_robot - scenario.z_ap
    dz_irs = scenario.z_robot - scenario.z_irs
    for k in range(1, k_slots):
        iq = q_index(k)
        # trust region around the previous iterate
        add_row([], trust_radius)
        for axis in range(2):
            add_row([(iq + axis, -1.0)], -prev_traj[k][axis])
        dims.append(3)
        # 3D distance epigraphs feeding the rate constraint
        for offset, anchor, dz in (
            (off_sa, scenario.ap_pos, dz_ap),
            (off_si, scenario.irs_pos, dz_irs),
        ):
            add_row([(offset + (k - 1), -1.0)], 0.0)
            for axis in range(2):
                add_row([(iq + axis, -1.0)], -anchor[axis])
            add_row([], dz)
            dims.append(4)

    for row in obstacle_rows:
        iq = q_index(row.slot)
        # coeff . q + offset >= safety_level
        add_row([(iq, -row.coeff[0]), (iq + 1, -row.coeff[1])],
                row.offset - scenario.safety_level)
        dims.append(1)

    # rate constraint: sum of per-slot minorants >= (K+1) * r_min, in Gbps.
    # Fixed endpoints contribute their exact anchored rates; free slots
    # contribute beta_k + grad . (s_ap, s_irs) with nonpositive gradients.
    rate_const = 0.0
    coeffs = []
    for k in range(k_slots + 1):
        lin: RateLinearization = linearization[k]
        if q_index(k) is None:
            rate_const += lin.value * GBPS
        else:
            beta = lin.value - lin.grad[0] * lin.d_ap0 - lin.grad[1] * lin.d_irs0
            rate_const += beta * GBPS
            coeffs.append((off_sa + (k - 1), lin.grad[0] * GBPS))
            coeffs.append((off_si + (k - 1), lin.grad[1] * GBPS))
    rate_const -= (k_slots + 1) * scenario.min_avg_rate * GBPS
    add_row([(col, -val) for col, val in coeffs], rate_const)
    dims.append(1)

    problem = ConicProblem(c=c, G=np.array(rows_g), h=np.array(rows_h), dims=dims)
    return P4Subproblem(
        problem=problem, scenario=scenario, prev_traj=prev_traj,
        linearization=list(linearization), obstacle_rows=tuple(obstacle_rows),
        trust_radius=trust_radius,
        energy_offset=k_slots * scenario.motor_v0 * dt,
        rate_constant_gbps=rate_const,
    )


def solve_p4(sub: P4Subproblem, tol: float = 1e-8,
             max_iter: int = 200) -> SubproblemSolution:
    """Solve the subproblem; returns the trajectory and its true motion energy.

    A vanishing trust radius pins every free waypoint to the previous
    trajectory, so that case short-circuits to the (unique) feasible point.
    """
    scenario = sub.scenario
    if sub.trust_radius <= 1e-8 or sub.n_free == 0:
        traj = sub.prev_traj.copy()
        return SubproblemSolution(
            trajectory=traj, objective=motion_energy(traj, scenario),
            status="optimal", primal_residual=0.0, dual_residual=0.0,
            gap_residual=0.0, iterations=0,
        )
    sol: ConicSolution = solve(sub.problem, tol=tol, max_iter=max_iter)
    traj = sub.extract_trajectory(sol.x)
    return SubproblemSolution(
        trajectory=traj,
        objective=motion_energy(traj, scenario) if np.all(np.isfinite(traj)) else np.inf,
        status=sol.status,
        primal_residual=sol.primal_residual,
        dual_residual=sol.dual_residual,
        gap_residual=sol.gap_residual,
        iterations=sol.iterations,
    )
