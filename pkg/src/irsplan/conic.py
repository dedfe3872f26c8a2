"""Primal-dual interior-point solver for second-order cone programs.

Standard form:

    minimize    c'x
    subject to  A x = b
                G x + s = h,   s in K

where K is a product of cones given as a list of dimensions: dimension 1
means a nonnegative-orthant coordinate, dimension >= 2 a second-order cone
{(t, v) : ||v|| <= t}. The dual variable z lives in the same cone.

The algorithm is a Mehrotra predictor-corrector path follower with
Nesterov-Todd scaling, one dense LDL/LU factorization of the reduced KKT
system per iteration and iterative refinement on every solve. It is fully
deterministic. Primal infeasibility is reported on residual stagnation
rather than via a homogeneous embedding certificate.

Cone vectors are handled through their Jordan-algebra operations; a
dimension-1 cone is the degenerate second-order cone, so one code path
covers both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import AssemblyError, FileFormatError, UnsupportedVersionError

Array = np.ndarray

_FORMAT_TAG = "irsplan-conicproblem"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ConicProblem:
    """One SOCP in standard form. ``dims`` lists the cone sizes in row order."""

    c: Array
    G: Array
    h: Array
    dims: tuple
    A: Array = None
    b: Array = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        G = np.asarray(self.G, dtype=float)
        h = np.asarray(self.h, dtype=float)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.A is None:
            object.__setattr__(self, "A", np.zeros((0, c.size)))
            object.__setattr__(self, "b", np.zeros(0))
        else:
            object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
            object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        n = c.size
        if G.ndim != 2 or G.shape[1] != n:
            raise AssemblyError(f"G must be (m, {n}), got {G.shape}")
        if h.shape != (G.shape[0],):
            raise AssemblyError("h length must match G rows")
        if any(d < 1 for d in self.dims) or sum(self.dims) != G.shape[0]:
            raise AssemblyError("cone dimensions must be >= 1 and sum to G rows")
        if self.A.shape[1] != n or self.b.shape != (self.A.shape[0],):
            raise AssemblyError("A/b dimensions inconsistent with c")
        for name in ("c", "G", "h", "A", "b"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise AssemblyError(f"{name} contains non-finite entries")

    @property
    def n_vars(self) -> int:
        return self.c.size


@dataclass
class ConicSolution:
    x: Array
    s: Array
    z: Array
    y: Array
    status: str                   # optimal | max-iter | infeasible
    iterations: int
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap_residual: float

    @property
    def max_residual(self) -> float:
        return max(self.primal_residual, self.dual_residual, self.gap_residual)


# ---------------------------------------------------------------------------
# Jordan-algebra / cone helpers. All operate on stacked vectors.


def _cone_slices(dims):
    out = []
    start = 0
    for d in dims:
        out.append(slice(start, start + d))
        start += d
    return out


def cone_identity(dims) -> Array:
    e = np.zeros(sum(dims))
    start = 0
    for d in dims:
        e[start] = 1.0
        start += d
    return e


def cone_margin(u: Array, slices) -> float:
    """Smallest interior margin t - ||v|| (or the value itself for dim 1)."""
    worst = math.inf
    for sl in slices:
        block = u[sl]
        if block.size == 1:
            worst = min(worst, block[0])
        else:
            worst = min(worst, block[0] - np.linalg.norm(block[1:]))
    return worst


def jordan_product(u: Array, v: Array, slices) -> Array:
    out = np.empty_like(u)
    for sl in slices:
        ub, vb = u[sl], v[sl]
        if ub.size == 1:
            out[sl] = ub * vb
        else:
            out[sl][0] = ub @ vb
            out[sl][1:] = ub[0] * vb[1:] + vb[0] * ub[1:]
    return out


def jordan_divide(lam: Array, d: Array, slices) -> Array:
    """Solve lam o u = d for u, block by block."""
    out = np.empty_like(d)
    for sl in slices:
        lb, db = lam[sl], d[sl]
        if lb.size == 1:
            out[sl] = db / lb
        else:
            l0, l1 = lb[0], lb[1:]
            det = l0 * l0 - l1 @ l1
            u0 = (l0 * db[0] - l1 @ db[1:]) / det
            out[sl][0] = u0
            out[sl][1:] = (db[1:] - u0 * l1) / l0
    return out


def max_step_to_boundary(u: Array, du: Array, slices) -> float:
    """Largest alpha >= 0 with u + alpha*du still in the cone closure."""
    alpha = math.inf
    for sl in slices:
        ub, db = u[sl], du[sl]
        if ub.size == 1:
            if db[0] < 0:
                alpha = min(alpha, -ub[0] / db[0])
            continue
        # roots of jnorm2(u + t du) = 0 plus the u0 + t du0 >= 0 face
        u0, u1 = ub[0], ub[1:]
        d0, d1 = db[0], db[1:]
        if d0 < 0:
            alpha = min(alpha, -u0 / d0)
        a = d0 * d0 - d1 @ d1
        b = 2.0 * (u0 * d0 - u1 @ d1)
        c = u0 * u0 - u1 @ u1
        # c > 0 for interior u; smallest positive root bounds the step
        if abs(a) < 1e-300:
            if b < 0:
                alpha = min(alpha, -c / b)
            continue
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            continue
        sq = math.sqrt(disc)
        for root in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)):
            if root > 1e-300:
                alpha = min(alpha, root)
    return alpha


class _NTScaling:
    """Nesterov-Todd scaling W with lam = W z = W^-1 s for the current iterate.

    For a second-order cone the scaling point is w = eta * wbar with
    wbar = (sbar + J zbar) / (2 gamma); W is the quadratic representation of
    its Jordan square root u = (wbar + e) / sqrt(2 (wbar_0 + 1)), giving
    W = eta (2 u u' - J) and the defining identity W^2 z = s.
    """

    def __init__(self, s: Array, z: Array, slices):
        self.slices = slices
        self.kind = []     # per cone: ("lp", w) or ("soc", eta, u)
        for sl in slices:
            sb, zb = s[sl], z[sl]
            if sb.size == 1:
                self.kind.append(("lp", math.sqrt(sb[0] / zb[0])))
            else:
                snorm2 = sb[0] ** 2 - sb[1:] @ sb[1:]
                znorm2 = zb[0] ** 2 - zb[1:] @ zb[1:]
                snorm = math.sqrt(snorm2)
                znorm = math.sqrt(znorm2)
                sbar = sb / snorm
                zbar = zb / znorm
                gamma = math.sqrt((1.0 + sbar @ zbar) / 2.0)
                wbar = sbar.copy()
                wbar[0] += zbar[0]
                wbar[1:] -= zbar[1:]
                wbar /= 2.0 * gamma
                eta = (snorm2 / znorm2) ** 0.25
                self.kind.append(("soc", eta, wbar))

    @staticmethod
    def _apply_soc(eta, wbar, block, inverse):
        # W v = eta (2 u (u'v) - J v) with u the Jordan sqrt of wbar;
        # W^-1 v = (1/eta)(2 Ju (Ju'v) - J v)
        u = wbar.copy()
        u[0] += 1.0
        u /= math.sqrt(2.0 * (wbar[0] + 1.0))
        if inverse:
            u[1:] = -u[1:]
            scale = 1.0 / eta
        else:
            scale = eta
        jv = block.copy()
        jv[1:] = -jv[1:]
        proj = u @ block                       # scalar for vectors, (k,) for matrices
        return scale * (2.0 * np.multiply.outer(u, proj) - jv)

    def apply(self, v: Array, inverse: bool = False) -> Array:
        """W v (or W^-1 v); v may be a stacked vector or an (m, k) matrix."""
        v = np.asarray(v, dtype=float)
        out = np.empty_like(v)
        for sl, kind in zip(self.slices, self.kind):
            block = v[sl]
            if kind[0] == "lp":
                w = kind[1]
                out[sl] = block / w if inverse else block * w
            else:
                _, eta, wbar = kind
                out[sl] = self._apply_soc(eta, wbar, block, inverse)
        return out

    def w2_blocks(self) -> list:
        """Dense per-cone blocks of W^2 (the quadratic representation P(w))."""
        blocks = []
        for kind in self.kind:
            if kind[0] == "lp":
                blocks.append(np.array([[kind[1] ** 2]]))
            else:
                _, eta, wbar = kind
                d = wbar.size
                j = -np.eye(d)
                j[0, 0] = 1.0
                blocks.append(eta**2 * (2.0 * np.outer(wbar, wbar) - j))
        return blocks

    def scaled_point(self, s: Array, z: Array) -> Array:
        return self.apply(z)       # lam = W z


def solve(problem: ConicProblem, tol: float = 1e-8, max_iter: int = 200,
          barrier_reduction: float = 0.1, stagnation_window: int = 20) -> ConicSolution:
    """Solve the cone program. Deterministic for identical inputs.

    ``barrier_reduction`` is the centering fallback used when the Mehrotra
    estimate is unusable (degenerate affine step); normally the centering
    parameter adapts per iteration.
    """
    c, G, h, A, b = problem.c, problem.G, problem.h, problem.A, problem.b
    n, m, p = c.size, h.size, b.size
    dims = problem.dims
    slices = _cone_slices(dims)
    n_cones = len(dims)
    e = cone_identity(dims)
    reg = 1e-10

    norm_c = 1.0 + np.linalg.norm(c)
    norm_h = 1.0 + np.linalg.norm(h)
    norm_b = 1.0 + np.linalg.norm(b)

    G_sp = scipy.sparse.csc_matrix(G)
    A_sp = scipy.sparse.csc_matrix(A) if p else None

    def factor(scaling):
        """Sparse LU of the full quasi-definite KKT matrix

            [ dI   A'   G'     ]
            [ A   -dI   0      ]
            [ G    0   -W2-dI  ]

        Factoring the full system (rather than the Schur complement)
        keeps the conditioning linear in that of the scaled data, which
        is what lets the iterates reach 1e-9 residuals.
        """
        if scaling is None:
            w2 = scipy.sparse.identity(m, format="csc")
        else:
            w2 = scipy.sparse.block_diag(scaling.w2_blocks(), format="csc")
        blocks = [
            [reg * scipy.sparse.identity(n), A_sp.T if p else None, G_sp.T],
            [A_sp, -reg * scipy.sparse.identity(p), None] if p else None,
            [G_sp, None, -(w2 + reg * scipy.sparse.identity(m))],
        ]
        blocks = [row for row in blocks if row is not None]
        if not p:
            blocks = [[blocks[0][0], blocks[0][2]], [blocks[1][0], blocks[1][2]]]
        kkt = scipy.sparse.bmat(blocks, format="csc")
        return scipy.sparse.linalg.splu(kkt), w2

    def kkt_solve(lu, w2, scaling, bx, by, bz):
        """Solve the KKT system with refinement against the unregularized
        operator; returns (dx, dy, dz)."""
        rhs = np.concatenate([bx, by, bz])

        def unreg_residual(sol):
            dx = sol[:n]
            dy = sol[n:n + p]
            dz = sol[n + p:]
            r1 = (A.T @ dy if p else 0.0) + G.T @ dz - bx
            r2 = A @ dx - by if p else np.zeros(0)
            r3 = G @ dx - w2 @ dz - bz
            return np.concatenate([r1, r2, r3])

        sol = lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError("non-finite KKT solution")
        for _ in range(2):
            sol = sol - lu.solve(unreg_residual(sol))
        return sol[:n], sol[n:n + p], sol[n + p:]

    # --- initial point: two solves with identity scaling, then shift into the cone
    lu0, w20 = factor(None)
    x, y, dz = kkt_solve(lu0, w20, None, np.zeros(n), b.copy(), h.copy())
    s = -dz                      # equals h - G x up to regularization
    margin = cone_margin(s, slices)
    if margin < 1e-8:
        s = s + (1.0 + abs(margin)) * e
    _, y, z = kkt_solve(lu0, w20, None, -c, np.zeros(p), np.zeros(m))
    margin = cone_margin(z, slices)
    if margin < 1e-8:
        z = z + (1.0 + abs(margin)) * e

    def residuals(x, y, s, z):
        rx = A.T @ y + G.T @ z + c if p else G.T @ z + c
        ry = A @ x - b
        rz = G @ x + s - h
        gap = float(s @ z)
        pobj = float(c @ x)
        pres = max(np.linalg.norm(rz) / norm_h,
                   (np.linalg.norm(ry) / norm_b) if p else 0.0)
        dres = np.linalg.norm(rx) / norm_c
        gapres = gap / max(1.0, abs(pobj))
        return rx, ry, rz, gap, pobj, float(pres), float(dres), float(gapres)

    best = None          # (worst, x, y, s, z)
    best_progress = math.inf
    stall = 0
    iters = 0
    converged = False

    for iteration in range(1, max_iter + 1):
        iters = iteration
        rx, ry, rz, gap, pobj, pres, dres, gapres = residuals(x, y, s, z)
        mu = gap / n_cones
        worst = max(pres, dres, gapres)
        if best is None or worst < best[0]:
            best = (worst, x.copy(), y.copy(), s.copy(), z.copy())

        if worst <= tol:
            converged = True
            break

        # residual stagnation: numerically saturated or infeasible
        if worst < best_progress * 0.9:
            best_progress = worst
            stall = 0
        else:
            stall += 1
            if stall >= stagnation_window:
                break

        try:
            scaling = _NTScaling(s, z, slices)
            lam = scaling.scaled_point(s, z)
            lu, w2 = factor(scaling)

            # predictor (affine) direction
            d_aff = -jordan_product(lam, lam, slices)
            u = jordan_divide(lam, d_aff, slices)
            bz_t = -rz - scaling.apply(u)
            dx_a, dy_a, dz_a = kkt_solve(lu, w2, scaling, -rx, -ry, bz_t)
        except (ValueError, RuntimeError, np.linalg.LinAlgError,
                scipy.linalg.LinAlgError):
            break      # numerically exhausted; report the best iterate
        ds_a = -rz - G @ dx_a

        alpha_aff = min(
            1.0,
            max_step_to_boundary(s, ds_a, slices),
            max_step_to_boundary(z, dz_a, slices),
        )
        mu_aff = float((s + alpha_aff * ds_a) @ (z + alpha_aff * dz_a)) / n_cones
        if mu > 0 and np.isfinite(mu_aff):
            sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))
        else:
            sigma = barrier_reduction

        # corrector + centering
        correction = jordan_product(
            scaling.apply(ds_a, inverse=True), scaling.apply(dz_a), slices
        )
        d_comb = -jordan_product(lam, lam, slices) - correction + sigma * mu * e
        u = jordan_divide(lam, d_comb, slices)
        bz_t = -rz - scaling.apply(u)
        try:
            dx_c, dy_c, dz_c = kkt_solve(lu, w2, scaling, -rx, -ry, bz_t)
        except (ValueError, RuntimeError, np.linalg.LinAlgError,
                scipy.linalg.LinAlgError):
            break
        ds_c = -rz - G @ dx_c

        alpha = 0.99 * min(
            max_step_to_boundary(s, ds_c, slices),
            max_step_to_boundary(z, dz_c, slices),
        )
        alpha = min(1.0, alpha)
        if not np.isfinite(alpha) or alpha <= 1e-13:
            break

        x = x + alpha * dx_c
        y = y + alpha * dy_c
        s = s + alpha * ds_c
        z = z + alpha * dz_c
        # keep iterates numerically interior
        for vec in (s, z):
            margin = cone_margin(vec, slices)
            if margin <= 0.0:
                vec += (abs(margin) + 1e-14) * e

    # report the best iterate seen (the last accepted step may be worse)
    if best is not None:
        _, bx_, by_, bs_, bz_ = best
        x, y, s, z = bx_, by_, bs_, bz_
    rx, ry, rz, gap, pobj, pres, dres, gapres = residuals(x, y, s, z)
    if converged or max(pres, dres, gapres) <= tol:
        status = "optimal"
    elif pres > 1e3 * tol:
        # primal residual irreducible: no cone point satisfies Gx + s = h
        status = "infeasible"
    else:
        status = "max-iter"
    return ConicSolution(
        x=x, s=s, z=z, y=y, status=status, iterations=iters,
        primal_objective=pobj, dual_objective=float(-(b @ y) - (h @ z)),
        primal_residual=pres, dual_residual=dres, gap_residual=gapres,
    )


# ---------------------------------------------------------------------------
# Plain-text dump for cross-checking against external solvers.
# Layout: header, sizes, cone dims, then c / h / b as one value per line and
# G / A as dense row-major blocks, floats in shortest round-trip form.


def dump_problem(problem: ConicProblem, path) -> None:
    lines = [
        f"# {_FORMAT_TAG} v{_FORMAT_VERSION}",
        f"n {problem.n_vars}",
        f"m {problem.h.size}",
        f"p {problem.b.size}",
        "dims " + " ".join(str(d) for d in problem.dims),
        "c " + " ".join(repr(float(v)) for v in problem.c),
        "h " + " ".join(repr(float(v)) for v in problem.h),
        "b " + " ".join(repr(float(v)) for v in problem.b),
    ]
    for row in problem.G:
        lines.append("G " + " ".join(repr(float(v)) for v in row))
    for row in problem.A:
        lines.append("A " + " ".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path) -> ConicProblem:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(f"# {_FORMAT_TAG}"):
        raise FileFormatError(f"not a {_FORMAT_TAG} file", path=path, line=1)
    version = lines[0].split()[-1]
    if version != f"v{_FORMAT_VERSION}":
        raise UnsupportedVersionError(f"unsupported version {version}", path=path, line=1)
    fields = {}
    g_rows, a_rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        key, _, rest = line.partition(" ")
        values = rest.split()
        try:
            if key in ("n", "m", "p"):
                fields[key] = int(values[0])
            elif key == "dims":
                fields["dims"] = [int(v) for v in values]
            elif key in ("c", "h", "b"):
                fields[key] = np.array([float(v) for v in values])
            elif key == "G":
                g_rows.append([float(v) for v in values])
            elif key == "A":
                a_rows.append([float(v) for v in values])
            else:
                raise FileFormatError("unknown record", path=path, line=lineno, field=key)
        except ValueError as exc:
            raise FileFormatError(f"bad number: {exc}", path=path, line=lineno,
                                  field=key) from None
    try:
        n = fields["n"]
        G = np.array(g_rows).reshape(fields["m"], n)
        A = np.array(a_rows).reshape(fields["p"], n) if fields["p"] else None
        return ConicProblem(c=fields["c"], G=G, h=fields["h"], dims=fields["dims"],
                            A=A, b=fields["b"] if fields["p"] else None)
    except KeyError as exc:
        raise FileFormatError(f"missing record {exc}", path=path, line=len(lines)) from None
