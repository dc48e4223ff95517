"""Relaxation of the complementarity constraints and the NLP driver.

The complementarity pairs 0 <= M(x) _|_ N(x) >= 0 are replaced by

    M(x) >= 0,   N(x) >= 0,   M_i(x) * N_i(x) <= eps,

and the resulting smooth NLP is solved by a method of multipliers:
an augmented-Lagrangian outer loop with first-order multiplier updates,
whose bound-constrained subproblems are minimized by damped limited-memory
quasi-Newton iterations with a monotone line search (scipy's L-BFGS-B).
Shrinking eps with warm-started primal and dual variables yields the
continuation scheme; a multi-resolution warm start solves coarsened
instances first and propagates parameters upward.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from . import images
from .lowerlevel import DenoiseProblem, solve_tv
from .mpcc import build_tv_mpcc, lift_point
from .operators import make_patch_spec, patch_apply

EPS_INF = np.inf  # sentinel: drop the bilinear rows entirely


class SingularSystem(RuntimeError):
    """Step computation failed inside the inner solver."""

    def __init__(self, iteration, message):
        self.iteration = iteration
        super().__init__(f"inner solve failed at outer iteration {iteration}: {message}")


@dataclass(frozen=True)
class RelaxationSchedule:
    eps0: float = 1e-1
    shrink_factor: float = 0.1
    eps_min: float = 1e-4
    max_outer: int = 12

    def __post_init__(self):
        if not (self.eps0 >= self.eps_min > 0):
            raise ValueError("need eps0 >= eps_min > 0")
        if not (0 < self.shrink_factor < 1):
            raise ValueError("shrink_factor must lie in (0, 1)")

    def values(self):
        out = [self.eps0]
        while out[-1] > self.eps_min * (1 + 1e-12) and len(out) < self.max_outer:
            out.append(max(out[-1] * self.shrink_factor, self.eps_min))
        return out


@dataclass(frozen=True)
class NlpOptions:
    kkt_tol: float = 1e-6
    max_iter: int = 40            # outer multiplier updates
    inner_iter: int = 3000        # quasi-Newton iterations per subproblem
    hessian_mode: str = "damped-lbfgs"
    bound_relax: float = 0.0
    memory: int = 30
    rho0: float = 10.0
    rho_max: float = 1e9


@dataclass
class SolveTrace:
    """Per-outer-iteration log of the continuation scheme."""

    columns = ("outer", "eps", "J", "max_compl", "kkt", "inner_iters", "time_s")
    rows: list = field(default_factory=list)

    def add(self, outer, eps, J, max_compl, kkt, inner_iters, time_s):
        self.rows.append((outer, eps, J, max_compl, kkt, inner_iters, time_s))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(
                    f"{row[0]},{row[1]:.6g},{row[2]:.10g},{row[3]:.6g},"
                    f"{row[4]:.6g},{row[5]},{row[6]:.3f}\n"
                )


@dataclass
class SmoothNlp:
    """Bound-constrained smooth NLP with equalities and general inequalities."""

    n: int
    lb: np.ndarray
    ub: np.ndarray
    objective: object          # x -> (value, gradient); may be None until bound
    eq: object                 # x -> residual vector (= 0)
    eq_jac: object
    ineq: object               # x -> residual vector (<= 0); may be None
    ineq_jac: object
    desc: object = None
    eps: float = np.inf


def relax(desc, eps, u_true=None):
    """Smooth NLP for the eps-relaxed MPCC.

    Sign constraints on coordinate blocks become variable bounds; the
    complementarity pairs contribute the rows N(x) >= 0 and
    M_i(x) N_i(x) <= eps (dropped when eps is the infinity sentinel).
    """
    if not (eps > 0):
        raise ValueError("eps must be positive")
    lb = np.full(desc.num_variables, -np.inf)
    ub = np.full(desc.num_variables, np.inf)
    for name in desc.nonneg_blocks:
        lb[desc.blocks[name]] = 0.0

    has_general = getattr(desc, "eval_g_general", None) is not None
    drop_bilinear = not np.isfinite(eps)

    def ineq(x):
        parts = []
        if has_general:
            parts.append(desc.eval_g_general(x))
        N = desc.eval_N(x)
        parts.append(-N)
        if not drop_bilinear:
            parts.append(desc.eval_M(x) * N - eps)
        return np.concatenate(parts)

    def ineq_jac(x):
        parts = []
        if has_general:
            parts.append(desc.jac_g_general(x))
        jN = desc.jac_N(x)
        parts.append(-jN)
        if not drop_bilinear:
            M = desc.eval_M(x)
            N = desc.eval_N(x)
            jM = desc.jac_M(x)
            parts.append(sp.diags(N) @ jM + sp.diags(M) @ jN)
        return sp.vstack(parts, format="csr")

    objective = None
    if u_true is not None:
        u_true = np.asarray(u_true, dtype=float)
        objective = lambda x: desc.objective(x, u_true)

    return SmoothNlp(
        n=desc.num_variables, lb=lb, ub=ub, objective=objective,
        eq=desc.eval_h, eq_jac=desc.jac_h, ineq=ineq, ineq_jac=ineq_jac,
        desc=desc, eps=eps,
    )


@dataclass
class NlpResult:
    x: np.ndarray
    kkt: float
    multipliers: dict
    converged: bool
    status: str
    fun: float
    inner_iters: int
    outer_iters: int


def _kkt_residual(nlp, x, lam, mu, grad_f, he, gi):
    gl = grad_f.copy()
    if he is not None:
        gl += nlp.eq_jac(x).T @ lam
    if gi is not None:
        gl += nlp.ineq_jac(x).T @ mu
    proj = x - np.clip(x - gl, nlp.lb, nlp.ub)
    stat = np.abs(proj).max() if proj.size else 0.0
    feas = 0.0
    compl = 0.0
    if he is not None and he.size:
        feas = max(feas, np.abs(he).max())
    if gi is not None and gi.size:
        feas = max(feas, gi.max(initial=0.0))
        compl = np.abs(mu * gi).max(initial=0.0)
    return max(stat, feas, compl)


def solve_nlp(nlp, x0, opts=NlpOptions(), lam0=None, mu0=None):
    """Method of multipliers on a :class:`SmoothNlp`.

    Returns the first iterate whose projected Lagrangian gradient, primal
    feasibility and inequality complementarity all fall below
    ``opts.kkt_tol``; otherwise the best iterate found with
    ``converged=False``.
    """
    if nlp.objective is None:
        raise ValueError("NLP has no objective bound")
    x = np.clip(np.asarray(x0, dtype=float), nlp.lb, nlp.ub)
    n_eq = nlp.eq(x).size if nlp.eq is not None else 0
    n_in = nlp.ineq(x).size if nlp.ineq is not None else 0
    lam = np.zeros(n_eq) if lam0 is None else np.asarray(lam0, dtype=float).copy()
    mu = np.zeros(n_in) if mu0 is None else np.asarray(mu0, dtype=float).copy()
    rho = opts.rho0
    bounds = list(zip(
        np.where(np.isfinite(nlp.lb), nlp.lb, -np.inf),
        np.where(np.isfinite(nlp.ub), nlp.ub, np.inf),
    ))
    total_inner = 0
    best = None
    viol_prev = np.inf

    def check(xv):
        f, g = nlp.objective(xv)
        he = nlp.eq(xv) if n_eq else None
        gi = nlp.ineq(xv) if n_in else None
        return f, _kkt_residual(nlp, xv, lam, mu, g, he, gi), he, gi

    f0, kkt, he, gi = check(x)
    if kkt <= opts.kkt_tol:
        mults = {"eq": lam, "ineq": mu}
        return NlpResult(x, kkt, mults, True, "converged", f0, 0, 0)
    best = (kkt, x.copy(), lam.copy(), mu.copy(), f0)

    for outer in range(opts.max_iter):
        def phi(xv):
            f, g = nlp.objective(xv)
            val = f
            grad = g
            if n_eq:
                hv = nlp.eq(xv)
                val += lam @ hv + 0.5 * rho * (hv @ hv)
                grad = grad + nlp.eq_jac(xv).T @ (lam + rho * hv)
            if n_in:
                gv = nlp.ineq(xv)
                gp = np.maximum(0.0, mu + rho * gv)
                val += ((gp @ gp) - (mu @ mu)) / (2 * rho)
                grad = grad + nlp.ineq_jac(xv).T @ gp
            return val, grad

        gtol = max(0.05 * opts.kkt_tol, min(1e-4, 0.5 / rho))
        res = minimize(
            phi, x, jac=True, method="L-BFGS-B", bounds=bounds,
            options=dict(
                maxiter=opts.inner_iter, maxfun=3 * opts.inner_iter,
                ftol=1e-18, gtol=gtol, maxcor=opts.memory,
            ),
        )
        if not np.all(np.isfinite(res.x)):
            raise SingularSystem(outer, "non-finite iterate from inner solver")
        x = np.clip(res.x, nlp.lb, nlp.ub)
        total_inner += res.nit

        he = nlp.eq(x) if n_eq else None
        gi = nlp.ineq(x) if n_in else None
        viol = 0.0
        if n_eq:
            viol = max(viol, np.abs(he).max())
        if n_in:
            viol = max(viol, np.maximum(gi, -mu / rho).max(initial=0.0))

        if n_eq:
            lam = lam + rho * he
        if n_in:
            mu = np.maximum(0.0, mu + rho * gi)

        f, g = nlp.objective(x)
        kkt = _kkt_residual(nlp, x, lam, mu, g, he, gi)
        if kkt < best[0]:
            best = (kkt, x.copy(), lam.copy(), mu.copy(), f)
        if kkt <= opts.kkt_tol:
            return NlpResult(
                x, kkt, {"eq": lam, "ineq": mu}, True, "converged",
                f, total_inner, outer + 1,
            )
        if viol > 0.25 * viol_prev:
            rho = min(rho * 10.0, opts.rho_max)
        viol_prev = max(viol, 1e-300)

    kkt, xb, lamb, mub, fb = best
    return NlpResult(
        xb, kkt, {"eq": lamb, "ineq": mub}, False, "not-converged",
        fb, total_inner, opts.max_iter,
    )


def solve_mpcc(desc, x0, u_true, sched=RelaxationSchedule(), opts=NlpOptions()):
    """Continuation over shrinking eps, warm-starting primal and dual variables."""
    trace = SolveTrace()
    x = np.asarray(x0, dtype=float).copy()
    lam = mu = None
    result = None
    for outer, eps in enumerate(sched.values()):
        nlp = relax(desc, eps, u_true=u_true)
        t0 = time.perf_counter()
        result = solve_nlp(nlp, x, opts, lam0=lam, mu0=mu)
        dt = time.perf_counter() - t0
        x = result.x
        lam = result.multipliers["eq"]
        mu = result.multipliers["ineq"]
        max_compl = float(np.max(desc.eval_M(x) * desc.eval_N(x), initial=0.0))
        trace.add(outer, eps, result.fun, max_compl, result.kkt, result.inner_iters, dt)
    return x, trace, result


def default_levels(rows):
    return [max(rows // 4, 4), max(rows // 2, 4), rows]


def warm_start_solve(
    pair, spec, sched=RelaxationSchedule(), opts=NlpOptions(),
    levels=None, alpha0=0.1, lower_tol=1e-9,
):
    """Multi-resolution warm start for the TV model.

    Solves the lifted problem on a pyramid of box-averaged copies of the
    training pair, carrying the learned patch parameters (resolution
    independent) upward and refreshing the reconstruction by a lower-level
    solve at each new resolution.
    """
    u_true, f = np.asarray(pair.u_true, float), np.asarray(pair.f, float)
    rows, cols = f.shape
    if levels is None:
        levels = default_levels(rows)
    if sorted(levels) != list(levels) or levels[-1] != rows:
        raise ValueError("levels must be ascending and end at the native resolution")

    alpha = np.full(spec.num_patches, float(alpha0))
    level_traces = []
    x = None
    result = None
    u_prev = None
    for lv in levels:
        factor = lv / rows
        f_lv = images.resize(f, factor)
        t_lv = images.resize(u_true, factor)
        spec_lv = make_patch_spec(
            f_lv.shape[0], f_lv.shape[1], spec.grid_rows, spec.grid_cols
        )
        desc = build_tv_mpcc(f_lv, spec_lv)
        prob = DenoiseProblem(f=f_lv, iso_weights=patch_apply(alpha, spec_lv))
        q0 = None
        if u_prev is not None:
            u_warm = images.resize(u_prev, f_lv.shape[0] / u_prev.shape[0])
            g = np.stack([
                (desc.Kx @ u_warm.ravel()).reshape(f_lv.shape),
                (desc.Ky @ u_warm.ravel()).reshape(f_lv.shape),
            ])
            q0 = g  # projected onto the dual ball inside the solver
        sol = solve_tv(prob, tol=lower_tol, q0=q0)
        x = lift_point(desc, sol, alpha)
        x, trace, result = solve_mpcc(desc, x, t_lv, sched, opts)
        alpha = desc.block(x, "alpha").copy()
        u_prev = desc.block(x, "u").reshape(f_lv.shape)
        level_traces.append((lv, alpha.copy(), trace))
    return x, level_traces, result
