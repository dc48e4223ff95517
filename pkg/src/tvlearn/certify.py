"""Index-set classification, multiplier recovery and stationarity certificates.

Given a candidate solution of the lifted TV model, the pipeline is

1. :func:`classify_index_sets`: partition the pixels into active/inactive/
   biactive sets by which side of the complementarity pair vanishes;
2. :func:`recover_multipliers`: solve the first-order multiplier system in
   least squares for a canonical representative (the system determines the
   multipliers uniquely only under partial LICQ);
3. :func:`check_stationarity`: evaluate every equation and sign condition
   and classify the point as S-, M-, C- or not stationary;
4. :func:`ssc_check`: sample directions from the linearized critical cone
   and evaluate the second-order lower-bound form (heuristic, not a proof).

Cross-checks in original variables (:func:`check_primal_system`) and the
specialized scalar / scale-dependent systems are provided as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class RankDeficient(RuntimeWarning):
    pass


@dataclass(frozen=True)
class IndexSets:
    """Disjoint partition of {0..m-1} plus the triactive subset of B."""

    A: np.ndarray
    I: np.ndarray
    B: np.ndarray
    T: np.ndarray
    tau_act: float
    ambiguous: np.ndarray

    @property
    def m(self):
        return self.A.size + self.I.size + self.B.size


@dataclass
class MultiplierSet:
    p: np.ndarray
    lam_x: np.ndarray
    lam_y: np.ndarray
    phi_x: np.ndarray
    phi_y: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    nu: np.ndarray


@dataclass
class CertificateReport:
    classification: str
    residuals: dict
    sign_checks: dict
    set_sizes: dict
    triactive_empty: bool
    biactive_empty: bool
    tol: float
    scale: float
    ssc: dict | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        out = {
            "classification": self.classification,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "sign_checks": {k: bool(v) for k, v in self.sign_checks.items()},
            "set_sizes": {k: int(v) for k, v in self.set_sizes.items()},
            "triactive_empty": self.triactive_empty,
            "biactive_empty": self.biactive_empty,
            "tol": self.tol,
            "scale": self.scale,
            "notes": list(self.notes),
        }
        if self.ssc is not None:
            out["ssc"] = {
                k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                for k, v in self.ssc.items()
            }
        return out


def default_tau_act(eps_min=1e-4):
    """Classification tolerance, coarser than the solver noise floor."""
    return max(1e-6, 10.0 * eps_min)


def classify_index_sets(desc, x, tau_act):
    """Partition pixels by the complementarity pair (r, Q(alpha) - delta)."""
    r = desc.block(x, "r")
    N = desc.eval_N(x)
    weights = desc.Q @ desc.block(x, "alpha")
    in_A = (r <= tau_act) & (N > tau_act)
    in_I = (r > tau_act) & (np.abs(N) <= tau_act)
    in_B = ~(in_A | in_I)
    idx = np.arange(r.size)
    B = idx[in_B]
    T = B[weights[B] <= tau_act]
    near_r = (r > tau_act) & (r <= 2 * tau_act)
    near_N = (np.abs(N) > tau_act) & (np.abs(N) <= 2 * tau_act)
    return IndexSets(
        A=idx[in_A], I=idx[in_I], B=B, T=T, tau_act=tau_act,
        ambiguous=idx[near_r | near_N],
    )


def _polar_parts(desc, x):
    p = desc.parts(x)
    return p["theta"], p["r"], p["delta"], desc.Q @ p["alpha"]


def recover_multipliers(desc, x, sets, grad_J):
    """Least-squares solve of the multiplier system at the classified point.

    The linear rows are the stationarity equations of the lifted problem,
    the index-set conditions nu|_A = 0 and gamma|_I = 0, and the
    complementarity-implied zeros rho_i = 0 where Q(alpha)_i > tau and
    sigma_i = 0 where delta_i > tau.  Unknowns:
    (p, lam_x, lam_y, phi_x, phi_y, rho, sigma, gamma, nu).
    """
    d, m, P = desc.d, desc.m, desc.P
    theta, r, delta, weights = _polar_parts(desc, x)
    c, s = np.cos(theta), np.sin(theta)
    grad_J = np.ravel(np.asarray(grad_J, dtype=float))
    if grad_J.size != d:
        raise ValueError("gradient of the loss must have one entry per pixel")

    off = {}
    pos = 0
    for name, size in (
        ("p", d), ("lam_x", m), ("lam_y", m), ("phi_x", m), ("phi_y", m),
        ("rho", m), ("sigma", m), ("gamma", m), ("nu", m),
    ):
        off[name] = pos
        pos += size
    n_unk = pos

    I_m = sp.identity(m, format="csr")
    D = sp.diags
    rows = []
    rhs = []

    def block_row(entries, b):
        blocks = sp.lil_matrix((entries[0][0].shape[0], n_unk))
        for mat, name in entries:
            blocks[:, off[name]:off[name] + mat.shape[1]] = mat
        rows.append(blocks.tocsr())
        rhs.append(b)

    # (a) p + K^T phi = grad_J
    block_row(
        [(I_m[:d, :d], "p"), (desc.KxT, "phi_x"), (desc.KyT, "phi_y")], grad_J
    )
    # (b) Q'^T (rho + nu) = 0
    QT = desc.Q.T.tocsr()
    block_row([(QT, "rho"), (QT, "nu")], np.zeros(P))
    # (c), (d)
    block_row([(-desc.Kx, "p"), (I_m, "lam_x")], np.zeros(m))
    block_row([(-desc.Ky, "p"), (I_m, "lam_y")], np.zeros(m))
    # (e) cos*phi_x + sin*phi_y - gamma = 0
    block_row([(D(c), "phi_x"), (D(s), "phi_y"), (-I_m, "gamma")], np.zeros(m))
    # (f) -cos*lam_x - sin*lam_y - sigma + nu = 0
    block_row(
        [(D(-c), "lam_x"), (D(-s), "lam_y"), (-I_m, "sigma"), (I_m, "nu")],
        np.zeros(m),
    )
    # (g) tangential equation
    block_row(
        [
            (D(delta * s), "lam_x"), (D(-delta * c), "lam_y"),
            (D(-r * s), "phi_x"), (D(r * c), "phi_y"),
        ],
        np.zeros(m),
    )

    def selector(indices, name):
        if indices.size == 0:
            return
        sel = sp.csr_matrix(
            (np.ones(indices.size), (np.arange(indices.size), indices)), shape=(indices.size, m)
        )
        block_row([(sel, name)], np.zeros(indices.size))

    selector(sets.A, "nu")
    selector(sets.I, "gamma")
    selector(np.flatnonzero(weights > sets.tau_act), "rho")
    selector(np.flatnonzero(delta > sets.tau_act), "sigma")

    A = sp.vstack(rows, format="csr")
    b = np.concatenate(rhs)

    rank_deficiency = None
    if n_unk <= 3000:
        z, _, rank, _ = np.linalg.lstsq(A.toarray(), b, rcond=None)
        rank_deficiency = n_unk - int(rank)
    else:
        from scipy.sparse.linalg import lsmr

        z = lsmr(A, b, atol=1e-14, btol=1e-14, maxiter=20 * n_unk)[0]

    res_vec = A @ z - b
    info = {
        "residual_inf": float(np.abs(res_vec).max(initial=0.0)),
        "residual_2": float(np.linalg.norm(res_vec)),
        "rank_deficiency": rank_deficiency,
    }

    def take(name, size):
        return z[off[name]:off[name] + size].copy()

    mult = MultiplierSet(
        p=take("p", d),
        lam_x=take("lam_x", m), lam_y=take("lam_y", m),
        phi_x=take("phi_x", m), phi_y=take("phi_y", m),
        rho=take("rho", m), sigma=take("sigma", m),
        gamma=take("gamma", m), nu=take("nu", m),
    )
    return mult, info


def stationarity_residuals(desc, x, mult, grad_J):
    """Infinity norms of every equation of the first-order system."""
    theta, r, delta, weights = _polar_parts(desc, x)
    c, s = np.cos(theta), np.sin(theta)
    grad_J = np.ravel(np.asarray(grad_J, dtype=float))
    kphi = desc.KxT @ mult.phi_x + desc.KyT @ mult.phi_y
    res = {
        "stat_u": np.abs(grad_J - mult.p - kphi).max(),
        "stat_alpha": np.abs(desc.Q.T @ (mult.rho + mult.nu)).max(initial=0.0),
        "stat_qx": np.abs(-(desc.Kx @ mult.p) + mult.lam_x).max(),
        "stat_qy": np.abs(-(desc.Ky @ mult.p) + mult.lam_y).max(),
        "stat_r": np.abs(c * mult.phi_x + s * mult.phi_y - mult.gamma).max(),
        "stat_delta": np.abs(-c * mult.lam_x - s * mult.lam_y - mult.sigma + mult.nu).max(),
        "stat_theta": np.abs(
            s * (-r * mult.phi_x + delta * mult.lam_x)
            - c * (-r * mult.phi_y + delta * mult.lam_y)
        ).max(),
        "compl_weight_rho": np.abs(weights * mult.rho).max(),
        "compl_delta_sigma": np.abs(delta * mult.sigma).max(),
    }
    return res


def check_stationarity(desc, x, mult, sets, grad_J, tol=1e-6):
    """Full certificate: equation residuals, sign conditions, classification.

    Classification is S when the biactive multipliers are componentwise
    nonnegative (within tol), M when each biactive pair has zero product or
    nonnegative signs, C when all biactive products are nonnegative; the
    implication chain S => M => C holds by construction of the tests.
    """
    theta, r, delta, weights = _polar_parts(desc, x)
    grad_flat = np.ravel(np.asarray(grad_J, dtype=float))
    scale = 1.0 + float(np.linalg.norm(grad_flat))
    res = stationarity_residuals(desc, x, mult, grad_flat)
    res["nu_on_A"] = np.abs(mult.nu[sets.A]).max(initial=0.0)
    res["gamma_on_I"] = np.abs(mult.gamma[sets.I]).max(initial=0.0)

    eq_names = (
        "stat_u", "stat_alpha", "stat_qx", "stat_qy",
        "stat_r", "stat_delta", "stat_theta", "nu_on_A", "gamma_on_I",
    )
    system_residual = max(res[k] for k in eq_names)
    res["system"] = system_residual

    sign = {
        "rho_nonneg": bool(mult.rho.min(initial=0.0) >= -tol * scale),
        "sigma_nonneg": bool(mult.sigma.min(initial=0.0) >= -tol * scale),
        "compl_weight_rho": bool(res["compl_weight_rho"] <= tol * scale),
        "compl_delta_sigma": bool(res["compl_delta_sigma"] <= tol * scale),
    }

    gB = mult.gamma[sets.B]
    nB = mult.nu[sets.B]
    pair_scale = tol * (1.0 + np.abs(gB) + np.abs(nB)) * scale
    s_cond = (gB >= -tol * scale) & (nB >= -tol * scale)
    m_cond = (np.abs(gB * nB) <= pair_scale) | s_cond
    c_cond = (gB * nB >= -pair_scale) | m_cond
    sign["S_biactive"] = bool(np.all(s_cond))
    sign["M_biactive"] = bool(np.all(m_cond))
    sign["C_biactive"] = bool(np.all(c_cond))
    assert (not sign["S_biactive"] or sign["M_biactive"]) and (
        not sign["M_biactive"] or sign["C_biactive"]
    )

    base_ok = system_residual <= tol * scale and all(
        sign[k] for k in ("rho_nonneg", "sigma_nonneg", "compl_weight_rho", "compl_delta_sigma")
    )
    if not base_ok:
        classification = "not-stationary"
    elif sign["S_biactive"]:
        classification = "S-stationary"
    elif sign["M_biactive"]:
        classification = "M-stationary"
    elif sign["C_biactive"]:
        classification = "C-stationary"
    else:
        classification = "not-stationary"

    notes = []
    if sets.B.size == 0:
        notes.append("biactive set empty: S-, M- and C-stationarity coincide")
    if sets.ambiguous.size:
        notes.append(f"{sets.ambiguous.size} indices within 2*tau_act of a set boundary")

    return CertificateReport(
        classification=classification,
        residuals=res,
        sign_checks=sign,
        set_sizes={"A": sets.A.size, "I": sets.I.size, "B": sets.B.size, "T": sets.T.size},
        triactive_empty=sets.T.size == 0,
        biactive_empty=sets.B.size == 0,
        tol=tol,
        scale=scale,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# original-variable (primal) system and its specializations
# ---------------------------------------------------------------------------

def _flat2(vec):
    v = np.asarray(vec, dtype=float)
    return v.reshape(2, -1)


def check_primal_system(desc, u, q, alpha, p, phi, rho, sigma, nu, sets, grad_J, tol=1e-6):
    """Residuals of the stationarity system written in original variables.

    ``phi`` is the 2-vector multiplier per pixel; the inactive-set rows use
    the tangential projector of the primal gradient direction.
    """
    u = np.ravel(np.asarray(u, dtype=float))
    qx, qy = _flat2(q)
    p = np.ravel(np.asarray(p, dtype=float))
    phx, phy = _flat2(phi)
    grad_flat = np.ravel(np.asarray(grad_J, dtype=float))
    weights = desc.Q @ np.atleast_1d(np.asarray(alpha, dtype=float))

    gx, gy = desc.Kx @ u, desc.Ky @ u
    knorm = np.hypot(gx, gy)
    px, py = desc.Kx @ p, desc.Ky @ p
    kp_norm = np.hypot(px, py)
    qnorm = np.hypot(qx, qy)

    res = {
        "lower_adjoint": np.abs((u - desc.f.ravel()) + desc.KxT @ qx + desc.KyT @ qy).max(),
        "lower_align": np.abs((qx * gx + qy * gy) - weights * knorm).max(),
        "lower_bound": np.maximum(0.0, qnorm - weights).max(),
        "adjoint_eq": np.abs(p + desc.KxT @ phx + desc.KyT @ phy - grad_flat).max(),
        "grad_alpha": np.abs(desc.Q.T @ (rho + nu)).max(initial=0.0),
        "compl_weight_rho": np.abs(weights * rho).max(),
        "rho_min": -min(rho.min(initial=0.0), 0.0),
        "compl_qnorm_sigma": np.abs(qnorm * sigma).max(),
        "sigma_min": -min(sigma.min(initial=0.0), 0.0),
    }

    ii = sets.I
    if ii.size:
        nz = np.maximum(knorm[ii], 1e-300)
        nx, ny = gx[ii] / nz, gy[ii] / nz
        proj_x = px[ii] - nx * (nx * px[ii] + ny * py[ii])
        proj_y = py[ii] - ny * (nx * px[ii] + ny * py[ii])
        res["phi_inactive"] = max(
            np.abs(knorm[ii] * phx[ii] - weights[ii] * proj_x).max(),
            np.abs(knorm[ii] * phy[ii] - weights[ii] * proj_y).max(),
        )
    else:
        res["phi_inactive"] = 0.0
    res["Kp_active"] = kp_norm[sets.A].max(initial=0.0)
    bb = sets.B
    if bb.size:
        res["align_biactive"] = np.abs(
            (qx[bb] * px[bb] + qy[bb] * py[bb]) - weights[bb] * kp_norm[bb]
        ).max()
        res["sign_biactive"] = -min(
            (phx[bb] * qx[bb] + phy[bb] * qy[bb]).min(), 0.0
        )
    else:
        res["align_biactive"] = 0.0
        res["sign_biactive"] = 0.0

    # cross-check of nu against its closed-form case formula
    nu_ref = np.zeros_like(nu)
    if ii.size:
        nu_ref[ii] = (gx[ii] * px[ii] + gy[ii] * py[ii]) / np.maximum(knorm[ii], 1e-300) \
            + sigma[ii]
    if bb.size:
        nu_ref[bb] = kp_norm[bb]
    res["nu_formula"] = np.abs(nu - nu_ref).max(initial=0.0)
    return res


def check_scalar_system(desc, x, mult, sets, grad_J, tol=1e-6):
    """Specialized residuals for one global weight (P = 1)."""
    if desc.P != 1:
        raise ValueError("scalar system applies to P = 1 only")
    p = desc.parts(x)
    alpha = float(p["alpha"][0])
    u = p["u"]
    px, py = desc.Kx @ mult.p, desc.Ky @ mult.p
    qx, qy = p["qx"], p["qy"]
    iub = np.concatenate([sets.I, sets.B])
    res = check_primal_system(
        desc, u, np.stack([qx, qy]), p["alpha"], mult.p,
        np.stack([mult.phi_x, mult.phi_y]), mult.rho, mult.sigma, mult.nu,
        sets, grad_J, tol,
    )
    res["alpha_positive"] = float(alpha)
    res["aggregate_inner"] = abs(float((qx[iub] * px[iub] + qy[iub] * py[iub]).sum()))
    return res


def check_scale_dependent_system(desc, x, mult, sets, grad_J, tol=1e-6):
    """Specialized residuals for the identity parameter map (P = m)."""
    if desc.P != desc.m:
        raise ValueError("scale-dependent system applies to P = m only")
    p = desc.parts(x)
    alpha = p["alpha"]
    px, py = desc.Kx @ mult.p, desc.Ky @ mult.p
    qx, qy = p["qx"], p["qy"]
    gx, gy = desc.Kx @ p["u"], desc.Ky @ p["u"]
    knorm = np.hypot(gx, gy)
    res = check_primal_system(
        desc, p["u"], np.stack([qx, qy]), alpha, mult.p,
        np.stack([mult.phi_x, mult.phi_y]), mult.rho, mult.sigma, mult.nu,
        sets, grad_J, tol,
    )
    tau = sets.tau_act
    iub = np.concatenate([sets.I, sets.B])
    pos = iub[alpha[iub] > tau]
    res["inner_zero_positive"] = np.abs(qx[pos] * px[pos] + qy[pos] * py[pos]).max(initial=0.0)
    deg = sets.I[alpha[sets.I] <= tau]
    if deg.size:
        nz = np.maximum(knorm[deg], 1e-300)
        res["degenerate_inactive"] = np.abs(
            (gx[deg] * px[deg] + gy[deg] * py[deg]) / nz
            + mult.sigma[deg] + mult.rho[deg]
        ).max()
    else:
        res["degenerate_inactive"] = 0.0
    res["sigma_rho_biactive"] = max(
        np.abs(mult.sigma[sets.B]).max(initial=0.0),
        np.abs(mult.rho[sets.B]).max(initial=0.0),
    )
    return res


# ---------------------------------------------------------------------------
# second-order sampling check
# ---------------------------------------------------------------------------

def ssc_quadratic_form(desc, x, mult, sets, d_vec, curvature_sign=1.0):
    """Lower-bound quadratic form of the second-order sufficiency test.

    For the quadratic fidelity and linear patch map the form reduces to the
    tracking-loss curvature minus the multiplier penalty terms; the
    ``curvature_sign`` hook flips the loss-curvature term for sanity tests.
    """
    theta, r, delta, weights = _polar_parts(desc, x)
    b = desc.blocks
    d_u = d_vec[b["u"]]
    d_alpha = d_vec[b["alpha"]]
    d_theta = d_vec[b["theta"]]
    iub = np.concatenate([sets.I, sets.B])
    phi_sq = (mult.phi_x[iub] ** 2 + mult.phi_y[iub] ** 2).sum()
    px, py = desc.Kx @ mult.p, desc.Ky @ mult.p
    kp_sq_I = (px[sets.I] ** 2 + py[sets.I] ** 2).sum()
    dQ = desc.Q @ d_alpha
    val = curvature_sign * (d_u @ d_u)
    val -= phi_sq * 8.0 * (d_u @ d_u)
    val -= kp_sq_I * (dQ[sets.I] ** 2).sum()
    dn = delta * mult.nu
    val += ((dn[sets.I] - 2.0) * d_theta[sets.I] ** 2).sum()
    val += ((dn[sets.B] - 1.0) * d_theta[sets.B] ** 2).sum()
    return float(val)


def _critical_cone_rows(desc, x, sets, b_branch):
    """Equality rows of the linearized critical cone (sparse matrix)."""
    theta, r, delta, _ = _polar_parts(desc, x)
    c, s = np.cos(theta), np.sin(theta)
    d, m = desc.d, desc.m
    n = desc.num_variables
    b = desc.blocks
    D = sp.diags
    I_m = sp.identity(m, format="csr")

    def place(entries, nrows):
        out = sp.lil_matrix((nrows, n))
        for mat, name in entries:
            out[:, b[name].start:b[name].start + mat.shape[1]] = mat
        return out.tocsr()

    def selector(indices):
        return sp.csr_matrix(
            (np.ones(indices.size), (np.arange(indices.size), indices)),
            shape=(indices.size, m),
        )

    rows = [
        place([(I_m[:d, :d], "u"), (desc.KxT, "qx"), (desc.KyT, "qy")], d),
        place([(-desc.Kx, "u"), (D(c), "r"), (D(-r * s), "theta")], m),
        place([(-desc.Ky, "u"), (D(s), "r"), (D(r * c), "theta")], m),
        place([(I_m, "qx"), (D(-c), "delta"), (D(delta * s), "theta")], m),
        place([(I_m, "qy"), (D(-s), "delta"), (D(-delta * c), "theta")], m),
    ]
    # inactive: dQ(d_alpha) = d_delta ; active: d_r = 0
    if sets.I.size:
        rows.append(
            place([(desc.Q[sets.I], "alpha"), (-selector(sets.I), "delta")], sets.I.size)
        )
    if sets.A.size:
        rows.append(place([(selector(sets.A), "r")], sets.A.size))
    # biactive: branch chosen per sample
    b_eq_r = sets.B[~b_branch] if sets.B.size else sets.B
    b_eq_n = sets.B[b_branch] if sets.B.size else sets.B
    if b_eq_r.size:
        rows.append(place([(selector(b_eq_r), "r")], b_eq_r.size))
    if b_eq_n.size:
        rows.append(
            place([(desc.Q[b_eq_n], "alpha"), (-selector(b_eq_n), "delta")], b_eq_n.size)
        )
    return sp.vstack(rows, format="csr")


def ssc_check(desc, x, mult, sets, grad_J, num_samples=1000, seed=0):
    """Sample the linearized critical cone and evaluate the quadratic form.

    Verdict SUFFICIENT when the form is strictly positive on every
    non-vanishing sampled direction; INCONCLUSIVE otherwise.  Sampling both
    biactive branches covers the non-polyhedral cone heuristically.
    """
    from scipy.linalg import null_space

    rng = np.random.default_rng(seed)
    grad_flat = np.ravel(np.asarray(grad_J, dtype=float))
    b = desc.blocks
    _, _, delta, weights = _polar_parts(desc, x)
    basis_cache = {}
    kept = 0
    discarded = 0
    min_val = np.inf
    for _ in range(num_samples):
        branch = rng.random(sets.B.size) < 0.5 if sets.B.size else np.zeros(0, dtype=bool)
        key = branch.tobytes()
        if key not in basis_cache:
            Ac = _critical_cone_rows(desc, x, sets, branch)
            basis_cache[key] = null_space(Ac.toarray())
        basis = basis_cache[key]
        if basis.shape[1] == 0:
            discarded += 1
            continue
        d_vec = basis @ rng.standard_normal(basis.shape[1])
        nrm = np.linalg.norm(d_vec)
        if nrm <= 1e-10:
            discarded += 1
            continue
        d_vec /= nrm
        if grad_flat @ d_vec[b["u"]] > 0:
            d_vec = -d_vec
        # sign rows of the cone: weight and delta at their bounds, B branches
        ok = True
        zero_w = np.flatnonzero(weights <= sets.tau_act)
        if zero_w.size:
            ok &= bool(((desc.Q @ d_vec[b["alpha"]])[zero_w] >= -1e-9).all())
        zero_d = np.flatnonzero(delta <= sets.tau_act)
        if zero_d.size:
            ok &= bool((d_vec[b["delta"]][zero_d] >= -1e-9).all())
        if sets.B.size:
            dr = d_vec[b["r"]][sets.B]
            dn = (desc.Q @ d_vec[b["alpha"]])[sets.B] - d_vec[b["delta"]][sets.B]
            ok &= bool((dr[branch] >= -1e-9).all()) and bool((dn[~branch] >= -1e-9).all())
        if not ok:
            discarded += 1
            continue
        val = ssc_quadratic_form(desc, x, mult, sets, d_vec)
        min_val = min(min_val, val)
        kept += 1
    verdict = "SUFFICIENT" if kept > 0 and min_val > 0 else "INCONCLUSIVE"
    return {
        "verdict": verdict,
        "min_value": float(min_val) if kept else float("nan"),
        "samples": kept,
        "discarded": discarded,
    }
