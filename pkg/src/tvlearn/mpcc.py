"""Complementarity-constrained reformulations of the bilevel denoising models.

Each builder produces an :class:`MpccDescription` for the single-level
problem

    min  J(u)   s.t.  h(x) = 0,  g(x) <= 0,  0 <= M(x) _|_ N(x) >= 0,

where x stacks the lower-level primal/dual variables, the regularization
parameters, and the radius/angle variables of the polar (and, for TGV,
spherical) change of variables that turns the primal-dual alignment
conditions into bilinear complementarities.

Analytic Jacobians are assembled in triplet form with a fixed symbolic
structure: constant blocks (difference operators, identities, patch
indicator matrices) are stored once and only the x-dependent diagonal /
row-scaled entries are refreshed per evaluation.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .lowerlevel import DenoiseSolution
from .operators import (
    grad_matrices,
    lift_polar,
    lift_spherical,
    patch_apply,
    patch_matrix,
    sym_grad_matrix,
    unlift_polar,
)


class JacobianTemplate:
    """Sparse Jacobian with fixed sparsity; variable entries updated in place."""

    def __init__(self, nrows, ncols):
        self.shape = (nrows, ncols)
        self._rows = []
        self._cols = []
        self._vals = []
        self._slots = {}
        self._nnz = 0
        self._csr = None

    def add_const(self, mat, row_off, col_off):
        coo = sp.coo_matrix(mat)
        self._rows.append(coo.row + row_off)
        self._cols.append(coo.col + col_off)
        self._vals.append(coo.data.astype(float))
        self._nnz += coo.nnz

    def add_var_diag(self, name, row_off, col_off, size):
        """Reserve a diagonal block whose entries are refreshed per call."""
        idx = np.arange(size)
        self._rows.append(idx + row_off)
        self._cols.append(idx + col_off)
        self._vals.append(np.zeros(size))
        self._slots[name] = (self._nnz, size, None)
        self._nnz += size

    def add_var_rowscaled(self, name, mat, row_off, col_off):
        """Reserve a block ``diag(w) @ mat`` with per-call row weights w."""
        coo = sp.coo_matrix(mat)
        self._rows.append(coo.row + row_off)
        self._cols.append(coo.col + col_off)
        self._vals.append(np.zeros(coo.nnz))
        self._slots[name] = (self._nnz, coo.nnz, (coo.row.copy(), coo.data.astype(float)))
        self._nnz += coo.nnz

    def finalize(self):
        rows = np.concatenate(self._rows) if self._rows else np.zeros(0, dtype=int)
        cols = np.concatenate(self._cols) if self._cols else np.zeros(0, dtype=int)
        self._data = np.concatenate(self._vals) if self._vals else np.zeros(0)
        tag = sp.coo_matrix(
            (np.arange(1, self._nnz + 1, dtype=float), (rows, cols)), shape=self.shape
        ).tocsr()
        if tag.nnz != self._nnz:
            raise AssertionError("duplicate entries in Jacobian template")
        self._perm = tag.data.astype(np.int64) - 1
        self._csr = sp.csr_matrix(
            (self._data[self._perm], tag.indices, tag.indptr), shape=self.shape
        )
        return self

    def set_slot(self, name, values):
        start, size, rowscale = self._slots[name]
        if rowscale is None:
            self._data[start:start + size] = values
        else:
            rows, base = rowscale
            self._data[start:start + size] = base * values[rows]

    def assemble(self):
        self._csr.data[:] = self._data[self._perm]
        return self._csr


class MpccDescription:
    """Variable layout, residual evaluators and analytic Jacobians of one model.

    Immutable after construction; evaluators are pure functions of x.
    """

    model = "generic"

    def __init__(self, f):
        self.f = np.asarray(f, dtype=float)
        self.rows, self.cols = self.f.shape
        self.d = self.f.size
        self.m = self.d
        self._blocks = {}
        self._n = 0

    # -- variable layout -----------------------------------------------------
    def _add_block(self, name, size):
        self._blocks[name] = slice(self._n, self._n + size)
        self._n += size

    @property
    def blocks(self):
        return dict(self._blocks)

    @property
    def num_variables(self):
        return self._n

    def block(self, x, name):
        return x[self._blocks[name]]

    def pack(self, **parts):
        x = np.zeros(self._n)
        for name, val in parts.items():
            x[self._blocks[name]] = np.ravel(val)
        return x

    # -- objective (tracking loss on the image block) -------------------------
    loss = "tracking"
    image_block = "u"

    def objective(self, x, u_true):
        u = self.block(x, self.image_block)
        diff = u - np.ravel(u_true)
        grad = np.zeros_like(x)
        grad[self._blocks[self.image_block]] = diff
        return 0.5 * float(diff @ diff), grad

    # -- counts ----------------------------------------------------------------
    @property
    def num_compl(self):
        raise NotImplementedError

    @property
    def num_eq(self):
        raise NotImplementedError

    @property
    def num_ineq(self):
        raise NotImplementedError

    angle_dim = 0  # variables eliminable by substituting the unit-vector identity

    # sign constraints representable as variable bounds (for the NLP solver);
    # all g rows remain part of eval_g regardless.
    nonneg_blocks = ()
    # rows of g that are NOT bound-representable; None when every row is.
    eval_g_general = None
    jac_g_general = None

    @property
    def num_constraints(self):
        """Equality rows plus complementarity pairs (inequalities kept as bounds)."""
        return self.num_eq + self.num_compl

    def report_counts(self):
        return {
            "model": self.model,
            "variables_full": self.num_variables,
            "variables_theta_eliminated": self.num_variables - self.angle_dim,
            "equalities": self.num_eq,
            "inequalities": self.num_ineq,
            "complementarities": self.num_compl,
            "constraints": self.num_constraints,
        }

    def summary(self):
        c = self.report_counts()
        lines = [
            f"model: {c['model']}",
            f"variables: {c['variables_theta_eliminated']} "
            f"(full lifted: {c['variables_full']})",
            f"constraints: {c['constraints']} "
            f"({c['equalities']} equalities + {c['complementarities']} complementarity pairs; "
            f"{c['inequalities']} sign inequalities kept as bounds)",
        ]
        return "\n".join(lines)


def eval_residuals(desc, x):
    """Evaluate (h, g, M, N) at x."""
    return desc.eval_h(x), desc.eval_g(x), desc.eval_M(x), desc.eval_N(x)


def eval_jacobians(desc, x):
    """Assemble sparse analytic Jacobians of (h, g, M, N) at x."""
    return desc.jac_h(x), desc.jac_g(x), desc.jac_M(x), desc.jac_N(x)


# ---------------------------------------------------------------------------
# TV model
# ---------------------------------------------------------------------------

class TvMpcc(MpccDescription):
    """Lifted TV model: x = (u, qx, qy, alpha, r, delta, theta)."""

    model = "tv"
    nonneg_blocks = ("alpha", "r", "delta")

    def __init__(self, f, spec):
        super().__init__(f)
        self.spec = spec
        self.P = spec.num_patches
        d, m = self.d, self.m
        for name, size in (
            ("u", d), ("qx", m), ("qy", m), ("alpha", self.P),
            ("r", m), ("delta", m), ("theta", m),
        ):
            self._add_block(name, size)
        self.Kx, self.Ky = grad_matrices(self.rows, self.cols)
        self.KxT = self.Kx.T.tocsr()
        self.KyT = self.Ky.T.tocsr()
        self.Q = patch_matrix(spec)
        self.angle_dim = m
        self._jh = self._make_jh()
        self._jg = self._make_jg()
        self._jM = self._make_jM()
        self._jN = self._make_jN()

    # h = [(u-f) + K^T q; Ku - r n(theta); q - delta n(theta)]
    @property
    def num_eq(self):
        return self.d + 4 * self.m

    @property
    def num_ineq(self):
        return 2 * self.m

    @property
    def num_compl(self):
        return self.m

    def parts(self, x):
        b = self._blocks
        return {name: x[sl] for name, sl in b.items()}

    def eval_h(self, x):
        p = self.parts(x)
        c, s = np.cos(p["theta"]), np.sin(p["theta"])
        return np.concatenate([
            (p["u"] - self.f.ravel()) + self.KxT @ p["qx"] + self.KyT @ p["qy"],
            self.Kx @ p["u"] - p["r"] * c,
            self.Ky @ p["u"] - p["r"] * s,
            p["qx"] - p["delta"] * c,
            p["qy"] - p["delta"] * s,
        ])

    def eval_g(self, x):
        p = self.parts(x)
        return np.concatenate([-(self.Q @ p["alpha"]), -p["delta"]])

    def eval_M(self, x):
        return self.block(x, "r").copy()

    def eval_N(self, x):
        p = self.parts(x)
        return self.Q @ p["alpha"] - p["delta"]

    def _make_jh(self):
        d, m = self.d, self.m
        b = self._blocks
        t = JacobianTemplate(self.num_eq, self.num_variables)
        I = sp.identity(m, format="csr")
        t.add_const(I[:d, :d], 0, b["u"].start)
        t.add_const(self.KxT, 0, b["qx"].start)
        t.add_const(self.KyT, 0, b["qy"].start)
        t.add_const(self.Kx, d, b["u"].start)
        t.add_const(self.Ky, d + m, b["u"].start)
        t.add_const(I, d + 2 * m, b["qx"].start)
        t.add_const(I, d + 3 * m, b["qy"].start)
        t.add_var_diag("r_c", d, b["r"].start, m)          # -cos(theta)
        t.add_var_diag("r_s", d + m, b["r"].start, m)      # -sin(theta)
        t.add_var_diag("th_kx", d, b["theta"].start, m)    # r sin(theta)
        t.add_var_diag("th_ky", d + m, b["theta"].start, m)  # -r cos(theta)
        t.add_var_diag("dl_c", d + 2 * m, b["delta"].start, m)
        t.add_var_diag("dl_s", d + 3 * m, b["delta"].start, m)
        t.add_var_diag("th_qx", d + 2 * m, b["theta"].start, m)
        t.add_var_diag("th_qy", d + 3 * m, b["theta"].start, m)
        return t.finalize()

    def jac_h(self, x):
        p = self.parts(x)
        c, s = np.cos(p["theta"]), np.sin(p["theta"])
        t = self._jh
        t.set_slot("r_c", -c)
        t.set_slot("r_s", -s)
        t.set_slot("th_kx", p["r"] * s)
        t.set_slot("th_ky", -p["r"] * c)
        t.set_slot("dl_c", -c)
        t.set_slot("dl_s", -s)
        t.set_slot("th_qx", p["delta"] * s)
        t.set_slot("th_qy", -p["delta"] * c)
        return t.assemble()

    def _make_jg(self):
        m = self.m
        b = self._blocks
        t = JacobianTemplate(self.num_ineq, self.num_variables)
        t.add_const(-self.Q, 0, b["alpha"].start)
        t.add_const(-sp.identity(m), m, b["delta"].start)
        return t.finalize()

    def jac_g(self, x):
        return self._jg.assemble()

    def _make_jM(self):
        t = JacobianTemplate(self.num_compl, self.num_variables)
        t.add_const(sp.identity(self.m), 0, self._blocks["r"].start)
        return t.finalize()

    def jac_M(self, x):
        return self._jM.assemble()

    def _make_jN(self):
        t = JacobianTemplate(self.num_compl, self.num_variables)
        t.add_const(self.Q, 0, self._blocks["alpha"].start)
        t.add_const(-sp.identity(self.m), 0, self._blocks["delta"].start)
        return t.finalize()

    def jac_N(self, x):
        return self._jN.assemble()

    # -- lifting ---------------------------------------------------------------
    def lift(self, sol: DenoiseSolution, alpha, tol=1e-7):
        """Build a lifted point from a lower-level solution and parameters."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        g = np.stack([
            (self.Kx @ sol.u.ravel()).reshape(self.f.shape),
            (self.Ky @ sol.u.ravel()).reshape(self.f.shape),
        ])
        pl = lift_polar(g, sol.q, tol=tol)
        return self.pack(
            u=sol.u, qx=sol.q[0], qy=sol.q[1], alpha=alpha,
            r=pl.r, delta=pl.delta, theta=pl.theta,
        )

    def unlift(self, x):
        """Recover original variables; report the pre-lift alignment residuals."""
        p = self.parts(x)
        shape = self.f.shape
        u = p["u"].reshape(shape)
        q = np.stack([p["qx"].reshape(shape), p["qy"].reshape(shape)])
        gx, gy = self.Kx @ p["u"], self.Ky @ p["u"]
        knorm = np.hypot(gx, gy)
        qnorm = np.hypot(p["qx"], p["qy"])
        weights = self.Q @ p["alpha"]
        return {
            "u": u,
            "q": q,
            "alpha": p["alpha"].copy(),
            "align_residual": (p["qx"] * gx + p["qy"] * gy) - weights * knorm,
            "bound_residual": qnorm - weights,
        }


def build_tv_mpcc(f, spec, loss="tracking"):
    if loss != "tracking":
        raise ValueError(f"unsupported loss tag {loss!r}")
    return TvMpcc(f, spec)


# ---------------------------------------------------------------------------
# joint isotropic + anisotropic TV model
# ---------------------------------------------------------------------------

class TvaiMpcc(MpccDescription):
    """Lifted joint iso+aniso model, absolute values dualized through (cx, cy).

    x = (u, qx, qy, cx, cy, alpha, sigma, r, delta, theta); the bilateral
    absolute-value inequalities are stacked per direction.
    """

    model = "tvai"
    nonneg_blocks = ("alpha", "sigma", "r", "delta")

    def __init__(self, f, spec_iso, spec_aniso):
        super().__init__(f)
        self.spec = spec_iso
        self.spec_aniso = spec_aniso
        self.P = spec_iso.num_patches
        self.P2 = spec_aniso.num_patches
        d, m = self.d, self.m
        for name, size in (
            ("u", d), ("qx", m), ("qy", m), ("cx", m), ("cy", m),
            ("alpha", self.P), ("sigma", self.P2),
            ("r", m), ("delta", m), ("theta", m),
        ):
            self._add_block(name, size)
        self.Kx, self.Ky = grad_matrices(self.rows, self.cols)
        self.KxT = self.Kx.T.tocsr()
        self.KyT = self.Ky.T.tocsr()
        self.Q = patch_matrix(spec_iso)
        self.R = patch_matrix(spec_aniso)
        self.angle_dim = m
        self._jh = self._make_jh()
        self._jg = self._make_jg()
        self._jM = self._make_jM()
        self._jN = self._make_jN()

    @property
    def num_eq(self):
        return self.d + 4 * self.m

    @property
    def num_ineq(self):
        # per direction: bilateral 2m + c-box 2m + positivity of c*(Bu) m;
        # shared: -R(sigma), -Q(alpha), -delta
        return 10 * self.m + 3 * self.m

    @property
    def num_compl(self):
        return self.m

    def parts(self, x):
        return {name: x[sl] for name, sl in self._blocks.items()}

    def eval_h(self, x):
        p = self.parts(x)
        c, s = np.cos(p["theta"]), np.sin(p["theta"])
        return np.concatenate([
            (p["u"] - self.f.ravel()) + self.KxT @ p["qx"] + self.KyT @ p["qy"]
            + self.KxT @ p["cx"] + self.KyT @ p["cy"],
            self.Kx @ p["u"] - p["r"] * c,
            self.Ky @ p["u"] - p["r"] * s,
            p["qx"] - p["delta"] * c,
            p["qy"] - p["delta"] * s,
        ])

    def _aniso_rows(self, p):
        rw = self.R @ p["sigma"]
        out = []
        for cc, B in ((p["cx"], self.Kx), (p["cy"], self.Ky)):
            b = B @ p["u"]
            out.extend([
                -(cc + rw) * b,      # -c (Bu) - R (Bu) <= 0
                (rw - cc) * b,       # R (Bu) - c (Bu) <= 0
                -rw - cc,            # -R - c <= 0
                -rw + cc,            # -R + c <= 0
                -cc * b,             # -c (Bu) <= 0
            ])
        return out, rw

    def eval_g(self, x):
        p = self.parts(x)
        rows, rw = self._aniso_rows(p)
        rows.extend([-rw, -(self.Q @ p["alpha"]), -p["delta"]])
        return np.concatenate(rows)

    def eval_M(self, x):
        return self.block(x, "r").copy()

    def eval_N(self, x):
        p = self.parts(x)
        return self.Q @ p["alpha"] - p["delta"]

    def eval_g_general(self, x):
        """The absolute-value inequality rows (everything except sign bounds)."""
        return self.eval_g(x)[: 10 * self.m]

    def jac_g_general(self, x):
        return self.jac_g(x)[: 10 * self.m]

    def _make_jh(self):
        d, m = self.d, self.m
        b = self._blocks
        t = JacobianTemplate(self.num_eq, self.num_variables)
        I = sp.identity(m, format="csr")
        t.add_const(I, 0, b["u"].start)
        t.add_const(self.KxT, 0, b["qx"].start)
        t.add_const(self.KyT, 0, b["qy"].start)
        t.add_const(self.KxT, 0, b["cx"].start)
        t.add_const(self.KyT, 0, b["cy"].start)
        t.add_const(self.Kx, d, b["u"].start)
        t.add_const(self.Ky, d + m, b["u"].start)
        t.add_const(I, d + 2 * m, b["qx"].start)
        t.add_const(I, d + 3 * m, b["qy"].start)
        t.add_var_diag("r_c", d, b["r"].start, m)
        t.add_var_diag("r_s", d + m, b["r"].start, m)
        t.add_var_diag("th_kx", d, b["theta"].start, m)
        t.add_var_diag("th_ky", d + m, b["theta"].start, m)
        t.add_var_diag("dl_c", d + 2 * m, b["delta"].start, m)
        t.add_var_diag("dl_s", d + 3 * m, b["delta"].start, m)
        t.add_var_diag("th_qx", d + 2 * m, b["theta"].start, m)
        t.add_var_diag("th_qy", d + 3 * m, b["theta"].start, m)
        return t.finalize()

    def jac_h(self, x):
        p = self.parts(x)
        c, s = np.cos(p["theta"]), np.sin(p["theta"])
        t = self._jh
        t.set_slot("r_c", -c)
        t.set_slot("r_s", -s)
        t.set_slot("th_kx", p["r"] * s)
        t.set_slot("th_ky", -p["r"] * c)
        t.set_slot("dl_c", -c)
        t.set_slot("dl_s", -s)
        t.set_slot("th_qx", p["delta"] * s)
        t.set_slot("th_qy", -p["delta"] * c)
        return t.assemble()

    def _make_jg(self):
        m = self.m
        b = self._blocks
        t = JacobianTemplate(self.num_ineq, self.num_variables)
        I = sp.identity(m, format="csr")
        row = 0
        for tag, cname, B in (("x", "cx", self.Kx), ("y", "cy", self.Ky)):
            # -(c+R) Bu: d/du row-scaled B, d/dc = -diag(Bu), d/dsigma = -diag(Bu) R'
            t.add_var_rowscaled(f"gm_u_{tag}", B, row, b["u"].start)
            t.add_var_diag(f"gm_c_{tag}", row, b[cname].start, m)
            t.add_var_rowscaled(f"gm_s_{tag}", self.R, row, b["sigma"].start)
            row += m
            t.add_var_rowscaled(f"gp_u_{tag}", B, row, b["u"].start)
            t.add_var_diag(f"gp_c_{tag}", row, b[cname].start, m)
            t.add_var_rowscaled(f"gp_s_{tag}", self.R, row, b["sigma"].start)
            row += m
            t.add_const(-I, row, b[cname].start)
            t.add_const(-self.R, row, b["sigma"].start)
            row += m
            t.add_const(I, row, b[cname].start)
            t.add_const(-self.R, row, b["sigma"].start)
            row += m
            t.add_var_rowscaled(f"gc_u_{tag}", B, row, b["u"].start)
            t.add_var_diag(f"gc_c_{tag}", row, b[cname].start, m)
            row += m
        t.add_const(-self.R, row, b["sigma"].start)
        row += m
        t.add_const(-self.Q, row, b["alpha"].start)
        row += m
        t.add_const(-I, row, b["delta"].start)
        return t.finalize()

    def jac_g(self, x):
        p = self.parts(x)
        rw = self.R @ p["sigma"]
        t = self._jg
        for tag, cname, B in (("x", "cx", self.Kx), ("y", "cy", self.Ky)):
            cc = p[cname]
            bu = B @ p["u"]
            t.set_slot(f"gm_u_{tag}", -(cc + rw))
            t.set_slot(f"gm_c_{tag}", -bu)
            t.set_slot(f"gm_s_{tag}", -bu)
            t.set_slot(f"gp_u_{tag}", rw - cc)
            t.set_slot(f"gp_c_{tag}", -bu)
            t.set_slot(f"gp_s_{tag}", bu)
            t.set_slot(f"gc_u_{tag}", -cc)
            t.set_slot(f"gc_c_{tag}", -bu)
        return t.assemble()

    def _make_jM(self):
        t = JacobianTemplate(self.num_compl, self.num_variables)
        t.add_const(sp.identity(self.m), 0, self._blocks["r"].start)
        return t.finalize()

    def jac_M(self, x):
        return self._jM.assemble()

    def _make_jN(self):
        t = JacobianTemplate(self.num_compl, self.num_variables)
        t.add_const(self.Q, 0, self._blocks["alpha"].start)
        t.add_const(-sp.identity(self.m), 0, self._blocks["delta"].start)
        return t.finalize()

    def jac_N(self, x):
        return self._jN.assemble()

    def lift(self, sol: DenoiseSolution, alpha, sigma, tol=1e-7):
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        g = np.stack([
            (self.Kx @ sol.u.ravel()).reshape(self.f.shape),
            (self.Ky @ sol.u.ravel()).reshape(self.f.shape),
        ])
        pl = lift_polar(g, sol.q, tol=tol)
        cx, cy = sol.c if sol.c is not None else (np.zeros_like(sol.u),) * 2
        return self.pack(
            u=sol.u, qx=sol.q[0], qy=sol.q[1], cx=cx, cy=cy,
            alpha=alpha, sigma=sigma, r=pl.r, delta=pl.delta, theta=pl.theta,
        )

    def unlift(self, x):
        p = self.parts(x)
        shape = self.f.shape
        out = {
            "u": p["u"].reshape(shape),
            "q": np.stack([p["qx"].reshape(shape), p["qy"].reshape(shape)]),
            "c": (p["cx"].reshape(shape), p["cy"].reshape(shape)),
            "alpha": p["alpha"].copy(),
            "sigma": p["sigma"].copy(),
        }
        gx, gy = self.Kx @ p["u"], self.Ky @ p["u"]
        weights = self.Q @ p["alpha"]
        out["align_residual"] = (p["qx"] * gx + p["qy"] * gy) - weights * np.hypot(gx, gy)
        out["bound_residual"] = np.hypot(p["qx"], p["qy"]) - weights
        return out


def build_tvai_mpcc(f, spec_iso, spec_aniso, loss="tracking"):
    if loss != "tracking":
        raise ValueError(f"unsupported loss tag {loss!r}")
    return TvaiMpcc(f, spec_iso, spec_aniso)


# ---------------------------------------------------------------------------
# second-order TGV model
# ---------------------------------------------------------------------------

class Tgv2Mpcc(MpccDescription):
    """Lifted TGV^2 model with polar and spherical changes of variables.

    x = (v, wx, wy, qx, qy, l1, l2, l3, alpha, beta, r, delta, theta,
    rho, tau, phi, azi) where (l1, l2, l3) is the packed tensor dual and
    (rho, tau, phi, azi) its spherical lift shared with the packed Ew.

    Note: the dual coupling equation is q = E^T(lambda) (the stationarity
    of the energy with respect to w); the per-pixel first-order weight does
    not enter it.
    """

    model = "tgv2"
    image_block = "v"
    nonneg_blocks = ("alpha", "beta", "r", "delta", "rho", "tau")

    def __init__(self, f, spec_alpha, spec_beta):
        super().__init__(f)
        self.spec = spec_alpha
        self.spec_beta = spec_beta
        self.P = spec_alpha.num_patches
        self.P2 = spec_beta.num_patches
        d = self.d
        self.n = d  # one packed tensor per pixel
        m, n = self.m, self.n
        for name, size in (
            ("v", d), ("wx", m), ("wy", m), ("qx", m), ("qy", m),
            ("l1", n), ("l2", n), ("l3", n),
            ("alpha", self.P), ("beta", self.P2),
            ("r", m), ("delta", m), ("theta", m),
            ("rho", n), ("tau", n), ("phi", n), ("azi", n),
        ):
            self._add_block(name, size)
        self.Kx, self.Ky = grad_matrices(self.rows, self.cols)
        self.KxT = self.Kx.T.tocsr()
        self.KyT = self.Ky.T.tocsr()
        self.E = sym_grad_matrix(self.rows, self.cols)  # (3n, 2m)
        self.ET = self.E.T.tocsr()
        self.Q = patch_matrix(spec_alpha)
        self.S = patch_matrix(spec_beta)
        self.angle_dim = m + 2 * n
        self._jh = self._make_jh()
        self._jg = self._make_jg()
        self._jM = self._make_jM()
        self._jN = self._make_jN()

    @property
    def num_eq(self):
        return self.d + 6 * self.m + 6 * self.n

    @property
    def num_ineq(self):
        return 2 * self.m + 2 * self.n

    @property
    def num_compl(self):
        return self.m + self.n

    def parts(self, x):
        return {name: x[sl] for name, sl in self._blocks.items()}

    @staticmethod
    def _n3(phi, azi):
        spn = np.sin(phi)
        return spn * np.cos(azi), spn * np.sin(azi), np.cos(phi)

    def eval_h(self, x):
        p = self.parts(x)
        c, s = np.cos(p["theta"]), np.sin(p["theta"])
        n1, n2, n3 = self._n3(p["phi"], p["azi"])
        lam = np.concatenate([p["l1"], p["l2"], p["l3"]])
        etl = self.ET @ lam  # (2m,)
        w = np.concatenate([p["wx"], p["wy"]])
        ew = self.E @ w
        m, n = self.m, self.n
        return np.concatenate([
            (p["v"] - self.f.ravel()) + self.KxT @ p["qx"] + self.KyT @ p["qy"],
            p["qx"] - etl[:m],
            p["qy"] - etl[m:],
            (self.Kx @ p["v"] - p["wx"]) - p["r"] * c,
            (self.Ky @ p["v"] - p["wy"]) - p["r"] * s,
            p["qx"] - p["delta"] * c,
            p["qy"] - p["delta"] * s,
            ew[:n] - p["rho"] * n1,
            ew[n:2 * n] - p["rho"] * n2,
            ew[2 * n:] - p["rho"] * n3,
            p["l1"] - p["tau"] * n1,
            p["l2"] - p["tau"] * n2,
            p["l3"] - p["tau"] * n3,
        ])

    def eval_g(self, x):
        p = self.parts(x)
        return np.concatenate([
            -(self.Q @ p["alpha"]), -p["delta"],
            -(self.S @ p["beta"]), -p["tau"],
        ])

    def eval_M(self, x):
        return np.concatenate([self.block(x, "r"), self.block(x, "rho")])

    def eval_N(self, x):
        p = self.parts(x)
        return np.concatenate([
            self.Q @ p["alpha"] - p["delta"],
            self.S @ p["beta"] - p["tau"],
        ])

    def _make_jh(self):
        d, m, n = self.d, self.m, self.n
        b = self._blocks
        t = JacobianTemplate(self.num_eq, self.num_variables)
        I = sp.identity(m, format="csr")
        r0 = 0
        t.add_const(I, r0, b["v"].start)
        t.add_const(self.KxT, r0, b["qx"].start)
        t.add_const(self.KyT, r0, b["qy"].start)
        r0 += d
        # w-equation rows: q - E^T lambda
        t.add_const(I, r0, b["qx"].start)
        t.add_const(I, r0 + m, b["qy"].start)
        t.add_const(-self.ET, r0, b["l1"].start)
        r0 += 2 * m
        # gradient-residual lift rows
        t.add_const(self.Kx, r0, b["v"].start)
        t.add_const(-I, r0, b["wx"].start)
        t.add_var_diag("r_c", r0, b["r"].start, m)
        t.add_var_diag("th_x", r0, b["theta"].start, m)
        r0 += m
        t.add_const(self.Ky, r0, b["v"].start)
        t.add_const(-I, r0, b["wy"].start)
        t.add_var_diag("r_s", r0, b["r"].start, m)
        t.add_var_diag("th_y", r0, b["theta"].start, m)
        r0 += m
        # dual lift rows
        t.add_const(I, r0, b["qx"].start)
        t.add_var_diag("dl_c", r0, b["delta"].start, m)
        t.add_var_diag("th_qx", r0, b["theta"].start, m)
        r0 += m
        t.add_const(I, r0, b["qy"].start)
        t.add_var_diag("dl_s", r0, b["delta"].start, m)
        t.add_var_diag("th_qy", r0, b["theta"].start, m)
        r0 += m
        # spherical lift of Ew
        t.add_const(self.E, r0, b["wx"].start)
        for k in range(3):
            t.add_var_diag(f"rho_{k}", r0 + k * n, b["rho"].start, n)
            t.add_var_diag(f"phiE_{k}", r0 + k * n, b["phi"].start, n)
            if k < 2:
                t.add_var_diag(f"aziE_{k}", r0 + k * n, b["azi"].start, n)
        r0 += 3 * n
        # spherical lift of lambda
        for k, name in enumerate(("l1", "l2", "l3")):
            t.add_const(sp.identity(n), r0 + k * n, b[name].start)
            t.add_var_diag(f"tau_{k}", r0 + k * n, b["tau"].start, n)
            t.add_var_diag(f"phiL_{k}", r0 + k * n, b["phi"].start, n)
            if k < 2:
                t.add_var_diag(f"aziL_{k}", r0 + k * n, b["azi"].start, n)
        return t.finalize()

    def jac_h(self, x):
        p = self.parts(x)
        c, s = np.cos(p["theta"]), np.sin(p["theta"])
        cp, sp_ = np.cos(p["phi"]), np.sin(p["phi"])
        ca, sa = np.cos(p["azi"]), np.sin(p["azi"])
        t = self._jh
        t.set_slot("r_c", -c)
        t.set_slot("r_s", -s)
        t.set_slot("th_x", p["r"] * s)
        t.set_slot("th_y", -p["r"] * c)
        t.set_slot("dl_c", -c)
        t.set_slot("dl_s", -s)
        t.set_slot("th_qx", p["delta"] * s)
        t.set_slot("th_qy", -p["delta"] * c)
        n3 = (sp_ * ca, sp_ * sa, cp)
        dphi = (cp * ca, cp * sa, -sp_)
        dazi = (-sp_ * sa, sp_ * ca)
        for k in range(3):
            t.set_slot(f"rho_{k}", -n3[k])
            t.set_slot(f"phiE_{k}", -p["rho"] * dphi[k])
            t.set_slot(f"tau_{k}", -n3[k])
            t.set_slot(f"phiL_{k}", -p["tau"] * dphi[k])
            if k < 2:
                t.set_slot(f"aziE_{k}", -p["rho"] * dazi[k])
                t.set_slot(f"aziL_{k}", -p["tau"] * dazi[k])
        return t.assemble()

    def _make_jg(self):
        m, n = self.m, self.n
        b = self._blocks
        t = JacobianTemplate(self.num_ineq, self.num_variables)
        t.add_const(-self.Q, 0, b["alpha"].start)
        t.add_const(-sp.identity(m), m, b["delta"].start)
        t.add_const(-self.S, 2 * m, b["beta"].start)
        t.add_const(-sp.identity(n), 2 * m + n, b["tau"].start)
        return t.finalize()

    def jac_g(self, x):
        return self._jg.assemble()

    def _make_jM(self):
        m, n = self.m, self.n
        t = JacobianTemplate(self.num_compl, self.num_variables)
        t.add_const(sp.identity(m), 0, self._blocks["r"].start)
        t.add_const(sp.identity(n), m, self._blocks["rho"].start)
        return t.finalize()

    def jac_M(self, x):
        return self._jM.assemble()

    def _make_jN(self):
        m, n = self.m, self.n
        t = JacobianTemplate(self.num_compl, self.num_variables)
        t.add_const(self.Q, 0, self._blocks["alpha"].start)
        t.add_const(-sp.identity(m), 0, self._blocks["delta"].start)
        t.add_const(self.S, m, self._blocks["beta"].start)
        t.add_const(-sp.identity(n), m, self._blocks["tau"].start)
        return t.finalize()

    def jac_N(self, x):
        return self._jN.assemble()

    def lift(self, sol: DenoiseSolution, alpha, beta, tol=1e-7):
        from .operators import sym_grad

        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        shape = self.f.shape
        kv = np.stack([
            (self.Kx @ sol.u.ravel()).reshape(shape),
            (self.Ky @ sol.u.ravel()).reshape(shape),
        ])
        g = kv - sol.w
        pl = lift_polar(g, sol.q, tol=tol)
        ew = sym_grad(sol.w)
        sl = lift_spherical(ew, sol.lam, tol=tol)
        return self.pack(
            v=sol.u, wx=sol.w[0], wy=sol.w[1], qx=sol.q[0], qy=sol.q[1],
            l1=sol.lam[0], l2=sol.lam[1], l3=sol.lam[2],
            alpha=alpha, beta=beta,
            r=pl.r, delta=pl.delta, theta=pl.theta,
            rho=sl.rho, tau=sl.tau, phi=sl.phi, azi=sl.azi,
        )

    def unlift(self, x):
        p = self.parts(x)
        shape = self.f.shape
        w = np.stack([p["wx"].reshape(shape), p["wy"].reshape(shape)])
        lam = np.stack([p[k].reshape(shape) for k in ("l1", "l2", "l3")])
        out = {
            "v": p["v"].reshape(shape),
            "w": w,
            "q": np.stack([p["qx"].reshape(shape), p["qy"].reshape(shape)]),
            "lam": lam,
            "alpha": p["alpha"].copy(),
            "beta": p["beta"].copy(),
        }
        gx = self.Kx @ p["v"] - p["wx"]
        gy = self.Ky @ p["v"] - p["wy"]
        weights = self.Q @ p["alpha"]
        out["align_residual"] = (p["qx"] * gx + p["qy"] * gy) - weights * np.hypot(gx, gy)
        out["bound_residual"] = np.hypot(p["qx"], p["qy"]) - weights
        return out


def build_tgv2_mpcc(f, spec_alpha, spec_beta, loss="tracking"):
    if loss != "tracking":
        raise ValueError(f"unsupported loss tag {loss!r}")
    return Tgv2Mpcc(f, spec_alpha, spec_beta)


def lift_point(desc, sol, alpha, sigma=None, beta=None, tol=1e-7):
    """Model-appropriate lifted point from a lower-level solution."""
    if isinstance(desc, TvMpcc):
        return desc.lift(sol, alpha, tol=tol)
    if isinstance(desc, TvaiMpcc):
        if sigma is None:
            raise ValueError("joint model needs sigma")
        return desc.lift(sol, alpha, sigma, tol=tol)
    if isinstance(desc, Tgv2Mpcc):
        if beta is None:
            raise ValueError("TGV model needs beta")
        return desc.lift(sol, alpha, beta, tol=tol)
    raise TypeError(f"unknown description {type(desc)!r}")


def unlift_point(desc, x):
    return desc.unlift(x)
