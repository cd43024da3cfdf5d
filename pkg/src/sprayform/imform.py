"""Infinitesimally multiplicative form data and associated linear forms.

An IM pair of degree k on an algebroid chart assigns to each frame section
e_j a (k-1)-form l(e_j) and a k-form nu(e_j) on the base, subject to three
compatibility equations (checked by ``im_residuals``, never assumed):

    nu([a,b]) = L_{rho(a)} nu(b) - i_{rho(b)} d nu(a)
    l([a,b])  = L_{rho(a)} l(b)  - i_{rho(b)} d l(a) - i_{rho(b)} nu(a)
    i_{rho(a)} l(b) = - i_{rho(b)} l(a)

The associated fiberwise-linear k-form on the total space is, in chart
coordinates (x; y) with D_j := d(l(e_j)) + nu(e_j),

    Lambda = sum_j y^j (D_j)_I dx^I  +  sum_j (l(e_j))_{I'} dy^j ^ dx^{I'}

and the pair is recovered from Lambda by restricting the interior product
with the constant vertical e_j to the zero section (giving l) and by pulling
Lambda back along the section (giving D).

Sign convention, fixed here once: the canonical 2-form built from the
Poisson pair (l, nu) = (-id, 0) is Lambda = sum_i dx^i ^ dy^i, i.e. at a
point of the zero section  Lambda(v + a, w + b) = <b | v> - <a | w>
for horizontal v, w and vertical a, b.  Every sign-sensitive identity in the
package references this convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .errors import DimensionError
from .report import CheckReport

__all__ = ["IMFormData", "ScalarSpencer", "LinearForm", "linear_form",
           "im_residuals", "d_IM", "jacobi_linear_form",
           "poisson_im_pair", "dirac_im_pair", "exact_im_pair",
           "im_pair_from_covector_map"]


@dataclass
class IMFormData:
    """Degree-k IM pair on a chart: per-frame-section forms (l, nu)."""

    chart: object
    degree: int
    l: list      # r FormFields of degree k-1 over the base variables
    nu: list     # r FormFields of degree k over the base variables

    def __post_init__(self):
        r = self.chart.r
        if len(self.l) != r or len(self.nu) != r:
            raise DimensionError("need one (l, nu) pair per frame section")
        for f in self.l:
            if f.degree != self.degree - 1:
                raise DimensionError("l must have degree k-1")
        for f in self.nu:
            if f.degree != self.degree:
                raise DimensionError("nu must have degree k")


@dataclass
class LinearForm:
    """Fiberwise-linear k-form on the total space, with Expr components."""

    chart: object
    degree: int
    form: ex.FormField   # over chart.total_vars

    def exprs_dense(self):
        return self.form.exprs_dense()

    def differential(self):
        return LinearForm(self.chart, self.degree + 1, self.form.d())

    def at(self, point):
        return self.form.at(point)


def linear_form(data):
    """Associated linear form of an IM pair, by the coordinate formula."""
    A = data.chart
    k = data.degree
    total = A.total_vars
    n = A.n
    comps = {}
    for j in range(A.r):
        Dj = data.l[j].d() + data.nu[j]
        yj = ex.Var(A.ys[j])
        for I, e in Dj.components.items():
            term = ex.mul(yj, e)
            comps[I] = ex.add(comps.get(I, ex.ZERO), term)
        sign = ex.Const((-1.0) ** (k - 1))
        for I, e in data.l[j].components.items():
            K = tuple(I) + (n + j,)
            term = ex.mul(sign, e)
            comps[K] = ex.add(comps.get(K, ex.ZERO), term)
    field = ex.FormField(total, k, comps)
    return LinearForm(A, k, field)


def recover_im_pair(lf):
    """Invert ``linear_form``: (l, nu) from a LinearForm, symbolically.

    l(e_j) is the interior product with the constant vertical e_j restricted
    to the zero section; D(e_j) is the pullback of Lambda along the constant
    section e_j, and nu(e_j) = D(e_j) - d l(e_j).
    """
    A = lf.chart
    k = lf.degree
    n, r = A.n, A.r
    zero_fiber = {A.ys[j]: ex.ZERO for j in range(r)}
    ls, nus = [], []
    for j in range(r):
        # i_{e_j} Lambda restricted to y = 0, keeping only dx-components
        lcomp = {}
        for I, e in lf.form.components.items():
            if n + j in I:
                pos = I.index(n + j)
                J = I[:pos] + I[pos + 1:]
                if any(idx >= n for idx in J):
                    continue
                coeff = ex.subst(ex.mul(ex.Const((-1.0) ** pos), e), zero_fiber)
                lcomp[J] = ex.add(lcomp.get(J, ex.ZERO), coeff)
        ls.append(ex.FormField(A.xs, k - 1, lcomp))
        # pullback along the constant section y = e_j: dy -> 0, y_m -> delta_mj
        sub = {A.ys[m]: (ex.ONE if m == j else ex.ZERO) for m in range(r)}
        Dcomp = {}
        for I, e in lf.form.components.items():
            if any(idx >= n for idx in I):
                continue
            Dcomp[I] = ex.add(Dcomp.get(I, ex.ZERO), ex.subst(e, sub))
        Dj = ex.FormField(A.xs, k, Dcomp)
        nus.append(Dj - ls[-1].d())
    return IMFormData(A, k, ls, nus)


def d_IM(data):
    """Differential on IM pairs: (l, nu) -> (nu, 0), degree k -> k+1."""
    A = data.chart
    zero = [ex.FormField(A.xs, data.degree + 1, {}) for _ in range(A.r)]
    return IMFormData(A, data.degree + 1, list(data.nu), zero)


def im_residuals(A, data, samples=60, seed=313, tol=1e-8):
    """Pointwise residuals of the three compatibility equations on frame pairs.

    Lie derivatives are taken symbolically through the Cartan formula, so the
    residual floor is set by evaluation roundoff, not differencing.
    """
    report = CheckReport(environment={"samples": samples, "seed": seed})
    r = A.r
    k = data.degree
    pts = A.sample_base_points(samples, seed, scale=0.9)

    rho = [A.anchor_of_section(i) for i in range(r)]
    dl = [f.d() for f in data.l]
    dnu = [f.d() for f in data.nu]

    # Symbolic pieces independent of the bracket
    eq1_pieces = [[data.nu[j].lie(rho[i]) - dnu[i].interior(rho[j])
                   for j in range(r)] for i in range(r)]
    eq2_pieces = [[data.l[j].lie(rho[i]) - dl[i].interior(rho[j])
                   - data.nu[i].interior(rho[j])
                   for j in range(r)] for i in range(r)]
    if k >= 2:
        eq3_pieces = [[data.l[j].interior(rho[i]) + data.l[i].interior(rho[j])
                       for j in range(r)] for i in range(r)]
    else:
        eq3_pieces = None

    res = {"covariance_nu": 0.0, "covariance_l": 0.0, "anchor_antisymmetry": 0.0}
    worst = {key: None for key in res}
    for x in pts:
        c = A.structure.values(x)
        nu_vals = np.stack([f.at(x) for f in data.nu])     # (r, nC_k)
        l_vals = np.stack([f.at(x) for f in data.l])       # (r, nC_{k-1})
        for i in range(r):
            for j in range(r):
                bracket_nu = c[i, j] @ nu_vals
                m = float(np.max(np.abs(bracket_nu - eq1_pieces[i][j].at(x)))) \
                    if bracket_nu.size else 0.0
                if m > res["covariance_nu"]:
                    res["covariance_nu"], worst["covariance_nu"] = m, x
                bracket_l = c[i, j] @ l_vals
                m = float(np.max(np.abs(bracket_l - eq2_pieces[i][j].at(x)))) \
                    if bracket_l.size else 0.0
                if m > res["covariance_l"]:
                    res["covariance_l"], worst["covariance_l"] = m, x
                if eq3_pieces is not None:
                    vals = eq3_pieces[i][j].at(x)
                    m = float(np.max(np.abs(vals))) if vals.size else 0.0
                    if m > res["anchor_antisymmetry"]:
                        res["anchor_antisymmetry"], worst["anchor_antisymmetry"] = m, x
    for name in ("covariance_nu", "covariance_l", "anchor_antisymmetry"):
        report.add(name, res[name], tol, worst[name])
    return report


# ---------------------------------------------------------------------------
# Ready-made pairs


def im_pair_from_covector_map(A, lmat, negate=False):
    """Degree-2 pair (l, 0) from an n x n Expr matrix acting on covectors.

    ``lmat[i][j]`` is the coefficient of dx^i in l(dx^j); the frame of A must
    be the coordinate coframe (cotangent chart).  ``negate`` builds (-l, 0).
    """
    n = A.n
    sign = -1.0 if negate else 1.0
    ls = []
    for j in range(n):
        comps = {(i,): ex.mul(ex.Const(sign), lmat[i][j]) for i in range(n)
                 if not lmat[i][j].is_zero}
        ls.append(ex.FormField(A.xs, 1, comps))
    nus = [ex.FormField(A.xs, 2, {}) for _ in range(n)]
    return IMFormData(A, 2, ls, nus)


def poisson_im_pair(A):
    """The canonical closed pair (-id, 0) on a cotangent chart."""
    n = A.n
    ident = [[ex.ONE if i == j else ex.ZERO for j in range(n)] for i in range(n)]
    return im_pair_from_covector_map(A, ident, negate=True)


def dirac_im_pair(A):
    """The canonical pair on a Dirac chart: l(v+alpha) = -alpha, nu = i_v H."""
    fr = A.frame
    n, r = A.n, A.r
    ls, nus = [], []
    for i in range(r):
        ls.append(ex.FormField(A.xs, 1,
                               {(a,): ex.neg(fr.covectors[i][a]) for a in range(n)
                                if not fr.covectors[i][a].is_zero}))
        v = ex.VectorField(A.xs, fr.vectors[i])
        nus.append(fr.H.interior(v))
    return IMFormData(A, 2, ls, nus)


def exact_im_pair(A, varpi):
    """The pair (varpi-flat o rho, (d varpi)-flat o rho) for a k-form varpi."""
    k = varpi.degree
    dvarpi = varpi.d()
    ls, nus = [], []
    for i in range(A.r):
        rho_i = A.anchor_of_section(i)
        ls.append(varpi.interior(rho_i))
        nus.append(dvarpi.interior(rho_i))
    return IMFormData(A, k, ls, nus)


# ---------------------------------------------------------------------------
# Jacobi (trivialized line bundle) Spencer data


@dataclass
class ScalarSpencer:
    """Canonical first-jet Spencer data on a trivialized-line jacobi chart.

    l = pr (the u-component), D(u, a) = du - a, and the transport cocycle
    delta(u, a) = <R, a>.  The Leibniz identity D(f s) = f D(s) + df ^ l(s)
    is checked on coordinate multiples by ``leibniz_residual``.
    """

    chart: object

    def l_of_section(self, f, alpha):
        return f

    def D_of_section(self, f, alpha):
        """D(f, alpha) = df - alpha as a 1-FormField; inputs are Exprs."""
        xs = self.chart.xs
        comps = {}
        for a, name in enumerate(xs):
            comps[(a,)] = ex.sub(ex.partial(f, name), alpha[a])
        return ex.FormField(xs, 1, comps)

    def cocycle(self):
        from .algebroid import jacobi_cocycle
        return jacobi_cocycle(self.chart)

    def leibniz_residual(self, samples=25, seed=11):
        """max | D(f s) - f D(s) - df ^ l(s) | on coordinate multiples."""
        A = self.chart
        xs = A.xs
        worst = 0.0
        pts = A.sample_base_points(samples, seed, scale=0.9)
        # frame sections: e_0 = (1, 0), e_i = (0, dx^i)
        frames = [(ex.ONE, [ex.ZERO] * A.n)]
        for i in range(A.n):
            frames.append((ex.ZERO, [ex.ONE if a == i else ex.ZERO
                                     for a in range(A.n)]))
        for b in range(A.n):
            f = ex.Var(xs[b])
            df = ex.FormField(xs, 1, {(b,): ex.ONE})
            for (u, alpha) in frames:
                fu = ex.mul(f, u)
                falpha = [ex.mul(f, a) for a in alpha]
                lhs = self.D_of_section(fu, falpha)
                rhs = self.D_of_section(u, alpha).scale(f) + \
                    df.scale(self.l_of_section(u, alpha))
                diff = lhs - rhs
                for x in pts:
                    worst = max(worst, diff.max_abs_at(x))
        return worst


def jacobi_linear_form(A):
    """The trivialized contact form Lambda = du - sum_i p_i dx^i."""
    n = A.n
    total = A.total_vars
    comps = {(n,): ex.ONE}  # du  (u is the first fiber coordinate)
    for i in range(n):
        comps[(i,)] = ex.neg(ex.Var(A.ys[1 + i]))
    return LinearForm(A, 1, ex.FormField(total, 1, comps))
