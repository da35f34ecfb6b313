"""Least-squares solver for ``nabla^A nu = -iota_X F_A`` on chart lattices.

Each chart region carries a regular lattice. Every lattice edge ``p -> q`` in
direction ``i`` contributes one block row evaluated at the edge midpoint::

    (nu_q - nu_p) / h + ad(A_i(mid)) (nu_p + nu_q) / 2 = -F(X, e_i)(mid)

which is second-order accurate and has no odd-even null modes. Charts that
overlap are tied together by soft rows ``I_b nu_b(phi(x_p)) - Ad_{g^-1}
nu_a(x_p) = 0`` at chart-``a`` nodes in the coupling annulus, where ``I_b`` is
the cubic interpolant on the chart-``b`` lattice.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import jet
from .bundle import AdjointSection, curvature
from .errors import DomainError, InvalidArgumentError, SolverFailureError

# -- lattices ----------------------------------------------------------------


class Lattice:
    """Regular lattice ``lower + h * j`` on a chart region, optionally cut to a
    disc. Inactive nodes (outside the disc) have index -1."""

    def __init__(self, region, h, chart=None):
        if not h > 0:
            raise InvalidArgumentError("grid spacing must be positive")
        self.region = region
        self.chart_name = region.chart
        self.h = float(h)
        self.lower = np.asarray(region.lower, dtype=float)
        upper = np.asarray(region.upper, dtype=float)
        self.counts = tuple(int(np.floor((u - lo) / h + 1e-9)) + 1 for lo, u in zip(self.lower, upper))
        axes = [self.lower[i] + self.h * np.arange(c) for i, c in enumerate(self.counts)]
        full = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        active = np.ones(self.counts, dtype=bool)
        if region.disc is not None:
            active = np.sum(full**2, axis=-1) <= region.disc**2 + 1e-12
        self.index = -np.ones(self.counts, dtype=np.int64)
        self.index[active] = np.arange(int(active.sum()))
        self.nodes = full[active]
        self.multi = np.argwhere(active)
        if chart is not None:
            chart.require(self.nodes)

    @property
    def dim(self):
        return len(self.counts)

    @property
    def size(self):
        return len(self.nodes)

    def edges(self, axis):
        """Index pairs ``(p, q)`` of active neighbours along ``axis``."""
        sl_p = [slice(None)] * self.dim
        sl_q = [slice(None)] * self.dim
        sl_p[axis] = slice(0, -1)
        sl_q[axis] = slice(1, None)
        p = self.index[tuple(sl_p)].ravel()
        q = self.index[tuple(sl_q)].ravel()
        keep = (p >= 0) & (q >= 0)
        return p[keep], q[keep]

    def stencil(self, x):
        """Cubic stencil origins and local coordinates for points ``x``.

        Returns ``(origin, ok)``; ``ok`` is false where the 4^n stencil leaves
        the lattice or touches an inactive node.
        """
        s = (np.asarray(jet.primal(x)) - self.lower) / self.h
        origin = np.floor(s).astype(np.int64) - 1
        counts = np.asarray(self.counts)
        ok = np.all((origin >= 0) & (origin + 3 <= counts - 1), axis=-1)
        safe = np.clip(origin, 0, np.maximum(counts - 4, 0))
        for off in itertools.product(range(4), repeat=self.dim):
            idx = tuple((safe + np.asarray(off))[..., i] for i in range(self.dim))
            ok &= self.index[idx] >= 0
        return safe, ok

    def inside(self, x, pad=0):
        """True where the cubic stencil is complete (plus ``pad`` cells)."""
        _, ok = self.stencil(x)
        if pad:
            for shift in itertools.product((-pad, pad), repeat=self.dim):
                _, o2 = self.stencil(np.asarray(x) + self.h * np.asarray(shift))
                ok &= o2
        return ok

    def sample_inside(self, n, rng, pad=1):
        """``n`` random points whose stencils (and ``pad`` neighbours) are complete."""
        hi = self.lower + self.h * (np.asarray(self.counts) - 1)
        out = []
        total = 0
        while total < n:
            cand = rng.uniform(self.lower, hi, size=(4 * n, self.dim))
            cand = cand[self.inside(cand, pad)]
            out.append(cand)
            total += len(cand)
        return np.concatenate(out)[:n]


def _lagrange_weights(t):
    # cubic Lagrange basis on nodes 0, 1, 2, 3
    return (
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    )


def interpolation_matrix(lattice, x):
    """Sparse matrix mapping node values to cubic interpolants at ``x``."""
    origin, ok = lattice.stencil(x)
    if not np.all(ok):
        raise DomainError(f"{int((~ok).sum())} points have incomplete stencils on chart {lattice.chart_name!r}")
    t = (np.asarray(x) - lattice.lower) / lattice.h - origin
    w = [np.stack(_lagrange_weights(t[:, i]), axis=-1) for i in range(lattice.dim)]
    rows, cols, vals = [], [], []
    for off in itertools.product(range(4), repeat=lattice.dim):
        idx = lattice.index[tuple(origin[:, i] + off[i] for i in range(lattice.dim))]
        wt = np.prod([w[i][:, off[i]] for i in range(lattice.dim)], axis=0)
        rows.append(np.arange(len(x)))
        cols.append(idx)
        vals.append(wt)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(len(x), lattice.size))


class GridSection(AdjointSection):
    """Adjoint section given by lattice values and cubic interpolation.

    Evaluation is jet-aware: the stencil is chosen from the primal point and
    the Lagrange weights are computed in jet arithmetic, so derivatives are
    those of the interpolant.
    """

    def __init__(self, lattices, values, name="grid"):
        self.lattices = dict(lattices)
        self.values = {c: np.asarray(v, dtype=float) for c, v in values.items()}
        reps = {c: (lambda x, c=c: self._eval(c, x)) for c in self.lattices}
        super().__init__(reps, name)

    def _eval(self, chart, x):
        lat = self.lattices[chart]
        vals = self.values[chart]
        origin, ok = lat.stencil(x)
        if not np.all(ok):
            raise DomainError(f"point outside the solved region of chart {chart!r}")
        t = (x - lat.lower) / lat.h - origin
        w = [_lagrange_weights(t[..., i]) for i in range(lat.dim)]
        out = 0.0
        for off in itertools.product(range(4), repeat=lat.dim):
            idx = tuple(origin[..., i] + off[i] for i in range(lat.dim))
            wt = w[0][off[0]]
            for i in range(1, lat.dim):
                wt = wt * w[i][off[i]]
            out = out + jet.expand_dims(wt, -1) * vals[idx]
        return out

    def _combine(self, other, op, name):
        out = AdjointSection._combine(AdjointSection(self.reps, self.name), other, op, name)
        out.lattices = self.lattices
        return out

    def __rmul__(self, s):
        out = s * AdjointSection(self.reps, self.name)
        out.lattices = self.lattices
        return out


# -- the problem and its linear system ---------------------------------------


@dataclass(eq=False)
class MomentMapProblem:
    """``nabla^A nu = -iota_X F_A`` on the lattices of ``regions``.

    ``X`` may be ``None`` (parallel sections). ``coupling_weight`` scales the
    overlap rows; ``overlap`` is the annulus ``(r_min, r_max)`` of coupling
    nodes (radius measured in the source chart).
    """

    bundle: object
    X: object
    regions: tuple
    h: float
    overlap: tuple = None
    coupling_weight: float = 1.0
    max_iter: int = 20000
    tol: float = 1e-11

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidArgumentError("grid spacing must be positive")
        self.lattices = {r.chart: Lattice(r, self.h, self.bundle.base.charts[r.chart]) for r in self.regions}

    @classmethod
    def for_example(cls, example, X, h, **kw):
        return cls(example.bundle, X, example.solve_regions, h, example.overlap_annulus, **kw)


@dataclass(eq=False)
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    offsets: dict
    row_blocks: dict
    curvature_sup: float

    @property
    def shape(self):
        return self.matrix.shape


def _gram_factor(group):
    return np.linalg.cholesky(group.gram).T


def assemble(problem):
    """Sparse block system for the problem (rows weighted by the gram factor)."""
    bundle = problem.bundle
    grp = bundle.group
    d = grp.dim
    h = problem.h
    R = _gram_factor(grp)
    offsets = {}
    total = 0
    for c, lat in problem.lattices.items():
        offsets[c] = total
        total += lat.size * d
    blocks, rhs_parts, row_blocks = [], [], {}
    fsup = 0.0
    nrows = 0
    eye = np.eye(d)
    for c, lat in problem.lattices.items():
        off = offsets[c]
        for axis in range(lat.dim):
            p, q = lat.edges(axis)
            if len(p) == 0:
                continue
            mid = 0.5 * (lat.nodes[p] + lat.nodes[q])
            ai = bundle.A(c)(mid)[:, axis, :]
            adm = grp.ad_matrix(ai)  # (m, d, d)
            F = curvature(bundle, c, mid)
            fsup = max(fsup, float(np.max(np.abs(F))))
            if problem.X is None:
                rhs = np.zeros((len(p), d))
            else:
                Xm = problem.X.on(c)(mid)
                rhs = -np.einsum("mj,mjia->mia", Xm, F)[:, axis, :]
            # coefficient blocks for nu_p and nu_q
            cp = -eye / h + 0.5 * adm
            cq = eye / h + 0.5 * adm
            cp = np.einsum("ab,mbc->mac", R, cp)
            cq = np.einsum("ab,mbc->mac", R, cq)
            m = len(p)
            row = nrows + np.arange(m)[:, None, None] * d + np.arange(d)[None, :, None]
            row = np.broadcast_to(row, (m, d, d))
            colp = off + p[:, None, None] * d + np.arange(d)[None, None, :]
            colq = off + q[:, None, None] * d + np.arange(d)[None, None, :]
            blocks.append((row.ravel(), np.broadcast_to(colp, (m, d, d)).ravel(), cp.ravel()))
            blocks.append((row.ravel(), np.broadcast_to(colq, (m, d, d)).ravel(), cq.ravel()))
            rhs_parts.append((rhs @ R.T).ravel())
            row_blocks[(c, f"edges-{axis}")] = (nrows, nrows + m * d)
            nrows += m * d
    # soft gluing across chart overlaps
    if problem.overlap is not None and len(problem.lattices) > 1:
        r_min, r_max = problem.overlap
        w = problem.coupling_weight
        for (a, b), _ in bundle.transitions.items():
            if a not in problem.lattices or b not in problem.lattices:
                continue
            lat_a, lat_b = problem.lattices[a], problem.lattices[b]
            radius = np.linalg.norm(lat_a.nodes, axis=-1)
            sel = np.nonzero((radius > r_min) & (radius < r_max))[0]
            y = bundle.base.transition(a, b).forward(lat_a.nodes[sel])
            ok = lat_b.inside(y)
            sel, y = sel[ok], y[ok]
            if len(sel) == 0:
                continue
            interp = interpolation_matrix(lat_b, y).tocoo()
            m = len(sel)
            # R I_b nu_b(y) - R Ad_{g^-1} nu_a(x_p)
            ib = sp.kron(interp, R, format="coo")
            g = bundle.g(a, b)(lat_a.nodes[sel])
            adg = np.einsum("ab,mbc->mac", R, grp.Ad_matrix(grp.inverse(g)))
            row = nrows + np.arange(m)[:, None, None] * d + np.arange(d)[None, :, None]
            colp = offsets[a] + sel[:, None, None] * d + np.arange(d)[None, None, :]
            blocks.append((nrows + ib.row, offsets[b] + ib.col, w * ib.data))
            blocks.append((np.broadcast_to(row, (m, d, d)).ravel(), np.broadcast_to(colp, (m, d, d)).ravel(), (-w * adg).ravel()))
            rhs_parts.append(np.zeros(m * d))
            row_blocks[(a, f"glue-{b}")] = (nrows, nrows + m * d)
            nrows += m * d
    rows = np.concatenate([bl[0] for bl in blocks])
    cols = np.concatenate([bl[1] for bl in blocks])
    vals = np.concatenate([bl[2] for bl in blocks])
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(nrows, total))
    mat.sum_duplicates()
    return LinearSystem(mat, np.concatenate(rhs_parts), offsets, row_blocks, fsup)


# -- CGLS --------------------------------------------------------------------


@dataclass
class CGLSResult:
    x: np.ndarray
    iterations: int
    converged: bool
    history: list


def cgls(A, b, x0=None, tol=1e-11, max_iter=20000, record_every=10):
    """Conjugate gradients on the normal equations ``A^T A x = A^T b``.

    Stops when ``|A^T r| <= tol |A^T b|``. Started from zero the iterates stay
    in the row space of ``A``, so the limit is the minimum-norm minimiser.
    """
    x = np.zeros(A.shape[1]) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    s = A.T @ r
    p = s.copy()
    gamma = float(s @ s)
    norm0 = np.sqrt(float((A.T @ b) @ (A.T @ b)))
    history = [np.sqrt(gamma)]
    if norm0 == 0.0 or np.sqrt(gamma) <= tol * norm0:
        return CGLSResult(x, 0, True, history)
    for it in range(1, max_iter + 1):
        q = A @ p
        alpha = gamma / float(q @ q)
        x += alpha * p
        r -= alpha * q
        s = A.T @ r
        gamma_new = float(s @ s)
        if it % record_every == 0:
            history.append(np.sqrt(gamma_new))
        if np.sqrt(gamma_new) <= tol * norm0:
            history.append(np.sqrt(gamma_new))
            return CGLSResult(x, it, True, history)
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    return CGLSResult(x, max_iter, False, history)


# -- solving -----------------------------------------------------------------


@dataclass(eq=False)
class DiscreteSolution:
    problem: MomentMapProblem
    section: GridSection
    lsq_residual: float
    lsq_residual_max: float
    continuum_residual: float
    continuum_residual_mean: float
    threshold: float
    iterations: int
    history: list
    kernel_dim: int = None
    curvature_sup: float = 0.0

    @property
    def solvable(self):
        return self.continuum_residual <= self.threshold

    @property
    def values(self):
        return self.section.values

    def summary(self):
        return {
            "h": self.problem.h,
            "charts": {c: {"lower": list(map(float, lat.lower)), "counts": list(lat.counts), "nodes": lat.size} for c, lat in self.problem.lattices.items()},
            "lsq_residual": self.lsq_residual,
            "lsq_residual_max": self.lsq_residual_max,
            "continuum_residual": self.continuum_residual,
            "continuum_residual_mean": self.continuum_residual_mean,
            "threshold": self.threshold,
            "solvable": self.solvable,
            "iterations": self.iterations,
            "kernel_dim": self.kernel_dim,
        }


def _section_from_vector(problem, system, vec, name):
    d = problem.bundle.group.dim
    values = {}
    for c, lat in problem.lattices.items():
        off = system.offsets[c]
        nodal = vec[off : off + lat.size * d].reshape(lat.size, d)
        full = np.full(lat.counts + (d,), np.nan)
        full[tuple(lat.multi.T)] = nodal
        values[c] = full
    return GridSection(problem.lattices, values, name)


def moment_residual_field(bundle, X, nu, chart, x):
    """``nabla^A nu + iota_X F_A`` as an algebra-valued form ``(..., n, d)``."""
    from .bundle import contract_curvature, covariant_derivative

    out = covariant_derivative(bundle, nu, chart, x)
    if X is not None:
        out = out + contract_curvature(curvature(bundle, chart, x), X.on(chart)(x))
    return out


def _algebra_norm(group, v):
    return np.sqrt(np.maximum(np.einsum("...a,ab,...b->...", v, group.gram, v), 0.0))


def continuum_residual(problem, section, n_samples=500, seed=0):
    """Max and mean of ``|nabla^A nu + iota_X F_A|`` at off-grid points."""
    rng = np.random.default_rng(seed)
    bundle = problem.bundle
    worst, vals = 0.0, []
    for c, lat in problem.lattices.items():
        x = lat.sample_inside(n_samples, rng)
        r = moment_residual_field(bundle, problem.X, section, c, x)
        norms = np.max(_algebra_norm(bundle.group, r), axis=-1)
        worst = max(worst, float(np.max(norms)))
        vals.append(norms)
    return worst, float(np.mean(np.concatenate(vals)))


def solve(problem, n_offgrid=500, seed=0, calibration=10.0, kernel=False, x0=None):
    """Least-squares moment map on the lattices; see :class:`DiscreteSolution`.

    Solvability: the continuum residual must sit below ``calibration *
    sup|F| * h^2`` (a floor that does not shrink with ``h`` means the
    equation has no solution).
    """
    system = assemble(problem)
    res = cgls(system.matrix, system.rhs, x0=x0, tol=problem.tol, max_iter=problem.max_iter)
    if not res.converged:
        raise SolverFailureError(f"CGLS did not converge in {problem.max_iter} iterations", res.history)
    section = _section_from_vector(problem, system, res.x, "moment-solution")
    r = system.matrix @ res.x - system.rhs
    cmax, cmean = continuum_residual(problem, section, n_offgrid, seed)
    threshold = max(calibration * system.curvature_sup * problem.h**2, 1e-10)
    sol = DiscreteSolution(
        problem,
        section,
        float(np.linalg.norm(r)),
        float(np.max(np.abs(r))) if r.size else 0.0,
        cmax,
        cmean,
        threshold,
        res.iterations,
        res.history,
        curvature_sup=system.curvature_sup,
    )
    if kernel:
        sol.kernel_dim = parallel_kernel(problem.bundle, problem.regions, problem.h, problem.overlap, problem.coupling_weight).dim
    sol.vector = res.x
    sol.system = system
    return sol


# -- the parallel kernel -----------------------------------------------------


def smallest_eigenpairs(S, k, block=None, iterations=40, seed=0):
    """Lowest ``k`` eigenpairs of a sparse symmetric PSD matrix.

    Block inverse iteration with a slightly shifted sparse LU, then a
    Rayleigh-Ritz step. Unlike single-vector Lanczos this resolves repeated
    (e.g. several zero) eigenvalues.
    """
    N = S.shape[0]
    p = min(N, block or k + 4)
    shift = 1e-10 * max(1.0, float(abs(S).max()))
    lu = splu((S + shift * sp.identity(N, format="csc")).tocsc())
    V, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((N, p)))
    for _ in range(iterations):
        V, _ = np.linalg.qr(lu.solve(V))
    H = V.T @ (S @ V)
    w, U = np.linalg.eigh(0.5 * (H + H.T))
    return w[:k], (V @ U)[:, :k]


@dataclass(eq=False)
class ParallelKernel:
    sections: list
    singular_values: np.ndarray
    threshold: float
    vectors: np.ndarray

    @property
    def dim(self):
        return len(self.sections)


def parallel_kernel(bundle, regions, h, overlap=None, coupling_weight=1.0, n_probe=6, scale=10.0):
    """Discrete solutions of ``nabla^A nu = 0``.

    The smallest singular values of the assembled operator come from
    :func:`smallest_eigenpairs` of ``M^T M``; those below ``scale * h^2`` span
    the kernel. Basis vectors are orthonormal for the discrete L2 product
    ``h^n sum <<nu, nu>>``.
    """
    problem = MomentMapProblem(bundle, None, regions, h, overlap, coupling_weight)
    system = assemble(problem)
    M = system.matrix
    N = M.shape[1]
    k = min(n_probe, N - 1)
    normal = (M.T @ M).tocsc()
    if N <= 600:
        evals, evecs = np.linalg.eigh(normal.toarray())
        evals, evecs = evals[:k], evecs[:, :k]
    else:
        evals, evecs = smallest_eigenpairs(normal, k)
    order = np.argsort(evals)
    evals, evecs = evals[order], evecs[:, order]
    sv = np.sqrt(np.maximum(evals, 0.0))
    threshold = scale * h**2
    keep = sv <= threshold
    vecs = evecs[:, keep]
    n = bundle.dim
    # orthonormal for h^n sum <<.,.>>: orthonormalise (I x R) v h^(n/2), then map back
    R = _gram_factor(bundle.group)
    Rinv = np.linalg.inv(R)
    d = bundle.group.dim
    if vecs.shape[1]:
        cols = vecs.shape[1]
        weighted = np.einsum("ab,nbk->nak", R, vecs.reshape(-1, d, cols)).reshape(vecs.shape) * h ** (n / 2)
        q, _ = np.linalg.qr(weighted)
        vecs = np.einsum("ab,nbk->nak", Rinv, q.reshape(-1, d, cols)).reshape(q.shape) / h ** (n / 2)
    sections = [_section_from_vector(problem, system, vecs[:, j], f"parallel-{j}") for j in range(vecs.shape[1])]
    return ParallelKernel(sections, sv, threshold, vecs)


# -- export ------------------------------------------------------------------


def solution_csv(solution):
    """CSV text: chart, node coordinates, nu components (one node per line)."""
    lat0 = next(iter(solution.problem.lattices.values()))
    n = lat0.dim
    d = solution.problem.bundle.group.dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["chart"] + [f"x{i + 1}" for i in range(n)] + [f"nu{a + 1}" for a in range(d)])
    for c, lat in solution.problem.lattices.items():
        vals = solution.values[c][tuple(lat.multi.T)]
        for node, v in zip(lat.nodes, vals):
            w.writerow([c] + [repr(float(t)) for t in node] + [repr(float(t)) for t in v])
    return buf.getvalue()


def solution_json(solution, extra=None):
    data = solution.summary()
    if extra:
        data.update(extra)
    return json.dumps(data, indent=2, sort_keys=True)
