"""Compact matrix Lie groups: U(1), SO(n) and SU(2).

Complex groups are realified (a complex m x m matrix becomes a real
2m x 2m matrix) so that one real linear-algebra kernel serves every group.
Algebra elements are coefficient vectors of shape ``(..., d)`` in the basis
``E_1..E_d``; group elements are matrices of shape ``(..., m, m)``. All
operations accept jets from :mod:`gauge_killing.jet` where that makes sense.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jet
from .errors import ConsistencyError, InvalidArgumentError

FAMILIES = ("unitary", "special-orthogonal", "special-unitary")


def realify(z):
    """Real 2m x 2m form of a complex m x m matrix."""
    z = np.asarray(z, dtype=complex)
    re, im = z.real, z.imag
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def complexify(m):
    """Inverse of :func:`realify` (reads the left block column)."""
    m = np.asarray(m)
    h = m.shape[-1] // 2
    return m[..., :h, :h] + 1j * m[..., h:, :h]


@dataclass(frozen=True, eq=False)
class LieGroupModel:
    """A compact matrix group with a basis of its algebra and an
    Ad-invariant inner product ``gram``."""

    name: str
    family: str
    basis: np.ndarray
    gram: np.ndarray = None
    complex_size: int = 0
    structure_constants: np.ndarray = field(init=False)
    _dual: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(f"unknown group family {self.family!r}")
        basis = np.asarray(self.basis, dtype=float)
        object.__setattr__(self, "basis", basis)
        frob = np.einsum("imn,jmn->ij", basis, basis)
        object.__setattr__(self, "_dual", np.einsum("ij,jmn->imn", np.linalg.inv(frob), basis))
        if self.gram is None:
            trace_form = -np.einsum("imn,jnm->ij", basis, basis)
            object.__setattr__(self, "gram", trace_form / trace_form[0, 0])
        comm = np.einsum("imn,jnp->ijmp", basis, basis)
        comm = comm - np.swapaxes(comm, 0, 1)
        object.__setattr__(self, "structure_constants", np.einsum("ijmn,kmn->ijk", comm, self._dual))

    @property
    def matrix_size(self):
        return self.basis.shape[-1]

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def is_abelian(self):
        return bool(np.all(np.abs(self.structure_constants) < 1e-14))

    # -- algebra ---------------------------------------------------------

    def hat(self, a):
        """Matrix representative of coefficient vector(s) ``a``."""
        return jet.einsum("...i,imn->...mn", a, self.basis)

    def vee(self, m, check=True):
        """Basis coefficients of a matrix in the algebra.

        Raises :class:`ConsistencyError` when ``m`` is not in the span of the
        basis (projection residual above 1e-10 relative).
        """
        coeffs = jet.einsum("...mn,imn->...i", m, self._dual)
        if check:
            mv = jet.primal(m)
            back = np.einsum("...i,imn->...mn", jet.primal(coeffs), self.basis)
            scale = 1.0 + np.max(np.abs(mv)) if np.size(mv) else 1.0
            err = np.max(np.abs(back - mv)) if np.size(mv) else 0.0
            if err > 1e-10 * scale:
                raise ConsistencyError(f"matrix not in {self.name} algebra (residual {err:.3e})")
        return coeffs

    def bracket(self, a, b):
        return jet.einsum("...i,...j,ijk->...k", a, b, self.structure_constants)

    def inner(self, a, b):
        return jet.einsum("...i,ij,...j->...", a, self.gram, b)

    def norm(self, a):
        return np.sqrt(np.maximum(self.inner(a, a), 0.0))

    def ad_matrix(self, a):
        """Matrix of ``b -> [a, b]`` acting on coefficient vectors."""
        return jet.einsum("...i,ijk->...kj", a, self.structure_constants)

    # -- group -----------------------------------------------------------

    def identity(self, batch=()):
        return np.broadcast_to(np.eye(self.matrix_size), tuple(batch) + (self.matrix_size,) * 2).copy()

    def exp(self, a):
        if not np.all(np.isfinite(jet.primal(a))):
            raise InvalidArgumentError("exp of a non-finite algebra element")
        return jet.expm(self.hat(a))

    def inverse(self, k):
        # realified compact groups are orthogonal
        return jet.transpose(k)

    def Ad(self, k, a, check=False):
        """Coefficients of ``k hat(a) k^-1``."""
        return self.vee(k @ self.hat(a) @ self.inverse(k), check=check)

    def Ad_matrix(self, k):
        """Matrix of ``Ad_k`` on coefficient vectors, shape ``(..., d, d)``."""
        conj = k[..., None, :, :] @ self.basis @ self.inverse(k)[..., None, :, :]
        return jet.swapaxes(jet.einsum("...imn,jmn->...ij", conj, self._dual), -1, -2)

    def group_residual(self, k):
        """Defining-constraint residual of group element(s) ``k``."""
        k = np.asarray(jet.primal(k), dtype=float)
        eye = np.eye(self.matrix_size)
        res = np.max(np.abs(np.swapaxes(k, -1, -2) @ k - eye), axis=(-2, -1))
        if self.family == "special-orthogonal":
            res = np.maximum(res, np.abs(np.linalg.det(k) - 1.0))
        else:
            h = self.matrix_size // 2
            # must commute with the complex structure
            jmat = np.zeros((2 * h, 2 * h))
            jmat[:h, h:] = -np.eye(h)
            jmat[h:, :h] = np.eye(h)
            res = np.maximum(res, np.max(np.abs(k @ jmat - jmat @ k), axis=(-2, -1)))
            if self.family == "special-unitary":
                res = np.maximum(res, np.abs(np.linalg.det(complexify(k)) - 1.0))
        return res

    def check_group(self, k, tol=1e-10):
        res = float(np.max(self.group_residual(k)))
        if res > tol:
            raise InvalidArgumentError(f"not an element of {self.name} (residual {res:.3e})")
        return res

    def algebra_residual(self):
        """Largest violation of the family constraint by the basis."""
        e = self.basis
        res = np.max(np.abs(e + np.swapaxes(e, -1, -2)))
        if self.family != "special-orthogonal":
            res = max(res, np.max(np.abs(realify(complexify(e)) - e)))
            if self.family == "special-unitary":
                res = max(res, np.max(np.abs(np.trace(complexify(e), axis1=-2, axis2=-1))))
        return float(res)

    def log(self, k, tol=1e-13):
        """Logarithm near the identity (``|k - I| < 1``) by inverse scaling.

        Square roots are taken with the Denman-Beavers iteration until the
        argument is within 0.25 of the identity, then the Mercator series is
        summed.
        """
        k = np.asarray(k, dtype=float)
        eye = np.eye(self.matrix_size)
        if np.max(np.abs(k - eye)) >= 1.0:
            raise InvalidArgumentError("log is only provided near the identity")
        s = 0
        y = k
        while np.max(np.abs(y - eye)) > 0.25:
            z = np.broadcast_to(eye, y.shape).copy()
            for _ in range(50):
                y_next = 0.5 * (y + np.linalg.inv(z))
                z = 0.5 * (z + np.linalg.inv(y))
                converged = np.max(np.abs(y_next - y)) < tol
                y = y_next
                if converged:
                    break
            s += 1
        x = y - eye
        term = np.broadcast_to(eye, x.shape).copy()
        out = np.zeros_like(x)
        for j in range(1, 60):
            term = term @ x
            out = out + ((-1) ** (j + 1)) * term / j
        return self.vee(out * 2.0**s, check=False)

    def random_algebra(self, rng, n=None, scale=1.0):
        size = (self.dim,) if n is None else (n, self.dim)
        return scale * rng.standard_normal(size)

    def random_element(self, rng, n=None, scale=np.pi):
        return self.exp(self.random_algebra(rng, n, scale / np.sqrt(self.dim)))


def unitary1():
    return LieGroupModel("U(1)", "unitary", realify(np.array([[[1j]]])), complex_size=1)


def special_orthogonal(n):
    basis = []
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n))
            e[j, i] = 1.0
            e[i, j] = -1.0
            basis.append(e)
    return LieGroupModel(f"SO({n})", "special-orthogonal", np.array(basis))


def special_unitary2():
    pauli = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]])
    # E_k = -i sigma_k / 2 gives [E_1, E_2] = E_3 cyclically
    return LieGroupModel("SU(2)", "special-unitary", realify(-0.5j * pauli), complex_size=2)


def group_from_tag(family, algebra_dim=None):
    """Built-in group for a family tag (and optional algebra dimension)."""
    family = {"u1": "unitary", "so": "special-orthogonal", "su2": "special-unitary"}.get(family, family)
    if family == "unitary":
        if algebra_dim not in (None, 1):
            raise InvalidArgumentError("only U(1) is built in for the unitary family")
        return unitary1()
    if family == "special-unitary":
        if algebra_dim not in (None, 3):
            raise InvalidArgumentError("only SU(2) is built in for the special-unitary family")
        return special_unitary2()
    if family == "special-orthogonal":
        d = 1 if algebra_dim is None else int(algebra_dim)
        n = int(round((1 + np.sqrt(1 + 8 * d)) / 2))
        if n * (n - 1) // 2 != d:
            raise InvalidArgumentError(f"{d} is not the dimension of any so(n)")
        return special_orthogonal(n)
    raise InvalidArgumentError(f"unknown group family {family!r}")
