"""Built-in example bundles, addressable by string id.

Each :class:`Example` bundles the principal bundle with a few named adjoint
sections (generic test data, not moment-map solutions), the base field pairs
used by bracket checks, and the lattice regions the moment-map solver uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jet
from .bundle import AdjointSection, PrincipalBundle
from .charts import euclidean_box, round_sphere, sphere_embedding
from .errors import InvalidArgumentError
from .lie import special_orthogonal, special_unitary2, unitary1


@dataclass(eq=False)
class SolveRegion:
    """Lattice box ``[lower, upper]^n`` on a chart, optionally cut to a disc.

    Nodes outside the disc of radius ``disc`` are dropped. ``overlap`` gives
    the radii of the annulus where two charts are coupled.
    """

    chart: str
    lower: tuple
    upper: tuple
    disc: float = None


@dataclass(eq=False)
class Example:
    id: str
    bundle: PrincipalBundle
    curvature_class: str
    description: str
    sections: dict = field(default_factory=dict)
    field_pairs: tuple = ()
    solve_regions: tuple = ()
    overlap_annulus: tuple = None
    symplectic: bool = False
    expected_kernel_dim: int = None
    frame_bundle: bool = False

    @property
    def base(self):
        return self.bundle.base

    @property
    def group(self):
        return self.bundle.group

    def field(self, name):
        try:
            return self.base.fields[name]
        except KeyError:
            raise InvalidArgumentError(f"example {self.id!r} has no field {name!r}; known: {sorted(self.base.fields)}") from None

    def summary(self):
        return {
            "id": self.id,
            "group": self.group.name,
            "base": self.base.name,
            "charts": len(self.base.charts),
            "curvature": self.curvature_class,
        }


# -- helpers -----------------------------------------------------------------


def _rsq(x):
    return x[..., 0] * x[..., 0] + x[..., 1] * x[..., 1]


def _rotation_matrix(c, s):
    """Realified unit complex number ``c + i s`` as a batched 2x2 matrix."""
    row0 = jet.stack([c, -s], axis=-1)
    row1 = jet.stack([s, c], axis=-1)
    return jet.stack([row0, row1], axis=-2)


def _zero_form(n, d):
    return lambda x: 0.0 * jet.einsum("...i,ja->...ja", x, np.zeros((n, d)) + 1.0)


def _form(rows):
    """One-form from per-direction algebra coefficients ``rows[i](x) -> (..., d)``."""
    return lambda x: jet.stack([r(x) for r in rows], axis=-2)


def _scalar_section(fn, charts, name):
    return AdjointSection({c: (lambda x, c=c: jet.expand_dims(fn(x, c), -1)) for c in charts}, name)


def flat_bundle(group, lower=(-1.0, -1.0), upper=(1.0, 1.0), name=None):
    """Trivial ``group`` bundle over a Euclidean box with ``A = 0``."""
    base = euclidean_box(lower, upper, "box")
    n, d = base.dim, group.dim
    return PrincipalBundle(name or f"flat-{group.name}", base, group, {"box": _zero_form(n, d)}, {}, "trivial bundle, zero connection")


def _box_regions(lower, upper):
    return (SolveRegion("box", tuple(lower), tuple(upper)),)


# -- the catalog -------------------------------------------------------------

BOX = ((-1.5, -1.5), (1.5, 1.5))
REGION = ((-1.4, -1.4), (1.4, 1.4))
BOX_PAIRS = (("trans-x1", "rot"), ("trans-x2", "dilation"), ("rot", "dilation"))
SPHERE_PAIRS = (("rot-x", "rot-y"), ("rot-z", "dilation"), ("rot-y", "dilation"))
SPHERE_DISC = 1.4
SPHERE_OVERLAP = (0.7, 1.4)


def _box_sections(charts="box"):
    return {
        "bump": _scalar_section(lambda x, c: jet.exp(-_rsq(x)), [charts], "bump"),
        "wave": _scalar_section(lambda x, c: jet.sin(x[..., 0]) * jet.cos(2.0 * x[..., 1]) + x[..., 1], [charts], "wave"),
    }


def _sphere_sections():
    charts = ("north", "south")
    emb = lambda x, c: sphere_embedding(x, c)  # noqa: E731
    return {
        "xy-plus-z": _scalar_section(lambda x, c: emb(x, c)[..., 0] * emb(x, c)[..., 1] + emb(x, c)[..., 2], charts, "xy-plus-z"),
        "exp-x": _scalar_section(lambda x, c: jet.exp(emb(x, c)[..., 0]), charts, "exp-x"),
    }


def flat_u1():
    bundle = flat_bundle(unitary1(), *BOX, name="flat-U1")
    return Example("flat-U1", bundle, "flat", "trivial U(1) bundle over a square, A = 0", _box_sections(), BOX_PAIRS, _box_regions(*REGION), expected_kernel_dim=1)


def twisted_u1():
    base = euclidean_box(*BOX, "box")
    grp = unitary1()
    conn = {"box": _form([lambda x: jet.expand_dims(jet.sin(x[..., 1]), -1), lambda x: jet.expand_dims(0.0 * x[..., 1], -1)])}
    bundle = PrincipalBundle("twisted-U1", base, grp, conn, {}, "trivial U(1) bundle over a square, A = sin(x2) dx1")
    return Example("twisted-U1", bundle, "abelian", bundle.description, _box_sections(), BOX_PAIRS, _box_regions(*REGION), expected_kernel_dim=1)


def _monopole_form(charge):
    # A = -charge (x1 dx2 - x2 dx1) / (1 + r^2); identical formula on both charts
    def A(x):
        s = -charge / (1.0 + _rsq(x))
        return jet.expand_dims(jet.stack([-s * x[..., 1], s * x[..., 0]], axis=-1), -1)

    return A


def _phase_transition(x):
    # e^{i theta} with theta the polar angle of the chart point
    r = jet.sqrt(_rsq(x))
    return _rotation_matrix(x[..., 0] / r, x[..., 1] / r)


def _frame_transition(x):
    # -z^2 / |z|^2: rotation carrying one stereographic orthonormal frame to the other
    r2 = _rsq(x)
    return _rotation_matrix(-(x[..., 0] * x[..., 0] - x[..., 1] * x[..., 1]) / r2, -2.0 * x[..., 0] * x[..., 1] / r2)


def _sphere_regions():
    w = SPHERE_DISC
    return tuple(SolveRegion(c, (-w, -w), (w, w), disc=w) for c in ("north", "south"))


def hopf(example_id="hopf", symplectic=False):
    base = round_sphere()
    grp = unitary1()
    A = _monopole_form(1.0)
    trans = {("north", "south"): _phase_transition, ("south", "north"): _phase_transition}
    bundle = PrincipalBundle(example_id, base, grp, {"north": A, "south": A}, trans, "Hopf U(1) bundle over the round S^2, F = -1/2 area")
    desc = bundle.description if not symplectic else "Hopf bundle read as the prequantum circle bundle of (S^2, F)"
    return Example(example_id, bundle, "abelian", desc, _sphere_sections(), SPHERE_PAIRS, _sphere_regions(), SPHERE_OVERLAP, symplectic, expected_kernel_dim=1)


def quantized_s2():
    return hopf("quantized-s2", symplectic=True)


def frame_s2():
    base = round_sphere()
    grp = special_orthogonal(2)
    A = _monopole_form(2.0)
    trans = {("north", "south"): _frame_transition, ("south", "north"): _frame_transition}
    bundle = PrincipalBundle("frame-s2", base, grp, {"north": A, "south": A}, trans, "SO(2) orthonormal frame bundle of the round S^2, Levi-Civita connection")
    return Example("frame-s2", bundle, "abelian", bundle.description, _sphere_sections(), SPHERE_PAIRS, _sphere_regions(), SPHERE_OVERLAP, expected_kernel_dim=1, frame_bundle=True)


def su2_connection(x):
    """``A = sin(x1) E1 dx2 + 1/2 E2 dx1`` (translation invariant along x2)."""
    zero = 0.0 * x[..., 0]
    row1 = jet.stack([zero, 0.5 + zero, zero], axis=-1)
    row2 = jet.stack([jet.sin(x[..., 0]), zero, zero], axis=-1)
    return jet.stack([row1, row2], axis=-2)


def su2_box():
    base = euclidean_box(*BOX, "box")
    grp = special_unitary2()
    bundle = PrincipalBundle("su2-box", base, grp, {"box": su2_connection}, {}, "trivial SU(2) bundle over a square, A = sin(x1) E1 dx2 + 1/2 E2 dx1")
    sections = {
        "wave": AdjointSection({"box": lambda x: jet.stack([jet.sin(x[..., 1]), x[..., 0] * x[..., 1], jet.cos(x[..., 0])], axis=-1)}, "wave"),
        "bump": AdjointSection({"box": lambda x: jet.einsum("...,a->...a", jet.exp(-_rsq(x)), np.array([1.0, -0.5, 0.25]))}, "bump"),
    }
    return Example("su2-box", bundle, "non-abelian", bundle.description, sections, BOX_PAIRS, _box_regions(*REGION), expected_kernel_dim=0)


BUILDERS = {
    "flat-U1": flat_u1,
    "twisted-U1": twisted_u1,
    "hopf": hopf,
    "frame-s2": frame_s2,
    "su2-box": su2_box,
    "quantized-s2": quantized_s2,
}

_cache = {}


def example_ids():
    return tuple(BUILDERS)


def get_example(example_id):
    """Catalog entry by id (built once, then shared)."""
    if example_id not in BUILDERS:
        raise InvalidArgumentError(f"unknown example {example_id!r}; known: {', '.join(BUILDERS)}")
    if example_id not in _cache:
        _cache[example_id] = BUILDERS[example_id]()
    return _cache[example_id]


def list_examples():
    return [get_example(i).summary() for i in BUILDERS]
