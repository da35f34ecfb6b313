"""Flat ``key = value`` configuration files and a small expression language.

Expressions use ``+ - * / ^`` (``**`` also works), parentheses, numbers,
``pi``, the functions ``sin cos tan exp sqrt log`` and the coordinate names
``x1 .. xn``. They compile to jet-aware callables ``f(x) -> (...)``.

A bundle file declares a user bundle::

    name = my-bundle
    group = su2                  # u1 | so | su2
    algebra_dim = 3              # only needed for so(n)
    chart.box.lower = -1, -1
    chart.box.upper = 1, 1
    connection.box.1 = sin(x1), 0, 0     # coefficients of A(e_1)
    connection.box.2 = 0, 1/2, 0         # coefficients of A(e_2)
    field.rot = -x2, x1
    killing = rot
    section.wave = sin(x2), x1*x2, cos(x1)

Two-chart bundles add ``transition.a.b.map``, ``transition.a.b.log`` (the
transition as ``exp`` of algebra coefficients), ``transition.a.b.lower`` and
``.upper`` (overlap box in chart ``a`` coordinates), and optional
``metric.<chart> = g11, g12; g21, g22``.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field, fields

import numpy as np

from . import jet
from .errors import InvalidArgumentError

FUNCTIONS = {"sin": jet.sin, "cos": jet.cos, "tan": jet.tan, "exp": jet.exp, "sqrt": jet.sqrt, "log": jet.log}
CONSTANTS = {"pi": np.pi}
_COORD = re.compile(r"^x([1-9][0-9]*)$")


class ExpressionError(InvalidArgumentError):
    pass


def _compile_node(node, dim):
    if isinstance(node, ast.Expression):
        return _compile_node(node.body, dim)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        v = float(node.value)
        return lambda x: v
    if isinstance(node, ast.Name):
        if node.id in CONSTANTS:
            v = CONSTANTS[node.id]
            return lambda x: v
        m = _COORD.match(node.id)
        if m:
            i = int(m.group(1)) - 1
            if dim is not None and i >= dim:
                raise ExpressionError(f"coordinate {node.id} exceeds dimension {dim}")
            return lambda x: x[..., i]
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        f = _compile_node(node.operand, dim)
        return (lambda x: -f(x)) if isinstance(node.op, ast.USub) else f
    if isinstance(node, ast.BinOp):
        lhs = _compile_node(node.left, dim)
        rhs = _compile_node(node.right, dim)
        op = node.op
        if isinstance(op, ast.Add):
            return lambda x: lhs(x) + rhs(x)
        if isinstance(op, ast.Sub):
            return lambda x: lhs(x) - rhs(x)
        if isinstance(op, ast.Mult):
            return lambda x: lhs(x) * rhs(x)
        if isinstance(op, ast.Div):
            return lambda x: lhs(x) / rhs(x)
        if isinstance(op, ast.Pow):
            try:
                p = float(ast.literal_eval(_unparse_number(node.right)))
            except (ValueError, SyntaxError):
                raise ExpressionError("exponents must be numeric constants") from None
            return lambda x: lhs(x) ** p
        raise ExpressionError(f"operator {type(op).__name__} is not allowed")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS or node.keywords or len(node.args) != 1:
            raise ExpressionError(f"only one-argument calls to {sorted(FUNCTIONS)} are allowed")
        fn = FUNCTIONS[node.func.id]
        arg = _compile_node(node.args[0], dim)
        return lambda x: fn(arg(x))
    raise ExpressionError(f"syntax element {type(node).__name__} is not allowed")


def _unparse_number(node):
    # constant exponents may be written as -2 or (1/2)
    if isinstance(node, ast.Constant):
        return repr(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return "-" + _unparse_number(node.operand)
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Div):
        return repr(float(ast.literal_eval(_unparse_number(node.left))) / float(ast.literal_eval(_unparse_number(node.right))))
    raise ValueError("not a number")


def compile_expression(text, dim=None):
    """Compile one scalar expression to a jet-aware ``f(x)`` on ``(..., n)``.

    Constant expressions are broadcast to the batch shape of ``x``.
    """
    src = text.strip().replace("^", "**")
    if not src:
        raise ExpressionError("empty expression")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    f = _compile_node(tree, dim)
    return lambda x: f(x) + 0.0 * x[..., 0]


def compile_vector(text, dim=None):
    """Comma-separated expressions as one vector-valued ``f(x) -> (..., m)``."""
    parts = [compile_expression(p, dim) for p in split_list(text)]
    return lambda x: jet.stack([p(x) for p in parts], axis=-1)


def split_list(text, sep=","):
    depth, cur, out = 0, [], []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return [p.strip() for p in out if p.strip()]


# -- key = value files -------------------------------------------------------


def parse_key_values(text):
    """``key = value`` lines; ``#`` starts a comment; later keys win."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise InvalidArgumentError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def load_key_values(path):
    with open(path, encoding="utf-8") as fh:
        return parse_key_values(fh.read())


SUITES = (
    "bracket-identities",
    "metric-structure",
    "isometries",
    "moment-equivalence",
    "gauge-kernel",
    "decomposition",
    "natural-lift",
    "quantization",
)


@dataclass
class RunConfig:
    example: str = "hopf"
    suite: str = "bracket-identities"
    n_samples: int = 200
    h: float = 0.04
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    out: str = None
    csv: str = None
    field: str = None
    perturb: bool = False
    bundle_config: str = None

    def validate(self, known_examples):
        if self.example not in known_examples:
            raise InvalidArgumentError(f"unknown example {self.example!r}; known: {', '.join(known_examples)}")
        if self.suite not in SUITES:
            raise InvalidArgumentError(f"unknown suite {self.suite!r}; known: {', '.join(SUITES)}")
        if not self.h > 0:
            raise InvalidArgumentError("h must be positive")
        if self.n_samples < 1:
            raise InvalidArgumentError("n_samples must be at least 1")
        return self

    def echo(self):
        return {
            "example": self.example,
            "suite": self.suite,
            "n_samples": self.n_samples,
            "h": self.h,
            "seed": self.seed,
            "tolerances": dict(sorted(self.tolerances.items())),
            "field": self.field,
            "perturb": self.perturb,
        }


def _as_bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise InvalidArgumentError(f"not a boolean: {v!r}")


def run_config_from_mapping(values, base=None):
    """Apply ``key = value`` pairs (``tol.<check> = x`` for overrides)."""
    cfg = base or RunConfig()
    names = {f.name for f in fields(RunConfig)}
    for key, raw in values.items():
        if raw is None:
            continue
        try:
            if key.startswith("tol.") or key.startswith("tol_"):
                # check names keep their hyphens
                cfg.tolerances[key[4:]] = float(raw)
                continue
            key = key.replace("-", "_")
            if key in ("n_samples", "seed"):
                setattr(cfg, key, int(raw))
            elif key == "h":
                cfg.h = float(raw)
            elif key == "perturb":
                cfg.perturb = _as_bool(raw)
            elif key in names and key != "tolerances":
                setattr(cfg, key, str(raw))
            else:
                raise InvalidArgumentError(f"unknown configuration key {key!r}")
        except ValueError as exc:
            if isinstance(exc, InvalidArgumentError):
                raise
            raise InvalidArgumentError(f"bad value for {key!r}: {raw!r}") from None
    return cfg


# -- user bundles ------------------------------------------------------------


def _floats(text):
    try:
        return tuple(float(v) for v in split_list(text))
    except ValueError:
        raise InvalidArgumentError(f"expected numbers, got {text!r}") from None


def bundle_from_config(values):
    """Build a catalog :class:`~gauge_killing.catalog.Example` from a bundle
    file's key/value pairs."""
    from .bundle import AdjointSection, PrincipalBundle
    from .catalog import Example, SolveRegion
    from .charts import BaseManifold, Chart, ChartTransition, VectorField, _euclidean
    from .lie import group_from_tag

    name = values.get("name", "user-bundle")
    group = group_from_tag(values.get("group", "u1"), int(values["algebra_dim"]) if "algebra_dim" in values else None)
    d = group.dim
    charts = {}
    for key, v in values.items():
        parts = key.split(".")
        if parts[0] == "chart" and len(parts) == 3 and parts[2] == "lower":
            cname = parts[1]
            upper = values.get(f"chart.{cname}.upper")
            if upper is None:
                raise InvalidArgumentError(f"chart {cname!r} has no upper corner")
            charts[cname] = Chart(cname, _floats(v), _floats(upper))
    if not charts:
        raise InvalidArgumentError("a bundle file needs at least one chart (chart.<name>.lower/upper)")
    n = next(iter(charts.values())).dim
    connection, metric = {}, {}
    for cname in charts:
        rows = []
        for i in range(1, n + 1):
            key = f"connection.{cname}.{i}"
            if key in values:
                f = compile_vector(values[key], n)
                rows.append(f)
            else:
                rows.append(None)

        def form(x, rows=rows):
            zero = jet.stack([0.0 * x[..., 0]] * d, axis=-1)
            return jet.stack([zero if r is None else r(x) + zero for r in rows], axis=-2)

        connection[cname] = form
        if f"metric.{cname}" in values:
            mrows = [compile_vector(r, n) for r in values[f"metric.{cname}"].split(";")]
            metric[cname] = lambda x, mrows=mrows: jet.stack([r(x) for r in mrows], axis=-2)
        else:
            metric[cname] = _euclidean
    transitions, gtrans = {}, {}
    for key, v in values.items():
        parts = key.split(".")
        if parts[0] == "transition" and len(parts) == 4 and parts[3] == "map":
            a, b = parts[1], parts[2]
            fwd = compile_vector(v, n)
            inv_key = f"transition.{b}.{a}.map"
            inv = compile_vector(values[inv_key], n) if inv_key in values else None
            lo = _floats(values.get(f"transition.{a}.{b}.lower", ",".join(map(str, charts[a].lower))))
            hi = _floats(values.get(f"transition.{a}.{b}.upper", ",".join(map(str, charts[a].upper))))

            def sampler(m, rng, lo=lo, hi=hi):
                return rng.uniform(lo, hi, size=(m, len(lo)))

            transitions[(a, b)] = ChartTransition(a, b, fwd, inv, sampler, v)
            log_key = f"transition.{a}.{b}.log"
            if log_key in values:
                coeffs = compile_vector(values[log_key], n)
                gtrans[(a, b)] = lambda x, coeffs=coeffs: group.exp(coeffs(x))
            else:
                gtrans[(a, b)] = lambda x: group.exp(jet.stack([0.0 * x[..., 0]] * d, axis=-1))
    vfields = {}
    for key, v in values.items():
        if key.startswith("field."):
            fname = key[len("field."):]
            f = compile_vector(v, n)
            vfields[fname] = VectorField({c: f for c in charts}, fname)
    killing = tuple(split_list(values.get("killing", ""))) if values.get("killing") else ()
    for k in killing:
        if k not in vfields:
            raise InvalidArgumentError(f"killing field {k!r} is not declared")
    base = BaseManifold(f"{name}-base", charts, transitions, metric, vfields, {}, killing)
    bundle = PrincipalBundle(name, base, group, connection, gtrans, values.get("description", "user bundle"))
    sections = {}
    for key, v in values.items():
        if key.startswith("section."):
            sname = key[len("section."):]
            f = compile_vector(v, n)
            sections[sname] = AdjointSection({c: f for c in charts}, sname)
    regions = tuple(SolveRegion(c, tuple(np.add(ch.lower, 0.05 * np.subtract(ch.upper, ch.lower))), tuple(np.subtract(ch.upper, 0.05 * np.subtract(ch.upper, ch.lower)))) for c, ch in charts.items())
    pairs = tuple(tuple(split_list(p, ":")) for p in split_list(values.get("field_pairs", ""))) if values.get("field_pairs") else ()
    cls = "abelian" if group.is_abelian else "non-abelian"
    kernel_dim = int(values["kernel_dim"]) if "kernel_dim" in values else None
    return Example(name, bundle, values.get("curvature", cls), bundle.description, sections, pairs, regions, expected_kernel_dim=kernel_dim)
