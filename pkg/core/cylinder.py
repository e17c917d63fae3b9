"""Cylinder functions u = F(f_1*, ..., f_k*) and their lifted calculus.

Outer functions are small expression trees (JSON-serializable through a pydantic
discriminated union) with symbolic first and second derivatives.
"""
from __future__ import annotations

import logging
from typing import Annotated, List, Literal, Optional, Sequence, Union

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field, TypeAdapter, model_validator

from core.base_space import BaseFunction, generator_apply, square_field
from core.config_space import ConfigSpace
from core.errors import InvalidInputError
from core.lift import gamma_section, lifted_generator_apply
from core.models import DefectReport

logger = logging.getLogger(__name__)

Points = npt.NDArray[np.float64]  # (m, k): one row per evaluation point


class Const(BaseModel):
    op: Literal["const"] = "const"
    value: float

    def evaluate(self, x: Points) -> np.ndarray:
        return np.full(x.shape[0], self.value)

    def derivative(self, i: int) -> "Expr":
        return Const(value=0.0)

    def max_var(self) -> int:
        return -1


class Var(BaseModel):
    op: Literal["var"] = "var"
    index: int = Field(ge=0)

    def evaluate(self, x: Points) -> np.ndarray:
        if self.index >= x.shape[1]:
            raise InvalidInputError(f"variable x{self.index} is not bound (k={x.shape[1]})")
        return x[:, self.index].astype(float)

    def derivative(self, i: int) -> "Expr":
        return Const(value=1.0 if i == self.index else 0.0)

    def max_var(self) -> int:
        return self.index


class Add(BaseModel):
    op: Literal["add"] = "add"
    terms: List["Expr"]

    def evaluate(self, x: Points) -> np.ndarray:
        out = np.zeros(x.shape[0])
        for term in self.terms:
            out = out + term.evaluate(x)
        return out

    def derivative(self, i: int) -> "Expr":
        return add(*(term.derivative(i) for term in self.terms))

    def max_var(self) -> int:
        return max((t.max_var() for t in self.terms), default=-1)


class Mul(BaseModel):
    op: Literal["mul"] = "mul"
    factors: List["Expr"]

    def evaluate(self, x: Points) -> np.ndarray:
        out = np.ones(x.shape[0])
        for factor in self.factors:
            out = out * factor.evaluate(x)
        return out

    def derivative(self, i: int) -> "Expr":
        # product rule
        terms = []
        for j, factor in enumerate(self.factors):
            rest = [f for k, f in enumerate(self.factors) if k != j]
            terms.append(mul(factor.derivative(i), *rest))
        return add(*terms)

    def max_var(self) -> int:
        return max((f.max_var() for f in self.factors), default=-1)


class Exp(BaseModel):
    op: Literal["exp"] = "exp"
    arg: "Expr"

    def evaluate(self, x: Points) -> np.ndarray:
        return np.exp(self.arg.evaluate(x))

    def derivative(self, i: int) -> "Expr":
        return mul(self.arg.derivative(i), self)

    def max_var(self) -> int:
        return self.arg.max_var()


class Log(BaseModel):
    op: Literal["log"] = "log"
    arg: "Expr"

    def evaluate(self, x: Points) -> np.ndarray:
        inner = self.arg.evaluate(x)
        if np.any(inner <= 0):
            raise InvalidInputError("log of a nonpositive argument in outer function")
        return np.log(inner)

    def derivative(self, i: int) -> "Expr":
        return mul(self.arg.derivative(i), Reciprocal(arg=self.arg))

    def max_var(self) -> int:
        return self.arg.max_var()


class Reciprocal(BaseModel):
    op: Literal["recip"] = "recip"
    arg: "Expr"

    def evaluate(self, x: Points) -> np.ndarray:
        inner = self.arg.evaluate(x)
        if np.any(inner == 0):
            raise InvalidInputError("division by zero in outer function")
        return 1.0 / inner

    def derivative(self, i: int) -> "Expr":
        return mul(Const(value=-1.0), self.arg.derivative(i), self, self)

    def max_var(self) -> int:
        return self.arg.max_var()


class Affine(BaseModel):
    """sum_i coeffs[i] * x_i + offset."""

    op: Literal["affine"] = "affine"
    coeffs: List[float]
    offset: float = 0.0

    def evaluate(self, x: Points) -> np.ndarray:
        k = len(self.coeffs)
        if k > x.shape[1]:
            raise InvalidInputError(f"affine node uses {k} variables, only {x.shape[1]} bound")
        return x[:, :k] @ np.asarray(self.coeffs, dtype=float) + self.offset

    def derivative(self, i: int) -> "Expr":
        return Const(value=self.coeffs[i] if i < len(self.coeffs) else 0.0)

    def max_var(self) -> int:
        return len(self.coeffs) - 1


Expr = Annotated[Union[Const, Var, Add, Mul, Exp, Log, Reciprocal, Affine], Field(discriminator="op")]

for _node in (Add, Mul, Exp, Log, Reciprocal):
    _node.model_rebuild()

EXPR_ADAPTER: TypeAdapter = TypeAdapter(Expr)


def _is_const(e: Expr, value: Optional[float] = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def const(value: float) -> Const:
    return Const(value=float(value))


def var(index: int) -> Var:
    return Var(index=index)


def add(*terms: Expr) -> Expr:
    kept = [t for t in terms if not _is_const(t, 0.0)]
    if not kept:
        return Const(value=0.0)
    if len(kept) == 1:
        return kept[0]
    return Add(terms=kept)


def mul(*factors: Expr) -> Expr:
    if any(_is_const(f, 0.0) for f in factors):
        return Const(value=0.0)
    kept = [f for f in factors if not _is_const(f, 1.0)]
    if not kept:
        return Const(value=1.0)
    if len(kept) == 1:
        return kept[0]
    return Mul(factors=kept)


def exp(arg: Expr) -> Exp:
    return Exp(arg=arg)


def log(arg: Expr) -> Log:
    return Log(arg=arg)


def affine(coeffs: Sequence[float], offset: float = 0.0) -> Affine:
    return Affine(coeffs=[float(c) for c in coeffs], offset=float(offset))


def power(e: Expr, k: int) -> Expr:
    if k < 0:
        raise InvalidInputError("power needs a nonnegative exponent")
    return mul(*([e] * k)) if k else Const(value=1.0)


def parse_expr(text: str) -> Expr:
    return EXPR_ADAPTER.validate_json(text)


def dump_expr(e: Expr) -> str:
    return EXPR_ADAPTER.dump_json(e).decode()


def gradient_exprs(e: Expr, k: int) -> List[Expr]:
    return [e.derivative(i) for i in range(k)]


def hessian_exprs(e: Expr, k: int) -> List[List[Expr]]:
    return [[g.derivative(j) for j in range(k)] for g in gradient_exprs(e, k)]


def derivative_check(e: Expr, points: Points, step: float = 1e-5, tolerance: float = 1e-6) -> DefectReport:
    """Symbolic gradient and Hessian against central differences."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k = points.shape[1]
    grads = gradient_exprs(e, k)
    hess = hessian_exprs(e, k)
    worst = 0.0
    for i in range(k):
        shift = np.zeros(k)
        shift[i] = step
        fd_grad = (e.evaluate(points + shift) - e.evaluate(points - shift)) / (2.0 * step)
        sym_grad = grads[i].evaluate(points)
        worst = max(worst, float((np.abs(fd_grad - sym_grad) / np.maximum(1.0, np.abs(sym_grad))).max()))
        for j in range(k):
            fd_hess = (grads[j].evaluate(points + shift) - grads[j].evaluate(points - shift)) / (2.0 * step)
            sym_hess = hess[j][i].evaluate(points)
            worst = max(worst, float((np.abs(fd_hess - sym_hess) / np.maximum(1.0, np.abs(sym_hess))).max()))
    return DefectReport(
        check_id="cylinder.outer_derivatives",
        tier="exact",
        max_defect=worst,
        tolerance=tolerance,
        details={"step": step, "points": int(points.shape[0])},
    )


class CylinderFunction(BaseModel):
    """u(gamma) = F(f_1* gamma, ..., f_k* gamma)."""

    inner: List[List[float]]
    outer: Expr

    @model_validator(mode="after")
    def _check_arity(self) -> "CylinderFunction":
        if self.inner:
            widths = {len(f) for f in self.inner}
            if len(widths) != 1:
                raise ValueError("inner functions must live on the same base")
        if self.outer.max_var() >= len(self.inner):
            raise ValueError(f"outer function uses x{self.outer.max_var()} but only {len(self.inner)} inner functions are given")
        return self

    @classmethod
    def of(cls, inner: Sequence[BaseFunction], outer: Expr) -> "CylinderFunction":
        return cls(inner=[[float(v) for v in f] for f in inner], outer=outer)

    @property
    def k(self) -> int:
        return len(self.inner)

    def inner_matrix(self, n: int) -> npt.NDArray[np.float64]:
        if self.k == 0:
            return np.zeros((0, n))
        mat = np.asarray(self.inner, dtype=float)
        if mat.shape[1] != n:
            raise InvalidInputError(f"inner functions have {mat.shape[1]} entries, base has {n} states")
        return mat

    def star_values(self, cspace: ConfigSpace) -> Points:
        """(configs, k) matrix of f_i* gamma."""
        return cspace.occupations @ self.inner_matrix(cspace.base.n).T

    def values(self, cspace: ConfigSpace) -> npt.NDArray[np.float64]:
        return self.outer.evaluate(self.star_values(cspace))

    def gradient(self, cspace: ConfigSpace) -> npt.NDArray[np.float64]:
        points = self.star_values(cspace)
        if self.k == 0:
            return np.zeros((points.shape[0], 0))
        return np.column_stack([g.evaluate(points) for g in gradient_exprs(self.outer, self.k)])

    def hessian(self, cspace: ConfigSpace) -> npt.NDArray[np.float64]:
        points = self.star_values(cspace)
        out = np.zeros((points.shape[0], self.k, self.k))
        for p, row in enumerate(hessian_exprs(self.outer, self.k)):
            for q, h in enumerate(row):
                out[:, p, q] = h.evaluate(points)
        return out


def gamma_cylinder(cspace: ConfigSpace, u: CylinderFunction, v: CylinderFunction) -> npt.NDArray[np.float64]:
    """Chain-rule square field sum_ij dF_i dG_j Gamma(f_i, g_j)*."""
    base = cspace.base
    du = u.gradient(cspace)
    dv = v.gradient(cspace)
    fu = u.inner_matrix(base.n)
    fv = v.inner_matrix(base.n)
    out = np.zeros(len(cspace))
    for i in range(u.k):
        for j in range(v.k):
            out += du[:, i] * dv[:, j] * cspace.star(square_field(base, fu[i], fv[j]))
    return out


def cylinder_generator(cspace: ConfigSpace, v: CylinderFunction) -> npt.NDArray[np.float64]:
    """Diffusion-form generator sum_j dG_j (L g_j)* + sum_pq d2G_pq Gamma(g_p, g_q)*.

    The Hessian term carries the 1/2 of the square field convention, so the
    pairing reproduces L(F o g*) exactly for outer functions of degree <= 2.
    """
    base = cspace.base
    g = v.inner_matrix(base.n)
    grad = v.gradient(cspace)
    hess = v.hessian(cspace)
    out = np.zeros(len(cspace))
    for j in range(v.k):
        out += grad[:, j] * cspace.star(generator_apply(base, g[j]))
    for p in range(v.k):
        for q in range(v.k):
            out += hess[:, p, q] * cspace.star(square_field(base, g[p], g[q]))
    return out


def check_cylinder_generator_formula(cspace: ConfigSpace, v: CylinderFunction, tolerance: float = 1e-12) -> DefectReport:
    """Lifted generator on F o g* against the chain-rule formula.

    Reported as an asymptotic defect; ``details['affine']`` marks the cases
    where the formula is exact.
    """
    direct = lifted_generator_apply(cspace, v.values(cspace))
    formula = cylinder_generator(cspace, v)
    gap = np.abs(direct - formula)
    i = int(np.argmax(gap)) if gap.size else 0
    return DefectReport(
        check_id="lift.cylinder_generator",
        tier="asymptotic",
        max_defect=float(gap.max(initial=0.0)),
        tolerance=tolerance,
        witness={"config": list(cspace.configs[i].occupation)},
        details={"affine": isinstance(v.outer, (Affine, Const, Var))},
    )


def check_cylinder_gamma(cspace: ConfigSpace, u: CylinderFunction) -> DefectReport:
    """Chain-rule square field against the exact lifted square field of u."""
    gap = np.abs(gamma_cylinder(cspace, u, u) - gamma_section(cspace, u.values(cspace)))
    i = int(np.argmax(gap)) if gap.size else 0
    return DefectReport(
        check_id="lift.cylinder_gamma",
        tier="asymptotic",
        max_defect=float(gap.max(initial=0.0)),
        witness={"config": list(cspace.configs[i].occupation)},
    )
