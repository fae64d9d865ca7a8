"""Sparse polynomial predictors over lag variables and their recursive composition.

A one-step predictor is a polynomial in the lag window ``(y_t, y_{t-1}, ...,
y_{t-p+1})``. Iterating it ``h`` times (prepend each prediction to the window,
drop the oldest lag) gives another polynomial in the same base lags whose
coefficients are themselves polynomials in the one-step coefficients. This
module carries out that expansion exactly, with integer coefficients, and
differentiates the resulting parameter map.

Monomials are dense exponent tuples indexed by lag (index 0 is ``y_t``).
Canonical ordering is graded lexicographic with ``y_t > y_{t-1} > ...``:
lower total degree first, then larger exponents on newer lags first.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError

Monomial = tuple  # tuple[int, ...], one exponent per lag


def monomial_key(m: Monomial):
    return (sum(m), tuple(-e for e in m))


def canonical_order(monomials: Iterable[Monomial]) -> tuple:
    return tuple(sorted(set(monomials), key=monomial_key))


def _check_monomial(m, p: int) -> Monomial:
    m = tuple(int(e) for e in m)
    if len(m) != p:
        raise ValidationError(f"monomial {m} has {len(m)} exponents, expected p={p}")
    if any(e < 0 for e in m):
        raise ValidationError(f"negative exponent in monomial {m}")
    return m


def lag_name(k: int) -> str:
    return "y_t" if k == 0 else f"y_{{t-{k}}}"


def format_monomial(m: Monomial) -> str:
    parts = []
    for k, e in enumerate(m):
        if e == 1:
            parts.append(lag_name(k))
        elif e > 1:
            parts.append(f"{lag_name(k)}^{e}")
    return "*".join(parts) if parts else "1"


# ---------------------------------------------------------------------------
# exact sparse polynomial arithmetic


class Poly:
    """Sparse multivariate polynomial ``{exponent tuple: coefficient}``.

    Coefficients are whatever numeric type goes in; the composition engine
    only ever feeds it Python ints, so expansions stay exact. Terms whose
    coefficient is exactly zero are dropped.
    """

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping | None = None):
        self.nvars = nvars
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0}

    @classmethod
    def var(cls, nvars: int, i: int) -> "Poly":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1})

    @classmethod
    def const(cls, nvars: int, c) -> "Poly":
        return cls(nvars, {(0,) * nvars: c})

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return Poly(self.nvars, out)

    def __mul__(self, other: "Poly") -> "Poly":
        out: dict = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                out[k] = out.get(k, 0) + v1 * v2
        return Poly(self.nvars, out)

    def __pow__(self, n: int) -> "Poly":
        result = Poly.const(self.nvars, 1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def is_zero(self) -> bool:
        return not self.terms

    def diff(self, i: int) -> "Poly":
        out = {}
        for k, v in self.terms.items():
            if k[i]:
                kk = list(k)
                kk[i] -= 1
                out[tuple(kk)] = v * k[i]
        return Poly(self.nvars, out)

    def __call__(self, x: Sequence[float]) -> float:
        total = 0.0
        for k, v in self.terms.items():
            term = float(v)
            for xi, e in zip(x, k):
                if e:
                    term *= xi ** e
            total += term
        return total

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda kv: monomial_key(kv[0]))

    def format(self, names: Sequence[str]) -> str:
        if not self.terms:
            return "0"
        pieces = []
        for k, v in self.sorted_terms():
            factors = [n if e == 1 else f"{n}^{e}" for n, e in zip(names, k) if e]
            body = "*".join(factors)
            if not body:
                pieces.append(str(v))
            elif v == 1:
                pieces.append(body)
            elif v == -1:
                pieces.append("-" + body)
            else:
                pieces.append(f"{v}*{body}")
        return " + ".join(pieces).replace("+ -", "- ")


# ---------------------------------------------------------------------------
# predictors


@dataclass(frozen=True)
class PolyPredictor:
    """Polynomial predictor ``sum_m coef_m * prod_k window[k]**m[k]``.

    ``terms`` is stored canonically (sorted, zero coefficients removed), so two
    predictors built from the same term map compare equal.
    """

    p: int
    terms: tuple = ()
    param_labels: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.p) < 1:
            raise ValidationError("lag order p must be >= 1")
        object.__setattr__(self, "p", int(self.p))
        raw = self.terms.items() if isinstance(self.terms, Mapping) else self.terms
        collected: dict = {}
        for m, c in raw:
            m = _check_monomial(m, self.p)
            collected[m] = collected.get(m, 0.0) + float(c)
        canon = tuple((m, collected[m]) for m in canonical_order(collected) if collected[m] != 0.0)
        object.__setattr__(self, "terms", canon)

    @property
    def monomials(self) -> tuple:
        return tuple(m for m, _ in self.terms)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for _, c in self.terms], dtype=float)

    def coefficient(self, m: Monomial) -> float:
        for mm, c in self.terms:
            if mm == tuple(m):
                return c
        return 0.0

    def __call__(self, window) -> float:
        return evaluate(self, window)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(f"{c:g}*{format_monomial(m)}" for m, c in self.terms).replace("+ -", "- ")

    # JSON -----------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "terms": [
                {"exps": {str(k): e for k, e in enumerate(m) if e}, "coef": c}
                for m, c in self.terms
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "PolyPredictor":
        try:
            p = int(d["p"])
            terms = []
            for t in d["terms"]:
                exps = [0] * p
                for k, e in t["exps"].items():
                    k = int(k)
                    if not 0 <= k < p:
                        raise ValidationError(f"lag index {k} outside [0, {p})")
                    exps[k] = int(e)
                terms.append((tuple(exps), float(t["coef"])))
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValidationError(f"malformed predictor object: {exc!r}") from exc
        return cls(p, tuple(terms))

    @classmethod
    def from_json(cls, text: str) -> "PolyPredictor":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"invalid predictor JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
        return cls.from_dict(d)


def linear(b: Sequence[float]) -> PolyPredictor:
    """``b_1 y_t + b_2 y_{t-1} + ...`` with ``p = len(b)``."""
    p = len(b)
    return PolyPredictor(p, tuple((tuple(int(i == k) for i in range(p)), float(c)) for k, c in enumerate(b)))


LINEAR2_BASIS = ((1, 0), (0, 1))
BILINEAR_BASIS = ((1, 0), (0, 1), (1, 1))


def bilinear(b: Sequence[float]) -> PolyPredictor:
    """``b_1 y_t + b_2 y_{t-1} + b_3 y_t y_{t-1}``."""
    if len(b) != 3:
        raise ValidationError("bilinear predictor needs 3 coefficients")
    return PolyPredictor(2, tuple(zip(BILINEAR_BASIS, map(float, b))))


def evaluate(pred: PolyPredictor, window) -> float:
    w = np.asarray(window, dtype=float)
    if w.ndim != 1 or w.shape[0] != pred.p:
        raise ValidationError(f"window has shape {w.shape}, expected ({pred.p},)")
    total = 0.0
    for m, c in pred.terms:
        term = c
        for k, e in enumerate(m):
            if e:
                term *= w[k] ** e
        total += term
    return float(total)


def monomial_features(windows, monomials: Sequence[Monomial]) -> np.ndarray:
    """Evaluate each monomial on every row of ``windows`` (n x p) -> (n x k)."""
    W = np.atleast_2d(np.asarray(windows, dtype=float))
    E = np.asarray(monomials, dtype=np.int64).reshape(len(monomials), -1)
    if E.shape[0] and E.shape[1] != W.shape[1]:
        raise ValidationError("monomials and windows disagree on lag order")
    out = np.ones((W.shape[0], E.shape[0]))
    for j, m in enumerate(E):
        for k, e in enumerate(m):
            if e:
                out[:, j] *= W[:, k] ** e
    return out


def iterate(pred: PolyPredictor, window, h: int) -> float:
    """Run ``pred`` forward ``h`` steps, feeding predictions back in."""
    w = [float(x) for x in window]
    yhat = 0.0
    for _ in range(h):
        yhat = evaluate(pred, w)
        w = [yhat] + w[:-1]
    return yhat


# ---------------------------------------------------------------------------
# composition


@lru_cache(maxsize=256)
def _expand(p: int, basis: tuple, h: int) -> tuple:
    """Symbolic h-fold composition; returns ((monomial, Poly in b), ...)."""
    d = len(basis)
    n = p + d
    window = [Poly.var(n, k) for k in range(p)]
    pred = None
    for _ in range(h):
        pred = Poly(n)
        powers: dict = {}
        for i, m in enumerate(basis):
            term = Poly.var(n, p + i)
            for k, e in enumerate(m):
                if e:
                    if (k, e) not in powers:
                        powers[(k, e)] = window[k] ** e
                    term = term * powers[(k, e)]
            pred = pred + term
        window = [pred] + window[:-1]
    grouped: dict = {}
    for exps, c in pred.terms.items():
        ymono, bexp = exps[:p], exps[p:]
        grouped.setdefault(ymono, {})
        grouped[ymono][bexp] = grouped[ymono].get(bexp, 0) + c
    out = []
    for ymono in canonical_order(grouped):
        poly = Poly(d, grouped[ymono])
        if not poly.is_zero():
            out.append((ymono, poly))
    return tuple(out)


@dataclass(frozen=True)
class CompositionResult:
    """Outcome of composing a one-step predictor ``h`` times.

    Attributes
    ----------
    one_step : PolyPredictor
    h : int
    basis : tuple of monomials
        Structure of the one-step family; defines the parameter vector ``b``
        (one entry per basis monomial, canonical order).
    param_map : tuple of (monomial, Poly)
        Every composed coefficient as an exact polynomial in ``b``. Rows of the
        Jacobian follow this order.
    composed : PolyPredictor
        The composed predictor at the one-step coefficients.
    """

    one_step: PolyPredictor
    h: int
    basis: tuple
    param_map: tuple
    composed: PolyPredictor

    @property
    def p(self) -> int:
        return self.one_step.p

    @property
    def monomials(self) -> tuple:
        return tuple(m for m, _ in self.param_map)

    @property
    def b(self) -> np.ndarray:
        return np.array([self.one_step.coefficient(m) for m in self.basis])

    def _check_b(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float).ravel()
        if b.shape[0] != len(self.basis):
            raise ValidationError(f"parameter vector has length {b.shape[0]}, expected {len(self.basis)}")
        return b

    def alpha(self, b=None) -> np.ndarray:
        b = self.b if b is None else self._check_b(b)
        return np.array([poly(b) for _, poly in self.param_map])

    def jacobian_at(self, b=None) -> np.ndarray:
        b = self.b if b is None else self._check_b(b)
        return np.array([[poly.diff(i)(b) for i in range(len(self.basis))] for _, poly in self.param_map])

    def predictor_at(self, b) -> PolyPredictor:
        b = self._check_b(b)
        return PolyPredictor(self.p, tuple(zip(self.monomials, self.alpha(b))))

    def param_map_arrays(self):
        """Dense ``(coef, exps, nterms)`` arrays for vectorised evaluation."""
        m, d = len(self.param_map), len(self.basis)
        K = max((len(poly.terms) for _, poly in self.param_map), default=0)
        coef = np.zeros((m, K))
        exps = np.zeros((m, K, d), dtype=np.int64)
        nterms = np.zeros(m, dtype=np.int64)
        for j, (_, poly) in enumerate(self.param_map):
            for t, (k, v) in enumerate(poly.sorted_terms()):
                coef[j, t] = v
                exps[j, t] = k
            nterms[j] = len(poly.terms)
        return coef, exps, nterms

    def describe(self, names: Sequence[str] | None = None) -> list:
        names = names or [f"b{i + 1}" for i in range(len(self.basis))]
        return [(format_monomial(m), poly.format(names)) for m, poly in self.param_map]


def compose(one_step: PolyPredictor, h: int, basis: Sequence[Monomial] | None = None) -> CompositionResult:
    """Compose ``one_step`` with itself ``h`` times.

    ``basis`` fixes which monomials count as free parameters; it defaults to
    the predictor's own (nonzero) terms. Pass it explicitly to keep a
    parameter symbolic while its current value is zero.
    """
    if int(h) != h or h < 1:
        raise ValidationError(f"horizon must be an integer >= 1, got {h}")
    h = int(h)
    if basis is None:
        basis = one_step.monomials
    basis = canonical_order(_check_monomial(m, one_step.p) for m in basis)
    missing = set(one_step.monomials) - set(basis)
    if missing:
        raise ValidationError(f"predictor terms {sorted(missing)} not in the parameter basis")
    param_map = _expand(one_step.p, basis, h)
    b = np.array([one_step.coefficient(m) for m in basis])
    if h == 1:
        composed = one_step
    else:
        composed = PolyPredictor(one_step.p, tuple((m, poly(b)) for m, poly in param_map))
    return CompositionResult(one_step, h, basis, param_map, composed)


def jacobian(comp: CompositionResult, b) -> np.ndarray:
    """``J[j, i] = d alpha_j / d b_i`` at ``b``, by exact differentiation."""
    return comp.jacobian_at(b)


# ---------------------------------------------------------------------------
# the linear p=2, h=2 map and its inverse


def linear_two_step_map(b) -> tuple:
    b1, b2 = (float(v) for v in b)
    return (b1 * b1 + b2, b1 * b2)


def _unit_cubic_roots(p: float, q: float) -> list:
    # p, q are O(1) here, so the discriminant neither overflows nor underflows
    if p == 0.0:
        return [math.copysign(abs(q) ** (1.0 / 3.0), -q)]
    disc = -(4.0 * p ** 3 + 27.0 * q * q)
    if disc > 0:  # three distinct real roots, p < 0
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = (3.0 * q / (2.0 * p)) * math.sqrt(-3.0 / p)
        phi = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        return [m * math.cos(phi - 2.0 * math.pi * k / 3.0) for k in range(3)]
    if disc == 0.0:
        return [3.0 * q / p, -1.5 * q / p]
    # one real root: Cardano with the cancellation-free sign choice
    half_q = 0.5 * q
    d = half_q * half_q + (p / 3.0) ** 3
    s = -half_q - math.copysign(math.sqrt(max(d, 0.0)), q if q != 0.0 else 1.0)
    u = math.copysign(abs(s) ** (1.0 / 3.0), s)
    return [u - p / (3.0 * u)] if u != 0.0 else [0.0]


def depressed_cubic_roots(p: float, q: float, tol: float = 1e-12) -> list:
    """Real roots of ``t**3 + p*t + q = 0``, ascending, Newton-polished.

    The cubic is first rescaled by ``s = max(sqrt|p|, cbrt|q|)`` so the
    closed-form branches see coefficients of order one.
    """
    p, q = float(p), float(q)
    s = max(math.sqrt(abs(p)), abs(q) ** (1.0 / 3.0))
    if s == 0.0:
        return [0.0]
    roots = [s * t for t in _unit_cubic_roots(p / s / s, q / s / s / s)]

    polished = []
    for t in roots:
        for _ in range(8):
            f = (t * t + p) * t + q
            if abs(f) <= tol * max(1.0, abs(q), abs(p * t), abs(t) ** 3):
                break
            fp = 3.0 * t * t + p
            if fp == 0.0:
                break
            t -= f / fp
        polished.append(t)
    polished.sort()
    out = []
    for t in polished:
        if not out or abs(t - out[-1]) > 1e-9 * (1.0 + abs(t)):
            out.append(t)
    return out


def invert_linear_two_step(alpha) -> list:
    """All real ``(b_1, b_2)`` with ``linear_two_step_map(b) == alpha``.

    Eliminating ``b_2 = alpha_1 - b_1**2`` leaves ``b_1**3 - alpha_1 b_1 +
    alpha_2 = 0``, which always has a real root, so the list is never empty.
    """
    a1, a2 = (float(v) for v in alpha)
    return [(b1, a1 - b1 * b1) for b1 in depressed_cubic_roots(-a1, a2)]
