"""Sparse polynomial map-germs in variables z1..zN and their conjugates.

A germ is a finite sum of terms c * z^p * zbar^q with complex coefficient c
and non-negative integer exponent rows p, q. Holomorphic germs are the ones
with q = 0 throughout. Differentiation is exact and term-by-term; the only
floating-point content is coefficient arithmetic.

Gradient convention: grad f := conj(d_z f), so that for holomorphic f and a
path p(t) the chain rule reads df/dt = <dp/dt, grad f> under the Hermitian
product <u, v> = sum u_j * conj(v_j). The stacked-real picture (_num.to_real)
turns Re<.,.> into the plain dot product, so grad f realizes as the real
gradient of Re f and i*grad f as the real gradient of Im f.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np

from ._num import rotate_block, to_real
from .errors import AxisProximity, GermSyntaxError

Exponents = Tuple[int, ...]
TermKey = Tuple[Exponents, Exponents]

_MAX_EXPONENT = 2 ** 63 - 1


# ---------------------------------------------------------------------------
# type
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixedGerm:
    """Canonical sparse polynomial germ, immutable after construction."""

    n: int
    terms: Tuple[Tuple[complex, Exponents, Exponents], ...]
    weights: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n_vars must be a positive integer")
        seen = set()
        for c, p, q in self.terms:
            if len(p) != self.n or len(q) != self.n:
                raise ValueError("exponent rows must have length n_vars")
            if any(e < 0 or e > _MAX_EXPONENT for e in p + q):
                raise ValueError("exponents must be non-negative 63-bit integers")
            if c == 0:
                raise ValueError("zero coefficients must be pruned")
            if all(e == 0 for e in p + q):
                raise ValueError("constant term nonzero: germ must vanish at 0")
            key = (p, q)
            if key in seen:
                raise ValueError("duplicate term key")
            seen.add(key)

    @property
    def is_holomorphic(self) -> bool:
        return all(all(e == 0 for e in q) for _, _, q in self.terms)

    @property
    def degree(self) -> int:
        """Maximum total degree over terms (0 for the zero germ)."""
        return max((sum(p) + sum(q) for _, p, q in self.terms), default=0)

    def scale(self, radius: float) -> float:
        """max |c| * radius^deg over terms: the size of f on the sphere."""
        r = float(radius)
        return max((abs(c) * r ** (sum(p) + sum(q)) for c, p, q in self.terms),
                   default=0.0)

    def axis_floor(self, radius: float) -> float:
        return 1e-12 * self.scale(radius)

    def f_floor(self, radius: float) -> float:
        return 1e-6 * self.scale(radius)

    # -- cached dense views used by the evaluators ------------------------

    @cached_property
    def _coef(self) -> np.ndarray:
        return np.array([c for c, _, _ in self.terms], dtype=complex)

    @cached_property
    def _P(self) -> np.ndarray:
        return np.array([p for _, p, _ in self.terms], dtype=np.int64).reshape(
            len(self.terms), self.n)

    @cached_property
    def _Q(self) -> np.ndarray:
        return np.array([q for _, _, q in self.terms], dtype=np.int64).reshape(
            len(self.terms), self.n)

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "terms": [{"re": c.real, "im": c.imag, "p": list(p), "q": list(q)}
                      for c, p, q in self.terms],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "MixedGerm":
        terms = {}
        for t in d["terms"]:
            key = (tuple(int(e) for e in t["p"]), tuple(int(e) for e in t["q"]))
            terms[key] = terms.get(key, 0j) + complex(t["re"], t["im"])
        return _germ_from_dict(int(d["n"]), terms)

    def __str__(self) -> str:
        return format_germ(self)


def _term_sort_key(item):
    (p, q), _ = item
    return (sum(p) + sum(q), p, q)


def _germ_from_dict(n: int, terms: Dict[TermKey, complex],
                    weights: Optional[Tuple[int, ...]] = None) -> MixedGerm:
    pruned = {k: c for k, c in terms.items() if c != 0}
    const_key = ((0,) * n, (0,) * n)
    if const_key in pruned:
        raise ValueError("constant term nonzero: germ must vanish at 0")
    ordered = tuple((c, p, q) for (p, q), c in sorted(pruned.items(),
                                                      key=_term_sort_key))
    return MixedGerm(n=n, terms=ordered, weights=weights)


# ---------------------------------------------------------------------------
# parser
#
# grammar:  expr   := ['+'|'-'] term (('+'|'-') term)*
#           term   := factor ('*' factor)*
#           factor := atom ('^' INTEGER)*
#           atom   := NUMBER | NUMBER 'i' | 'i' | 'z'k | 'zbar'k
#                   | 'conj' '(' expr ')' | '(' expr ')'
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)(?P<imag>i\b)?"
    r"|(?P<var>z(?:bar)?\d+)"
    r"|(?P<conj>conj\b)"
    r"|(?P<unit>i\b)"
    r"|(?P<op>[-+*^()])"
)


def _tokenize(text: str):
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise GermSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup is None or not m.group("ws"):
            if m.group("num") is not None:
                kind = "imag" if m.group("imag") else "num"
                out.append((kind, m.group("num"), pos))
            elif m.group("var"):
                out.append(("var", m.group("var"), pos))
            elif m.group("conj"):
                out.append(("conj", "conj", pos))
            elif m.group("unit"):
                out.append(("imag", "1", pos))
            else:
                out.append(("op", m.group("op"), pos))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    """Recursive-descent parser producing an exponent-dict polynomial."""

    def __init__(self, tokens, n: int):
        self.toks = tokens
        self.i = 0
        self.n = n

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect_op(self, op: str):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise GermSyntaxError(f"expected {op!r}", pos)
        self.take()

    def parse(self) -> Dict[TermKey, complex]:
        poly = self.expr()
        kind, _, pos = self.peek()
        if kind != "end":
            raise GermSyntaxError("trailing input", pos)
        return poly

    def expr(self) -> Dict[TermKey, complex]:
        kind, val, _ = self.peek()
        sign = 1.0
        if kind == "op" and val in "+-":
            self.take()
            sign = -1.0 if val == "-" else 1.0
        poly = _poly_scale(self.term(), sign)
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                poly = _poly_add(poly, _poly_scale(rhs, -1.0 if val == "-" else 1.0))
            else:
                return poly

    def term(self) -> Dict[TermKey, complex]:
        poly = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "*":
                self.take()
                poly = _poly_mul(poly, self.factor(), self.n)
            else:
                return poly

    def factor(self) -> Dict[TermKey, complex]:
        poly = self.atom()
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val == "^":
                self.take()
                ekind, eval_, epos = self.peek()
                neg = False
                if ekind == "op" and eval_ in "+-":
                    self.take()
                    neg = eval_ == "-"
                    ekind, eval_, epos = self.peek()
                if ekind != "num":
                    raise GermSyntaxError("exponent must be an integer literal", epos)
                if any(ch in eval_ for ch in ".eE"):
                    raise GermSyntaxError("non-integer exponent", epos)
                self.take()
                k = int(eval_)
                if neg:
                    raise GermSyntaxError("negative exponent", epos)
                if k > 1000:
                    raise GermSyntaxError("exponent too large", epos)
                poly = _poly_pow(poly, k, self.n)
            else:
                return poly

    def atom(self) -> Dict[TermKey, complex]:
        kind, val, pos = self.take()
        zero = (0,) * self.n
        if kind == "num":
            return {(zero, zero): complex(float(val), 0.0)}
        if kind == "imag":
            return {(zero, zero): complex(0.0, float(val))}
        if kind == "var":
            conj = val.startswith("zbar")
            idx = int(val[4:] if conj else val[1:])
            if idx < 1 or idx > self.n:
                raise GermSyntaxError(f"variable index out of range: {val}", pos)
            p = [0] * self.n
            q = [0] * self.n
            (q if conj else p)[idx - 1] = 1
            return {(tuple(p), tuple(q)): 1.0 + 0j}
        if kind == "conj":
            self.expect_op("(")
            inner = self.expr()
            self.expect_op(")")
            return _poly_conj(inner)
        if kind == "op" and val == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        if kind == "op" and val in "+-":
            return _poly_scale(self.atom(), -1.0 if val == "-" else 1.0)
        raise GermSyntaxError("expected a number, variable, or parenthesis", pos)


def _poly_add(a, b):
    out = dict(a)
    for k, c in b.items():
        out[k] = out.get(k, 0j) + c
    return out


def _poly_scale(a, s):
    return {k: c * s for k, c in a.items()}


def _poly_mul(a, b, n):
    out: Dict[TermKey, complex] = {}
    for (pa, qa), ca in a.items():
        for (pb, qb), cb in b.items():
            key = (tuple(x + y for x, y in zip(pa, pb)),
                   tuple(x + y for x, y in zip(qa, qb)))
            out[key] = out.get(key, 0j) + ca * cb
    return out


def _poly_pow(a, k, n):
    zero = (0,) * n
    out = {(zero, zero): 1.0 + 0j}
    for _ in range(k):
        out = _poly_mul(out, a, n)
    return out


def _poly_conj(a):
    return {(q, p): c.conjugate() for (p, q), c in a.items()}


def parse_germ(text: str, n_vars: int) -> MixedGerm:
    """Parse an expression in z1..zN, conj(zk)/zbark, i, + - * ^ and parens.

    The parsed germ must vanish at the origin; a nonzero constant term is
    rejected. Terms are merged and zero coefficients pruned.
    """
    if n_vars < 1:
        raise ValueError("n_vars must be a positive integer")
    toks = _tokenize(text)
    poly = _Parser(toks, n_vars).parse()
    return _germ_from_dict(n_vars, poly)


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_coef(c: complex) -> str:
    if c.imag == 0.0:
        return _fmt_float(c.real)
    if c.real == 0.0:
        return f"{_fmt_float(c.imag)}*i"
    op = "+" if c.imag > 0 or np.isnan(c.imag) else "-"
    return f"({_fmt_float(c.real)}{op}{_fmt_float(abs(c.imag))}*i)"


def format_germ(germ: MixedGerm) -> str:
    """Deterministic textual form; parse_germ(format_germ(g)) == g."""
    if not germ.terms:
        return "0"
    parts = []
    for c, p, q in germ.terms:
        factors = []
        for j, e in enumerate(p):
            if e == 1:
                factors.append(f"z{j + 1}")
            elif e > 1:
                factors.append(f"z{j + 1}^{e}")
        for j, e in enumerate(q):
            if e == 1:
                factors.append(f"conj(z{j + 1})")
            elif e > 1:
                factors.append(f"conj(z{j + 1})^{e}")
        if c == 1:
            parts.append("*".join(factors))
        elif c == -1:
            parts.append("-" + "*".join(factors))
        else:
            parts.append("*".join([_fmt_coef(c)] + factors))
    out = parts[0]
    for p in parts[1:]:
        out += p if p.startswith("-") else "+" + p
    return out


# ---------------------------------------------------------------------------
# evaluation and exact differentiation (batched; z has shape (..., n))
# ---------------------------------------------------------------------------

def _as_points(z, n: int) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0:
        z = z.reshape(1)
    if z.shape[-1] != n:
        raise ValueError(f"point must have {n} complex coordinates")
    return z


def evaluate(germ: MixedGerm, z) -> np.ndarray:
    """Evaluate sum c * z^p * conj(z)^q at one point or a batch."""
    z = _as_points(z, germ.n)
    out = np.zeros(z.shape[:-1], dtype=complex)
    zc = np.conj(z)
    for t in range(len(germ.terms)):
        term = np.full(z.shape[:-1], germ._coef[t])
        for j in range(germ.n):
            pj = int(germ._P[t, j])
            qj = int(germ._Q[t, j])
            if pj:
                term = term * z[..., j] ** pj
            if qj:
                term = term * zc[..., j] ** qj
        out += term
    return out


def value_and_gradient(germ: MixedGerm, z):
    """Return (f, d_z, d_zbar), each exact and batched.

    d_z[j] = df/dz_j, d_zbar[j] = df/dzbar_j; no finite differences.
    """
    z = _as_points(z, germ.n)
    base = z.shape[:-1]
    f = np.zeros(base, dtype=complex)
    dz = np.zeros(base + (germ.n,), dtype=complex)
    dzb = np.zeros(base + (germ.n,), dtype=complex)
    zc = np.conj(z)
    for t in range(len(germ.terms)):
        c = germ._coef[t]
        holo = []
        anti = []
        for j in range(germ.n):
            pj = int(germ._P[t, j])
            qj = int(germ._Q[t, j])
            holo.append(z[..., j] ** pj if pj else None)
            anti.append(zc[..., j] ** qj if qj else None)
        term = np.full(base, c)
        for j in range(germ.n):
            if holo[j] is not None:
                term = term * holo[j]
            if anti[j] is not None:
                term = term * anti[j]
        f += term
        for j in range(germ.n):
            pj = int(germ._P[t, j])
            qj = int(germ._Q[t, j])
            if pj:
                g = np.full(base, c * pj)
                g = g * z[..., j] ** (pj - 1)
                if anti[j] is not None:
                    g = g * anti[j]
                for k in range(germ.n):
                    if k == j:
                        continue
                    if holo[k] is not None:
                        g = g * holo[k]
                    if anti[k] is not None:
                        g = g * anti[k]
                dz[..., j] += g
            if qj:
                g = np.full(base, c * qj)
                g = g * zc[..., j] ** (qj - 1)
                if holo[j] is not None:
                    g = g * holo[j]
                for k in range(germ.n):
                    if k == j:
                        continue
                    if holo[k] is not None:
                        g = g * holo[k]
                    if anti[k] is not None:
                        g = g * anti[k]
                dzb[..., j] += g
    return f, dz, dzb


def wirtinger_gradient(germ: MixedGerm, z):
    """Exact first Wirtinger derivatives (d_z, d_zbar) at z."""
    _, dz, dzb = value_and_gradient(germ, z)
    return dz, dzb


def _pow_drop(zj, e: int, drop: int):
    """zj**(e - drop) with the convention that e < drop never occurs."""
    k = e - drop
    if k == 0:
        return None
    return zj ** k


def wirtinger_hessian(germ: MixedGerm, z):
    """Exact second Wirtinger derivatives (A, B, C).

    A[j,k] = d2f/dz_j dz_k, B[j,k] = d2f/dz_j dzbar_k,
    C[j,k] = d2f/dzbar_j dzbar_k; batched over leading axes of z.
    """
    z = _as_points(z, germ.n)
    base = z.shape[:-1]
    n = germ.n
    A = np.zeros(base + (n, n), dtype=complex)
    B = np.zeros(base + (n, n), dtype=complex)
    C = np.zeros(base + (n, n), dtype=complex)
    zc = np.conj(z)

    def monomial(t, dp, dq):
        # product z^(P[t]-dp) * conj(z)^(Q[t]-dq); None entries in dp/dq mean 0
        out = np.full(base, germ._coef[t])
        for j in range(n):
            pj = int(germ._P[t, j]) - dp[j]
            qj = int(germ._Q[t, j]) - dq[j]
            if pj:
                out = out * z[..., j] ** pj
            if qj:
                out = out * zc[..., j] ** qj
        return out

    for t in range(len(germ.terms)):
        P = germ._P[t]
        Q = germ._Q[t]
        for j in range(n):
            for k in range(n):
                pj, pk = int(P[j]), int(P[k])
                qj, qk = int(Q[j]), int(Q[k])
                # A: d/dz_j d/dz_k
                fac = pj * (pj - 1) if j == k else pj * pk
                if fac:
                    dp = [0] * n
                    dp[j] += 1
                    dp[k] += 1
                    A[..., j, k] += fac * monomial(t, dp, [0] * n)
                # B: d/dz_j d/dzbar_k
                fac = pj * qk
                if fac:
                    dp = [0] * n
                    dq = [0] * n
                    dp[j] += 1
                    dq[k] += 1
                    B[..., j, k] += fac * monomial(t, dp, dq)
                # C: d/dzbar_j d/dzbar_k
                fac = qj * (qj - 1) if j == k else qj * qk
                if fac:
                    dq = [0] * n
                    dq[j] += 1
                    dq[k] += 1
                    C[..., j, k] += fac * monomial(t, [0] * n, dq)
    return A, B, C


def real_hessians(germ: MixedGerm, z):
    """Real 2n x 2n Hessians (H_a, H_b) of a = Re f and b = Im f.

    Assembled exactly from the second Wirtinger derivatives in the stacked
    [Re ; Im] coordinate layout.
    """
    A, B, C = wirtinger_hessian(germ, z)
    Bt = np.swapaxes(B, -1, -2)
    uu = A + B + Bt + C
    uv = 1j * (A + Bt - B - C)
    vu = np.swapaxes(uv, -1, -2)
    vv = -A + B + Bt - C
    top = np.concatenate([uu, uv], axis=-1)
    bot = np.concatenate([vu, vv], axis=-1)
    H = np.concatenate([top, bot], axis=-2)
    return H.real, H.imag


def real_gradients(germ: MixedGerm, z):
    """Return (f, grad_a, grad_b) with gradients in the stacked real layout."""
    f, dz, dzb = value_and_gradient(germ, z)
    gu = dz + dzb
    gv = 1j * (dz - dzb)
    gf = np.concatenate([gu, gv], axis=-1)   # complex-valued real gradient of f
    return f, gf.real, gf.imag


@dataclass(frozen=True)
class DifferentialSample:
    """Per-point bundle of the value and the two phase-relevant gradients.

    grad_log_rho is the real gradient of log|f| and grad_theta the real
    gradient of the (local) phase angle of f; both live in the stacked
    [Re ; Im] layout and are defined only where |f| is above the axis floor.
    """

    point: np.ndarray        # real 2n
    value: Tuple[float, float]
    rho: float
    grad_a: np.ndarray
    grad_b: np.ndarray
    grad_log_rho: np.ndarray
    grad_theta: np.ndarray

    @property
    def theta(self) -> float:
        a, b = self.value
        return float(np.arctan2(b, a) % (2.0 * np.pi))


def differential_sample(germ: MixedGerm, z, axis_floor: Optional[float] = None
                        ) -> DifferentialSample:
    """Assemble the value/gradient bundle at one point; AxisProximity if
    |f| is at or below the floor (default 1e-12 * germ scale at |z|)."""
    z = _as_points(z, germ.n)
    if z.ndim != 1:
        raise ValueError("differential_sample takes one point")
    f, ga, gb = real_gradients(germ, z)
    a, b = float(f.real), float(f.imag)
    rho2 = a * a + b * b
    rho = float(np.sqrt(rho2))
    if axis_floor is None:
        axis_floor = germ.axis_floor(float(np.linalg.norm(z)))
    if rho <= axis_floor:
        raise AxisProximity(f"|f| = {rho:.3e} <= axis floor {axis_floor:.3e}")
    return DifferentialSample(
        point=to_real(z),
        value=(a, b),
        rho=rho,
        grad_a=ga,
        grad_b=gb,
        grad_log_rho=(a * ga + b * gb) / rho2,
        grad_theta=(a * gb - b * ga) / rho2,
    )


def jacobian_rank_margin(germ: MixedGerm, z) -> float:
    """Second singular value of the real 2 x 2n Jacobian of (Re f, Im f).

    Positive means the point is a submersion point of the pair map; the
    value is 0 at genuinely critical points.
    """
    z = _as_points(z, germ.n)
    _, ga, gb = real_gradients(germ, z)
    J = np.stack([ga, gb], axis=-2)
    s = np.linalg.svd(J, compute_uv=False)
    return float(s[..., 1])


def jacobian_rank_margin_batch(germ: MixedGerm, Z) -> np.ndarray:
    """Vectorized second singular value of the (Re f, Im f) Jacobian."""
    _, ga, gb = real_gradients(germ, Z)
    gaa = np.sum(ga * ga, axis=-1)
    gbb = np.sum(gb * gb, axis=-1)
    gab = np.sum(ga * gb, axis=-1)
    tr = gaa + gbb
    disc = np.sqrt(np.maximum((gaa - gbb) ** 2 + 4.0 * gab ** 2, 0.0))
    lam_min = np.maximum(0.5 * (tr - disc), 0.0)
    return np.sqrt(lam_min)
