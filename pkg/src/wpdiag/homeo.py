"""Circle homeomorphisms, dyadic intervals and the H^{1/2} oracle.

A circle homeomorphism is carried by its lift phi^ : R -> R, a strictly
increasing function with phi^(x + pi) = phi^(x) + pi (RP^1 = R / pi Z).
Every constructor also records

* ``lip``    an upper bound for the slope, so that omega(h) = lip * h is a
             modulus of continuity;
* ``breaks`` positions (mod pi) where the derivative may jump;
* ``deriv``  the derivative of the lift when it is available in closed form;
* ``curv``   when known, a bound for |phi^''| away from ``breaks``.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .mobius import MobiusMap

PI = math.pi
DEFAULT_PWL_BREAK = PI * (math.sqrt(2.0) - 1.0)


class NotMonotone(ValueError):
    pass


class NotEquivariant(ValueError):
    pass


class NonAbsolutelyContinuous(ValueError):
    pass


# ---------------------------------------------------------------------------
# CircleHomeo
# ---------------------------------------------------------------------------

@dataclass
class CircleHomeo:
    lift_fn: Callable
    lip: float
    tag: str
    deriv_fn: Optional[Callable] = None
    breaks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # piecewise-constant log-derivative data: (starts, lengths, log-slopes) over one period
    log_pieces: Optional[tuple] = None
    mobius: Optional[MobiusMap] = None
    curv: Optional[float] = None

    def __call__(self, x):
        return self.lift(x)

    def lift(self, x):
        out = self.lift_fn(np.asarray(x, dtype=float))
        return out if np.ndim(out) else float(out)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.deriv_fn is not None:
            out = self.deriv_fn(x)
        else:
            out = _difference_quotient(self.lift_fn, x)
        return out if np.ndim(out) else float(out)

    def omega(self, h):
        """Modulus of continuity bound |phi^(x) - phi^(y)| <= omega(|x - y|)."""
        return self.lip * np.abs(h)

    @property
    def is_rotation(self) -> bool:
        return self.tag.startswith("rot:")

    def inverse_lift(self, y, iters: int = 80):
        """Solve phi^(x) = y by vectorized bisection."""
        y = np.asarray(y, dtype=float)
        g = np.linspace(0.0, PI, 2049)
        d = self.lift_fn(g) - g
        lo = y - d.max() - 1.0
        hi = y - d.min() + 1.0
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            up = self.lift_fn(mid) < y
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
        out = 0.5 * (lo + hi)
        return out if out.ndim else float(out)


def _difference_quotient(f, x, h=1e-6):
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + 2 * h) - f(x - 2 * h)) / (4 * h)
    if np.any(d1 <= 0) or np.any(np.abs(d1 - d2) > 1e-3 * np.abs(d1) + 1e-6):
        raise NonAbsolutelyContinuous("difference quotients are not refinement-consistent")
    return d1


def validate(h: CircleHomeo, n_grid: int = 8192, n_random: int = 1000, seed: int = 0):
    """Reject lifts that are not strictly increasing or not pi-equivariant."""
    g = np.linspace(-PI, 2 * PI, 3 * n_grid + 1)
    v = h.lift_fn(g)
    if not np.all(np.isfinite(v)) or np.any(np.diff(v) <= 0):
        raise NotMonotone(f"{h.tag}: lift is not strictly increasing")
    x = np.random.default_rng(seed).uniform(-10.0, 10.0, n_random)
    err = np.max(np.abs(h.lift_fn(x + PI) - h.lift_fn(x) - PI))
    if err > 1e-10:
        raise NotEquivariant(f"{h.tag}: equivariance defect {err:.3e}")
    return h


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def rotation(c: float) -> CircleHomeo:
    c = float(c)
    return CircleHomeo(
        lift_fn=lambda x: x + c,
        deriv_fn=lambda x: np.ones_like(x),
        lip=1.0,
        tag=f"rot:{c!r}",
        log_pieces=(np.array([0.0]), np.array([PI]), np.array([0.0])),
        mobius=MobiusMap.rotation(c),
        curv=0.0,
    )


def trig(a: float) -> CircleHomeo:
    """Lift x + a sin(2x); a homeomorphism exactly when |2a| < 1."""
    a = float(a)
    if not abs(2 * a) < 1:
        raise NotMonotone(f"trig({a!r}) requires |2a| < 1")
    return validate(CircleHomeo(
        lift_fn=lambda x: x + a * np.sin(2 * x),
        deriv_fn=lambda x: 1.0 + 2 * a * np.cos(2 * x),
        lip=1.0 + 2 * abs(a),
        tag=f"trig:{a!r}",
        curv=4.0 * abs(a),
    ))


def from_mobius(m: MobiusMap) -> CircleHomeo:
    lip, curv = m.lift_bounds()
    return CircleHomeo(
        lift_fn=m.lift,
        deriv_fn=lambda x: m.lift_derivatives(x)[0],
        lip=lip,
        tag=f"mobius:{m.a!r},{m.b!r},{m.c!r},{m.d!r}",
        mobius=m,
        curv=curv,
    )


def piecewise_linear(breakpoints: Sequence[float], slopes: Sequence[float]) -> CircleHomeo:
    """Piecewise-linear lift with kinks at ``breakpoints`` (one period).

    ``breakpoints`` b_0 < ... < b_{n-1} < b_0 + pi; slope s_i holds on
    [b_i, b_{i+1}) with b_n = b_0 + pi.  The lift fixes b_0.
    """
    b = np.asarray(breakpoints, dtype=float)
    s = np.asarray(slopes, dtype=float)
    if b.ndim != 1 or len(b) != len(s) or len(b) == 0:
        raise ValueError("need one slope per breakpoint")
    if np.any(s <= 0):
        raise NotMonotone("slopes must be positive")
    ends = np.append(b, b[0] + PI)
    lens = np.diff(ends)
    if np.any(lens <= 0):
        raise NotMonotone("breakpoints must increase within one period")
    rise = float(np.sum(s * lens))
    if abs(rise - PI) > 1e-12 * PI:
        raise NotEquivariant(f"total rise {rise!r} differs from pi")
    cum = np.concatenate([[0.0], np.cumsum(s * lens)])[:-1]
    off = b - b[0]
    b0 = float(b[0])

    def lift_fn(x):
        n = np.floor((x - b0) / PI)
        u = x - b0 - n * PI
        i = np.clip(np.searchsorted(off, u, side="right") - 1, 0, len(off) - 1)
        return b0 + n * PI + cum[i] + s[i] * (u - off[i])

    def deriv_fn(x):
        u = np.mod(x - b0, PI)
        i = np.clip(np.searchsorted(off, u, side="right") - 1, 0, len(off) - 1)
        return s[i]

    tag = "pwl:" + ",".join(repr(float(v)) for v in b) + ";" + ",".join(repr(float(v)) for v in s)
    return validate(CircleHomeo(
        lift_fn=lift_fn,
        deriv_fn=deriv_fn,
        lip=float(s.max()),
        tag=tag,
        breaks=np.mod(b, PI),
        log_pieces=(b.copy(), lens, np.log(s)),
        curv=0.0,
    ))


def pwl_equal(base: float, slopes: Sequence[float]) -> CircleHomeo:
    """Equal-length pieces on [base, base + pi] with the given slopes."""
    n = len(slopes)
    bp = base + PI * np.arange(n) / n
    h = piecewise_linear(bp, slopes)
    h.tag = f"pwl:{base!r};" + ",".join(repr(float(v)) for v in slopes)
    return h


def from_samples(xs: Sequence[float], ys: Sequence[float]) -> CircleHomeo:
    """Monotone (PCHIP) interpolation of a table over one period.

    ``xs`` must be strictly increasing with xs[-1] < xs[0] + pi, and ``ys``
    strictly increasing with ys[-1] < ys[0] + pi.  The table is extended
    periodically before interpolating so the lift is smooth across the seam.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.any(np.diff(xs) <= 0) or not xs[-1] < xs[0] + PI:
        raise ValueError("sample abscissae must increase within one period")
    if np.any(np.diff(ys) <= 0) or not ys[-1] < ys[0] + PI:
        raise NotMonotone("sample values must increase within one period")
    X = np.concatenate([xs - PI, xs, xs + PI, [xs[0] + 2 * PI]])
    Y = np.concatenate([ys - PI, ys, ys + PI, [ys[0] + 2 * PI]])
    p = PchipInterpolator(X, Y)
    dp = p.derivative()
    x0 = float(xs[0])

    def lift_fn(x):
        n = np.floor((x - x0) / PI)
        return p(x - n * PI) + n * PI

    def deriv_fn(x):
        n = np.floor((x - x0) / PI)
        return dp(x - n * PI)

    # PCHIP slopes never exceed three times the largest secant slope
    lip = 3.0 * float(np.max(np.diff(Y) / np.diff(X)))
    return validate(CircleHomeo(
        lift_fn=lift_fn, deriv_fn=deriv_fn, lip=lip,
        tag=f"samples:{len(xs)}", breaks=np.mod(xs, PI),
    ))


def compose(A: CircleHomeo, B: CircleHomeo) -> CircleHomeo:
    """A o B."""
    deriv_fn = None
    if A.deriv_fn is not None and B.deriv_fn is not None:
        deriv_fn = lambda x: A.deriv_fn(B.lift_fn(x)) * B.deriv_fn(x)
    breaks = B.breaks
    if len(A.breaks):
        breaks = np.concatenate([breaks, np.mod(B.inverse_lift(A.breaks), PI)])
    log_pieces = None
    if A.is_rotation and B.log_pieces is not None:
        log_pieces = B.log_pieces
    elif B.is_rotation and A.log_pieces is not None:
        c = B.lift(0.0)
        st, ln, lv = A.log_pieces
        log_pieces = (st - c, ln, lv)
    mob = A.mobius.compose(B.mobius) if (A.mobius and B.mobius) else None
    curv = None
    if A.curv is not None and B.curv is not None:
        curv = A.curv * B.lip ** 2 + A.lip * B.curv
    tag = f"compose:{A.tag}|{B.tag}"
    if A.is_rotation and B.is_rotation:
        return rotation(A.lift(0.0) + B.lift(0.0))
    return CircleHomeo(
        lift_fn=lambda x: A.lift_fn(B.lift_fn(x)),
        deriv_fn=deriv_fn,
        lip=A.lip * B.lip,
        tag=tag,
        breaks=np.unique(breaks),
        log_pieces=log_pieces,
        mobius=mob,
        curv=curv,
    )


# ---------------------------------------------------------------------------
# spec mini-language
# ---------------------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_NAMES = {"pi": PI, "e": math.e}
_FUNCS = {"sqrt": math.sqrt}


def parse_real(text: str) -> float:
    """Evaluate a small arithmetic expression such as ``-pi/3`` or ``sqrt(2)-1``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ValueError(f"unsupported expression: {text!r}")

    return float(ev(ast.parse(text.strip(), mode="eval")))


def make_homeo(spec: str) -> CircleHomeo:
    """Build a homeomorphism from ``rot:c``, ``mobius:a,b,c,d``, ``trig:a``,
    ``pwl:b;s1,s2,...`` (``b`` optional) or ``compose:A|B|...`` (A o B o ...)."""
    kind, _, arg = spec.strip().partition(":")
    if kind == "compose":
        parts = [make_homeo(p) for p in arg.split("|")]
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = compose(p, out)
        out.tag = spec.strip()
        return out
    if kind == "rot":
        return rotation(parse_real(arg))
    if kind == "trig":
        return trig(parse_real(arg))
    if kind == "mobius":
        vals = [parse_real(v) for v in arg.split(",")]
        if len(vals) != 4:
            raise ValueError("mobius spec needs four entries")
        return from_mobius(MobiusMap(*vals))
    if kind == "pwl":
        base_txt, sep, slopes_txt = arg.partition(";")
        if not sep:
            base_txt, slopes_txt = "", base_txt
        base = parse_real(base_txt) if base_txt.strip() else DEFAULT_PWL_BREAK
        slopes = [parse_real(v) for v in slopes_txt.split(",")]
        return pwl_equal(base, slopes)
    raise ValueError(f"unknown homeomorphism spec {spec!r}")


# ---------------------------------------------------------------------------
# dyadic intervals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def scale(self, lam: float) -> "Interval":
        """The interval lam * I with the same centre."""
        if lam < 1:
            raise ValueError("multiplier must be >= 1")
        r = 0.5 * lam * self.length
        return Interval(self.center - r, self.center + r)

    def contains(self, x, slack: float = 0.0) -> bool:
        return self.lo - slack <= x <= self.hi + slack

    def contains_interval(self, other: "Interval", slack: float = 1e-12) -> bool:
        return self.lo - slack <= other.lo and other.hi <= self.hi + slack


@dataclass(frozen=True)
class DyadicInterval:
    x0: float
    m: int
    k: int

    def __post_init__(self):
        if self.m < 0 or not 0 <= self.k < 2 ** self.m:
            raise ValueError(f"invalid dyadic index (m={self.m}, k={self.k})")

    @property
    def length(self) -> float:
        return PI * 2.0 ** (-self.m)

    @property
    def lo(self) -> float:
        return self.x0 + self.k * self.length

    @property
    def hi(self) -> float:
        return self.x0 + (self.k + 1) * self.length

    @property
    def interval(self) -> Interval:
        return Interval(self.lo, self.hi)

    @property
    def center(self) -> float:
        return self.x0 + (self.k + 0.5) * self.length

    def triple(self) -> Interval:
        return self.interval.scale(3.0)

    def scale(self, lam: float) -> Interval:
        return self.interval.scale(lam)

    def translate_to(self, x: float) -> Interval:
        """I^x: the translate of I centred on x (x must lie in I)."""
        if not self.interval.contains(x, 1e-15):
            raise ValueError("translation centre must lie in I")
        r = 0.5 * self.length
        return Interval(x - r, x + r)

    def parent(self) -> "DyadicInterval":
        if self.m == 0:
            raise ValueError("depth-0 interval has no parent")
        return DyadicInterval(self.x0, self.m - 1, self.k // 2)

    def children(self):
        return (DyadicInterval(self.x0, self.m + 1, 2 * self.k),
                DyadicInterval(self.x0, self.m + 1, 2 * self.k + 1))

    def chain(self):
        """Successive ancestors I_1 (parent), I_2, ..., I_m (depth 0)."""
        out = []
        cur = self
        while cur.m > 0:
            cur = cur.parent()
            out.append(cur)
        return out


def dyadic_interval(x0: float, m: int, k: int) -> DyadicInterval:
    return DyadicInterval(float(x0), int(m), int(k))


def dyadic_level(x0: float, m: int):
    return [DyadicInterval(float(x0), m, k) for k in range(2 ** m)]


def level_endpoints(x0: float, m: int):
    """All 2^m + 1 endpoints of depth m, as an array."""
    return x0 + PI * np.arange(2 ** m + 1) / 2 ** m


def triple(I: DyadicInterval) -> Interval:
    return I.triple()


def scale(I, lam: float) -> Interval:
    return I.scale(lam)


def translate_to(I: DyadicInterval, x: float) -> Interval:
    return I.translate_to(x)


def chain(I: DyadicInterval):
    return I.chain()


def image_length(phi: CircleHomeo, I) -> float:
    return float(phi.lift(I.hi) - phi.lift(I.lo))


def holder_constant(phi: CircleHomeo, mu: float, x0: float = 0.0, depth: int = 12) -> float:
    """Dyadic estimate of the mu-Hoelder constant sup l(phi(I)) / l(I)^mu.

    The sup runs over the dyadic intervals of depths 0..depth; any interval
    is covered by two dyadic ones of at most twice its length, so the true
    constant over all intervals is at most 2^(1 + mu) times this value.
    """
    if not 0 < mu <= 1:
        raise ValueError("mu must lie in (0, 1]")
    best = 0.0
    for m in range(depth + 1):
        ell = PI * 2.0 ** (-m)
        im = np.diff(phi.lift_fn(level_endpoints(x0, m)))
        best = max(best, float(im.max()) / ell ** mu)
    return best


# ---------------------------------------------------------------------------
# H^{1/2} oracle
# ---------------------------------------------------------------------------

@dataclass
class HalfSeminormReport:
    verdict: str               # "converged" | "diverging"
    value: float               # last partial sum
    Ks: list
    sums: list
    growth_per_doubling: float  # mean of the last three increments
    tol: float


def _coeffs_pieces(log_pieces, kmax):
    st, ln, lv = log_pieces
    k = np.arange(1, kmax + 1)[:, None]
    a = st[None, :]
    b = (st + ln)[None, :]
    z = (np.exp(-2j * k * b) - np.exp(-2j * k * a)) / (-2j * k)
    return (z @ lv) / PI


def _coeffs_quadrature(phi: CircleHomeo, kmax, n_nodes=8192, order=16):
    bounds = np.unique(np.concatenate([[0.0, PI], np.mod(phi.breaks, PI)]))
    lens = np.diff(bounds)
    # distribute panels proportionally to length
    n_pan = np.maximum(1, np.round(lens / PI * n_nodes / order).astype(int))
    gx, gw = np.polynomial.legendre.leggauss(order)
    xs, ws = [], []
    for lo, L, n in zip(bounds[:-1], lens, n_pan):
        edges = lo + L * np.arange(n + 1) / n
        h = L / n
        mid = 0.5 * (edges[:-1] + edges[1:])
        xs.append((mid[:, None] + 0.5 * h * gx[None, :]).ravel())
        ws.append(np.tile(0.5 * h * gw, n))
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    d = phi.deriv(x)
    if np.any(d <= 0):
        raise NonAbsolutelyContinuous("derivative is not positive")
    g = w * np.log(d)
    z1 = np.exp(-2j * x)
    z = z1.copy()
    out = np.empty(kmax, dtype=complex)
    for k in range(kmax):
        if k and k % 64 == 0:
            z = np.exp(-2j * (k + 1) * x)   # re-anchor the recurrence
        out[k] = np.dot(g, z)
        z = z * z1
    return out / PI


def fourier_log_derivative(phi: CircleHomeo, kmax: int):
    """Coefficients c_1..c_kmax of log phi^' on R / pi Z (basis e^{2ikx})."""
    if phi.log_pieces is not None:
        return _coeffs_pieces(phi.log_pieces, kmax)
    return _coeffs_quadrature(phi, kmax)


def h_half_seminorm(phi: CircleHomeo, K0: int = 16, doublings: int = 5,
                    tol: float = 1e-8) -> HalfSeminormReport:
    """Partial sums S_K = sum_{|k| <= K} |k| |c_k|^2 at K = K0 2^j.

    log phi^' is real, so c_{-k} = conj(c_k) and S_K = 2 sum_{k=1}^K k |c_k|^2.
    Verdict: converged if the last three increments are each below
    tol * S_K (or S vanishes); otherwise diverging.
    """
    Ks = [K0 * 2 ** j for j in range(doublings + 1)]
    c = fourier_log_derivative(phi, Ks[-1])
    k = np.arange(1, Ks[-1] + 1)
    terms = 2.0 * k * np.abs(c) ** 2
    cums = np.cumsum(terms)
    sums = [float(cums[K - 1]) for K in Ks]
    inc = np.diff(sums)
    last = inc[-3:]
    growth = float(np.mean(last))
    if sums[-1] < 1e-24 or np.all(np.abs(last) < tol * sums[-1]):
        verdict = "converged"
    else:
        verdict = "diverging"
    value = sums[-1] if sums[-1] >= 1e-24 else 0.0
    return HalfSeminormReport(verdict, value, Ks, sums, growth, tol)


def jump_log_growth(log_pieces) -> float:
    """Predicted per-doubling growth (sum J^2 / (2 pi^2)) ln 2 of S_K for
    a piecewise-constant log-derivative with jumps J."""
    _, _, lv = log_pieces
    jumps = lv - np.roll(lv, 1)
    return float(np.sum(jumps ** 2) / (2 * PI ** 2) * math.log(2.0))
