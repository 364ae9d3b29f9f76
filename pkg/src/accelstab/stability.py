"""Spectral-radius analysis of the Euler transition matrices.

For a scheme written per eigenmode as ``u_{k+1} = M_k u_k``, the radius
``R(M_k)`` is the largest eigenvalue modulus of ``M_k`` and its limit as
``k -> inf`` classifies end behaviour: below 1 converging, equal to 1
stable, above 1 diverging.

For the explicit-implicit scheme with ``a = p/k`` and
``b = C p eps (k+1)^(p-1) lambda`` the characteristic polynomial is

    mu^2 + (a b + a - 2) mu + (1 - a) = 0.

Complex roots have modulus ``sqrt(1 - a) < 1``, and the root with the ``+``
sign never exceeds 1 in modulus, so instability comes only from the real
root below -1. That happens exactly when ``a (b + 2) > 4``.
The closed-form bound ``k < (4 / (C L p^2 eps))^(1/(p-2))`` comes from the
simpler inequality ``a b < 4``.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AssumptionViolated,
    ClaimViolated,
    NoMatrixForm,
    OrderTooLow,
    ValidationError,
)
from .schemes import ModeMatrix, SchemeKind, SchemeParams, gradient_coefficient

SCAN_CHUNK = 1 << 20
LINEAR_SCAN_LIMIT = 2_000_000
BISECT_PRESCAN = 100_000


class LimitClass(enum.Enum):
    CONVERGING = "converging"
    STABLE = "stable"
    DIVERGING = "diverging"


@dataclass(frozen=True)
class Complex2x2Eigs:
    lambda1: complex
    lambda2: complex
    discriminant: float


def _entries(m):
    if isinstance(m, ModeMatrix):
        return m.m11, m.m12, m.m21, m.m22
    arr = np.asarray(m, dtype=np.float64)
    return arr[0, 0], arr[0, 1], arr[1, 0], arr[1, 1]


def eig2x2(m) -> Complex2x2Eigs:
    """Eigenvalues of a real 2x2 matrix from its characteristic polynomial.

    ``lambda1`` takes the ``+`` branch of the quadratic formula. The
    larger-modulus real root is computed directly and the other from the
    determinant, which avoids cancellation.
    """
    m11, m12, m21, m22 = (float(v) for v in _entries(m))
    tr = m11 + m22
    det = m11 * m22 - m12 * m21
    disc = tr * tr - 4.0 * det
    if disc < 0:
        re = 0.5 * tr
        im = 0.5 * math.sqrt(-disc)
        return Complex2x2Eigs(complex(re, im), complex(re, -im), disc)
    s = math.sqrt(disc)
    if tr >= 0:
        big = 0.5 * (tr + s)
        other = det / big if big != 0 else 0.5 * (tr - s)
        return Complex2x2Eigs(complex(big), complex(other), disc)
    big = 0.5 * (tr - s)
    other = det / big
    return Complex2x2Eigs(complex(other), complex(big), disc)


def _modulus(z: complex) -> float:
    return math.hypot(z.real, z.imag)


def spectral_radius(m) -> float:
    e = eig2x2(m)
    return max(_modulus(e.lambda1), _modulus(e.lambda2))


def _mode_entries(kind, ks, params: SchemeParams, mode_eigenvalue: float):
    """Vectorised transition-matrix entries for integer indices ``ks``."""
    kind = SchemeKind.parse(kind)
    if not kind.has_matrix_form:
        raise NoMatrixForm(f"{kind.value} has no transition-matrix form")
    k = np.asarray(ks, dtype=np.float64)
    p = params.p
    if kind is SchemeKind.EXPLICIT:
        a = p / k
        b = gradient_coefficient(k, params) * mode_eigenvalue
        return 1.0 - a, a, -b, np.ones_like(k)
    if kind is SchemeKind.EXPLICIT_IMPLICIT:
        a = p / k
        b = gradient_coefficient(k + params.shift, params) * mode_eigenvalue
        return 1.0 - a, a, -b * (1.0 - a), 1.0 - a * b
    mk = k + params.shift
    a = p / mk
    b = gradient_coefficient(mk, params) * mode_eigenvalue
    det = 1.0 + a + a * b
    return 1.0 / det, a / det, -b / det, (1.0 + a) / det


def spectral_radii(kind, ks, params: SchemeParams, mode_eigenvalue: float) -> np.ndarray:
    """``R(M_k)`` for every ``k`` in ``ks``."""
    m11, m12, m21, m22 = _mode_entries(kind, ks, params, mode_eigenvalue)
    tr = m11 + m22
    det = m11 * m22 - m12 * m21
    disc = tr * tr - 4.0 * det
    out = np.empty_like(tr)
    real = disc >= 0
    out[real] = 0.5 * (np.abs(tr[real]) + np.sqrt(disc[real]))
    cplx = ~real
    out[cplx] = np.hypot(0.5 * tr[cplx], 0.5 * np.sqrt(-disc[cplx]))
    return out


def limit_polynomial_roots(c: float) -> Complex2x2Eigs:
    """Roots of ``mu^2 + (c - 2) mu + 1``, the explicit-implicit limit polynomial."""
    return eig2x2(np.array([[0.0, -1.0], [1.0, 2.0 - c]]))


def limit_radius(kind, params: SchemeParams, mode_eigenvalue: float) -> float:
    """``R(M_inf)``; ``inf`` (or 0) when ``C p^2 eps k^(p-2) lambda`` diverges."""
    kind = SchemeKind.parse(kind)
    if not kind.has_matrix_form:
        raise NoMatrixForm(f"{kind.value} has no transition-matrix form")
    if params.p > 2:
        return 0.0 if kind is SchemeKind.IMPLICIT else math.inf
    c = params.C * params.p ** 2 * params.epsilon * mode_eigenvalue
    if kind is SchemeKind.IMPLICIT:
        return 1.0 / math.sqrt(1.0 + c)
    if kind is SchemeKind.EXPLICIT:
        return math.sqrt(1.0 + c)
    e = limit_polynomial_roots(c)
    return max(_modulus(e.lambda1), _modulus(e.lambda2))


def limit_classification(kind, params: SchemeParams, mode_eigenvalue: float, tol: float = 1e-12) -> LimitClass:
    kind = SchemeKind.parse(kind)
    if kind is SchemeKind.EXPLICIT_IMPLICIT and params.p == 2:
        c = 4.0 * params.C * params.epsilon * mode_eigenvalue
        if c >= 4.0:
            raise AssumptionViolated(f"p = 2 needs c = 4 C eps lambda < 4, got {c:.6g}")
    r = limit_radius(kind, params, mode_eigenvalue)
    if r < 1.0 - tol:
        return LimitClass.CONVERGING
    if r <= 1.0 + tol:
        return LimitClass.STABLE
    return LimitClass.DIVERGING


def check_assumptions(params: SchemeParams, L: float) -> list[str]:
    """Messages for every violated precondition of the divergence bound."""
    problems = []
    if params.violates_step_condition(L):
        problems.append(f"delta < 1/L fails: delta = {params.delta:g}, 1/L = {1.0 / L:g}")
    if params.violates_c_condition(L):
        problems.append(
            f"C < 1/(eps L) fails: C = {params.C:g}, 1/(eps L) = {1.0 / (params.epsilon * L):g}"
        )
    return problems


def divergence_bound(params: SchemeParams, L: float, check: bool = True) -> float:
    """``(4 / (C L p^2 eps))^(1/(p-2))``, the index past which ``C p^2 eps
    k^(p-2) L`` exceeds 4 and the stiffest mode cannot stay bounded.

    Below it the iteration matrix may still have ``R > 1`` for a few indices
    just under the bound, because ``a_k b_k < 4`` is necessary for
    ``R(M_k) <= 1`` but not sufficient; see
    :func:`exact_instability_threshold`.

    With ``check=False`` the step-size and ``C`` preconditions are not
    enforced (the published tables include ``delta = 1/L`` rows).
    """
    if not L > 0:
        raise ValidationError("L must be positive")
    if params.p == 2:
        raise OrderTooLow("p = 2 has no finite bound (stable end behaviour)")
    if check:
        problems = check_assumptions(params, L)
        if problems:
            raise AssumptionViolated("; ".join(problems))
    p = params.p
    return (4.0 / (params.C * L * p * p * params.epsilon)) ** (1.0 / (p - 2.0))


def _first_k_above(p: float) -> int:
    return math.floor(p) + 1


def _first_unstable_scan(kind, params, lam, k_lo, k_hi):
    for start in range(k_lo, k_hi + 1, SCAN_CHUNK):
        ks = np.arange(start, min(start + SCAN_CHUNK, k_hi + 1), dtype=np.float64)
        hits = np.flatnonzero(spectral_radii(kind, ks, params, lam) > 1.0)
        if hits.size:
            return int(ks[hits[0]])
    return None


def _radius_at(kind, k, params, lam):
    return float(spectral_radii(kind, np.array([float(k)]), params, lam)[0])


def first_unstable_iteration(kind, params: SchemeParams, mode_eigenvalue: float, k_max: int,
                             method: str = "auto") -> int | None:
    """Smallest integer ``k`` in ``(p, k_max]`` with ``R(M_k) > 1``, or None.

    ``method="scan"`` checks every index. ``"bisect"`` scans the first
    ``BISECT_PRESCAN`` indices, then brackets geometrically and bisects,
    which assumes the radius crosses 1 once beyond the prescan (true for the
    three Euler schemes). ``"auto"`` scans up to ``LINEAR_SCAN_LIMIT``.
    """
    k_lo = _first_k_above(params.p)
    if k_max < k_lo:
        raise ValidationError(f"k_max must be at least {k_lo}, got {k_max}")
    if method == "auto":
        method = "scan" if k_max <= LINEAR_SCAN_LIMIT else "bisect"
    if method == "scan":
        return _first_unstable_scan(kind, params, mode_eigenvalue, k_lo, int(k_max))
    if method != "bisect":
        raise ValidationError(f"unknown method {method!r}")

    pre_hi = min(int(k_max), k_lo + BISECT_PRESCAN)
    found = _first_unstable_scan(kind, params, mode_eigenvalue, k_lo, pre_hi)
    if found is not None or pre_hi == k_max:
        return found
    lo, hi = pre_hi, min(2 * pre_hi, int(k_max))
    while _radius_at(kind, hi, params, mode_eigenvalue) <= 1.0:
        if hi == k_max:
            return None
        lo, hi = hi, min(2 * hi, int(k_max))
    # invariant: R(lo) <= 1 < R(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _radius_at(kind, mid, params, mode_eigenvalue) > 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def asymptotic_radius(kind, params: SchemeParams, mode_eigenvalue: float, k) -> float:
    """Large-``k`` radius obtained by dropping the vanishing ``p/k`` terms.

    With ``c = C p^2 eps k^(p-2) lambda``: implicit ``1/sqrt(1+c)``,
    explicit ``sqrt(1+c)``, explicit-implicit the largest root modulus of
    ``mu^2 + (c-2) mu + 1``. Accepts scalar or array ``k``.
    """
    kind = SchemeKind.parse(kind)
    if not kind.has_matrix_form:
        raise NoMatrixForm(f"{kind.value} has no transition-matrix form")
    k = np.asarray(k, dtype=np.float64)
    if np.any(k < 1):
        raise ValidationError("k must be >= 1")
    p = params.p
    c = params.C * p * p * params.epsilon * np.power(k, p - 2.0) * mode_eigenvalue
    if kind is SchemeKind.IMPLICIT:
        out = 1.0 / np.sqrt(1.0 + c)
    elif kind is SchemeKind.EXPLICIT:
        out = np.sqrt(1.0 + c)
    else:
        disc = (c - 2.0) ** 2 - 4.0
        # complex roots have modulus 1; real ones are negative reciprocals
        out = np.where(disc > 0, 0.5 * (np.abs(c - 2.0) + np.sqrt(np.maximum(disc, 0.0))), 1.0)
    return float(out) if out.ndim == 0 else out


# -- claims about the explicit-implicit matrix ------------------------------------

@dataclass
class ClaimReport:
    """Regime census of the explicit-implicit matrices over a range of ``k``."""

    k_first: int
    k_last: int
    n_complex: int = 0
    n_real_lambda1: int = 0
    n_real_lambda2: int = 0
    max_complex_radius_error: float = 0.0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _ei_terms(ks, params, lam):
    k = np.asarray(ks, dtype=np.float64)
    a = params.p / k
    b = gradient_coefficient(k + params.shift, params) * lam
    return a, b


def verify_claims(params: SchemeParams, mode_eigenvalue: float, k_range, raise_on_violation: bool = False) -> ClaimReport:
    """Check, for every ``k`` in ``k_range = (k_first, k_last)``:

    * complex (or repeated) roots: ``R(M_k) = sqrt(1 - p/k) < 1`` to 1e-12;
    * real roots with ``-a b - a + 2 > 0``: ``|lambda1| <= 1``;
    * ``R(M_k) > 1`` only in the real regime with ``-a b - a + 2 < 0``.
    """
    if params.p <= 2:
        raise OrderTooLow("the claims concern p > 2")
    k_first, k_last = (int(v) for v in k_range)
    if k_first <= params.p:
        raise ValidationError(f"k range must lie above p = {params.p}")
    report = ClaimReport(k_first, k_last)
    for start in range(k_first, k_last + 1, SCAN_CHUNK):
        ks = np.arange(start, min(start + SCAN_CHUNK, k_last + 1), dtype=np.float64)
        a, b = _ei_terms(ks, params, mode_eigenvalue)
        radius = spectral_radii(SchemeKind.EXPLICIT_IMPLICIT, ks, params, mode_eigenvalue)
        y = a * b + a
        disc = (y - 2.0) ** 2 - 4.0 * (1.0 - a)
        lead = 2.0 - y

        cplx = disc <= 0
        report.n_complex += int(np.count_nonzero(cplx))
        if np.any(cplx):
            err = np.abs(radius[cplx] - np.sqrt(1.0 - a[cplx]))
            report.max_complex_radius_error = max(report.max_complex_radius_error, float(err.max()))
            for k in ks[cplx][(err > 1e-12) | (radius[cplx] >= 1.0)]:
                report.violations.append((int(k), "complex regime radius is not sqrt(1 - p/k) < 1"))

        r1 = ~cplx & (lead > 0)
        report.n_real_lambda1 += int(np.count_nonzero(r1))
        lam1 = 0.5 * (lead + np.sqrt(np.maximum(disc, 0.0)))
        for k in ks[r1 & (np.abs(lam1) > 1.0)]:
            report.violations.append((int(k), "|lambda1| > 1 in the lambda1-dominant regime"))

        report.n_real_lambda2 += int(np.count_nonzero(~cplx & (lead < 0)))
        for k in ks[(radius > 1.0) & ~(~cplx & (lead < 0))]:
            report.violations.append((int(k), "R > 1 outside the real lambda2-dominant regime"))

    if raise_on_violation and report.violations:
        k, why = report.violations[0]
        raise ClaimViolated(f"claim violated at k = {k}: {why}", k=k)
    return report


def sufficiency_violations(params: SchemeParams, mode_eigenvalue: float, k_range, tol: float = 1e-12) -> list[int]:
    """Indices ``k > p`` where ``a_k b_k < 4`` yet ``R(M_k) > 1 + tol``.

    The simplification ``a b < 4`` is necessary for ``R <= 1`` but not
    sufficient, since the exact condition is ``a (b + 2) <= 4``; a couple of
    indices just before the bound usually show up here.
    """
    k_first, k_last = (int(v) for v in k_range)
    k_first = max(k_first, _first_k_above(params.p))
    out = []
    for start in range(k_first, k_last + 1, SCAN_CHUNK):
        ks = np.arange(start, min(start + SCAN_CHUNK, k_last + 1), dtype=np.float64)
        a, b = _ei_terms(ks, params, mode_eigenvalue)
        radius = spectral_radii(SchemeKind.EXPLICIT_IMPLICIT, ks, params, mode_eigenvalue)
        out.extend(int(k) for k in ks[(a * b < 4.0) & (radius > 1.0 + tol)])
    return out


def exact_instability_threshold(params: SchemeParams, mode_eigenvalue: float) -> float:
    """Real ``k > p`` where ``a_k (b_k + 2) = 4`` for the explicit-implicit scheme.

    Found by bracketing and bisection on the continuous extension; the first
    unstable integer iteration is the next integer above it.
    """
    if params.p <= 2:
        raise OrderTooLow("no finite threshold for p = 2")

    def g(k):
        return params.p / k * (float(gradient_coefficient(k + params.shift, params)) * mode_eigenvalue + 2.0) - 4.0

    lo = float(_first_k_above(params.p))
    if g(lo) > 0:
        return lo
    hi = 2.0 * lo
    while g(hi) <= 0:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
    return hi


# -- reports ------------------------------------------------------------------------

REPORT_META = ("scheme", "p", "C", "delta", "L", "analytic_bound", "first_unstable_k", "limit_class")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass
class StabilityReport:
    scheme: SchemeKind
    params: SchemeParams
    L: float
    ks: np.ndarray
    radii: np.ndarray
    limit_class: LimitClass
    analytic_bound: float | None = None
    first_unstable_k: int | None = None

    @property
    def per_k(self):
        return list(zip(self.ks.tolist(), self.radii.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        meta = (self.scheme.value, self.params.p, self.params.C, self.params.delta, self.L,
                self.analytic_bound, self.first_unstable_k, self.limit_class.value)
        buf.write("# " + ",".join(REPORT_META) + "\n")
        buf.write("# " + ",".join(m if isinstance(m, str) else _fmt(m) for m in meta) + "\n")
        buf.write("k,spectral_radius\n")
        for k, r in zip(self.ks, self.radii):
            buf.write(f"{int(k)},{_fmt(r)}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, convention: str = "k+1") -> "StabilityReport":
        lines = text.splitlines()
        if len(lines) < 3 or not lines[0].startswith("# ") or not lines[1].startswith("# "):
            raise ValidationError("missing stability report header block")
        names = lines[0][2:].split(",")
        vals = dict(zip(names, lines[1][2:].split(",")))
        if tuple(names) != REPORT_META or lines[2] != "k,spectral_radius":
            raise ValidationError("unexpected stability report columns")
        rows = [ln.split(",") for ln in lines[3:] if ln]
        ks = np.array([int(r[0]) for r in rows], dtype=np.int64)
        radii = np.array([float(r[1]) for r in rows])
        params = SchemeParams(_num(vals["p"]), float(vals["C"]), float(vals["delta"]), convention)
        return cls(
            SchemeKind.parse(vals["scheme"]), params, float(vals["L"]), ks, radii,
            LimitClass(vals["limit_class"]),
            float(vals["analytic_bound"]) if vals["analytic_bound"] else None,
            int(vals["first_unstable_k"]) if vals["first_unstable_k"] else None,
        )


def _num(text):
    v = float(text)
    return int(v) if v.is_integer() else v


def analyze(kind, params: SchemeParams, L: float, k_first: int = 1, k_last: int = 100_000,
            stride: int = 1) -> StabilityReport:
    """Radii of the stiffest mode (eigenvalue ``L``) over ``[k_first, k_last]``."""
    kind = SchemeKind.parse(kind)
    if k_last < k_first or k_first < 1 or stride < 1:
        raise ValidationError("need 1 <= k_first <= k_last and stride >= 1")
    ks = np.arange(k_first, k_last + 1, stride, dtype=np.int64)
    radii = spectral_radii(kind, ks, params, L)
    bound = None
    if kind is SchemeKind.EXPLICIT_IMPLICIT and params.p > 2:
        bound = divergence_bound(params, L, check=False)
    first = None
    if k_last > params.p:
        first = first_unstable_iteration(kind, params, L, k_last)
    return StabilityReport(kind, params, L, ks, radii, limit_classification(kind, params, L),
                           bound, first)
