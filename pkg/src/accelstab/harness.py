"""Trajectory runs, empirical divergence detection and divergence tables."""

from __future__ import annotations

import enum
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from . import _kernels
from .errors import EmptyTrace, NonPositiveGap, ValidationError, WindowTooNarrow
from .objective import QuadraticObjective, from_eigenbasis, log_spaced_objective, to_eigenbasis
from .schemes import SchemeKind, SchemeParams, reference_ode_solve
from .stability import divergence_bound, first_unstable_iteration, check_assumptions

TRACE_HEADER = "k,t,f_gap,x_dist"
TABLE_HEADER = "p,L,delta,C,analytic_bound,first_unstable_k,empirical_k,status"
COMPARE_HEADER = "scheme," + TRACE_HEADER

# (p, L, delta) -> published divergence iteration
PUBLISHED_TABLE = {
    (3, 10.0, 0.01): 44_445,
    (3, 10.0, 0.001): 44_444_445,
    (3, 100.0, 0.01): 4_445,
    (3, 100.0, 0.001): 4_444_445,
    (4, 10.0, 0.01): 1_582,
    (4, 10.0, 0.001): 158_113,
    (4, 100.0, 0.01): 500,
    (4, 100.0, 0.001): 50_000,
}
DEFAULT_GRID = tuple(PUBLISHED_TABLE)

_KERNEL_CODES = {
    SchemeKind.EXPLICIT: _kernels.EXPLICIT,
    SchemeKind.IMPLICIT: _kernels.IMPLICIT,
    SchemeKind.EXPLICIT_IMPLICIT: _kernels.EXPLICIT_IMPLICIT,
}


class TraceRecord(NamedTuple):
    k: int
    t: float
    f_gap: float
    x_dist: float


@dataclass
class Trace:
    """Recorded iterates of one run, stored column-wise."""

    k: np.ndarray
    t: np.ndarray
    f_gap: np.ndarray
    x_dist: np.ndarray
    label: str = ""
    nonfinite: bool = False
    final_x: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.k)

    def __iter__(self) -> Iterator[TraceRecord]:
        for row in zip(self.k.tolist(), self.t.tolist(), self.f_gap.tolist(), self.x_dist.tolist()):
            yield TraceRecord(*row)

    def __getitem__(self, i) -> TraceRecord:
        return TraceRecord(int(self.k[i]), float(self.t[i]), float(self.f_gap[i]), float(self.x_dist[i]))

    @classmethod
    def from_records(cls, records: Sequence[TraceRecord], label: str = "") -> "Trace":
        cols = list(zip(*records)) if records else [(), (), (), ()]
        return cls(np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=float),
                   np.array(cols[2], dtype=float), np.array(cols[3], dtype=float), label)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(TRACE_HEADER + "\n")
        for k, t, f, d in zip(self.k.tolist(), self.t.tolist(), self.f_gap.tolist(), self.x_dist.tolist()):
            buf.write(f"{k},{t:.17g},{f:.17g},{d:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, label: str = "") -> "Trace":
        lines = text.splitlines()
        if not lines or lines[0] != TRACE_HEADER:
            raise ValidationError(f"trace CSV must start with {TRACE_HEADER!r}")
        records = []
        for ln in lines[1:]:
            if not ln:
                continue
            k, t, f, d = ln.split(",")
            records.append(TraceRecord(int(k), float(t), float(f), float(d)))
        trace = cls.from_records(records, label)
        trace.nonfinite = bool(len(trace)) and not (
            math.isfinite(trace.f_gap[-1]) and math.isfinite(trace.x_dist[-1]))
        return trace


@dataclass(frozen=True)
class DetectorSettings:
    """A rising window must end above every record in the stretch before it,
    of length ``max(lookback, lookback_fraction * index)``. This rejects the
    rising half-periods of slow, still-decaying oscillations, whose length
    grows with ``k``."""

    threshold: float = 10.0
    window: int = 50
    lookback: int = 500
    lookback_fraction: float = 0.25


class DivergenceCriterion(enum.Enum):
    GAP_EXCEEDS_INITIAL = "gap-exceeds-initial"
    MONOTONE_GROWTH_WINDOW = "monotone-growth-window"
    NON_FINITE = "non-finite"


@dataclass(frozen=True)
class DivergenceVerdict:
    diverged: bool
    empirical_k: int | None = None
    criterion: DivergenceCriterion | None = None


@dataclass(frozen=True)
class RunConfig:
    """One trajectory: scheme, parameters, budget and recording stride."""

    scheme: SchemeKind
    params: SchemeParams
    iters: int
    stride: int | None = None
    x0: np.ndarray | None = None
    k0: int = 1
    nesterov_step: float | None = None
    engine: str = "modal"

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeKind.parse(self.scheme))
        if self.iters < 0:
            raise ValidationError("iteration budget must be non-negative")
        if self.stride is not None and self.stride < 1:
            raise ValidationError("stride must be >= 1")
        if self.k0 < 1:
            raise ValidationError("k0 must be >= 1")
        if self.engine not in ("modal", "direct"):
            raise ValidationError("engine must be 'modal' or 'direct'")

    @property
    def effective_stride(self) -> int:
        if self.stride is not None:
            return self.stride
        return max(1, self.iters // 100_000)


def default_x0(obj: QuadraticObjective) -> np.ndarray:
    """``x* + s * ones`` with ``s`` chosen so the initial gap is exactly 1."""
    ones = np.ones(obj.dim)
    return obj.x_star + ones / math.sqrt(0.5 * float(ones @ obj.A @ ones))


def run_trajectory(config: RunConfig, obj: QuadraticObjective) -> Trace:
    """Run one configuration from ``z_0 = x_0`` at ``k_0`` and record the gap.

    Euler schemes, RK4 and Nesterov-C are all linear and mode-decoupled on a
    quadratic, so the default ``engine="modal"`` advances each eigenmode with
    a compiled loop. ``engine="direct"`` steps the full vectors with the
    reference steppers in :mod:`accelstab.schemes`. The run stops early on the
    first non-finite value, which is kept as the last record. A zero budget
    gives an empty trace.
    """
    x0 = default_x0(obj) if config.x0 is None else np.asarray(config.x0, dtype=np.float64)
    if x0.shape != (obj.dim,):
        raise ValidationError(f"x0 must have length {obj.dim}")
    if config.scheme is SchemeKind.NESTEROV_C:
        s = config.nesterov_step if config.nesterov_step is not None else 1.0 / obj.L
        if s > 1.0 / obj.L * (1 + 1e-12):
            raise ValidationError(f"Nesterov step {s} exceeds 1/L")
    elif config.scheme is SchemeKind.EXPLICIT_IMPLICIT and config.params.violates_c_condition(obj.L):
        warnings.warn("C >= 1/(eps L): outside the regime covered by the divergence bound",
                      stacklevel=2)
    if config.iters == 0:
        return Trace.from_records([], config.scheme.value)
    if config.engine == "direct":
        return _run_direct(config, obj, x0)

    stride = config.effective_stride
    n = config.iters
    cap = n // stride + 3
    k_out = np.zeros(cap, dtype=np.int64)
    t_out = np.zeros(cap)
    f_out = np.zeros(cap)
    d_out = np.zeros(cap)
    lam = np.ascontiguousarray(obj.eigenvalues, dtype=np.float64)
    xt = to_eigenbasis(obj, x0).copy()
    zt = xt.copy()
    p = config.params
    if config.scheme in _KERNEL_CODES:
        count, _, finite = _kernels.euler_modal(
            _KERNEL_CODES[config.scheme], lam, xt, zt, config.k0, n, float(p.p), float(p.C),
            float(p.epsilon), float(p.shift), float(p.delta), stride, k_out, t_out, f_out, d_out)
    elif config.scheme is SchemeKind.NESTEROV_C:
        s = config.nesterov_step if config.nesterov_step is not None else 1.0 / obj.L
        count, _, finite = _kernels.nesterov_modal(
            lam, xt, zt, config.k0, n, float(s), float(p.delta), stride, k_out, t_out, f_out, d_out)
    else:
        count, finite = _kernels.rk4_modal(
            lam, xt, zt, p.delta * config.k0, float(p.delta), n, float(p.p), float(p.C), stride,
            k_out, t_out, f_out, d_out)
        k_out[:count] += config.k0
        t_out[:count] = p.delta * k_out[:count]
    return Trace(k_out[:count].copy(), t_out[:count].copy(), f_out[:count].copy(),
                 d_out[:count].copy(), config.scheme.value, not finite, from_eigenbasis(obj, xt))


def _run_direct(config, obj, x0):
    from .objective import suboptimality
    from .schemes import IterateState, nesterov_c_step, step

    stride = config.effective_stride
    state = IterateState.initial(x0, config.k0)
    records = []

    def record(st):
        dist = float(np.linalg.norm(st.x - obj.x_star))
        gap = suboptimality(obj, st.x) if np.all(np.isfinite(st.x)) else math.inf
        records.append(TraceRecord(st.k, config.params.delta * st.k, gap, dist))
        return math.isfinite(gap) and math.isfinite(dist)

    finite = record(state)
    s = config.nesterov_step if config.nesterov_step is not None else 1.0 / obj.L
    for i in range(config.iters):
        if not finite:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            if config.scheme is SchemeKind.NESTEROV_C:
                state = nesterov_c_step(state, obj, s)
            else:
                state = step(config.scheme, state, config.params, obj)
        if (i + 1) % stride == 0 or i == config.iters - 1 or not np.all(np.isfinite(state.x)):
            finite = record(state)
    trace = Trace.from_records(records, config.scheme.value)
    trace.nonfinite = not finite
    trace.final_x = state.x
    return trace


def detect_divergence(trace: Trace, settings: DetectorSettings = DetectorSettings()) -> DivergenceVerdict:
    """Earliest record at which any divergence criterion holds.

    * non-finite gap or distance;
    * gap above ``threshold * max(initial gap, 1)``;
    * ``window`` consecutive records strictly increasing and ending above
      every one of the lookback records before the window (reported at the
      record completing the window).
    """
    if len(trace) == 0:
        raise EmptyTrace("cannot judge divergence of an empty trace")
    f = np.asarray(trace.f_gap, dtype=float)
    d = np.asarray(trace.x_dist, dtype=float)
    candidates = []

    bad = np.flatnonzero(~(np.isfinite(f) & np.isfinite(d)))
    if bad.size:
        candidates.append((bad[0], DivergenceCriterion.NON_FINITE))

    limit = settings.threshold * max(float(f[0]), 1.0)
    with np.errstate(invalid="ignore"):
        over = np.flatnonzero(f > limit)
    if over.size:
        candidates.append((over[0], DivergenceCriterion.GAP_EXCEEDS_INITIAL))

    w = settings.window
    if w >= 2 and len(f) >= w:
        with np.errstate(invalid="ignore"):
            up = np.diff(f) > 0
        idx = np.arange(len(up))
        # length of the run of increases ending at each step
        runs = idx - np.maximum.accumulate(np.where(up, -1, idx))
        for j in np.flatnonzero(runs >= w - 1):
            end = j + 1
            start = end - (w - 1)
            look = max(settings.lookback, int(settings.lookback_fraction * end))
            before = f[max(0, start - look):start]
            if before.size == 0 or f[end] > np.max(before):
                candidates.append((end, DivergenceCriterion.MONOTONE_GROWTH_WINDOW))
                break

    if not candidates:
        return DivergenceVerdict(False)
    idx, crit = min(candidates, key=lambda c: c[0])
    return DivergenceVerdict(True, int(trace.k[idx]), crit)


def fit_rate(trace: Trace, window: tuple[float, float]) -> float:
    """Least-squares slope of ``log f_gap`` against ``log t`` on ``window``.

    Uses the running minimum of the gap, taken from the start of the trace,
    so oscillations do not pollute the envelope.
    """
    t_lo, t_hi = window
    if not (t_lo > 0 and t_hi >= 10.0 * t_lo):
        raise WindowTooNarrow(f"window [{t_lo}, {t_hi}] spans less than a decade")
    t = np.asarray(trace.t, dtype=float)
    env = np.minimum.accumulate(np.asarray(trace.f_gap, dtype=float))
    sel = (t >= t_lo * (1 - 1e-12)) & (t <= t_hi * (1 + 1e-12))
    if np.count_nonzero(sel) < 2:
        raise WindowTooNarrow("fewer than two records inside the window")
    if t[sel].max() < 10.0 * t[sel].min() * (1 - 1e-9):
        raise WindowTooNarrow("records inside the window span less than a decade")
    if np.any(env[sel] <= 0) or not np.all(np.isfinite(env[sel])):
        raise NonPositiveGap("gap must be positive and finite throughout the window")
    slope, _ = np.polyfit(np.log(t[sel]), np.log(env[sel]), 1)
    return float(slope)


def first_below(trace: Trace, level: float) -> int | None:
    """First recorded ``k`` with ``f_gap <= level``."""
    hits = np.flatnonzero(np.asarray(trace.f_gap) <= level)
    return int(trace.k[hits[0]]) if hits.size else None


def reference_trace(params: SchemeParams, obj: QuadraticObjective, x0, t_end: float,
                    fine_factor: int = 100, record_every: int | None = None) -> Trace:
    """Fine-step RK4 solution of the ODE, indexed on the coarse ``k = t/delta`` axis."""
    fine = params.delta / fine_factor
    if record_every is None:
        record_every = fine_factor
    traj = reference_ode_solve(params, obj, x0, params.delta, t_end, fine, sample_every=record_every)
    k = np.rint(traj.t / params.delta).astype(np.int64)
    return Trace(k, traj.t, traj.f_gap, traj.x_dist, "ode", not traj.finite, traj.x_final)


def measure_rk4_order(p: float = 4.0, C: float = 1.0, mode_eigenvalue: float = 1.0,
                      window: tuple[float, float] = (1.0, 2.0),
                      steps: Sequence[float] = (1e-2, 5e-3, 2.5e-3)) -> float:
    """Observed global order of the RK4 integrator on one mode.

    Integrates from ``X = Z = 1`` across ``window`` (away from the ``t = 0``
    singularity) with each step in ``steps``, measures the endpoint error
    against a run with a 64 times smaller step, and returns the slope of
    ``log error`` against ``log h``.
    """
    t0, t1 = window
    lam = np.array([float(mode_eigenvalue)])

    def endpoint(h):
        n = int(round((t1 - t0) / h))
        if not math.isclose(n * h, t1 - t0, rel_tol=1e-9):
            raise ValidationError(f"step {h} does not divide the window")
        xt, zt = np.ones(1), np.ones(1)
        buf = [np.zeros(2, dtype=np.int64), np.zeros(2), np.zeros(2), np.zeros(2)]
        _kernels.rk4_modal(lam, xt, zt, float(t0), float(h), n, float(p), float(C), n, *buf)
        return xt[0]

    ref = endpoint(min(steps) / 64)
    errs = np.array([abs(endpoint(h) - ref) for h in steps])
    slope, _ = np.polyfit(np.log(steps), np.log(errs), 1)
    return float(slope)


def compare_schemes(schemes, params: SchemeParams, obj: QuadraticObjective, iters: int,
                    stride: int | None = None, x0=None, nesterov_step: float | None = None,
                    include_baseline: bool = True) -> dict[str, Trace]:
    """Traces for several schemes (``"ode"`` for the reference) on a common k-axis.

    The Nesterov-C baseline is always added unless ``include_baseline`` is
    false.
    """
    names = [str(s) for s in schemes]
    if include_baseline and "nesterov" not in names:
        names.append("nesterov")
    x0 = default_x0(obj) if x0 is None else np.asarray(x0, dtype=np.float64)
    out = {}
    for name in names:
        if name == "ode":
            out[name] = reference_trace(params, obj, x0, params.delta * (1 + iters),
                                        record_every=100 * (stride or 1))
            continue
        kind = SchemeKind.parse(name)
        cfg = RunConfig(kind, params, iters, stride=stride or 1, x0=x0, nesterov_step=nesterov_step)
        out[kind.value] = run_trajectory(cfg, obj)
    return out


def traces_to_csv(traces: dict[str, Trace]) -> str:
    """Long-format CSV of several traces, one block per scheme."""
    buf = io.StringIO()
    buf.write(COMPARE_HEADER + "\n")
    for name, tr in traces.items():
        for line in tr.to_csv().splitlines()[1:]:
            buf.write(f"{name},{line}\n")
    return buf.getvalue()


def traces_from_csv(text: str) -> dict[str, Trace]:
    lines = text.splitlines()
    if not lines or lines[0] != COMPARE_HEADER:
        raise ValidationError(f"comparison CSV must start with {COMPARE_HEADER!r}")
    blocks: dict[str, list[str]] = {}
    for ln in lines[1:]:
        if ln:
            name, rest = ln.split(",", 1)
            blocks.setdefault(name, []).append(rest)
    return {name: Trace.from_csv("\n".join([TRACE_HEADER, *rows]), name)
            for name, rows in blocks.items()}


# -- divergence tables -----------------------------------------------------------

@dataclass
class TableRow:
    p: float
    L: float
    delta: float
    C: float
    analytic_bound: float
    first_unstable_k: int | None
    empirical_k: int | None
    status: str

    def to_csv(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, (int, np.integer)):
                return str(int(v))
            return format(float(v), ".17g")
        return ",".join([fmt(self.p), fmt(self.L), fmt(self.delta), fmt(self.C),
                         fmt(self.analytic_bound), fmt(self.first_unstable_k),
                         fmt(self.empirical_k), self.status])


def table_to_csv(rows: Sequence[TableRow]) -> str:
    return TABLE_HEADER + "\n" + "".join(r.to_csv() + "\n" for r in rows)


def table_from_csv(text: str) -> list[TableRow]:
    lines = text.splitlines()
    if not lines or lines[0] != TABLE_HEADER:
        raise ValidationError(f"table CSV must start with {TABLE_HEADER!r}")
    rows = []
    for ln in lines[1:]:
        if not ln:
            continue
        p, L, d, C, bound, first, emp, status = ln.split(",")
        pv = float(p)
        rows.append(TableRow(int(pv) if pv.is_integer() else pv, float(L), float(d), float(C),
                             float(bound), int(first) if first else None,
                             int(emp) if emp else None, status))
    return rows


def reproduce_divergence_table(grid=DEFAULT_GRID, C: float = 1.0, dim: int = 5,
                               max_empirical_iters: int = 10_000_000,
                               settings: DetectorSettings = DetectorSettings(),
                               convention: str = "k+1") -> list[TableRow]:
    """One row per ``(p, L, delta)``: analytic bound, exact first unstable
    iteration of the stiffest mode, and an empirical divergence iteration.

    The empirical run uses the log-spaced ``dim``-dimensional objective and is
    skipped when it would need more than ``max_empirical_iters`` steps.
    ``status`` is ``ok`` or ``skipped``, with ``+assumption`` appended when
    ``delta < 1/L`` or ``C < 1/(eps L)`` fails for the row.
    """
    rows = []
    for p, L, delta in grid:
        if p <= 2:
            raise ValidationError("divergence tables need p > 2")
        params = SchemeParams(p, C, delta, convention)
        bound = divergence_bound(params, L, check=False)
        k_max = int(math.ceil(2 * bound)) + 100
        first = first_unstable_iteration(SchemeKind.EXPLICIT_IMPLICIT, params, L, k_max)
        budget = int(math.ceil(1.05 * bound)) + 10 * settings.window + 100
        empirical = None
        if budget <= max_empirical_iters:
            obj = log_spaced_objective(dim, L)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                trace = run_trajectory(RunConfig(SchemeKind.EXPLICIT_IMPLICIT, params, budget, stride=1), obj)
            verdict = detect_divergence(trace, settings)
            empirical = verdict.empirical_k
            status = "ok"
        else:
            status = "skipped"
        if check_assumptions(params, L):
            status += "+assumption"
        rows.append(TableRow(p, float(L), float(delta), float(C), bound, first, empirical, status))
    return rows
