"""Weak pairings with the asymptotic free meson field.

For a test function ``xi`` supported away from ``k = 0`` the pairing with the
outgoing (``+``) or incoming (``-``) free field is

    <xi, Lambda(u0, z0)> = <xi, z0> - i int_0^{+-inf} <xi, exp(i tau omega) F(u(tau))> dtau,

evaluated on a recorded trajectory by the trapezoid rule up to a finite
horizon ``T`` and certified by a fitted power-law envelope of the integrand.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import GridPair, TestDictionary
from .skg import ClassicalState, FlowConfig, Trajectory, evolve

FLOOR_RELATIVE = 1e-12  # samples below this fraction of the peak are treated as rounding noise


class DispersiveDecayError(ArithmeticError):
    """The pairing integrand does not decay fast enough to certify the time integral."""

    def __init__(self, message: str, profile: "DecayProfile"):
        super().__init__(message)
        self.profile = profile


@dataclass
class DecayProfile:
    tau: np.ndarray
    g: np.ndarray
    exponent: float
    prefactor: float  # envelope constant C in g <= C |tau|^-(1 + nu)
    window: tuple[float, float]
    fit_tau: np.ndarray = field(default_factory=lambda: np.empty(0))
    fit_env: np.ndarray = field(default_factory=lambda: np.empty(0))
    fit_intercept: float = float("nan")

    def fit_line(self, tau: np.ndarray) -> np.ndarray:
        """Fitted power law evaluated at ``tau`` (nan where no fit exists)."""
        tau = np.abs(np.asarray(tau, dtype=float))
        if not np.isfinite(self.exponent) or not np.isfinite(self.fit_intercept):
            return np.full_like(tau, np.nan)
        with np.errstate(divide="ignore"):
            return np.exp(self.fit_intercept) * tau ** (-self.exponent)


def fit_decay(
    tau: np.ndarray,
    g: np.ndarray,
    nu: float,
    window: tuple[float, float] | None = None,
    bins: int = 40,
) -> DecayProfile:
    """Fit ``g(tau) ~ C |tau|^-p`` on the envelope of ``g`` over ``window``.

    The envelope is the maximum of ``g`` in logarithmically spaced bins, so that
    oscillations of the integrand do not bias the slope.  Samples below a noise
    floor are dropped; if fewer than three bins remain the exponent is ``inf``.
    The reported prefactor is ``max g |tau|^(1 + nu)`` over the last quarter of
    the window, an upper envelope at the theoretical rate built from the
    latest samples.
    """
    a = np.abs(np.asarray(tau, dtype=float))
    g = np.asarray(g, dtype=float)
    t_end = float(a.max())
    lo, hi = window if window is not None else (t_end / 4.0, t_end)
    peak = float(g.max()) if g.size else 0.0
    prof = DecayProfile(np.asarray(tau), g, float("inf"), 0.0, (lo, hi))
    if peak == 0.0:
        return prof
    floor = FLOOR_RELATIVE * peak
    late = (a >= lo + 0.75 * (hi - lo)) & (a <= hi)
    if np.any(late):
        prof.prefactor = float(np.max(g[late] * a[late] ** (1.0 + nu)))
    edges = np.geomspace(max(lo, 1e-12), hi, bins + 1)
    env_t, env_g = [], []
    for e0, e1 in zip(edges[:-1], edges[1:]):
        sel = (a >= e0) & (a <= e1)
        if not np.any(sel):
            continue
        j = np.argmax(np.where(sel, g, -1.0))
        if g[j] > floor:
            env_t.append(a[j])
            env_g.append(g[j])
    if len(env_t) < 3:
        return prof
    lt, lg = np.log(env_t), np.log(env_g)
    slope, intercept = np.polyfit(lt, lg, 1)
    prof.exponent = float(-slope)
    prof.fit_intercept = float(intercept)
    prof.fit_tau = np.array(env_t)
    prof.fit_env = np.array(env_g)
    return prof


@dataclass
class WaveOperatorPairing:
    label: str
    direction: int
    value: complex
    horizon: float
    tail_bound: float
    exponent: float
    cauchy_gap: float
    quadrature_error: float
    direct_proxy: complex
    profile: DecayProfile | None = None

    @property
    def certificate(self) -> float:
        return self.tail_bound + self.quadrature_error

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "direction": "+" if self.direction > 0 else "-",
            "re": self.value.real,
            "im": self.value.imag,
            "T": self.horizon,
            "tail_bound": self.tail_bound,
            "exponent": self.exponent,
            "cauchy_gap": self.cauchy_gap,
            "quadrature_error": self.quadrature_error,
            "proxy_re": self.direct_proxy.real,
            "proxy_im": self.direct_proxy.imag,
        }


def _trapezoid(y: np.ndarray, x: np.ndarray) -> complex:
    return np.trapezoid(y, x, axis=-1)


@dataclass
class PairingRun:
    """A trajectory recorded with pairing integrands for a set of test functions."""

    grids: GridPair
    state0: ClassicalState
    xis: np.ndarray
    direction: int
    flow: FlowConfig
    times: np.ndarray
    integrands: np.ndarray
    final: ClassicalState
    trajectory: Trajectory

    @property
    def horizon(self) -> float:
        return abs(self.times[-1] - self.times[0])

    def extend(self, extra: float) -> None:
        """Continue the recorded run by ``extra`` time units in the same direction."""
        tr = evolve(self.grids, self.final, self.direction * extra, self.flow, record=self.xis)
        self.times = np.concatenate([self.times, tr.step_times[1:]])
        self.integrands = np.concatenate([self.integrands, tr.integrands[:, 1:]], axis=1)
        self.final = tr.final
        self.trajectory = _merge(self.trajectory, tr)


def _merge(a: Trajectory, b: Trajectory) -> Trajectory:
    return Trajectory(
        times=np.concatenate([a.times, b.times[1:]]),
        mass=np.concatenate([a.mass, b.mass[1:]]),
        energy=np.concatenate([a.energy, b.energy[1:]]),
        boundary=np.concatenate([a.boundary, b.boundary[1:]]),
        snapshots=a.snapshots + b.snapshots[1:],
        warnings=a.warnings + b.warnings,
    )


def record_pairing_run(
    grids: GridPair,
    state0: ClassicalState,
    xis: np.ndarray,
    horizon: float,
    direction: int = +1,
    flow: FlowConfig | None = None,
) -> PairingRun:
    if direction not in (+1, -1):
        raise ValueError("direction must be +1 or -1")
    flow = flow or FlowConfig()
    xis = np.atleast_2d(np.asarray(xis, dtype=complex))
    start = ClassicalState(state0.u, state0.z, 0.0)
    tr = evolve(grids, start, direction * horizon, flow, record=xis)
    return PairingRun(grids, start, xis, direction, flow, tr.step_times, tr.integrands, tr.final, tr)


def pairings_from_run(
    run: PairingRun,
    labels: list[str] | None = None,
    window: tuple[float, float] | None = None,
    horizon: float | None = None,
) -> list[WaveOperatorPairing]:
    """Evaluate Cook pairings, certificates and direct proxies from a recorded run.

    ``horizon`` truncates the run (must be a recorded time); default is the full run.
    """
    g = run.grids
    nu = g.params.potential.nu
    times, integ = run.times, run.integrands
    if horizon is not None:
        n = int(round(horizon / abs(run.flow.dt)))
        times, integ = times[: n + 1], integ[:, : n + 1]
    T = abs(times[-1])
    n = times.size - 1
    half = n // 2
    final = run.final if horizon is None else _state_at(run, T)
    out = []
    for i, xi in enumerate(run.xis):
        base = g.inner_k(xi, run.state0.z)
        y = integ[i]
        full = _trapezoid(y, times)
        value = base - 1j * full
        value_half = base - 1j * _trapezoid(y[: half + 1], times[: half + 1])
        coarse = _trapezoid(y[::2], times[::2]) if n % 2 == 0 else _trapezoid(y[: n : 2], times[: n : 2]) + _trapezoid(y[n - 1 :], times[n - 1 :])
        quad_err = abs(full - coarse) / 3.0
        prof = fit_decay(times, np.abs(y), nu, window)
        tail = prof.prefactor * T ** (-nu) / nu
        proxy = g.inner_k(xi, np.exp(1j * times[-1] * g.omega) * final.z) if final is not None else complex("nan")
        out.append(
            WaveOperatorPairing(
                label=labels[i] if labels else f"xi{i}",
                direction=run.direction,
                value=complex(value),
                horizon=T,
                tail_bound=float(tail),
                exponent=prof.exponent,
                cauchy_gap=float(abs(value - value_half)),
                quadrature_error=float(quad_err),
                direct_proxy=complex(proxy),
                profile=prof,
            )
        )
    return out


def _state_at(run: PairingRun, T: float) -> ClassicalState | None:
    for st in run.trajectory.snapshots:
        if np.isclose(abs(st.t), T, atol=1e-9):
            return st
    return None


def check_decay(pairing: WaveOperatorPairing, nu: float) -> None:
    if pairing.exponent < 1.0 + nu / 2.0:
        raise DispersiveDecayError(
            f"dispersive-decay violation for {pairing.label}: fitted exponent {pairing.exponent:.3g} < {1 + nu / 2:.3g}",
            pairing.profile,
        )


def pair_dictionary(
    grids: GridPair,
    state0: ClassicalState,
    xis: np.ndarray | TestDictionary,
    direction: int = +1,
    tol: float = 1e-6,
    initial_horizon: float = 40.0,
    max_horizon: float = 160.0,
    flow: FlowConfig | None = None,
    window: tuple[float, float] | None = None,
    check: bool = True,
) -> list[WaveOperatorPairing]:
    """Pairings for several test functions sharing one trajectory.

    The horizon doubles until every tail bound is below ``tol`` or
    ``max_horizon`` is reached.
    """
    labels = None
    if isinstance(xis, TestDictionary):
        labels = xis.labels
        xis = xis.elements
    run = record_pairing_run(grids, state0, xis, initial_horizon, direction, flow)
    while True:
        res = pairings_from_run(run, labels, window)
        if max(p.tail_bound for p in res) < tol or run.horizon * 2 > max_horizon + 1e-9:
            break
        run.extend(run.horizon)
    if check:
        for p in res:
            check_decay(p, grids.params.potential.nu)
    return res


def pair_wave_operator(
    grids: GridPair,
    state0: ClassicalState,
    xi: np.ndarray,
    direction: int = +1,
    tol: float = 1e-6,
    **kw,
) -> WaveOperatorPairing:
    return pair_dictionary(grids, state0, np.atleast_2d(xi), direction, tol, **kw)[0]


def decay_profile(
    grids: GridPair,
    state0: ClassicalState,
    xi: np.ndarray,
    horizon: float,
    direction: int = +1,
    flow: FlowConfig | None = None,
    window: tuple[float, float] | None = None,
) -> DecayProfile:
    if horizon < 20:
        raise ValueError("horizon must be at least 20 for a meaningful fit")
    run = record_pairing_run(grids, state0, xi, horizon, direction, flow)
    return fit_decay(run.times, np.abs(run.integrands[0]), grids.params.potential.nu, window)


@dataclass
class IntertwiningResult:
    t: float
    deviation: float
    certificate: float
    printed_sign_deviation: float
    evolved: WaveOperatorPairing
    rotated: WaveOperatorPairing
    tail_certificate: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.deviation <= self.certificate


def intertwining_check(
    grids: GridPair,
    state0: ClassicalState,
    xis: np.ndarray,
    times: list[float],
    direction: int = +1,
    horizon: float = 80.0,
    tol: float = 1e-6,
    flow: FlowConfig | None = None,
) -> list[list[IntertwiningResult]]:
    """Compare pairings of the evolved state with rotated pairings of the initial state.

    The free field intertwines the flow as ``Lambda(Phi_t(s)) = exp(-i t omega) Lambda(s)``,
    so ``<xi, Lambda(Phi_t(s))>`` is checked against ``<exp(i t omega) xi, Lambda(s)>``.
    The two sides are evaluated with matched horizons (``horizon`` after the
    evolved start, ``horizon + |t|`` from the initial state), for which the
    finite-horizon identity is exact and the tails coincide; the certificate is
    twice the two quadrature errors plus ``tol``.  ``tail_certificate`` adds the
    tail bounds for reference.  The mirrored rotation
    ``<exp(-i t omega) xi, Lambda(s)>`` is reported as ``printed_sign_deviation``.
    Returns ``results[t_index][xi_index]``.
    """
    flow = flow or FlowConfig()
    xis = np.atleast_2d(xis)
    nx = xis.shape[0]
    rows = [xis]
    for t in times:
        if t * direction < 0:
            raise ValueError("times must lie in the chosen direction")
        rows.append(np.exp(1j * t * grids.omega) * xis)
        rows.append(np.exp(-1j * t * grids.omega) * xis)
    rows = np.concatenate(rows)
    t_max = max(abs(t) for t in times) if times else 0.0
    base = record_pairing_run(grids, state0, rows, horizon + t_max, direction, flow)
    out = []
    for ti, t in enumerate(times):
        if t == 0:
            st = state0
        else:
            st = _state_at(base, abs(t))
            if st is None:
                raise ValueError(f"t={t} is not a stride point of the recorded run")
        base_pairs = pairings_from_run(base, horizon=horizon + abs(t))
        ev = pairings_from_run(record_pairing_run(grids, st, xis, horizon, direction, flow))
        plus = base_pairs[nx * (1 + 2 * ti) : nx * (2 + 2 * ti)]
        minus = base_pairs[nx * (2 + 2 * ti) : nx * (3 + 2 * ti)]
        row = []
        for j in range(nx):
            dev = abs(ev[j].value - plus[j].value)
            cert = 2.0 * (ev[j].quadrature_error + plus[j].quadrature_error) + tol
            row.append(
                IntertwiningResult(
                    t,
                    float(dev),
                    float(cert),
                    float(abs(ev[j].value - minus[j].value)),
                    ev[j],
                    plus[j],
                    float(cert + ev[j].tail_bound + plus[j].tail_bound),
                )
            )
        out.append(row)
    return out


@dataclass
class RadiationlessVerdict:
    max_pairing: float
    pairings: list[WaveOperatorPairing]
    threshold: float
    radiationless: bool


def default_threshold(grids: GridPair, state0: ClassicalState) -> float:
    return 1e-6 * (grids.norm_x(state0.u) ** 2 + grids.norm_k(state0.z))


def is_radiationless(
    grids: GridPair,
    state0: ClassicalState,
    dictionary: TestDictionary | np.ndarray,
    threshold: float | None = None,
    directions: tuple[int, ...] = (+1, -1),
    horizon: float = 80.0,
    flow: FlowConfig | None = None,
) -> RadiationlessVerdict:
    if threshold is None:
        threshold = default_threshold(grids, state0)
    pairs: list[WaveOperatorPairing] = []
    for d in directions:
        pairs += pair_dictionary(
            grids, state0, dictionary, d, tol=np.inf, initial_horizon=horizon, max_horizon=horizon, flow=flow, check=False
        )
    mx = max(abs(p.value) for p in pairs) if pairs else 0.0
    return RadiationlessVerdict(float(mx), pairs, float(threshold), bool(mx <= threshold))


def cesaro_field(run: PairingRun, fraction: float = 0.5) -> np.ndarray:
    """Time average of ``exp(i t omega) z(t)`` over the last ``fraction`` of stride samples.

    A strong-topology diagnostic only; the pairings are the certified output.
    """
    snaps = run.trajectory.snapshots
    start = int(len(snaps) * (1.0 - fraction))
    acc = [np.exp(1j * s.t * run.grids.omega) * s.z for s in snaps[start:]]
    return np.mean(acc, axis=0)
