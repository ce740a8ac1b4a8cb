"""Monte Carlo verification harnesses for the small-noise shell-model SDE.

Four studies, each a pure function of ``(configuration, master_seed)``:

* ``verify_energy_estimates`` — checks four a-priori moment inequalities
  (plain second moment, supremum second moment, discounted second moment,
  discounted fourth moment) along an ensemble of simulated paths, with
  every right-hand side computable from the configuration and the measured
  noise-growth constant.  Refuses to run when the noise amplitude violates
  the thresholds the inequalities require.
* ``weak_convergence_study`` — measures the path-space gap between the
  controlled SDE and the controlled deterministic flow (same scheme, same
  control, common random numbers) as the noise amplitude shrinks.
* ``rare_event_probability`` — estimates the probability that the terminal
  state leaves an H-ball around the noiseless terminal state, either
  naively (Wilson interval) or by a two-sided tilted-measure importance
  estimator (delta-method interval, balance-heuristic mixture weights).
* ``ldp_check`` — tabulates -eps*log(p_hat) against the minimized action
  for a shrinking-noise sweep.

Ensembles reduce in ascending member order with exact float summation, so
every report is byte-identical for any worker count.  Parallel workers
split members into fixed 256-member chunks.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .integrate import (
    ControlPath,
    Forcing,
    TimeGrid,
    _cumtrapz,
    _exp_em_sweep,
    integrate_controlled_sde,
    integrate_sde,
)
from .noise import (
    AdditiveNoise,
    CovarianceSpec,
    NoiseCoefficient,
    check_noise_hypotheses,
    member_stream,
)
from .space import ModelParams, wavenumbers

__all__ = [
    "EnsembleSpec",
    "EnergyReport",
    "WeakConvergenceReport",
    "TerminalSphereEvent",
    "RareEventEstimate",
    "LdpRow",
    "LdpTable",
    "verify_energy_estimates",
    "weak_convergence_study",
    "rare_event_probability",
    "ldp_check",
    "wilson_interval",
]

#: 95% two-sided normal quantile, used by every interval in this module.
Z95 = 1.959963984540054

#: Members are dealt to workers in fixed chunks of this size so the
#: work decomposition (and hence the reduction order) never depends on
#: the worker count.
MEMBER_CHUNK = 256


# --------------------------------------------------------------------------
# ensemble specification
# --------------------------------------------------------------------------


@dataclass(eq=False)
class EnsembleSpec:
    """Everything needed to reproduce one simulation ensemble.

    ``epsilon`` is the noise amplitude used by studies that do not sweep
    it themselves (the energy checks).  Streams are derived per member
    from ``master_seed`` and a purpose label, so distinct studies on the
    same spec never share randomness.
    """

    params: ModelParams
    sigma: NoiseCoefficient
    q: CovarianceSpec
    f: Forcing
    u0: np.ndarray
    grid: TimeGrid
    epsilon: float
    paths: int
    master_seed: int

    def __post_init__(self) -> None:
        if not isinstance(self.paths, int) or isinstance(self.paths, bool):
            raise TypeError(f"paths must be an int, got {self.paths!r}")
        if self.paths < 1:
            raise ValueError(f"paths must be >= 1, got {self.paths}")
        if not isinstance(self.master_seed, int) or isinstance(self.master_seed, bool):
            raise TypeError(f"master_seed must be an int, got {self.master_seed!r}")
        eps = float(self.epsilon)
        if not (math.isfinite(eps) and eps >= 0.0):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon!r}")
        self.epsilon = eps
        self.u0 = np.ascontiguousarray(np.asarray(self.u0, dtype=complex))
        if self.u0.shape != (self.params.num_shells,):
            raise ValueError(
                f"u0 has shape {self.u0.shape}, expected ({self.params.num_shells},)"
            )
        if not np.all(np.isfinite(self.u0.view(float))):
            raise ValueError("u0 must be finite")


def _chunk_ranges(n: int) -> list:
    return [(s, min(s + MEMBER_CHUNK, n)) for s in range(0, n, MEMBER_CHUNK)]


def _run_chunked(fn, args: tuple, n: int, workers: int) -> list:
    """Run fn(*args, start, stop) over fixed member chunks, in chunk order.

    The same chunk decomposition is used for every worker count; results
    come back indexed by chunk so downstream reductions see members in
    ascending order regardless of completion order.
    """
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        raise ValueError(f"workers must be a positive int, got {workers!r}")
    jobs = _chunk_ranges(n)
    if workers == 1 or len(jobs) == 1:
        return [fn(*args, start, stop) for (start, stop) in jobs]
    out: list = [None] * len(jobs)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(fn, *args, start, stop): i
            for i, (start, stop) in enumerate(jobs)
        }
        for fut in as_completed(futures):
            out[futures[fut]] = fut.result()
    return out


def _fsum_mean(values: np.ndarray) -> float:
    """Exactly-rounded mean of per-member scalars (ascending member order)."""
    return math.fsum(values.tolist()) / values.shape[0]


# --------------------------------------------------------------------------
# energy estimates
# --------------------------------------------------------------------------


@dataclass(eq=False)
class EnergyReport:
    """Margins (right side minus left side) for the four moment inequalities.

    ``margins`` maps inequality name to the worst-case margin over grid
    nodes (a nonnegative value means the inequality held everywhere);
    ``worst`` records (time, lhs, rhs) at the minimizing node.  For the
    fourth-moment inequality the sup-form constants are not assumed:
    ``measured`` reports the observed discounted fourth-moment supremum
    and its ratio to the computable right-hand side.
    """

    delta_weight: float
    epsilon: float
    paths: int
    master_seed: int
    growth_constant: float
    guards: dict
    branch: str
    margins: dict
    worst: dict
    measured: dict

    def all_nonnegative(self) -> bool:
        return all(m >= 0.0 for m in self.margins.values())


_ENERGY_THRESHOLDS = {
    "plain_second_moment": ("nu/(2K)",),
    "sup_second_moment": ("nu/(2K)", "1/(2K^2)"),
    "discounted_second_moment": ("3nu/(2K)",),
    "discounted_fourth_moment": ("nu/(3K)",),
}


def _energy_chunk(spec: EnsembleSpec, start: int, stop: int) -> tuple:
    """Per-member node series needed by the four inequalities."""
    n_nodes = spec.grid.steps + 1
    m = stop - start
    h2 = np.empty((m, n_nodes))
    v2 = np.empty((m, n_nodes))
    k2 = wavenumbers(spec.params) ** 2
    for i, member in enumerate(range(start, stop)):
        stream = member_stream(spec.master_seed, "energy", member)
        traj = integrate_sde(
            spec.params, spec.sigma, spec.q, spec.f,
            spec.epsilon, spec.u0, spec.grid, stream,
        )
        mod2 = np.abs(traj.states) ** 2
        h2[i] = np.sum(mod2, axis=1)
        v2[i] = mod2 @ k2
    return h2, v2


def verify_energy_estimates(
    spec: EnsembleSpec, delta_weight: float, workers: int = 1
) -> EnergyReport:
    """Check the four a-priori moment inequalities on a simulated ensemble.

    All four right-hand sides are computable from the configuration and
    the closed-form noise-growth constant K: with kappa = eps*K and
    discount weight d = ``delta_weight``,

    1. plain second moment, for every grid time t:
       E|u(t)|^2 + (nu/2) int_0^t E||u||^2 <= |u0|^2
           + (1/nu) int_0^t ||f||_{V'}^2 + eps*K*T,
       requires eps < nu/(2K).
    2. supremum second moment (additive coefficients):
       (1/2) E[sup_t |u|^2] + nu E int_0^T ||u||^2 <= |u0|^2
           + (1/nu) int_0^T ||f||_{V'}^2 + 9 eps*K*T,
       requires eps < nu/(2K) and eps < 1/(2K^2).  For state-dependent
       coefficients a chained bound is checked instead: with
       theta = sqrt(2 eps) K and
       S = (|u0|^2 + (1/nu) int ||f||_{V'}^2 + eps*K*T) / (nu - eps*K)
       (an a-priori bound on E int ||u||^2),
       (1-theta) E[sup_t |u|^2] <= |u0|^2 + (1/nu) int ||f||_{V'}^2
           + eps*K*T + (nu + eps*K + theta) S + theta*T,
       with 1-theta > 0 and nu - eps*K > 0 checked at runtime.
    3. discounted second moment, for every grid time t:
       E|u(t)|^2 e^{-dt} + (nu/2) int_0^t e^{-ds} E||u||^2 <= |u0|^2
           + (1/d) int_0^t e^{-ds} |f|^2 + (eps*K/d)(1 - e^{-dt}),
       requires eps < 3nu/(2K).  (Forcing enters in the plain H norm.)
    4. discounted fourth moment, for every grid time t:
       E|u(t)|^4 e^{-dt} + (4nu - 6 eps K) int_0^t e^{-ds} E[||u||^2 |u|^2]
           <= |u0|^4 + (27/d^3) int_0^t e^{-ds} |f|^4
           + 6 eps K int_0^t e^{-ds} E|u|^2,
       requires eps < nu/(3K); 27/d^3 is the sharp Young constant for
       4|f| |u|^3 <= d|u|^4 + (27/d^3)|f|^4.

    Expectations are ensemble means over ``spec.paths`` paths; time
    integrals are trapezoidal on the simulation grid.  Raises ValueError
    naming every violated amplitude threshold before any simulation.
    """
    d = float(delta_weight)
    if not (math.isfinite(d) and d > 0.0):
        raise ValueError(f"delta_weight must be finite and > 0, got {delta_weight!r}")

    hyp = check_noise_hypotheses(
        spec.sigma, spec.q, spec.params, samples=128, seed=spec.master_seed
    )
    guards = dict(hyp.epsilon_guards)
    eps = spec.epsilon
    violated = []
    for ineq, names in _ENERGY_THRESHOLDS.items():
        for name in names:
            if not eps < guards[name]:
                violated.append(f"{ineq} requires eps < {name} = {guards[name]:.6g}")
    if violated:
        raise ValueError(
            f"noise amplitude eps = {eps:g} violates: " + "; ".join(violated)
        )

    nu = spec.params.nu
    big_k = hyp.K
    grid = spec.grid
    dt = grid.dt
    times = grid.nodes()
    horizon = grid.T - grid.t0
    n = spec.params.num_shells

    chunks = _run_chunked(_energy_chunk, (spec,), spec.paths, workers)
    h2 = np.concatenate([c[0] for c in chunks], axis=0)
    v2 = np.concatenate([c[1] for c in chunks], axis=0)

    mean_h2 = np.sum(h2, axis=0) / spec.paths
    mean_v2 = np.sum(v2, axis=0) / spec.paths
    mean_h4 = np.sum(h2 * h2, axis=0) / spec.paths
    mean_vh2 = np.sum(v2 * h2, axis=0) / spec.paths
    sup_h2 = _fsum_mean(np.max(h2, axis=1))

    k = wavenumbers(spec.params)
    f_nodes = spec.f.node_values(grid, n)
    f_mod2 = np.abs(f_nodes) ** 2
    f_vdual = f_mod2 @ (1.0 / (k * k))       # ||f(t)||_{V'}^2 per node
    f_h2 = np.sum(f_mod2, axis=1)            # |f(t)|^2 per node
    h2_0 = mean_h2[0]
    h4_0 = mean_h4[0]

    margins: dict = {}
    worst: dict = {}

    def _record(name: str, lhs: np.ndarray, rhs: np.ndarray) -> None:
        gap = rhs - lhs
        j = int(np.argmin(gap))
        margins[name] = float(gap[j])
        worst[name] = {"time": float(times[j]), "lhs": float(lhs[j]), "rhs": float(rhs[j])}

    # 1. plain second moment
    lhs1 = mean_h2 + 0.5 * nu * _cumtrapz(mean_v2, dt)
    rhs1 = h2_0 + _cumtrapz(f_vdual, dt) / nu + eps * big_k * horizon
    _record("plain_second_moment", lhs1, rhs1)

    # 2. supremum second moment (scalar inequality)
    int_v2 = float(_cumtrapz(mean_v2, dt)[-1])
    forcing2 = float(_cumtrapz(f_vdual, dt)[-1]) / nu
    if isinstance(spec.sigma, AdditiveNoise):
        branch = "additive-doob"
        lhs2 = 0.5 * sup_h2 + nu * int_v2
        rhs2 = h2_0 + forcing2 + 9.0 * eps * big_k * horizon
    else:
        branch = "general-theta"
        theta = math.sqrt(2.0 * eps) * big_k
        if not (1.0 - theta > 0.0 and nu - eps * big_k > 0.0):
            raise ValueError(
                "state-dependent sup bound needs positive coefficients: "
                f"1 - sqrt(2 eps) K = {1.0 - theta:.6g}, "
                f"nu - eps K = {nu - eps * big_k:.6g}"
            )
        # chained bound: the dissipation integral is first bounded a priori,
        # then the supremum is bounded with the sqrt(2 eps) K martingale weight
        base = h2_0 + forcing2 + eps * big_k * horizon
        diss_bound = base / (nu - eps * big_k)
        lhs2 = (1.0 - theta) * sup_h2
        rhs2 = base + (nu + eps * big_k + theta) * diss_bound + theta * horizon
    margins["sup_second_moment"] = float(rhs2 - lhs2)
    worst["sup_second_moment"] = {
        "time": float(times[-1]), "lhs": float(lhs2), "rhs": float(rhs2),
    }

    # 3. discounted second moment
    disc = np.exp(-d * (times - times[0]))
    lhs3 = mean_h2 * disc + 0.5 * nu * _cumtrapz(disc * mean_v2, dt)
    rhs3 = h2_0 + _cumtrapz(disc * f_h2, dt) / d + (eps * big_k / d) * (1.0 - disc)
    _record("discounted_second_moment", lhs3, rhs3)

    # 4. discounted fourth moment
    coeff4 = 4.0 * nu - 6.0 * eps * big_k
    lhs4 = mean_h4 * disc + coeff4 * _cumtrapz(disc * mean_vh2, dt)
    rhs4 = (
        h4_0
        + (27.0 / d ** 3) * _cumtrapz(disc * f_h2 * f_h2, dt)
        + 6.0 * eps * big_k * _cumtrapz(disc * mean_h2, dt)
    )
    _record("discounted_fourth_moment", lhs4, rhs4)

    sup_h4_disc = _fsum_mean(np.max((h2 * h2) * disc[np.newaxis, :], axis=1))
    measured = {
        "sup_fourth_discounted": sup_h4_disc,
        "sup_fourth_bound_ratio": sup_h4_disc / float(rhs4[-1]),
        "dissipation_coefficient": coeff4,
        "forcing_young_coefficient": 27.0 / d ** 3,
    }

    return EnergyReport(
        delta_weight=d,
        epsilon=eps,
        paths=spec.paths,
        master_seed=spec.master_seed,
        growth_constant=big_k,
        guards=guards,
        branch=branch,
        margins=margins,
        worst=worst,
        measured=measured,
    )


# --------------------------------------------------------------------------
# weak convergence of the controlled SDE to the controlled flow
# --------------------------------------------------------------------------


@dataclass(eq=False)
class WeakConvergenceReport:
    """Gap D(eps) = E[sup_t |u^eps_v - u_v|_H^2 + nu int ||u^eps_v - u_v||_V^2].

    ``c_envelope`` is calibrated so D(eps) <= c*sqrt(eps) holds with
    equality at the largest amplitude; ``slope`` is the log-log fit of D
    against eps (1.0 for linear dynamics, where the gap is pure scaled
    noise variance).
    """

    eps_list: Tuple[float, ...]
    d_values: Tuple[float, ...]
    sup_terms: Tuple[float, ...]
    int_terms: Tuple[float, ...]
    c_envelope: float
    slope: float
    monotone: bool
    envelope_ok: bool
    paths: int
    master_seed: int


def _weak_chunk(
    spec: EnsembleSpec,
    v: ControlPath,
    eps: float,
    ref_states: np.ndarray,
    start: int,
    stop: int,
) -> tuple:
    k2 = wavenumbers(spec.params) ** 2
    dt = spec.grid.dt
    sups = np.empty(stop - start)
    ints = np.empty(stop - start)
    for i, member in enumerate(range(start, stop)):
        stream = member_stream(spec.master_seed, "weak-convergence", member)
        traj = integrate_controlled_sde(
            spec.params, spec.sigma, spec.q, spec.f,
            eps, v, spec.u0, spec.grid, stream,
        )
        diff2 = np.abs(traj.states - ref_states) ** 2
        dh2 = np.sum(diff2, axis=1)
        dv2 = diff2 @ k2
        sups[i] = float(np.max(dh2))
        ints[i] = spec.params.nu * float(_cumtrapz(dv2, dt)[-1])
    return sups, ints


def weak_convergence_study(
    v: ControlPath,
    eps_list: Sequence[float],
    spec: EnsembleSpec,
    workers: int = 1,
) -> WeakConvergenceReport:
    """Measure the controlled-SDE-to-controlled-flow gap as noise shrinks.

    The reference path solves the same discrete scheme with the same
    control and zero noise, and every amplitude reuses the same member
    streams (common random numbers), so D(eps) is strictly comparable
    across the sweep.  Asserts D nonincreasing along the decreasing
    amplitude list and D(eps) <= c*sqrt(eps) with c calibrated at the
    largest amplitude.
    """
    eps_arr = [float(e) for e in eps_list]
    if len(eps_arr) == 0:
        raise ValueError("eps_list must be nonempty")
    if any(not (math.isfinite(e) and e > 0.0) for e in eps_arr):
        raise ValueError(f"eps_list must be positive and finite, got {eps_list!r}")
    if any(b >= a for a, b in zip(eps_arr, eps_arr[1:])):
        raise ValueError(f"eps_list must be strictly decreasing, got {eps_list!r}")

    ref_states = _exp_em_sweep(
        spec.params, spec.sigma, spec.q, spec.f, 0.0, v, spec.u0, spec.grid, None
    )

    d_values, sup_terms, int_terms = [], [], []
    for eps in eps_arr:
        chunks = _run_chunked(
            _weak_chunk, (spec, v, eps, ref_states), spec.paths, workers
        )
        sups = np.concatenate([c[0] for c in chunks])
        ints = np.concatenate([c[1] for c in chunks])
        sup_terms.append(_fsum_mean(sups))
        int_terms.append(_fsum_mean(ints))
        d_values.append(_fsum_mean(sups + ints))

    tol = 1.0 + 1e-12
    monotone = all(b <= a * tol for a, b in zip(d_values, d_values[1:]))
    c_env = d_values[0] / math.sqrt(eps_arr[0])
    envelope_ok = all(
        dv <= c_env * math.sqrt(e) * tol for dv, e in zip(d_values, eps_arr)
    )
    if len(eps_arr) >= 2 and all(dv > 0 for dv in d_values):
        slope = float(
            np.polyfit(np.log(np.asarray(eps_arr)), np.log(np.asarray(d_values)), 1)[0]
        )
    else:
        slope = float("nan")

    if not monotone:
        raise AssertionError(
            f"gap is not monotone along shrinking noise: D = {d_values}"
        )
    if not envelope_ok:
        raise AssertionError(
            f"gap exceeds the calibrated sqrt envelope: D = {d_values}, "
            f"c = {c_env:.6g}"
        )

    return WeakConvergenceReport(
        eps_list=tuple(eps_arr),
        d_values=tuple(d_values),
        sup_terms=tuple(sup_terms),
        int_terms=tuple(int_terms),
        c_envelope=c_env,
        slope=slope,
        monotone=monotone,
        envelope_ok=envelope_ok,
        paths=spec.paths,
        master_seed=spec.master_seed,
    )


# --------------------------------------------------------------------------
# rare events: naive and importance estimators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TerminalSphereEvent:
    """Event {|u(T) - u0(T)|_H >= radius}, centered at the noiseless terminal."""

    radius: float

    def __post_init__(self) -> None:
        r = float(self.radius)
        if not (math.isfinite(r) and r >= 0.0):
            raise ValueError(f"radius must be finite and >= 0, got {self.radius!r}")
        object.__setattr__(self, "radius", r)


@dataclass(eq=False)
class RareEventEstimate:
    """One probability estimate with its 95% interval.

    ``estimator`` is "naive" (Wilson interval on the hit proportion) or
    "importance" (delta-method interval on the mean mixture weight; the
    interval is multiplicative, so it stays positive at any rarity).
    ``zero_hits`` flags an estimate with no event samples — for the naive
    estimator only the upper bound is then meaningful.
    """

    estimator: str
    epsilon: float
    radius: float
    p_hat: float
    ci_low: float
    ci_high: float
    paths: int
    hits: int
    zero_hits: bool


def wilson_interval(hits: int, trials: int, z: float = Z95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not 0 <= hits <= trials:
        raise ValueError(f"hits must lie in [0, {trials}], got {hits}")
    p = hits / trials
    z2n = z * z / trials
    denom = 1.0 + z2n
    center = (p + 0.5 * z2n) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + 0.25 * z2n / trials) / denom
    # the degenerate endpoints are exact algebraically; keep them exact in float
    lo = 0.0 if hits == 0 else max(0.0, center - half)
    hi = 1.0 if hits == trials else min(1.0, center + half)
    return lo, hi


def _noiseless_terminal(spec: EnsembleSpec) -> np.ndarray:
    """Terminal state of the same discrete scheme with zero noise, no control."""
    states = _exp_em_sweep(
        spec.params, spec.sigma, spec.q, spec.f, 0.0, None, spec.u0, spec.grid, None
    )
    return states[-1]


def _naive_chunk(
    spec: EnsembleSpec,
    eps: float,
    radius: float,
    center: np.ndarray,
    start: int,
    stop: int,
) -> int:
    hits = 0
    for member in range(start, stop):
        stream = member_stream(spec.master_seed, "ldp-naive", member)
        traj = integrate_sde(
            spec.params, spec.sigma, spec.q, spec.f, eps, spec.u0, spec.grid, stream
        )
        dist = math.sqrt(float(np.sum(np.abs(traj.terminal_state - center) ** 2)))
        if dist >= radius:
            hits += 1
    return hits


def _importance_chunk(
    spec: EnsembleSpec,
    eps: float,
    radius: float,
    center: np.ndarray,
    tilt_values: np.ndarray,
    energy_cap: Optional[float],
    start: int,
    stop: int,
) -> np.ndarray:
    """Per-member hit weights under the two-sided tilted mixture.

    Member 2j runs the +tilt dynamics, member 2j+1 the -tilt dynamics.
    The balance-heuristic weight of a path with realized increments dB is
        w = 2 e^{b} / (e^{a} + e^{-a}),
        a = (1/sqrt(eps)) sum_k (v+, dB_k)_0,   b = |v+|^2_{L0} / (2 eps),
    computed from the recorded raw increments of whichever branch the
    member ran (dB = dW + sign * v+ dt / sqrt(eps)).
    """
    lam = spec.q.as_array()
    dt = spec.grid.dt
    e_plus = float(np.sum(tilt_values * tilt_values / lam) * dt)
    b = 0.5 * e_plus / eps
    sqrt_eps = math.sqrt(eps)
    weights = np.zeros(stop - start)
    for i, member in enumerate(range(start, stop)):
        sign = 1.0 if member % 2 == 0 else -1.0
        v_member = ControlPath(
            grid=spec.grid, values=sign * tilt_values, energy_cap=energy_cap
        )
        stream = member_stream(spec.master_seed, "ldp-importance", member)
        traj = integrate_controlled_sde(
            spec.params, spec.sigma, spec.q, spec.f,
            eps, v_member, spec.u0, spec.grid, stream,
        )
        dist = math.sqrt(float(np.sum(np.abs(traj.terminal_state - center) ** 2)))
        if dist < radius:
            continue
        cross = float(np.sum(tilt_values * traj.noise_increments / lam))
        a = cross / sqrt_eps + sign * e_plus / eps
        log_w = math.log(2.0) + b - float(np.logaddexp(a, -a))
        weights[i] = math.exp(log_w)
    return weights


def rare_event_probability(
    event: TerminalSphereEvent,
    epsilon: float,
    spec: EnsembleSpec,
    tilt: Optional[ControlPath] = None,
    workers: int = 1,
) -> RareEventEstimate:
    """Estimate P(|u^eps(T) - u0(T)|_H >= radius).

    Without a tilt: plain Monte Carlo proportion with a Wilson interval;
    zero hits are flagged and only the interval's upper bound is
    informative.  With a tilt: paths are simulated under an equal-weight
    mixture of the +tilt and -tilt dynamics (members alternate branches),
    and the probability is the mean balance-heuristic weight restricted
    to event paths, with a multiplicative delta-method interval.
    """
    eps = float(epsilon)
    if not (math.isfinite(eps) and eps > 0.0):
        raise ValueError(f"epsilon must be finite and > 0, got {epsilon!r}")
    center = _noiseless_terminal(spec)
    n = spec.paths

    if tilt is None:
        chunks = _run_chunked(
            _naive_chunk, (spec, eps, event.radius, center), n, workers
        )
        hits = int(sum(chunks))
        p_hat = hits / n
        lo, hi = wilson_interval(hits, n)
        zero = hits == 0
        return RareEventEstimate(
            estimator="naive",
            epsilon=eps,
            radius=event.radius,
            p_hat=p_hat,
            ci_low=0.0 if zero else lo,
            ci_high=hi,
            paths=n,
            hits=hits,
            zero_hits=zero,
        )

    if tilt.grid != spec.grid:
        raise ValueError("tilt grid does not match the ensemble grid")
    if tilt.num_shells != spec.params.num_shells:
        raise ValueError(
            f"tilt has {tilt.num_shells} shells, model has {spec.params.num_shells}"
        )
    chunks = _run_chunked(
        _importance_chunk,
        (spec, eps, event.radius, center, tilt.values, tilt.energy_cap),
        n,
        workers,
    )
    weights = np.concatenate(chunks)
    hits = int(np.count_nonzero(weights))
    p_hat = math.fsum(weights.tolist()) / n
    if hits == 0 or p_hat <= 0.0:
        return RareEventEstimate(
            estimator="importance",
            epsilon=eps,
            radius=event.radius,
            p_hat=0.0,
            ci_low=0.0,
            ci_high=0.0,
            paths=n,
            hits=hits,
            zero_hits=True,
        )
    second = math.fsum((weights * weights).tolist()) / n
    var = max(0.0, second - p_hat * p_hat) * n / max(1, n - 1)
    se = math.sqrt(var / n)
    spread = Z95 * se / p_hat
    return RareEventEstimate(
        estimator="importance",
        epsilon=eps,
        radius=event.radius,
        p_hat=p_hat,
        ci_low=p_hat * math.exp(-spread),
        ci_high=p_hat * math.exp(spread),
        paths=n,
        hits=hits,
        zero_hits=False,
    )


# --------------------------------------------------------------------------
# rate-function scaling table
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LdpRow:
    epsilon: float
    estimator: str
    p_hat: float
    ci_low: float
    ci_high: float
    neg_eps_log_p: float
    i_ref: float
    zero_hits: bool


@dataclass(eq=False)
class LdpTable:
    """-eps*log(p_hat) against the minimized action, over a noise sweep.

    Rows come in (naive, importance) pairs per amplitude, amplitudes
    descending.  ``trend_monotone`` reports whether the importance
    sequence -eps*log(p_hat) decreases along the sweep and
    ``above_rate_within_ci`` whether each importance row stays above
    ``i_ref`` up to its own interval slack.
    """

    radius: float
    horizon: float
    i_ref: float
    rows: Tuple[LdpRow, ...]
    trend_monotone: bool = field(default=False)
    above_rate_within_ci: bool = field(default=False)

    def __post_init__(self) -> None:
        for row in self.rows:
            if not (row.ci_low <= row.p_hat <= row.ci_high):
                raise ValueError(
                    f"interval must bracket the estimate, got "
                    f"[{row.ci_low}, {row.ci_high}] around {row.p_hat}"
                )
        eps_seq = [row.epsilon for row in self.rows[::2]]
        if any(b >= a for a, b in zip(eps_seq, eps_seq[1:])):
            raise ValueError(f"rows must be sorted by epsilon descending: {eps_seq}")

    def importance_rows(self) -> Tuple[LdpRow, ...]:
        return tuple(r for r in self.rows if r.estimator == "importance")

    def naive_rows(self) -> Tuple[LdpRow, ...]:
        return tuple(r for r in self.rows if r.estimator == "naive")


def _ldp_row(est: RareEventEstimate, i_ref: float) -> LdpRow:
    neg = float("inf") if est.p_hat <= 0.0 else -est.epsilon * math.log(est.p_hat)
    return LdpRow(
        epsilon=est.epsilon,
        estimator=est.estimator,
        p_hat=est.p_hat,
        ci_low=est.ci_low,
        ci_high=est.ci_high,
        neg_eps_log_p=neg,
        i_ref=i_ref,
        zero_hits=est.zero_hits,
    )


def ldp_check(
    event: TerminalSphereEvent,
    eps_list: Sequence[float],
    spec: EnsembleSpec,
    i_ref: float,
    tilt: ControlPath,
    naive_paths: Optional[int] = None,
    importance_paths: Optional[int] = None,
    expect_monotone: bool = False,
    workers: int = 1,
) -> LdpTable:
    """Tabulate -eps*log(p_hat) for both estimators over a shrinking sweep.

    ``i_ref`` and ``tilt`` come from the action minimizer for the same
    event (rate value and optimal control).  Each amplitude yields a
    naive row and an importance row; path budgets can differ per
    estimator.  With ``expect_monotone`` the importance sequence is
    asserted to decrease toward ``i_ref`` and to stay above it up to
    interval slack — meaningful when an exact rate is available, reported
    but not enforced otherwise.
    """
    eps_arr = sorted((float(e) for e in eps_list), reverse=True)
    if len(eps_arr) == 0:
        raise ValueError("eps_list must be nonempty")
    if any(not (math.isfinite(e) and e > 0.0) for e in eps_arr):
        raise ValueError(f"eps_list must be positive and finite, got {eps_list!r}")
    i_ref = float(i_ref)

    spec_naive = spec if naive_paths is None else _replace_paths(spec, naive_paths)
    spec_is = spec if importance_paths is None else _replace_paths(spec, importance_paths)
    rows = []
    for eps in eps_arr:
        est_n = rare_event_probability(event, eps, spec_naive, None, workers)
        rows.append(_ldp_row(est_n, i_ref))
        est_i = rare_event_probability(event, eps, spec_is, tilt, workers)
        rows.append(_ldp_row(est_i, i_ref))

    imp = [r for r in rows if r.estimator == "importance"]
    finite = all(math.isfinite(r.neg_eps_log_p) for r in imp)
    monotone = finite and all(
        b.neg_eps_log_p < a.neg_eps_log_p for a, b in zip(imp, imp[1:])
    )
    above = finite and all(
        r.neg_eps_log_p
        >= i_ref - (r.epsilon * math.log(r.ci_high / r.p_hat) if r.p_hat > 0 else 0.0)
        for r in imp
    )
    if expect_monotone and not (monotone and above):
        raise AssertionError(
            "importance sequence -eps*log(p_hat) is not decreasing toward the "
            f"reference rate within interval slack: "
            f"{[r.neg_eps_log_p for r in imp]} vs i_ref = {i_ref}"
        )

    return LdpTable(
        radius=event.radius,
        horizon=spec.grid.T - spec.grid.t0,
        i_ref=i_ref,
        rows=tuple(rows),
        trend_monotone=monotone,
        above_rate_within_ci=above,
    )


def _replace_paths(spec: EnsembleSpec, paths: int) -> EnsembleSpec:
    return dataclasses.replace(spec, paths=paths)
