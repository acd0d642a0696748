"""Brownian embedding of the binomial walk and Monte Carlo shortfall study.

A drift-adjusted Brownian path ``B*_t = W_t - (kappa/2) t`` is simulated on a
uniform grid; the binomial walk is embedded through the successive times
``theta_k`` at which B* moves by ``h = sqrt(T/n)`` from its last embedded
level.  Under this drift the embedded up-move frequency equals the binomial
martingale probability ``1/(exp(kappa*h)+1)``, so the discrete hedge
transfers to the Black-Scholes market with no measure change.

The per-path shortfall is

    psi = sup_{0<=t<=T} ( Qc(theta_phi, t) - Qd(phi, nu_t) )^+

where Qc is the continuous-market discounted game payoff, Qd the discrete
one evaluated on the embedded walk, phi the issuer's rational cancellation
step and ``nu_t = min{k : theta_k >= t}``.

The simulation grid extends beyond the payoff horizon T (``pad_factor``):
the n embedding increments consume about T of Brownian time on average, so
a grid stopping at T would leave roughly half the paths short of n
crossings.  Payoff times are capped at T; the padding only serves the
embedding clock.  Paths that still fail to embed n steps are counted as
truncated (their discrete clock freezes at the last embedded step) and the
estimator aborts if they exceed ``max_truncated_frac``.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .model import (
    GamePayoffSpec,
    MarketParams,
    StepModel,
    build_stock_lattice,
    make_step_model,
    payoff_lattices,
)
from .dynkin import StoppingRule, game_value, one_sided_envelope, rational_stopping
from .hedging import HedgePlan, build_hedge_plan


class TruncationError(RuntimeError):
    """Raised when too many paths fail to embed all n steps."""


# ---------------------------------------------------------------------------
# Path generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BrownianPath:
    """Standard Brownian path and its drift-adjusted version on a uniform
    grid.  ``T`` is the payoff horizon; the grid may extend beyond it."""

    grid: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    bstar: np.ndarray = field(repr=False)
    T: float = 0.0
    dt: float = 0.0


MAX_GRID_POINTS = 200_000_000


def _batch_w(m_total: int, dt: float, seed: int, start: int, size: int) -> np.ndarray:
    """Brownian values (size, m_total+1) from counter-based per-path streams.

    Path ``i`` uses a Philox stream keyed by (seed, start+i), so the result
    is independent of batching and thread count.
    """
    w = np.empty((size, m_total + 1))
    w[:, 0] = 0.0
    sdt = math.sqrt(dt)
    for i in range(size):
        rng = np.random.Generator(
            np.random.Philox(key=(int(seed) << 64) + int(start + i))
        )
        np.cumsum(rng.standard_normal(m_total) * sdt, out=w[i, 1:])
    return w


def sample_path(params: MarketParams, m: int, seed: int,
                pad_factor: int = 1, path_index: int = 0) -> BrownianPath:
    """Sample one reproducible Brownian path.

    ``m`` is the number of grid steps per payoff horizon T; the grid spans
    ``pad_factor * T`` with spacing ``T/m``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if pad_factor < 1:
        raise ValueError("pad_factor must be >= 1")
    m_total = m * pad_factor
    if m_total > MAX_GRID_POINTS:
        raise ValueError(f"grid of {m_total} points exceeds the configured limit")
    dt = params.T / m
    w = _batch_w(m_total, dt, seed, path_index, 1)[0]
    grid = np.arange(m_total + 1) * dt
    bstar = w - 0.5 * params.kappa * grid
    return BrownianPath(grid=grid, w=w, bstar=bstar, T=params.T, dt=dt)


# ---------------------------------------------------------------------------
# Crossing detection
# ---------------------------------------------------------------------------


@njit(cache=True)
def _scan_crossings(bstar, h, n):  # pragma: no cover - compiled
    B, M = bstar.shape
    idx = np.zeros((B, n), dtype=np.int64)
    frac = np.zeros((B, n))
    signs = np.zeros((B, n), dtype=np.int8)
    count = np.zeros(B, dtype=np.int64)
    for b in range(B):
        level = 0.0
        k = 0
        for t in range(1, M):
            x = bstar[b, t] - level
            if x >= h or x <= -h:
                s = 1 if x >= h else -1
                target = level + s * h
                prev = bstar[b, t - 1]
                denom = bstar[b, t] - prev
                frac[b, k] = (target - prev) / denom if denom != 0.0 else 1.0
                idx[b, k] = t
                signs[b, k] = s
                level = target
                k += 1
                if k == n:
                    break
        count[b] = k
    return idx, frac, signs, count


@dataclass(frozen=True)
class EmbeddingTimes:
    """Embedding times theta_1..theta_n (inf where missing), increment signs
    (0 beyond the last embedded step) and the embedded-step counter."""

    theta: np.ndarray = field(repr=False)
    signs: np.ndarray = field(repr=False)
    count: int = 0
    n: int = 0
    truncated: bool = False

    def nu(self, t):
        """nu_t = min{k : theta_k >= t}, capped at the embedded-step count."""
        t = np.asarray(t, dtype=float)
        th = self.theta[: self.count]
        out = np.searchsorted(th, t, side="left") + 1
        out = np.where(t <= 0.0, 0, out)
        return np.minimum(out, self.count)


def embed_times(path: BrownianPath, step: StepModel) -> EmbeddingTimes:
    """Embed the n-step walk into the path by +/-h crossing detection with
    linear interpolation of crossing times."""
    h = step.h
    if path.dt > h * h / 16.0:
        warnings.warn(
            f"grid spacing dt={path.dt:.3g} is coarse relative to h^2/16="
            f"{h * h / 16.0:.3g}; crossings may be missed",
            stacklevel=2,
        )
    idx, frac, signs, count = _scan_crossings(path.bstar[None, :], h, step.n)
    k = int(count[0])
    theta = np.full(step.n, np.inf)
    theta[:k] = (idx[0, :k] - 1 + frac[0, :k]) * path.dt
    return EmbeddingTimes(
        theta=theta, signs=signs[0].astype(np.int64), count=k, n=step.n,
        truncated=k < step.n,
    )


# ---------------------------------------------------------------------------
# Continuous payoff and per-path shortfall (reference implementations)
# ---------------------------------------------------------------------------


def _grid_index(path: BrownianPath, t: float) -> int:
    i = t / path.dt
    j = int(round(i))
    if abs(i - j) > 1e-9 or j < 0 or j >= len(path.grid):
        raise ValueError(f"time {t} is not on the simulation grid")
    return j


def continuous_game_payoff(path: BrownianPath, spec: GamePayoffSpec,
                           params: MarketParams, s: float, t: float) -> float:
    """Discounted continuous-market game payoff Qc(s, t): cancellation pays
    Y + penalty at s when s < t, exercise pays Y at t when t <= s."""
    si = _grid_index(path, s)
    ti = _grid_index(path, t)
    r, z, kap = params.r, params.z, params.kappa
    if s < t:
        stock = z * math.exp(r * s + kap * path.bstar[si])
        y = float(spec.intrinsic(s, stock))
        return math.exp(-r * s) * (y + float(spec.penalty(s)))
    stock = z * math.exp(r * t + kap * path.bstar[ti])
    return math.exp(-r * t) * float(spec.intrinsic(t, stock))


def _walk_nodes(signs: np.ndarray, count: int, n: int):
    """Cumulative walk c_k (frozen after count) and node indices j_k."""
    c = np.zeros(n + 1)
    c[1:] = np.cumsum(signs)
    keff = np.minimum(np.arange(n + 1), count)
    j = np.rint((c + keff) / 2.0).astype(np.int64)
    return c, keff, j


def _first_stop_on_walk(rule: StoppingRule, j: np.ndarray, count: int, n: int) -> int:
    for k in range(min(count, n) + 1):
        if rule.stop[k][j[k]]:
            return k
    return count


def shortfall_psi(path: BrownianPath, spec: GamePayoffSpec, params: MarketParams,
                  step: StepModel, phi_rule: StoppingRule) -> float:
    """Per-path shortfall psi >= 0 (single-path reference implementation;
    the Monte Carlo driver uses an equivalent batched version)."""
    emb = embed_times(path, step)
    n = step.n
    r, z, kap, T = params.r, params.z, params.kappa, params.T
    c, keff, j = _walk_nodes(emb.signs, emb.count, n)
    phi = _first_stop_on_walk(phi_rule, j, emb.count, n)
    theta_phi = 0.0 if phi == 0 else float(emb.theta[phi - 1])

    # discrete payoffs along the (frozen) walk
    disc_n = np.exp(-r * step.dt * keff)
    stock_n = z * np.exp(r * step.dt * keff + kap * step.h * c)
    yd = disc_n * np.asarray(spec.intrinsic(keff, stock_n), dtype=float)
    xd = yd + disc_n * np.asarray(spec.penalty(keff), dtype=float)

    m_t = int(round(T / path.dt))
    tq = path.grid[: m_t + 1]
    nu = emb.nu(tq)
    qd = np.where(phi < nu, xd[phi], yd[nu])

    sbar = min(theta_phi, T)
    b_sbar = step.h * c[phi] if theta_phi <= T else path.bstar[m_t]
    s_cancel = z * math.exp(r * sbar + kap * b_sbar)
    cancel = math.exp(-r * sbar) * (
        float(spec.intrinsic(sbar, s_cancel)) + float(spec.penalty(sbar))
    )
    stock_c = z * np.exp(r * tq + kap * path.bstar[: m_t + 1])
    qc = np.where(
        tq > theta_phi,
        cancel,
        np.exp(-r * tq) * np.asarray(spec.intrinsic(tq, stock_c), dtype=float),
    )
    return float(np.maximum(qc - qd, 0.0).max())


# ---------------------------------------------------------------------------
# Holder stopping rules for the gap study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeterministicTime:
    t: float

    @property
    def label(self) -> str:
        return f"t={self.t:g}"


@dataclass(frozen=True)
class StockBarrier:
    level: float

    @property
    def label(self) -> str:
        return f"S-hits-{self.level:g}"


@dataclass(frozen=True)
class EmbeddedRational:
    @property
    def label(self) -> str:
        return "rational"


def default_tau_family(params: MarketParams):
    """21 holder rules: 16 deterministic times, 4 stock barriers, and the
    embedded rational exercise rule."""
    taus = [DeterministicTime(jj * params.T / 16.0) for jj in range(1, 17)]
    taus += [StockBarrier(c * params.z) for c in (0.8, 0.9, 1.1, 1.2)]
    taus.append(EmbeddedRational())
    return taus


# ---------------------------------------------------------------------------
# Monte Carlo experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _NContext:
    step: StepModel
    zeta_mask: np.ndarray
    nu_mask: np.ndarray
    dm_up: np.ndarray
    dm_down: np.ndarray
    gamma: np.ndarray
    u00: float
    price: float


def _pad_triangular(rows, n_rows, width, dtype=float) -> np.ndarray:
    out = np.zeros((n_rows, width), dtype=dtype)
    for k, row in enumerate(rows):
        out[k, : len(row)] = row
    return out


def _build_context(spec: GamePayoffSpec, params: MarketParams, n: int) -> _NContext:
    step = make_step_model(params, n)
    lat = build_stock_lattice(step, params)
    yhat, xhat = payoff_lattices(spec, lat, step)
    v = game_value(yhat, xhat, step)
    zeta, nu = rational_stopping(v, yhat, xhat, tol=1e-9 * params.z)
    u = one_sided_envelope(zeta, yhat, xhat, step)
    plan = build_hedge_plan(u, lat, step)
    return _NContext(
        step=step,
        zeta_mask=_pad_triangular(zeta.stop, n + 1, n + 1, dtype=bool),
        nu_mask=_pad_triangular(nu.stop, n + 1, n + 1, dtype=bool),
        dm_up=_pad_triangular(plan.decomposition.dm_up, n, n),
        dm_down=_pad_triangular(plan.decomposition.dm_down, n, n),
        gamma=_pad_triangular(plan.gamma, n, n),
        u00=u.root,
        price=v.root,
    )


@dataclass(frozen=True)
class TauGap:
    label: str
    mean: float
    se: float


@dataclass(frozen=True)
class ShortfallRow:
    n: int
    N: int
    mean_psi: float
    se_psi: float
    c_fit: float
    truncated_paths: int
    gap_max: float = math.nan
    gap_se: float = math.nan


@dataclass(frozen=True)
class ShortfallReport:
    rows: list
    slope_fit: float
    c_fit: float
    gaps: dict            # n -> list[TauGap]
    N: int
    m: int
    seed: int

    def row(self, n: int) -> ShortfallRow:
        for row in self.rows:
            if row.n == n:
                return row
        raise KeyError(n)


def _batch_psi_and_gaps(ctx: _NContext, spec, params, bstar, m_t, dt, taus):
    """psi samples and per-tau gap samples for one batch of paths."""
    B = bstar.shape[0]
    n, h = ctx.step.n, ctx.step.h
    r, z, kap, T = params.r, params.z, params.kappa, params.T
    rows = np.arange(B)
    karr = np.arange(n + 1)

    idx, frac, signs, count = _scan_crossings(bstar, h, n)
    theta = np.where(idx > 0, (idx - 1 + frac) * dt, np.inf)
    c = np.zeros((B, n + 1))
    c[:, 1:] = np.cumsum(signs, axis=1)
    keff = np.minimum(karr[None, :], count[:, None])
    j = np.rint((c + keff) / 2.0).astype(np.int64)

    # discrete payoffs on the walk
    disc_n = np.exp(-r * ctx.step.dt * keff)
    stock_n = z * np.exp(r * ctx.step.dt * keff + kap * h * c)
    yd = disc_n * np.asarray(spec.intrinsic(keff, stock_n), dtype=float)
    xd = yd + disc_n * np.asarray(spec.penalty(keff), dtype=float)

    def first_stop(mask_2d):
        g = mask_2d[karr[None, :], j]
        g &= karr[None, :] <= count[:, None]
        trunc = count < n
        g[trunc, count[trunc]] = True
        return np.argmax(g, axis=1)

    phi = first_stop(ctx.zeta_mask)
    theta_phi = np.where(phi > 0, theta[rows, np.maximum(phi - 1, 0)], 0.0)

    tq = np.arange(m_t + 1) * dt
    nu_t = np.empty((B, m_t + 1), dtype=np.int64)
    for b in range(B):
        nu_t[b] = np.searchsorted(theta[b, : count[b]], tq, side="left") + 1
    nu_t[:, 0] = 0
    nu_t = np.minimum(nu_t, count[:, None])

    qd = np.where(
        phi[:, None] < nu_t,
        xd[rows, phi][:, None],
        np.take_along_axis(yd, nu_t, axis=1),
    )

    sbar = np.minimum(theta_phi, T)
    b_sbar = np.where(theta_phi <= T, h * c[rows, phi], bstar[:, m_t])
    s_cancel = z * np.exp(r * sbar + kap * b_sbar)
    cancel = np.exp(-r * sbar) * (
        np.asarray(spec.intrinsic(sbar, s_cancel), dtype=float)
        + np.asarray(spec.penalty(sbar), dtype=float)
    )
    stock_c = z * np.exp(r * tq[None, :] + kap * bstar[:, : m_t + 1])
    qc = np.where(
        tq[None, :] > theta_phi[:, None],
        cancel[:, None],
        np.exp(-r * tq)[None, :] * np.asarray(spec.intrinsic(tq[None, :], stock_c), dtype=float),
    )
    psi = np.maximum(qc - qd, 0.0).max(axis=1)
    n_trunc = int(np.sum(count < n))

    if not taus:
        return psi, [], n_trunc

    # Doob martingale along each walk
    kprev = np.arange(n)
    up_inc = ctx.dm_up[kprev[None, :], j[:, :n]]
    dn_inc = ctx.dm_down[kprev[None, :], j[:, :n]]
    dm = np.where(signs == 1, up_inc, np.where(signs == -1, dn_inc, 0.0))
    dm = np.where(kprev[None, :] >= phi[:, None], 0.0, dm)
    m_walk = np.empty((B, n + 1))
    m_walk[:, 0] = ctx.u00
    m_walk[:, 1:] = ctx.u00 + np.cumsum(dm, axis=1)

    def eval_gap(tau_t, bstar_tau):
        # number of embedding times <= tau on each path (theta rows are
        # sorted; missing entries are +inf and never counted)
        kbar = np.sum(theta <= tau_t[:, None], axis=1)
        kb = np.minimum(kbar, n - 1)
        shat_tau = z * np.exp(kap * bstar_tau)
        shat_kb = z * np.exp(kap * h * c[rows, kb])
        z_hold = m_walk[rows, kb] + ctx.gamma[kb, j[rows, kb]] * (shat_tau - shat_kb)
        z_val = np.where(theta_phi <= tau_t, m_walk[rows, phi], z_hold)
        s_tau = z * np.exp(r * tau_t + kap * bstar_tau)
        q_hold = np.exp(-r * tau_t) * np.asarray(spec.intrinsic(tau_t, s_tau), dtype=float)
        q_cancel = np.exp(-r * theta_phi) * (
            np.asarray(spec.intrinsic(theta_phi, z * np.exp(r * theta_phi + kap * h * c[rows, phi])), dtype=float)
            + np.asarray(spec.penalty(theta_phi), dtype=float)
        )
        qb = np.where(theta_phi < tau_t, q_cancel, q_hold)
        return np.maximum(qb - z_val, 0.0)

    gap_samples = []
    for tau in taus:
        if isinstance(tau, DeterministicTime):
            ti = int(round(tau.t / dt))
            ti = min(max(ti, 0), m_t)
            tau_t = np.full(B, ti * dt)
            bstar_tau = bstar[:, ti]
        elif isinstance(tau, StockBarrier):
            if tau.level >= z:
                hit = stock_c >= tau.level
            else:
                hit = stock_c <= tau.level
            any_hit = hit.any(axis=1)
            ti = np.where(any_hit, np.argmax(hit, axis=1), m_t)
            tau_t = ti * dt
            bstar_tau = bstar[rows, ti]
        elif isinstance(tau, EmbeddedRational):
            nustar = first_stop(ctx.nu_mask)
            theta_nu = np.where(nustar > 0, theta[rows, np.maximum(nustar - 1, 0)], 0.0)
            capped = theta_nu > T
            tau_t = np.minimum(theta_nu, T)
            bstar_tau = np.where(capped, bstar[:, m_t], h * c[rows, nustar])
        else:
            raise ValueError(f"unknown holder rule {tau!r}")
        gap_samples.append(eval_gap(tau_t, bstar_tau))
    return psi, gap_samples, n_trunc


def run_shortfall_experiment(
    spec: GamePayoffSpec,
    params: MarketParams,
    n_list: Sequence[int],
    N: int,
    m: int,
    seed: int,
    tau_family: Optional[list] = None,
    batch_size: int = 256,
    pad_factor: int = 3,
    max_truncated_frac: float = 0.01,
    compute_gaps: bool = True,
) -> ShortfallReport:
    """Estimate E[psi] for each n, fit the log-log decay slope, and (optionally)
    measure the hedging gap over a family of holder rules.

    The same Brownian paths (seeded per path index) are reused across all n.
    Aborts with :class:`TruncationError` if more than ``max_truncated_frac``
    of paths fail to embed n steps for some n.
    """
    if N < 100:
        raise ValueError("N must be >= 100")
    if not n_list:
        raise ValueError("n_list must be nonempty")
    n_list = [int(n) for n in n_list]
    if compute_gaps and tau_family is None:
        tau_family = default_tau_family(params)
    taus = tau_family if compute_gaps else []

    contexts = {n: _build_context(spec, params, n) for n in n_list}
    for n in n_list:
        h = contexts[n].step.h
        if params.T / m > h * h / 16.0:
            warnings.warn(
                f"grid m={m} is coarse for n={n} (dt > h^2/16); "
                "crossings may be missed",
                stacklevel=2,
            )

    dt = params.T / m
    m_total = m * pad_factor
    psi_all = {n: [] for n in n_list}
    gaps_all = {n: [[] for _ in taus] for n in n_list}
    trunc = {n: 0 for n in n_list}

    start = 0
    while start < N:
        size = min(batch_size, N - start)
        w = _batch_w(m_total, dt, seed, start, size)
        tgrid = np.arange(m_total + 1) * dt
        bstar = w - 0.5 * params.kappa * tgrid
        for n in n_list:
            psi, gap_samples, n_trunc = _batch_psi_and_gaps(
                contexts[n], spec, params, bstar, m, dt, taus
            )
            psi_all[n].append(psi)
            trunc[n] += n_trunc
            for gi, g in enumerate(gap_samples):
                gaps_all[n][gi].append(g)
        start += size

    for n in n_list:
        if trunc[n] > max_truncated_frac * N:
            raise TruncationError(
                f"{trunc[n]}/{N} paths failed to embed n={n} steps; "
                "refine the grid (larger m) or increase pad_factor"
            )

    rows = []
    gaps = {}
    means = []
    for n in n_list:
        samples = np.concatenate(psi_all[n])
        mean = float(samples.mean())
        se = float(samples.std(ddof=1) / math.sqrt(N))
        means.append(mean)
        gap_rows = []
        gap_max, gap_se = math.nan, math.nan
        if taus:
            for tau, chunks in zip(taus, gaps_all[n]):
                g = np.concatenate(chunks)
                gap_rows.append(TauGap(
                    label=tau.label,
                    mean=float(g.mean()),
                    se=float(g.std(ddof=1) / math.sqrt(N)),
                ))
            worst = max(range(len(gap_rows)), key=lambda i: gap_rows[i].mean)
            gap_max = gap_rows[worst].mean
            gap_se = gap_rows[worst].se
        gaps[n] = gap_rows
        rows.append(ShortfallRow(
            n=n, N=N, mean_psi=mean, se_psi=se,
            c_fit=mean * n ** 0.25, truncated_paths=trunc[n],
            gap_max=gap_max, gap_se=gap_se,
        ))

    if len(n_list) >= 2 and all(v > 0.0 for v in means):
        slope = float(np.polyfit(np.log(n_list), np.log(means), 1)[0])
    else:
        # undefined with a single n or with exactly-zero sample means
        slope = math.nan
    c_fit = max(row.c_fit for row in rows)
    return ShortfallReport(rows=rows, slope_fit=slope, c_fit=c_fit, gaps=gaps,
                           N=N, m=m, seed=seed)


def estimate_mean_shortfall(spec: GamePayoffSpec, params: MarketParams,
                            n_list: Sequence[int], N: int, m: int, seed: int,
                            **kwargs) -> ShortfallReport:
    """Mean shortfall per n with the fitted decay slope (no gap study)."""
    return run_shortfall_experiment(
        spec, params, n_list, N, m, seed, compute_gaps=False, **kwargs
    )


@dataclass(frozen=True)
class GapReport:
    n: int
    taus: list
    family_max: float
    family_se: float
    mean_psi: float
    se_psi: float
    ok: bool


def hedging_gap(spec: GamePayoffSpec, params: MarketParams, step: StepModel,
                plan: HedgePlan, tau_family: Optional[list], N: int, m: int,
                seed: int, **kwargs) -> GapReport:
    """Gap study for a single n: for each holder rule tau, the mean positive
    part of (continuous payoff) - (portfolio at cancellation-or-tau), checked
    against mean psi + 3 combined standard errors."""
    if plan.step.n != step.n:
        raise ValueError("plan and step model disagree on n")
    report = run_shortfall_experiment(
        spec, params, [step.n], N, m, seed, tau_family=tau_family,
        compute_gaps=True, **kwargs
    )
    row = report.row(step.n)
    taus = report.gaps[step.n]
    combined_se = math.sqrt(row.gap_se ** 2 + row.se_psi ** 2)
    ok = row.gap_max <= row.mean_psi + 3.0 * combined_se
    return GapReport(
        n=step.n, taus=taus, family_max=row.gap_max, family_se=row.gap_se,
        mean_psi=row.mean_psi, se_psi=row.se_psi, ok=ok,
    )


def embedded_sign_frequency(params: MarketParams, n: int, N: int, m: int,
                            seed: int, batch_size: int = 4096):
    """Empirical frequency of an up first embedded increment, with standard
    error; validates the drift convention against 1/(exp(kappa*h)+1)."""
    step = make_step_model(params, n)
    dt = params.T / m
    ups = 0
    crossed = 0
    start = 0
    while start < N:
        size = min(batch_size, N - start)
        w = _batch_w(m, dt, seed, start, size)
        tgrid = np.arange(m + 1) * dt
        bstar = w - 0.5 * params.kappa * tgrid
        _, _, signs, count = _scan_crossings(bstar, step.h, 1)
        crossed += int(np.sum(count >= 1))
        ups += int(np.sum(signs[:, 0] == 1))
        start += size
    if crossed == 0:
        raise RuntimeError("no embedded increments observed; grid too short")
    p_hat = ups / crossed
    se = math.sqrt(max(p_hat * (1.0 - p_hat), 1e-300) / crossed)
    return p_hat, se, N - crossed


# ---------------------------------------------------------------------------
# External formats
# ---------------------------------------------------------------------------

CSV_HEADER = "n,N,mean_psi,se_psi,slope_fit,c_fit,gap_max,gap_se,truncated_paths"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def shortfall_csv(report: ShortfallReport) -> str:
    """CSV text: one row per n."""
    lines = [CSV_HEADER]
    for row in report.rows:
        lines.append(",".join([
            str(row.n), str(row.N), _fmt(row.mean_psi), _fmt(row.se_psi),
            _fmt(report.slope_fit), _fmt(report.c_fit), _fmt(row.gap_max),
            _fmt(row.gap_se), str(row.truncated_paths),
        ]))
    return "\n".join(lines) + "\n"


def write_shortfall_csv(report: ShortfallReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(shortfall_csv(report))


_FIXTURE_MAGIC = b"GHPW"


def write_path_fixture(path_obj: BrownianPath, file, seed: int = 0) -> None:
    """Binary golden-path fixture: magic, header (m, T_grid, seed), then the
    raw float64 Brownian values w_0..w_m."""
    m = len(path_obj.w) - 1
    with open(file, "wb") as fh:
        fh.write(_FIXTURE_MAGIC)
        fh.write(struct.pack("<Qdq", m, float(path_obj.grid[-1]), int(seed)))
        fh.write(np.asarray(path_obj.w, dtype="<f8").tobytes())


def read_path_fixture(file, kappa: float, T: Optional[float] = None) -> BrownianPath:
    """Read a golden-path fixture and rebuild the drift-adjusted path."""
    with open(file, "rb") as fh:
        magic = fh.read(4)
        if magic != _FIXTURE_MAGIC:
            raise ValueError("not a golden-path fixture")
        m, t_grid, _ = struct.unpack("<Qdq", fh.read(24))
        w = np.frombuffer(fh.read(8 * (m + 1)), dtype="<f8").copy()
    dt = t_grid / m
    grid = np.arange(m + 1) * dt
    bstar = w - 0.5 * kappa * grid
    return BrownianPath(grid=grid, w=w, bstar=bstar,
                        T=T if T is not None else t_grid, dt=dt)
