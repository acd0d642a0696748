"""Market primitives, the per-step binomial model and recombining lattices.

All lattice quantities are stored in *discounted* units so that the
martingale, Doob and self-financing identities used downstream hold exactly
(up to floating-point rounding) with no per-step discount factor.

Conventions
-----------
* Per-step net bond return ``r_n = exp(r*T/n) - 1``.
* Per-step net stock returns ``exp(r*T/n +/- kappa*h) - 1`` with
  ``h = sqrt(T/n)``.
* Martingale up-probability ``p_n = 1 / (exp(kappa*h) + 1)``, the unique
  probability under which the discounted stock is a martingale and the
  two-point martingale representation holds on both branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MAX_LATTICE_NODES = 10**8


@dataclass(frozen=True)
class MarketParams:
    """Black-Scholes market primitives.

    Attributes
    ----------
    r : float
        Continuously compounded riskless rate (per year), >= 0.
    kappa : float
        Volatility (per sqrt-year), > 0.
    T : float
        Horizon in years, > 0.
    z : float
        Initial stock price, > 0.
    """

    r: float
    kappa: float
    T: float
    z: float

    def __post_init__(self) -> None:
        vals = (self.r, self.kappa, self.T, self.z)
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
            raise ValueError("market parameters must be finite numbers")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if self.T <= 0.0:
            raise ValueError("T must be positive")
        if self.z <= 0.0:
            raise ValueError("z must be positive")
        if self.r < 0.0:
            raise ValueError("r must be nonnegative")


@dataclass(frozen=True)
class StepModel:
    """Derived per-step quantities of the n-step binomial market."""

    n: int
    h: float            # sqrt(T/n), the embedding increment
    dt: float           # T/n
    step_rate: float    # net bond return over one step
    up_return: float    # net stock return on an up step
    down_return: float  # net stock return on a down step
    p_up: float         # martingale probability of an up step

    @property
    def p_down(self) -> float:
        return 1.0 - self.p_up

    @property
    def growth(self) -> float:
        """Gross one-step bond factor exp(r*T/n)."""
        return 1.0 + self.step_rate


def make_step_model(params: MarketParams, n: int) -> StepModel:
    """Build the n-step model consistent with the exact martingale condition.

    The up-probability is ``1/(exp(kappa*h)+1)``; with net returns
    ``exp(r*dt +/- kappa*h) - 1`` this makes
    ``p*(up - r_n) + (1-p)*(down - r_n) = 0`` hold to rounding.
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ValueError("n must be an integer")
    if n < 1:
        raise ValueError("n must be >= 1")
    dt = params.T / n
    h = math.sqrt(dt)
    kh = params.kappa * h
    step_rate = math.expm1(params.r * dt)
    up = math.expm1(params.r * dt + kh)
    down = math.expm1(params.r * dt - kh)
    p = 1.0 / (math.exp(kh) + 1.0)
    return StepModel(
        n=int(n), h=h, dt=dt, step_rate=step_rate,
        up_return=up, down_return=down, p_up=p,
    )


@dataclass(frozen=True)
class StockLattice:
    """Recombining price lattice.

    ``prices[k][j]`` is the stock price after k steps of which j were up
    moves; ``discounted[k][j] = exp(-r*k*dt) * prices[k][j]``.
    """

    step: StepModel
    params: MarketParams
    prices: list = field(repr=False)
    discounted: list = field(repr=False)

    @property
    def n(self) -> int:
        return self.step.n


def build_stock_lattice(
    step: StepModel, params: MarketParams, max_nodes: int = MAX_LATTICE_NODES
) -> StockLattice:
    """Build the recombining stock lattice S(k, j) = z*exp(r*k*dt + kappa*h*(2j-k))."""
    n = step.n
    node_count = (n + 1) * (n + 2) // 2
    if node_count > max_nodes:
        raise ValueError(
            f"lattice with n={n} has {node_count} nodes, exceeding the limit {max_nodes}"
        )
    kh = params.kappa * step.h
    prices = []
    discounted = []
    for k in range(n + 1):
        j = np.arange(k + 1)
        disc = params.z * np.exp(kh * (2.0 * j - k))
        discounted.append(disc)
        prices.append(math.exp(params.r * k * step.dt) * disc)
    return StockLattice(step=step, params=params, prices=prices, discounted=discounted)


@dataclass(frozen=True)
class GamePayoffSpec:
    """Payoff specification of a game (Israeli) option.

    ``intrinsic(t, s)`` maps a time label and stock price(s) to the holder
    payoff Y >= 0; on the lattice ``t`` is the integer step index, in the
    continuous market it is real time.  ``penalty(t)`` is the undiscounted
    cancellation surcharge, so the canceller pays X = Y + penalty.
    ``lipschitz_C`` bounds the Lipschitz constant of the discounted payoffs
    in the stock variable.
    """

    intrinsic: Callable
    penalty: Callable
    lipschitz_C: float
    name: str = "custom"


def game_put(strike: float, penalty: float = 0.0) -> GamePayoffSpec:
    """Game put: Y = (K - S)^+, constant cancellation surcharge."""
    if strike < 0.0 or penalty < 0.0:
        raise ValueError("strike and penalty must be nonnegative")
    return GamePayoffSpec(
        intrinsic=lambda t, s: np.maximum(strike - s, 0.0),
        penalty=lambda t: penalty,
        lipschitz_C=1.0,
        name=f"put(K={strike},delta={penalty})",
    )


def game_call(strike: float, penalty: float = 0.0) -> GamePayoffSpec:
    """Game call: Y = (S - K)^+, constant cancellation surcharge."""
    if strike < 0.0 or penalty < 0.0:
        raise ValueError("strike and penalty must be nonnegative")
    return GamePayoffSpec(
        intrinsic=lambda t, s: np.maximum(s - strike, 0.0),
        penalty=lambda t: penalty,
        lipschitz_C=1.0,
        name=f"call(K={strike},delta={penalty})",
    )


def payoff_lattices(spec: GamePayoffSpec, lat: StockLattice, step: StepModel):
    """Discounted payoff lattices (Yhat, Xhat) on the stock lattice.

    Yhat(k,j) = exp(-r*k*dt) * Y(k, S(k,j)) and
    Xhat(k,j) = Yhat(k,j) + exp(-r*k*dt) * penalty(k).
    """
    if lat.step.n != step.n:
        raise ValueError("lattice and step model disagree on n")
    r = lat.params.r
    yhat = []
    xhat = []
    for k in range(step.n + 1):
        disc = math.exp(-r * k * step.dt)
        y = np.asarray(spec.intrinsic(k, lat.prices[k]), dtype=float)
        if y.shape != lat.prices[k].shape:
            y = np.broadcast_to(y, lat.prices[k].shape).astype(float)
        if not np.all(np.isfinite(y)) or np.any(y < 0.0):
            raise ValueError("intrinsic payoff must be finite and nonnegative")
        delta = float(spec.penalty(k))
        if not math.isfinite(delta) or delta < 0.0:
            raise ValueError("penalty must be finite and nonnegative")
        yhat.append(disc * y)
        xhat.append(disc * y + disc * delta)
    return yhat, xhat
