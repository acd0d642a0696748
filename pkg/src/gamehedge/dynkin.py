"""Dynkin-game valuation: backward induction, rational stopping rules,
the one-sided envelope for a fixed cancellation rule, and brute-force
path-tree oracles for small n.

The value lattice satisfies, with p the martingale up-probability,

    V(n,.) = Yhat(n,.),
    V(k,j) = min(Xhat(k,j), max(Yhat(k,j), p*V(k+1,j+1) + (1-p)*V(k+1,j))),

i.e. the canceller's min is applied outside (the holder receives Yhat on
ties).  Everything is in discounted units, so no per-step discounting
appears in the recursions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import StepModel

FULL_ENUM_MAX_N = 4
PATH_TREE_MAX_N = 20


@dataclass(frozen=True)
class ValueLattice:
    """Node-indexed discounted values.

    ``kind`` is one of ``dynkin-value``, ``one-sided-envelope``,
    ``doob-martingale``, ``doob-compensator``.  For one-sided envelopes,
    ``stop_mask`` marks the cancellation nodes at which the value process
    is absorbed (frozen) pathwise.
    """

    kind: str
    values: list = field(repr=False)
    stop_mask: Optional[list] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def root(self) -> float:
        return float(self.values[0][0])


@dataclass(frozen=True)
class StoppingRule:
    """Node-measurable stopping rule: stop at the first visited node with
    ``stop[k][j]`` true.  ``stop[n]`` is all-true so every path stops."""

    role: str
    stop: list = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.stop) - 1

    def first_stop(self, path: Sequence[int]) -> int:
        """Step index at which the rule stops along a +/-1 path."""
        j = 0
        for k in range(self.n + 1):
            if self.stop[k][j]:
                return k
            if k < self.n:
                if path[k] not in (1, -1):
                    raise ValueError("path symbols must be +1 or -1")
                j += (path[k] + 1) // 2
        return self.n


def _check_payoffs(yhat, xhat) -> int:
    if len(yhat) != len(xhat):
        raise ValueError("payoff lattices have different depths")
    for k, (y, x) in enumerate(zip(yhat, xhat)):
        if len(y) != k + 1 or len(x) != k + 1:
            raise ValueError("payoff lattices are not triangular")
    return len(yhat) - 1


def game_value(yhat, xhat, step: StepModel) -> ValueLattice:
    """Value of the discrete Dynkin game by backward induction."""
    n = _check_payoffs(yhat, xhat)
    if n != step.n:
        raise ValueError("payoff lattices and step model disagree on n")
    p, q = step.p_up, step.p_down
    values = [None] * (n + 1)
    values[n] = np.array(yhat[n], dtype=float)
    for k in range(n - 1, -1, -1):
        cont = p * values[k + 1][1:] + q * values[k + 1][:-1]
        values[k] = np.minimum(xhat[k], np.maximum(yhat[k], cont))
    return ValueLattice(kind="dynkin-value", values=values)


def american_value(yhat, step: StepModel) -> ValueLattice:
    """Single-player Snell envelope max(Yhat, continuation); used as the
    independent reference when the cancellation clamp never binds."""
    n = len(yhat) - 1
    p, q = step.p_up, step.p_down
    values = [None] * (n + 1)
    values[n] = np.array(yhat[n], dtype=float)
    for k in range(n - 1, -1, -1):
        cont = p * values[k + 1][1:] + q * values[k + 1][:-1]
        values[k] = np.maximum(yhat[k], cont)
    return ValueLattice(kind="dynkin-value", values=values)


def rational_stopping(V: ValueLattice, yhat, xhat, tol: float = None):
    """Rational rules: the canceller stops at the first node with V = Xhat,
    the holder at the first node with V = Yhat (first-equality convention,
    absolute tolerance ``tol``, default 1e-9 * |V(0,0)| clamped to >= 1e-9)."""
    if V.kind != "dynkin-value":
        raise ValueError("expected a dynkin-value lattice")
    n = V.n
    _check_payoffs(yhat, xhat)
    if tol is None:
        tol = 1e-9 * max(1.0, abs(V.root))
    zeta_stop = []
    nu_stop = []
    for k in range(n + 1):
        if k == n:
            zeta_stop.append(np.ones(k + 1, dtype=bool))
            nu_stop.append(np.ones(k + 1, dtype=bool))
        else:
            zeta_stop.append(V.values[k] >= xhat[k] - tol)
            nu_stop.append(V.values[k] <= yhat[k] + tol)
    return (
        StoppingRule(role="canceller", stop=zeta_stop),
        StoppingRule(role="holder", stop=nu_stop),
    )


def one_sided_envelope(zeta: StoppingRule, yhat, xhat, step: StepModel) -> ValueLattice:
    """Holder's Snell envelope against a fixed node-measurable cancellation
    rule.

    At a cancellation node the payoff is frozen at Xhat there, so
    U = max(Yhat, Xhat) = Xhat and the process is absorbed; elsewhere
    U(k,j) = max(Yhat(k,j), p*U(k+1,j+1) + (1-p)*U(k+1,j)) and
    U(n,.) = Yhat(n,.) (the holder receives Yhat on ties at maturity).
    Node values on the not-yet-cancelled region depend only on the node,
    so the recombining recursion is exact for any node-measurable rule;
    path-dependent rules must go through the path-tree oracle.
    """
    n = _check_payoffs(yhat, xhat)
    if n != step.n or zeta.n != n:
        raise ValueError("inputs disagree on n")
    p, q = step.p_up, step.p_down
    values = [None] * (n + 1)
    mask = [np.array(zeta.stop[k], dtype=bool) for k in range(n + 1)]
    values[n] = np.array(yhat[n], dtype=float)
    for k in range(n - 1, -1, -1):
        cont = p * values[k + 1][1:] + q * values[k + 1][:-1]
        values[k] = np.where(mask[k], xhat[k], np.maximum(yhat[k], cont))
    return ValueLattice(kind="one-sided-envelope", values=values, stop_mask=mask)


# ---------------------------------------------------------------------------
# Path-tree oracles (non-recombining binary tree, prefix-coded nodes).
#
# Level-k nodes are indexed by a k-bit integer; appending a step maps prefix
# ``pre`` to children ``2*pre`` (down) and ``2*pre + 1`` (up).  A path-tree
# stopping rule is a single integer whose bit at ``2**k - 1 + pre`` says
# "stop at node (k, pre)"; stopping at level n is implicit.
# ---------------------------------------------------------------------------


def tree_payoffs(yhat, xhat, step: StepModel):
    """Expand recombining payoff lattices onto the path tree."""
    n = _check_payoffs(yhat, xhat)
    if n > PATH_TREE_MAX_N:
        raise ValueError(f"path tree limited to n <= {PATH_TREE_MAX_N}")
    ups = [np.zeros(1, dtype=np.int64)]
    for k in range(n):
        u = ups[-1]
        nxt = np.empty(2 * len(u), dtype=np.int64)
        nxt[0::2] = u        # down child appends a 0 bit
        nxt[1::2] = u + 1    # up child
        ups.append(nxt)
    y_t = [np.asarray(yhat[k], dtype=float)[ups[k]] for k in range(n + 1)]
    x_t = [np.asarray(xhat[k], dtype=float)[ups[k]] for k in range(n + 1)]
    return y_t, x_t


def rule_to_tree(rule: StoppingRule):
    """Encode a node-measurable rule as a path-tree rule integer."""
    n = rule.n
    ups = [np.zeros(1, dtype=np.int64)]
    for k in range(n - 1):
        u = ups[-1]
        nxt = np.empty(2 * len(u), dtype=np.int64)
        nxt[0::2] = u
        nxt[1::2] = u + 1
        ups.append(nxt)
    bits = 0
    for k in range(n):
        stop_k = np.asarray(rule.stop[k], dtype=bool)[ups[k]]
        base = (1 << k) - 1
        for pre, s in enumerate(stop_k):
            if s:
                bits |= 1 << (base + pre)
    return bits


def _tree_rule_bits(rules: np.ndarray, k: int, width: int) -> np.ndarray:
    """Stop bits of rule integers at level k, shape (len(rules), width)."""
    base = (1 << k) - 1
    ids = base + np.arange(width, dtype=np.int64)
    return ((rules[:, None] >> ids[None, :]) & 1).astype(bool)


def _best_response_values(y_t, x_t, p: float, rules, responder: str) -> np.ndarray:
    """Root value of the responder's best reply against each fixed rule.

    ``responder='holder'`` treats the rules as cancellation rules and
    maximizes; ``responder='canceller'`` treats them as holder rules and
    minimizes.
    """
    n = len(y_t) - 1
    q = 1.0 - p
    rules = np.asarray(rules, dtype=np.int64)
    V = np.broadcast_to(y_t[n], (len(rules), 1 << n)).copy()
    for k in range(n - 1, -1, -1):
        cont = p * V[:, 1::2] + q * V[:, 0::2]
        bits = _tree_rule_bits(rules, k, 1 << k)
        if responder == "holder":
            V = np.where(bits, x_t[k][None, :], np.maximum(y_t[k][None, :], cont))
        elif responder == "canceller":
            V = np.where(bits, y_t[k][None, :], np.minimum(x_t[k][None, :], cont))
        else:
            raise ValueError("responder must be 'holder' or 'canceller'")
    return V[:, 0]


@dataclass(frozen=True)
class BruteForceResult:
    upper: float        # min over cancellation rules of the holder's best reply
    lower: float        # max over holder rules of the canceller's best reply
    value: float
    saddle_gap: float
    best_zeta: int      # path-tree rule integers attaining the extremes
    best_nu: int


def brute_force_value(yhat, xhat, step: StepModel) -> BruteForceResult:
    """Saddle value by full enumeration of adapted stopping rules (n <= 4).

    Enumerates all 2**(2**n - 1) path-tree rules for each player and
    certifies min-max = max-min.
    """
    n = _check_payoffs(yhat, xhat)
    if n > FULL_ENUM_MAX_N:
        raise ValueError(f"full enumeration limited to n <= {FULL_ENUM_MAX_N}")
    if n != step.n:
        raise ValueError("payoff lattices and step model disagree on n")
    y_t, x_t = tree_payoffs(yhat, xhat, step)
    n_rules = 1 << ((1 << n) - 1)
    rules = np.arange(n_rules, dtype=np.int64)
    holder_best = _best_response_values(y_t, x_t, step.p_up, rules, "holder")
    canceller_best = _best_response_values(y_t, x_t, step.p_up, rules, "canceller")
    upper = float(holder_best.min())
    lower = float(canceller_best.max())
    return BruteForceResult(
        upper=upper,
        lower=lower,
        value=0.5 * (upper + lower),
        saddle_gap=upper - lower,
        best_zeta=int(np.argmin(holder_best)),
        best_nu=int(np.argmax(canceller_best)),
    )


def path_tree_game_value(yhat, xhat, step: StepModel) -> float:
    """Dynkin value by backward induction on the non-recombining tree
    (n <= 20); independent of the recombining implementation."""
    y_t, x_t = tree_payoffs(yhat, xhat, step)
    n = len(y_t) - 1
    p, q = step.p_up, step.p_down
    V = y_t[n].copy()
    for k in range(n - 1, -1, -1):
        cont = p * V[1::2] + q * V[0::2]
        V = np.minimum(x_t[k], np.maximum(y_t[k], cont))
    return float(V[0])


def game_payoff_expectation(zeta_bits: int, nu_bits: int, y_t, x_t, p: float) -> float:
    """Expected discounted payoff E[Yhat_nu 1{nu<=zeta} + Xhat_zeta 1{zeta<nu}]
    for a fixed pair of path-tree rules (holder receives Yhat on ties)."""
    n = len(y_t) - 1
    q = 1.0 - p
    total = 0.0
    # depth-first over tree nodes with path probability
    stack = [(0, 0, 1.0)]
    while stack:
        k, pre, prob = stack.pop()
        zstop = k == n or (zeta_bits >> ((1 << k) - 1 + pre)) & 1
        nstop = k == n or (nu_bits >> ((1 << k) - 1 + pre)) & 1
        if nstop:
            total += prob * float(y_t[k][pre])
        elif zstop:
            total += prob * float(x_t[k][pre])
        else:
            stack.append((k + 1, 2 * pre, prob * q))
            stack.append((k + 1, 2 * pre + 1, prob * p))
    return total
