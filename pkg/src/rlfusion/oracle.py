"""Exact inference on finite-horizon tabular MDPs.

Ground truth for the inference view of control: brute-force trajectory
posteriors (probability proportional to dynamics-probability times
exp(total reward)) and the backward soft-Bellman recursion whose policy
maximizes expected reward plus policy entropy. Undiscounted, finite
horizon throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import CapacityError, FormatError

MAX_ENUM_TRAJECTORIES = 10**6


@dataclass
class TabularMDP:
    P: np.ndarray  # (S, A, S) transition probabilities
    R: np.ndarray  # (S, A) rewards
    p0: np.ndarray  # (S,) initial distribution
    T: int

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.p0 = np.asarray(self.p0, dtype=np.float64)
        S, A, S2 = self.P.shape
        if S != S2 or self.R.shape != (S, A) or self.p0.shape != (S,):
            raise ValueError("inconsistent table shapes")
        if not np.allclose(self.P.sum(axis=2), 1.0, atol=1e-12):
            raise ValueError("transition rows must sum to 1")
        if not np.isclose(self.p0.sum(), 1.0, atol=1e-12):
            raise ValueError("p0 must sum to 1")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]


@dataclass
class SoftSolution:
    Q: np.ndarray  # (T, S, A)
    V: np.ndarray  # (T, S)
    policy: np.ndarray  # (T, S, A)


def logsumexp(x: np.ndarray, axis=None) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return out if axis is None else np.squeeze(out, axis=axis)


def enumerate_posterior(mdp: TabularMDP) -> dict[tuple, float]:
    """Exact posterior over full (s_1, a_1, ..., s_T, a_T) trajectories.

    Keys are interleaved (s, a) tuples; values sum to 1. Trajectories with
    zero dynamics probability are omitted.
    """
    n = (mdp.n_states * mdp.n_actions) ** mdp.T
    if n > MAX_ENUM_TRAJECTORIES:
        raise CapacityError(f"{n} trajectories exceeds the enumeration guard")
    log_weights: dict[tuple, float] = {}
    states = range(mdp.n_states)
    actions = range(mdp.n_actions)
    for sa_seq in product(*[list(product(states, actions))] * mdp.T):
        logw = 0.0
        prev = None
        dead = False
        for s, a in sa_seq:
            p = mdp.p0[s] if prev is None else mdp.P[prev[0], prev[1], s]
            if p == 0.0:
                dead = True
                break
            logw += np.log(p) + mdp.R[s, a]
            prev = (s, a)
        if dead:
            continue
        flat = tuple(x for sa in sa_seq for x in sa)
        log_weights[flat] = logw
    logs = np.array(list(log_weights.values()))
    log_z = logsumexp(logs)
    return {k: float(np.exp(lw - log_z)) for k, lw in log_weights.items()}


def log_partition(mdp: TabularMDP) -> float:
    """log of the summed trajectory weights (exact optimality log-likelihood)."""
    n = (mdp.n_states * mdp.n_actions) ** mdp.T
    if n > MAX_ENUM_TRAJECTORIES:
        raise CapacityError(f"{n} trajectories exceeds the enumeration guard")
    log_weights = []
    states = range(mdp.n_states)
    actions = range(mdp.n_actions)
    for sa_seq in product(*[list(product(states, actions))] * mdp.T):
        logw = 0.0
        prev = None
        dead = False
        for s, a in sa_seq:
            p = mdp.p0[s] if prev is None else mdp.P[prev[0], prev[1], s]
            if p == 0.0:
                dead = True
                break
            logw += np.log(p) + mdp.R[s, a]
            prev = (s, a)
        if not dead:
            log_weights.append(logw)
    return float(logsumexp(np.array(log_weights)))


def soft_value_iteration(mdp: TabularMDP) -> SoftSolution:
    """Backward soft-Bellman recursion.

    Q[t,s,a] = R[s,a] + sum_s' P[s,a,s'] V[t+1,s'], V = logsumexp_a Q,
    policy = exp(Q - V); V after the horizon is identically zero.
    """
    T, S, A = mdp.T, mdp.n_states, mdp.n_actions
    Q = np.zeros((T, S, A))
    V = np.zeros((T, S))
    policy = np.zeros((T, S, A))
    v_next = np.zeros(S)
    for t in range(T - 1, -1, -1):
        Q[t] = mdp.R + mdp.P @ v_next
        V[t] = logsumexp(Q[t], axis=1)
        policy[t] = np.exp(Q[t] - V[t][:, None])
        v_next = V[t]
    return SoftSolution(Q=Q, V=V, policy=policy)


def occupancy(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    """Exact per-(t, s, a) occupancy under a (T, S, A) policy, by forward DP.

    Rows sum to 1 at each t.
    """
    T, S, A = mdp.T, mdp.n_states, mdp.n_actions
    occ = np.zeros((T, S, A))
    ps = mdp.p0.copy()
    for t in range(T):
        occ[t] = ps[:, None] * policy[t]
        ps = np.einsum("sa,sak->k", occ[t], mdp.P)
    return occ


def maxent_objective(mdp: TabularMDP, policy: np.ndarray) -> float:
    """Expected total reward plus policy entropy, computed exactly by
    forward DP over state marginals (no sampling)."""
    policy = np.asarray(policy, dtype=np.float64)
    if policy.ndim == 2:
        policy = np.broadcast_to(policy, (mdp.T,) + policy.shape)
    occ = occupancy(mdp, policy)
    with np.errstate(divide="ignore", invalid="ignore"):
        logpi = np.where(policy > 0.0, np.log(np.where(policy > 0.0, policy, 1.0)), 0.0)
    total = 0.0
    for t in range(mdp.T):
        total += float((occ[t] * (mdp.R - logpi[t])).sum())
    return total


# -- plain-text table format -------------------------------------------------
#
#   S <n_states>
#   A <n_actions>
#   T <horizon>
#   P0 p(0) ... p(S-1)
#   P <s> <a> p(s'=0) ... p(s'=S-1)     (one line per state-action pair)
#   R <s> r(a=0) ... r(a=A-1)           (one line per state)
#
# '#' starts a comment; order of sections is fixed as above.


def load_tabular_mdp(text: str) -> TabularMDP:
    lines = [
        ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")
    ]
    try:
        fields = dict(ln.split(None, 1) for ln in lines[:3])
        S, A, T = int(fields["S"]), int(fields["A"]), int(fields["T"])
        body = lines[3:]
        p0 = np.array([float(x) for x in body[0].split()[1:]])
        P = np.zeros((S, A, S))
        R = np.zeros((S, A))
        idx = 1
        for _ in range(S * A):
            parts = body[idx].split()
            s, a = int(parts[1]), int(parts[2])
            P[s, a] = [float(x) for x in parts[3:]]
            idx += 1
        for _ in range(S):
            parts = body[idx].split()
            R[int(parts[1])] = [float(x) for x in parts[2:]]
            idx += 1
    except (KeyError, IndexError, ValueError) as e:
        raise FormatError(f"bad tabular MDP text: {e}") from e
    return TabularMDP(P=P, R=R, p0=p0, T=T)


def dump_tabular_mdp(mdp: TabularMDP) -> str:
    out = [f"S {mdp.n_states}", f"A {mdp.n_actions}", f"T {mdp.T}"]
    out.append("P0 " + " ".join(repr(float(x)) for x in mdp.p0))
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            out.append(f"P {s} {a} " + " ".join(repr(float(x)) for x in mdp.P[s, a]))
    for s in range(mdp.n_states):
        out.append(f"R {s} " + " ".join(repr(float(x)) for x in mdp.R[s]))
    return "\n".join(out) + "\n"
