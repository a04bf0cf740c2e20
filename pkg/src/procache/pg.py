"""Rollouts, trajectory evaluation, and the two policy-gradient estimators.

The finite-difference estimator (FDM) regresses cost changes of rollouts
under perturbed parameter vectors; the likelihood-ratio estimator (LRM)
scores the randomized policy's trial sequence with a variance-minimizing
per-coordinate baseline. Both feed the same averaged-update training loop.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bounds import UcThresholds
from .content import (
    SystemState,
    advance_regime,
    generate_contents,
    initial_regime,
    sample_access,
    step,
)
from .channel import initial_mobility_state, sample_cost
from .engine import Env, ReactiveDriver, SimResult, ThresholdDriver, draw_stream, simulate
from .errors import NumericalError
from .multiset import EMPTY, LifetimeMultiset
from .policy import (
    LFA,
    LISO,
    DeterministicPolicy,
    Params,
    LfaParams,
    LisoParams,
    RandomizedPolicy,
    Trial,
    build_pair_index,
    pair_count,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FdmConfig:
    perturb_range: float = 0.08        # mW, half-width of the uniform perturbation
    trajectories_per_update: int = 100  # perturbation pairs per gradient estimate
    slots_per_trajectory: int = 300
    step_size: float | None = None      # None: pick from the pilot grid
    updates_averaged: int = 5
    paired_streams: bool = True         # common random numbers per pair

    def __post_init__(self):
        if self.perturb_range <= 0:
            raise ValueError("perturb_range must be positive")
        if min(self.trajectories_per_update, self.slots_per_trajectory,
               self.updates_averaged) < 1:
            raise ValueError("counts must be >= 1")

    method = "fdm"

    @property
    def trajectories_per_iteration(self) -> int:
        return 2 * self.trajectories_per_update * self.updates_averaged


@dataclass(frozen=True)
class LrmConfig:
    eta: float = 10.0
    trajectories_per_update: int = 20
    slots_per_trajectory: int = 300
    step_size: float | None = None
    updates_averaged: int = 5
    use_baseline: bool = True

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if min(self.trajectories_per_update, self.slots_per_trajectory,
               self.updates_averaged) < 1:
            raise ValueError("counts must be >= 1")

    method = "lrm"

    @property
    def trajectories_per_iteration(self) -> int:
        return self.trajectories_per_update * self.updates_averaged


@dataclass
class SlotStep:
    """One simulated slot: decision-time state, draws, action, and cost."""

    state: SystemState
    cost: float
    download: LifetimeMultiset
    discard: LifetimeMultiset
    mu: float
    trials: list[Trial] | None = None


@dataclass
class Trajectory:
    records: list[SlotStep] = field(default_factory=list)

    @property
    def n_slots(self) -> int:
        return len(self.records)

    @property
    def j(self) -> float:
        return evaluate(self)


def evaluate(trajectory: Trajectory) -> float:
    """Average instantaneous cost over the trajectory, in mW."""
    if not trajectory.records:
        raise ValueError("cannot evaluate an empty trajectory")
    return float(np.mean([r.mu for r in trajectory.records]))


def rollout(
    env: Env,
    policy,
    t_slots: int,
    rng: np.random.Generator,
    mode: str = "deterministic",
) -> Trajectory:
    """Reference (scalar) rollout from the empty just-accessed initial state.

    ``policy`` is either a parameter object (wrapped per ``mode``) or any
    object exposing decide(state, cost, b, rng). Randomized mode keeps the
    per-slot trial records on the slot steps for gradient computation.
    """
    if isinstance(policy, (LisoParams, LfaParams)):
        if mode == "deterministic":
            policy = DeterministicPolicy(policy)
        elif mode == "randomized":
            raise ValueError("randomized mode needs an eta; wrap in RandomizedPolicy")
        else:
            raise ValueError(f"unknown mode {mode!r}")
    randomized = isinstance(policy, RandomizedPolicy)

    content, access, channel = env.content, env.access, env.channel
    regime = initial_regime(rng, content) if content.mode == "regime" else None
    mobility = None
    if not hasattr(channel, "sample"):
        mobility = initial_mobility_state(rng, channel)

    first_new = generate_contents(rng, content, regime)
    first_access = sample_access(rng, 0, access)
    state = SystemState(
        outside=first_new,
        inside=EMPTY,
        elapsed=0 if first_access else 1,
        accessed=first_access,
    )
    traj = Trajectory()
    for _ in range(t_slots):
        if hasattr(channel, "sample"):
            cost = channel.sample(rng)
        else:
            cost, mobility = sample_cost(rng, mobility, channel)
        trials = None
        if state.accessed:
            download, discard = state.outside, state.inside
            mu = state.outside.size * cost
        else:
            download, discard = policy.decide(state, cost, env.b, rng)
            if randomized:
                trials = policy.last_trials
            mu = download.size * cost
        traj.records.append(SlotStep(state, cost, download, discard, mu, trials))
        if content.mode == "regime":
            regime = advance_regime(rng, regime, content)
        new_contents = generate_contents(rng, content, regime)
        access_next = sample_access(rng, state.elapsed, access)
        state = step(state, (download, discard), access_next, new_contents, env.b)
    return traj


def fdm_regress(delta: np.ndarray, dj: np.ndarray) -> np.ndarray:
    """Least-squares gradient from perturbations; ridge fallback when singular.

    For an underdetermined system the ridge solve runs in its dual (pair-count
    sized) form, which is the same vector at the same regularization.
    """
    n, dim = delta.shape
    if n >= dim:
        a = delta.T @ delta
        try:
            g = np.linalg.solve(a, delta.T @ dj)
            if np.all(np.isfinite(g)):
                return g
        except np.linalg.LinAlgError:
            pass
        log.warning("singular finite-difference regression; applying ridge")
    eps = 1e-8 * float(np.sum(delta * delta)) / dim
    gram = delta @ delta.T
    coeff = np.linalg.solve(gram + eps * np.eye(n), dj)
    return delta.T @ coeff


def fdm_gradient(
    env: Env, params: Params, cfg: FdmConfig, rng: np.random.Generator
) -> np.ndarray:
    """One finite-difference gradient estimate from perturbation-pair rollouts."""
    n = cfg.trajectories_per_update
    delta = rng.uniform(-cfg.perturb_range, cfg.perturb_range, size=(n, params.dim))
    seed = int(rng.integers(2**62))
    stream = draw_stream(env, n, cfg.slots_per_trajectory, seed)
    j_base = simulate(env, stream, ThresholdDriver(env, params)).j
    if not cfg.paired_streams:
        stream = draw_stream(env, n, cfg.slots_per_trajectory, int(rng.integers(2**62)))
    pert = ThresholdDriver(env, params, flat_matrix=params.flat()[None, :] + delta)
    j_pert = simulate(env, stream, pert).j
    return fdm_regress(delta, j_pert - j_base)


def lrm_estimate(grads: np.ndarray, j: np.ndarray, use_baseline: bool) -> np.ndarray:
    """REINFORCE estimate with the variance-minimizing per-coordinate baseline."""
    if use_baseline:
        g2 = grads * grads
        den = g2.sum(axis=0)
        num = (g2 * j[:, None]).sum(axis=0)
        baseline = np.divide(num, den, out=np.zeros_like(den), where=den > 0)
    else:
        baseline = np.zeros(grads.shape[1])
    return (grads * (j[:, None] - baseline[None, :])).mean(axis=0)


def lrm_gradient(
    env: Env, params: Params, cfg: LrmConfig, rng: np.random.Generator
) -> np.ndarray:
    """One likelihood-ratio gradient estimate from randomized rollouts."""
    n = cfg.trajectories_per_update
    stream = draw_stream(env, n, cfg.slots_per_trajectory, int(rng.integers(2**62)))
    driver = ThresholdDriver(
        env, params, randomized=True, eta=cfg.eta, collect_grads=True
    )
    res = simulate(env, stream, driver, policy_seed=int(rng.integers(2**62)))
    grads = res.grad if res.grad is not None else np.zeros((n, params.dim))
    return lrm_estimate(grads, res.j, cfg.use_baseline)


def init_from_ucb(uc: UcThresholds, kind: str, k_max: int, c_max: float) -> Params:
    """Start thresholds from the unlimited-cache solution.

    Only the fill-an-empty-slot pairs (0, L) get the recursion's values; the
    unlimited-cache policy never evicts, so every true swap pair starts at
    zero (no swaps until learned). The LFA tensor replicates the same vector
    across all frequency coordinates, which evaluates to the same thresholds.
    """
    idx = build_pair_index(k_max)
    values = np.zeros(pair_count(k_max))
    for L in range(1, k_max + 1):
        values[idx[0, L]] = min(uc.value(L), c_max)
    if kind == LISO:
        return LisoParams(k_max, c_max, values)
    if kind == LFA:
        return LfaParams(k_max, c_max, np.tile(values, (k_max + 1, 1)))
    raise ValueError(f"unknown policy kind {kind!r}")


def clamp_params(params: Params) -> Params:
    """Re-impose the parameter invariants after a gradient update."""
    if params.kind == LISO:
        return params.with_flat(np.clip(params.flat(), 0.0, params.c_max))
    return params


def project_monotone_table(params: Params) -> Params:
    """Push thresholds onto the monotone pattern (optional search-space prior).

    Sequential cumulative-max sweeps make the table nondecreasing in the
    incoming lifetime and nonincreasing in the outgoing one; this enforces
    monotonicity but is not the Euclidean projection.
    """
    idx = build_pair_index(params.k_max)
    valid = idx >= 0

    def fix(table: np.ndarray) -> np.ndarray:
        t = table.copy()
        for l in range(params.k_max + 1):  # nondecreasing in L along each row
            row = np.maximum.accumulate(np.where(valid[l], t[l], -np.inf))
            t[l] = np.where(valid[l], row, 0.0)
        for L in range(params.k_max + 1):  # nonincreasing in l down each column
            col = t[:, L]
            rev = np.maximum.accumulate(np.where(valid[:, L], col, -np.inf)[::-1])[::-1]
            t[:, L] = np.where(valid[:, L], rev, 0.0)
        return t

    if params.kind == LISO:
        table = np.zeros((params.k_max + 1, params.k_max + 1))
        table[valid] = params.values[idx[valid]]
        fixed = fix(table)
        return params.with_flat(fixed[valid][np.argsort(idx[valid])])
    weights = params.weights.copy()
    for i in range(params.k_max + 1):
        table = np.zeros((params.k_max + 1, params.k_max + 1))
        table[valid] = weights[i, idx[valid]]
        fixed = fix(table)
        weights[i] = fixed[valid][np.argsort(idx[valid])]
    return LfaParams(params.k_max, params.c_max, weights)


@dataclass
class CurvePoint:
    iteration: int
    trajectories_consumed: int
    j_mean: float
    j_stderr: float


@dataclass
class TrainResult:
    params: Params
    curve: list[CurvePoint]
    step_size: float
    trajectories_consumed: int


PILOT_GRID = (1e-3, 1e-2, 1e-1)


def pilot_step_size(
    env: Env,
    params0: Params,
    cfg: FdmConfig | LrmConfig,
    rng: np.random.Generator,
    eval_stream=None,
) -> float:
    """Pick the step size from a small grid by one trial iteration each."""
    if eval_stream is None:
        eval_stream = draw_stream(env, 32, 600, int(rng.integers(2**62)))
    best_lam, best_j = None, np.inf
    for scale in PILOT_GRID:
        lam = scale / env.c_max
        trial_rng = np.random.default_rng(int(rng.integers(2**62)))
        result = train(
            env, params0, cfg, iterations=1, rng=trial_rng, step_size=lam,
            eval_stream=eval_stream,
        )
        if result.curve[-1].j_mean < best_j:
            best_j = result.curve[-1].j_mean
            best_lam = lam
    return best_lam


def train(
    env: Env,
    params0: Params,
    cfg: FdmConfig | LrmConfig,
    iterations: int,
    rng: np.random.Generator,
    step_size: float | None = None,
    eval_stream=None,
    reactive_j: float | None = None,
    project_monotone: bool = False,
) -> TrainResult:
    """Averaged stochastic gradient descent on the threshold parameters.

    Each iteration averages ``updates_averaged`` candidate updates built from
    independent gradient estimates, re-imposes the parameter invariants, and
    scores the iterate on a held-out stream. A candidate whose held-out cost
    exceeds ten times the reactive baseline is rejected: the step size halves
    and the previous iterate carries over.
    """
    lam = step_size if step_size is not None else cfg.step_size
    if lam is None:
        lam = pilot_step_size(env, params0, cfg, rng)
    lam0 = lam
    if eval_stream is None:
        eval_stream = draw_stream(env, 50, 1000, int(rng.integers(2**62)))
    if reactive_j is None:
        reactive_j = simulate(env, eval_stream, ReactiveDriver()).j_mean

    gradient = fdm_gradient if cfg.method == "fdm" else lrm_gradient
    params = params0
    curve: list[CurvePoint] = []
    consumed = 0
    if env.b == 0:
        # no cache slots: the pairing is empty and every gradient is zero
        res = simulate(env, eval_stream, ThresholdDriver(env, params))
        curve.append(CurvePoint(0, 0, res.j_mean, res.j_stderr))
        return TrainResult(params, curve, lam, 0)

    for it in range(1, iterations + 1):
        estimates = [
            gradient(env, params, cfg, rng) for _ in range(cfg.updates_averaged)
        ]
        # the average of the m candidate updates equals one step along the
        # averaged gradient
        candidate = params.with_flat(
            params.flat() - lam * np.mean(estimates, axis=0)
        )
        candidate = clamp_params(candidate)
        if project_monotone:
            candidate = project_monotone_table(candidate)
        consumed += cfg.trajectories_per_iteration
        res = simulate(env, eval_stream, ThresholdDriver(env, candidate))
        if not np.isfinite(res.j_mean) or res.j_mean > 10.0 * reactive_j:
            lam /= 2.0
            log.warning("iteration %d diverged (J=%.3g); step size now %.3g",
                        it, res.j_mean, lam)
            if lam < lam0 * 2.0**-30:
                raise NumericalError("step size collapsed; training diverged")
            res = simulate(env, eval_stream, ThresholdDriver(env, params))
            curve.append(CurvePoint(it, consumed, res.j_mean, res.j_stderr))
            continue
        params = candidate
        curve.append(CurvePoint(it, consumed, res.j_mean, res.j_stderr))
    return TrainResult(params, curve, lam, consumed)
