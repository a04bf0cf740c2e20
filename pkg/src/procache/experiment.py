"""Experiment configuration, evaluation protocol, and sweep drivers.

A flat key=value config file (dotted section prefixes, unknown keys rejected)
fixes the scenario; every result cell is a deterministic function of that
file plus the master seed. Sweep points are self-contained, so they can run
in a process pool without changing any number.
"""
from __future__ import annotations

import dataclasses
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import (
    ChannelStats,
    estimate_channel_stats,
    lbnck_thresholds,
    lbuc_thresholds_irm,
    simulate_lbnck,
    simulate_lbuc,
)
from .channel import ChannelConfig, MOBILITY_WALK
from .content import AccessModel, ContentGenConfig
from .engine import Env, RandomCacheDriver, ReactiveDriver, ThresholdDriver, draw_stream, simulate
from .errors import ConfigError
from .pg import FdmConfig, LrmConfig, TrainResult, init_from_ucb, train
from .policy import LFA, LISO, Params

TRAINED_SCHEMES = ("liso-fdm", "liso-lrm", "lfa-fdm", "lfa-lrm")
ALL_SCHEMES = ("reactive", "random", "lb-uc", "lb-nck") + TRAINED_SCHEMES
CSV_HEADER = ("sweep_var", "scheme", "mean_mw", "stderr_mw", "n_traj", "n_slots", "seed")
CURVE_HEADER = ("scheme", "iteration", "trajectories_consumed", "j_mean", "j_stderr")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "iid"              # iid | memory
    b: int = 20
    k_max: int = 15
    m_max: int = 8
    p_a: float = 0.25
    p_r: float = 0.45
    master_seed: int = 20170501
    lifetime_support: tuple[int, ...] = ()   # empty: {5, 10, ..., k_max}
    regime_p1: float = 0.5
    regime_p2: float = 0.5
    regime_short: int = 5
    regime_long: int = 15
    access_kind: str = "irm"
    inter_access_pmf: tuple[float, ...] = ()
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    fdm: FdmConfig = field(default_factory=FdmConfig)
    lrm: LrmConfig = field(default_factory=LrmConfig)
    eval_trajectories: int = 100
    eval_slots: int = 5000
    train_budget: int = 2000
    project_monotone: bool = False
    stat_samples: int = 1_000_000
    curve_eval_trajectories: int = 25
    curve_eval_slots: int = 1000

    def __post_init__(self):
        if self.scenario not in ("iid", "memory"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.b < 0:
            raise ConfigError("b must be >= 0")
        for name in ("p_a", "p_r", "regime_p1", "regime_p2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")

    def support_for(self, k_max: int) -> tuple[int, ...]:
        if self.lifetime_support:
            return self.lifetime_support
        if k_max % 5 != 0:
            raise ConfigError(
                "k_max must be a multiple of 5 when lifetime_support is derived"
            )
        return tuple(range(5, k_max + 1, 5))

    def content_config(self, k_max=None, p1=None, p2=None) -> ContentGenConfig:
        k = self.k_max if k_max is None else k_max
        if self.scenario == "memory":
            return ContentGenConfig(
                m_max=self.m_max,
                mode="regime",
                p1=self.regime_p1 if p1 is None else p1,
                p2=self.regime_p2 if p2 is None else p2,
                short_lifetime=self.regime_short,
                long_lifetime=self.regime_long,
            )
        return ContentGenConfig(
            m_max=self.m_max, lifetime_support=self.support_for(k), mode="iid"
        )

    def access_model(self) -> AccessModel:
        if self.access_kind == "irm":
            return AccessModel(kind="irm", p_a=self.p_a)
        return AccessModel(kind="bounded", inter_access_pmf=self.inter_access_pmf)

    def channel_config(self) -> ChannelConfig:
        if self.scenario == "memory" and self.channel.mobility != MOBILITY_WALK:
            return replace(self.channel, mobility=MOBILITY_WALK)
        return self.channel

    def env(self, b=None, k_max=None, p1=None, p2=None) -> Env:
        return Env(
            b=self.b if b is None else b,
            content=self.content_config(k_max=k_max, p1=p1, p2=p2),
            access=self.access_model(),
            channel=self.channel_config(),
        )

    def optimizer(self, method: str) -> FdmConfig | LrmConfig:
        return self.fdm if method == "fdm" else self.lrm


def seed_for(master: int, *tags) -> np.random.SeedSequence:
    """Stable per-task seed: the master seed plus CRC32-hashed tag words."""
    words = [int(master) & 0xFFFFFFFF]
    words += [zlib.crc32(str(t).encode()) for t in tags]
    return np.random.SeedSequence(words)


# --- config file parsing -----------------------------------------------------

def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_tuple(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _float_tuple(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _opt_float(s: str) -> float | None:
    return None if s.strip().lower() == "auto" else float(s)


# key -> (top-level field or (block, field), caster)
_KEYS: dict[str, tuple] = {
    "scenario": ("scenario", str),
    "b": ("b", int),
    "k_max": ("k_max", int),
    "m_max": ("m_max", int),
    "p_a": ("p_a", float),
    "p_r": ("p_r", float),
    "master_seed": ("master_seed", int),
    "content.lifetime_support": ("lifetime_support", _int_tuple),
    "regime.p1": ("regime_p1", float),
    "regime.p2": ("regime_p2", float),
    "regime.short_lifetime": ("regime_short", int),
    "regime.long_lifetime": ("regime_long", int),
    "access.kind": ("access_kind", str),
    "access.inter_access_pmf": ("inter_access_pmf", _float_tuple),
    "eval.trajectories": ("eval_trajectories", int),
    "eval.slots": ("eval_slots", int),
    "train.budget_trajectories": ("train_budget", int),
    "train.project_monotone": ("project_monotone", _bool),
    "bounds.stat_samples": ("stat_samples", int),
    "curve_eval.trajectories": ("curve_eval_trajectories", int),
    "curve_eval.slots": ("curve_eval_slots", int),
    "mobility.step_m": (("channel", "walk_step_m"), float),
    "mobility.p_away": (("channel", "walk_p_away"), float),
}
for _f in dataclasses.fields(ChannelConfig):
    _cast = str if _f.name == "mobility" else float
    _KEYS[f"channel.{_f.name}"] = (("channel", _f.name), _cast)
for _f in dataclasses.fields(FdmConfig):
    _cast = {"trajectories_per_update": int, "slots_per_trajectory": int,
             "updates_averaged": int, "paired_streams": _bool,
             "step_size": _opt_float}.get(_f.name, float)
    _KEYS[f"fdm.{_f.name}"] = (("fdm", _f.name), _cast)
for _f in dataclasses.fields(LrmConfig):
    _cast = {"trajectories_per_update": int, "slots_per_trajectory": int,
             "updates_averaged": int, "use_baseline": _bool,
             "step_size": _opt_float}.get(_f.name, float)
    _KEYS[f"lrm.{_f.name}"] = (("lrm", _f.name), _cast)


def parse_config_text(text: str) -> ExperimentConfig:
    top: dict = {}
    blocks: dict[str, dict] = {"channel": {}, "fdm": {}, "lrm": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        target, caster = _KEYS[key]
        try:
            parsed = caster(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
        if isinstance(target, tuple):
            blocks[target[0]][target[1]] = parsed
        else:
            top[target] = parsed
    try:
        kwargs = dict(top)
        if blocks["channel"]:
            kwargs["channel"] = ChannelConfig(**blocks["channel"])
        if blocks["fdm"]:
            kwargs["fdm"] = FdmConfig(**blocks["fdm"])
        if blocks["lrm"]:
            kwargs["lrm"] = LrmConfig(**blocks["lrm"])
        return ExperimentConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


# --- evaluation protocol ------------------------------------------------------

def channel_stats(cfg: ExperimentConfig) -> ChannelStats:
    return estimate_channel_stats(
        cfg.channel_config(), cfg.stat_samples, seed_for(cfg.master_seed, "channel-stats")
    )


def _eval_stream(cfg: ExperimentConfig, env: Env):
    return draw_stream(
        env, cfg.eval_trajectories, cfg.eval_slots, seed_for(cfg.master_seed, "eval")
    )


def eval_scheme_on_stream(
    cfg: ExperimentConfig,
    env: Env,
    scheme_or_params,
    stream,
    stats: ChannelStats | None = None,
    point_tag: str = "",
):
    """Per-trajectory average costs of one scheme on a fixed stream."""
    if isinstance(scheme_or_params, str):
        scheme = scheme_or_params
        if scheme == "reactive":
            return simulate(env, stream, ReactiveDriver()).j
        if scheme == "random":
            seed = seed_for(cfg.master_seed, "eval-policy", scheme, point_tag)
            return simulate(env, stream, RandomCacheDriver(env, cfg.p_r),
                            policy_seed=seed).j
        if scheme == "lb-uc":
            uc = lbuc_thresholds_irm(stats, env.k_max, cfg.p_a)
            return simulate_lbuc(env, stream, uc).j
        if scheme == "lb-nck":
            nck = lbnck_thresholds(stats)
            return simulate_lbnck(env, stream, nck).j
        raise ConfigError(f"unknown scheme {scheme!r}")
    params: Params = scheme_or_params
    return simulate(env, stream, ThresholdDriver(env, params)).j


def run_eval(cfg: ExperimentConfig, policy, env: Env | None = None,
             stats: ChannelStats | None = None) -> tuple[float, float]:
    """Mean and standard error of J over the held-out evaluation protocol.

    ``policy`` is a scheme name or a trained parameter object. Evaluation
    seeds derive from the "eval" tag, disjoint from every training tag, and
    are shared across schemes so comparisons are paired.
    """
    env = cfg.env() if env is None else env
    if stats is None and isinstance(policy, str) and policy.startswith("lb-"):
        stats = channel_stats(cfg)
    stream = _eval_stream(cfg, env)
    j = eval_scheme_on_stream(cfg, env, policy, stream, stats)
    stderr = float(j.std(ddof=1) / np.sqrt(j.size)) if j.size > 1 else 0.0
    return float(j.mean()), stderr


def train_scheme(
    cfg: ExperimentConfig,
    env: Env,
    scheme: str,
    stats: ChannelStats,
    point_tag: str = "",
    budget: int | None = None,
) -> TrainResult:
    """Train one of the four parametric schemes at a sweep point."""
    kind, method = scheme.split("-")
    if kind not in (LISO, LFA) or method not in ("fdm", "lrm"):
        raise ConfigError(f"unknown trained scheme {scheme!r}")
    uc = lbuc_thresholds_irm(stats, env.k_max, cfg.p_a)
    params0 = init_from_ucb(uc, kind, env.k_max, env.c_max)
    opt = cfg.optimizer(method)
    budget = cfg.train_budget if budget is None else budget
    iterations = max(1, budget // opt.trajectories_per_iteration)
    rng = np.random.default_rng(seed_for(cfg.master_seed, "train", scheme, point_tag))
    curve_stream = draw_stream(
        env, cfg.curve_eval_trajectories, cfg.curve_eval_slots,
        seed_for(cfg.master_seed, "curve-eval", point_tag),
    )
    return train(
        env, params0, opt, iterations, rng,
        eval_stream=curve_stream, project_monotone=cfg.project_monotone,
    )


def evaluate_point(
    cfg: ExperimentConfig,
    env: Env,
    schemes,
    stats: ChannelStats,
    point_tag: str,
    budget: int | None = None,
) -> dict[str, np.ndarray]:
    """Train what needs training and evaluate every scheme on one shared stream."""
    stream = _eval_stream(cfg, env)
    out: dict[str, np.ndarray] = {}
    for scheme in schemes:
        if scheme in TRAINED_SCHEMES:
            trained = train_scheme(cfg, env, scheme, stats, point_tag, budget)
            out[scheme] = eval_scheme_on_stream(cfg, env, trained.params, stream)
        else:
            out[scheme] = eval_scheme_on_stream(
                cfg, env, scheme, stream, stats, point_tag
            )
    return out


def _rows_for_point(cfg, sweep_value, results) -> list[tuple]:
    rows = []
    for scheme, j in results.items():
        stderr = float(j.std(ddof=1) / np.sqrt(j.size)) if j.size > 1 else 0.0
        rows.append(
            (sweep_value, scheme, float(j.mean()), stderr, int(j.size),
             cfg.eval_slots, cfg.master_seed)
        )
    return rows


def _capacity_point(args) -> list[tuple]:
    cfg, b, schemes = args
    stats = channel_stats(cfg)
    env = cfg.env(b=b)
    results = evaluate_point(cfg, env, schemes, stats, point_tag=f"B={b}")
    return _rows_for_point(cfg, b, results)


def _lifetime_point(args) -> list[tuple]:
    cfg, k_max, schemes = args
    stats = channel_stats(cfg)
    env = cfg.env(k_max=k_max)
    results = evaluate_point(cfg, env, schemes, stats, point_tag=f"K={k_max}")
    return _rows_for_point(cfg, k_max, results)


def _memory_point(args) -> list[tuple]:
    cfg, p1, p2, schemes = args
    stats = channel_stats(cfg)
    env = cfg.env(p1=p1, p2=p2)
    results = evaluate_point(cfg, env, schemes, stats, point_tag=f"p1={p1},p2={p2}")
    return _rows_for_point(cfg, f"{p1}:{p2}", results)


def _run_points(point_fn, tasks, jobs: int) -> list[tuple]:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(point_fn, tasks))
    else:
        chunks = [point_fn(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def sweep_capacity(cfg: ExperimentConfig, b_list, schemes=ALL_SCHEMES, jobs: int = 1):
    """Average cost of every scheme across cache capacities."""
    return _run_points(_capacity_point, [(cfg, b, tuple(schemes)) for b in b_list], jobs)


def sweep_lifetime(cfg: ExperimentConfig, k_list, schemes=ALL_SCHEMES, jobs: int = 1):
    """Average cost of every scheme across maximum lifetimes."""
    return _run_points(_lifetime_point, [(cfg, k, tuple(schemes)) for k in k_list], jobs)


MEMORY_SCHEMES = ("reactive", "random", "liso-lrm", "lfa-lrm")


def sweep_memory(cfg: ExperimentConfig, p1_list, p2_list,
                 schemes=MEMORY_SCHEMES, jobs: int = 1):
    """Average cost across the regime persistence grid (memory scenario)."""
    if cfg.scenario != "memory":
        cfg = replace(cfg, scenario="memory")
    tasks = [(cfg, p1, p2, tuple(schemes)) for p1 in p1_list for p2 in p2_list]
    return _run_points(_memory_point, tasks, jobs)


def emit_learning_curves(cfg: ExperimentConfig, schemes=TRAINED_SCHEMES) -> list[tuple]:
    """Training curves (held-out J per iteration) for the parametric schemes."""
    stats = channel_stats(cfg)
    env = cfg.env()
    rows = []
    for scheme in schemes:
        result = train_scheme(cfg, env, scheme, stats, point_tag="curves")
        for pt in result.curve:
            rows.append((scheme, pt.iteration, pt.trajectories_consumed,
                         pt.j_mean, pt.j_stderr))
    return rows
