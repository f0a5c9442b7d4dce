"""Online co-design loop: per-slot scheduling, uplink decoding, state
prediction, control, plant stepping, and cost accounting.

One episode is strictly sequential; parallelism belongs at the
(variant x M x seed) grid level, where every cell owns independent
RNG substreams keyed by (seed, variant, system, role).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from . import controller as ctrl
from . import predictor as pred
from . import scheduler as sched
from .channel import ChannelConfig, db_to_linear
from .mathkit import RngStream, solve_lyapunov
from .plant import PlantState, SystemModel, mountain_car, stage_cost, step, tail_indicator

RESULT_COLUMNS = [
    "variant", "M", "seed", "objective", "comm_cost", "control_cost",
    "stability_cost", "controlling_cost", "mean_aoi", "mean_power",
    "sched_success_rate", "max_queue_over_K",
]

CURVE_COLUMNS = ["epoch", "mean_return", "std_return", "variant"]


class EpisodeAborted(RuntimeError):
    """Raised when a simulated state goes NaN; carries slot diagnostics."""


@dataclass(frozen=True)
class VariantSpec:
    scheduling: str  # RR | CA
    prediction: str  # NONE | ARIMA | GPR
    control: str  # TAIL | CLASSIC
    name: str

    def __post_init__(self):
        if self.scheduling not in ("RR", "CA"):
            raise ValueError(f"unknown scheduling {self.scheduling!r}")
        if self.prediction not in ("NONE", "ARIMA", "GPR"):
            raise ValueError(f"unknown prediction {self.prediction!r}")
        if self.control not in ("TAIL", "CLASSIC"):
            raise ValueError(f"unknown control {self.control!r}")


TABLE_VARIANTS = {
    "v1": VariantSpec("RR", "NONE", "TAIL", "v1"),
    "v2": VariantSpec("RR", "ARIMA", "TAIL", "v2"),
    "v3": VariantSpec("RR", "ARIMA", "CLASSIC", "v3"),
    "v4": VariantSpec("CA", "GPR", "CLASSIC", "v4"),
    "full": VariantSpec("CA", "GPR", "TAIL", "full"),
}


@dataclass
class SimConfig:
    model: SystemModel
    channel: ChannelConfig
    M: int = 6
    K: int = 1000
    seeds: tuple = (0,)
    V: float = 1000.0
    psi_beta: float = 1.0
    psi_p: float = 1.0
    p_rr: float = db_to_linear(28.2)
    window_capacity: int = 10
    kernel: pred.KernelParams = field(default_factory=pred.KernelParams)
    tune_periods: tuple = (5.0, 10.0, 20.0, 40.0)
    x0: tuple = (-1.5, 0.0)
    lyapunov_form: str = "discrete"
    warmup_len: int = 200
    min_window: int = 3  # predictions from fewer decodes are point echoes
    fresh_budget: int = 2  # act on predictions only while AoI <= this
    action_low: float = -10.0
    action_high: float = 10.0

    def __post_init__(self):
        if self.M < 1 or self.K < 1:
            raise ValueError("M and K must be >= 1")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")


def default_config(**overrides) -> SimConfig:
    return SimConfig(model=mountain_car(), channel=ChannelConfig(), **overrides)


@dataclass
class CostLedger:
    """Per-system running tallies behind the communication/control costs."""

    M: int
    K: int = 0
    sum_beta: np.ndarray = None
    sum_p_hat: np.ndarray = None
    sum_stage: np.ndarray = None
    sum_state: np.ndarray = None
    sum_action: np.ndarray = None

    def __post_init__(self):
        for name in ("sum_beta", "sum_p_hat", "sum_stage", "sum_state", "sum_action"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.M))

    def record(self, m: int, beta: int, p_hat: float, state_cost: float, action_cost: float):
        self.sum_beta[m] += beta
        self.sum_p_hat[m] += p_hat
        self.sum_state[m] += state_cost
        self.sum_action[m] += action_cost
        self.sum_stage[m] += state_cost + action_cost


def comm_cost(ledger: CostLedger, psi_beta: float, psi_p: float) -> np.ndarray:
    """Per-system fairness cost psi_b log(1+mean beta) + psi_p log(1+mean p-hat)."""
    if ledger.K < 1:
        raise ValueError("empty ledger")
    beta_bar = ledger.sum_beta / ledger.K
    assert np.all(beta_bar >= 1.0), "AoI averages below 1 are impossible"
    p_bar = ledger.sum_p_hat / ledger.K
    return psi_beta * np.log1p(beta_bar) + psi_p * np.log1p(p_bar)


def control_cost(ledger: CostLedger) -> np.ndarray:
    """Per-system time-averaged stage cost."""
    if ledger.K < 1:
        raise ValueError("empty ledger")
    return ledger.sum_stage / ledger.K


def objective(comm: np.ndarray, control: np.ndarray) -> float:
    """System-averaged total: mean(comm) + mean(control)."""
    comm = np.asarray(comm, dtype=float)
    control = np.asarray(control, dtype=float)
    if comm.shape != control.shape:
        raise ValueError("per-system cost arrays must align")
    return float(comm.mean() + control.mean())


@dataclass
class EpisodeResult:
    variant: str
    M: int
    seed: int
    comm: np.ndarray  # per system
    control: np.ndarray
    stability: np.ndarray
    controlling: np.ndarray
    objective: float
    mean_aoi: float
    mean_power: float
    sched_success_rate: float
    max_queue_over_K: float
    audit: dict | None = None

    def row(self) -> dict:
        return {
            "variant": self.variant,
            "M": self.M,
            "seed": self.seed,
            "objective": self.objective,
            "comm_cost": float(self.comm.mean()),
            "control_cost": float(self.control.mean()),
            "stability_cost": float(self.stability.mean()),
            "controlling_cost": float(self.controlling.mean()),
            "mean_aoi": self.mean_aoi,
            "mean_power": self.mean_power,
            "sched_success_rate": self.sched_success_rate,
            "max_queue_over_K": self.max_queue_over_K,
        }


def _active_policy(cfg: SimConfig, variant: VariantSpec, policy):
    if variant.control == "TAIL":
        if policy is None:
            raise ValueError("TAIL control needs a trained policy (see `wncs train`)")
        return policy
    return ctrl.lqr_as_policy(cfg.model, cfg.action_low, cfg.action_high)


def run_episode(cfg: SimConfig, variant: VariantSpec, seed: int,
                policy: ctrl.GaussianPolicy | None = None,
                audit: bool = False) -> EpisodeResult:
    """Simulate K slots of M systems under one method variant.

    Deterministic given (cfg, variant, seed): every (system, role) draws
    from its own named substream.
    """
    model = cfg.model
    M, K, D = cfg.M, cfg.K, model.D
    ccfg = cfg.channel
    base = RngStream(seed).substream(variant.name)
    rng_channel = [base.substream(m, "channel") for m in range(M)]
    rng_plant = [base.substream(m, "plant") for m in range(M)]
    rng_rx = [base.substream(m, "rx") for m in range(M)]

    active = _active_policy(cfg, variant, policy)

    # warm-up: linearise the deployed policy once per episode; the fit
    # feeds the drift ratio through the sign convention u = -Phi x
    w_states, _, w_acts, _, _ = ctrl.rollout(
        model, active, np.asarray(cfg.x0, float), cfg.warmup_len,
        rng=base.substream("warmup"), deterministic=True,
    )
    phi_fit = ctrl.feedback_gain(w_states, w_acts).Phi
    phi_drift = -phi_fit
    Z = solve_lyapunov(model.A - model.B @ phi_drift, form=cfg.lyapunov_form)
    drift = sched.DriftRatio(model, Z, phi_drift, model.W)

    windows = [pred.ObservationWindow(D, cfg.window_capacity) for _ in range(M)]
    gpr_models: list[pred.GprModel | None] = [None] * M
    kernels = [cfg.kernel] * M
    tuned = [False] * M

    # decoder-side belief: the base station knows the plant model, the
    # published initial state, and every action it issued, so the decode
    # prior is the dynamics-propagated second moment rather than the
    # kernel-bounded prediction moments (which saturate near h^2 and
    # starve the decoder once the state grows)
    dec_mean = [np.asarray(cfg.x0, float).copy() for _ in range(M)]
    dec_cov = [model.W.copy() for _ in range(M)]

    state = sched.SchedulerState.initial(M, cfg.V, cfg.psi_beta, cfg.psi_p)
    ledger = CostLedger(M=M, K=K)
    plants = [PlantState(np.asarray(cfg.x0, float)) for _ in range(M)]

    attempts = 0
    successes = 0
    log: dict | None = None
    if audit:
        log = {
            "chosen": np.full(K, -1, dtype=int),
            "success": np.zeros(K, dtype=bool),
            "gamma": np.zeros(K),
            "beta": np.zeros((K, M), dtype=int),
            "scheduled": np.zeros((K, M), dtype=bool),
            "actions": np.zeros((K, M, model.N)),
            "queues": np.zeros((K, M)),
            "c_ratio": np.zeros((K, M)),
        }

    for k in range(K):
        Hs = [ch.draw_channel(rng_channel[m], D, ccfg.sigma2_h) for m in range(M)]
        p_req = [ch.required_power(Hs[m], ccfg) for m in range(M)]

        predictions = []
        priors = []
        for m in range(M):
            if variant.prediction == "NONE" or len(windows[m]) < max(1, cfg.min_window):
                pr = pred.none_predict(D)
            elif variant.prediction == "GPR":
                if gpr_models[m] is None:
                    if not tuned[m] and cfg.tune_periods and len(windows[m]) >= cfg.window_capacity:
                        grid = [
                            pred.KernelParams(cfg.kernel.h, cfg.kernel.l, s, cfg.kernel.noise)
                            for s in cfg.tune_periods
                        ]
                        kernels[m] = pred.gpr_tune(windows[m], grid)
                        tuned[m] = True
                    gpr_models[m] = pred.gpr_fit(windows[m], kernels[m])
                pr = pred.gpr_predict(gpr_models[m], windows[m], k)
            else:
                pr = pred.arima_predict(windows[m])
            if not (np.all(np.abs(pr.x_hat) < 1e75) and np.all(np.abs(pr.Psi) < 1e150)):
                # a prediction this far outside float working range carries
                # no usable information; treat the slot as unpredicted
                pr = pred.none_predict(D)
            predictions.append(pr)
            if np.all(np.abs(dec_mean[m]) < 1e75) and np.all(np.abs(dec_cov[m]) < 1e150):
                prior = dec_cov[m] + np.outer(dec_mean[m], dec_mean[m])
            else:
                prior = np.eye(D)
            priors.append(prior)

        if variant.scheduling == "CA":
            c_vals = np.empty(M)
            for m in range(M):
                p_eff = p_req[m] if p_req[m] is not None else ccfg.Pmax
                V_hyp = ch.mmse_v_only(p_eff, Hs[m], model.Omega, priors[m], ccfg)
                c_vals[m] = drift.ratio(predictions[m].Psi, V_hyp)
            # the [0,1] clamp alone cannot keep M required rates inside the
            # one-transmission-per-slot capacity; normalise the clamped
            # rates into the simplex so the queues certify a feasible share
            clamped = np.clip(c_vals, 0.0, 1.0)
            arrivals = clamped / max(1.0, clamped.sum())
            decision = sched.ca_select(state, p_req, p_ref=ccfg.Pmax)
        else:
            decision = sched.rr_select(k, M, cfg.p_rr)

        chosen = decision.chosen
        success = False
        result = None
        if chosen is not None:
            attempts += 1
            result = ch.transmit_ul(
                plants[chosen].x, float(decision.p[chosen]), Hs[chosen],
                model.Omega, priors[chosen], ccfg, rng_rx[chosen],
            )
            success = result.success
            if success:
                successes += 1
                windows[chosen].add(k, result.x_tilde)
                gpr_models[chosen] = None  # refit lazily on next query
                dec_mean[chosen] = result.x_tilde.copy()
                dec_cov[chosen] = result.V_cov.copy()

        new_beta = state.beta.copy()
        for m in range(M):
            new_beta[m] = sched.update_aoi(state.beta[m], m == chosen, success)
        state.beta = new_beta

        if variant.scheduling == "CA":
            xi = decision.a * (1.0 if success else 0.0)
            state = sched.update_queues(state, arrivals, xi)

        for m in range(M):
            # stale prediction-based actions destabilise the loop (repeating
            # a held action is worse than coasting on this plant), so only
            # fresh predictions are actuated; staler slots coast with u = 0
            if m == chosen and success:
                src = result.x_tilde
            elif (
                predictions[m].source == pred.SOURCE_NONE
                or state.beta[m] > cfg.fresh_budget
            ):
                src = None
            else:
                src = predictions[m].x_hat
            if src is None:
                u = np.zeros(model.N)
            else:
                u = ctrl.policy_sample(active, src, deterministic=True)

            x_true = plants[m].x
            f = tail_indicator(x_true, model.eta, model.tail_norm)
            state_cost = float(f * (x_true @ model.Q @ x_true))
            action_cost = float(u @ model.Y @ u)
            p_hat = float(decision.p[m]) if m == chosen else 0.0
            ledger.record(m, int(state.beta[m]), p_hat, state_cost, action_cost)

            with np.errstate(over="ignore", invalid="ignore"):
                dec_mean[m] = model.A @ dec_mean[m] + model.B @ u
                dec_cov[m] = model.A @ dec_cov[m] @ model.A.T + model.W
            try:
                plants[m] = step(model, plants[m], u, rng_plant[m])
            except ValueError as exc:
                raise EpisodeAborted(
                    f"state left float range for system {m} at slot {k} "
                    f"(variant={variant.name}, seed={seed})"
                ) from exc
            if np.any(np.isnan(plants[m].x)):
                raise EpisodeAborted(
                    f"NaN state for system {m} at slot {k} "
                    f"(variant={variant.name}, seed={seed})"
                )
            if audit:
                log["actions"][k, m] = u

        if audit:
            log["chosen"][k] = -1 if chosen is None else chosen
            log["success"][k] = success
            log["gamma"][k] = result.gamma if result is not None else 0.0
            log["beta"][k] = state.beta
            log["scheduled"][k] = decision.a.astype(bool)
            log["queues"][k] = state.Q
            if variant.scheduling == "CA":
                log["c_ratio"][k] = c_vals

    comm = comm_cost(ledger, cfg.psi_beta, cfg.psi_p)
    control = control_cost(ledger)
    return EpisodeResult(
        variant=variant.name,
        M=M,
        seed=seed,
        comm=comm,
        control=control,
        stability=ledger.sum_state / K,
        controlling=ledger.sum_action / K,
        objective=objective(comm, control),
        mean_aoi=float(ledger.sum_beta.sum() / (M * K)),
        mean_power=float(ledger.sum_p_hat.sum() / (M * K)),
        sched_success_rate=successes / attempts if attempts else 0.0,
        max_queue_over_K=float(state.Q.max() / K),
        audit=log,
    )


def aggregate(results) -> dict:
    """Mean, sample std, and 95% normal interval per metric over episodes."""
    results = list(results)
    if not results:
        raise ValueError("no episodes to aggregate")
    rows = [r.row() for r in results]
    metrics = [c for c in RESULT_COLUMNS if c not in ("variant", "M", "seed")]
    out = {"n": len(rows), "rows": rows}
    for name in metrics:
        vals = np.array([row[name] for row in rows], dtype=float)
        mean = float(vals.mean())
        std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out[name] = {
            "mean": mean,
            "std": std,
            "ci95": 1.96 * std / np.sqrt(len(vals)) if len(vals) > 1 else 0.0,
        }
    return out
