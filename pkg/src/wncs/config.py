"""Flat key=value configuration with typed parsing and strict keys.

Every default is overridable from a config file or repeated --set
KEY=VALUE flags; unknown keys and type mismatches are rejected with the
offending location.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelConfig, db_to_linear
from .controller import TrainConfig
from .plant import mountain_car
from .predictor import KernelParams
from .simulator import TABLE_VARIANTS, SimConfig


def _parse_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_vec(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(v) for v in text.split(","))


_CHOICES = {
    "tail_norm": ("inf", "2"),
    "lyapunov_form": ("continuous", "discrete"),
    "optimizer": ("adam", "sgd"),
}

# key -> (parser, default)
SCHEMA: dict = {
    # plant
    "alpha": (float, 0.0025),
    "b": (float, 3.0),
    "x0": (_parse_vec, (-1.5, 0.0)),
    "eta": (_parse_vec, (0.1, 0.1)),
    "zeta": (float, 0.1),
    "plant_noise_var": (float, 0.02),
    "tail_norm": (str, "inf"),
    "sampling_period": (float, 0.01),
    # channel
    "sigma2_h": (float, 0.02),
    "n0": (float, 1.0),
    "bandwidth": (float, 1.0),
    "gamma0_db": (float, 20.0),
    "pmax_dbm": (float, 30.0),
    "p_rr_dbm": (float, 28.2),
    # scheduler
    "v": (float, 1000.0),
    "psi_beta": (float, 1.0),
    "psi_p": (float, 1.0),
    # predictor
    "window": (int, 10),
    "min_window": (int, 3),
    "gpr_h": (float, 1.0),
    "gpr_l": (float, 1.0),
    "gpr_s": (float, 20.0),
    "gpr_noise": (float, 1e-4),
    "gpr_tune_periods": (_parse_vec, (5.0, 10.0, 20.0, 40.0)),
    # simulator
    "m_systems": (int, 6),
    "k_slots": (int, 1000),
    "fresh_budget": (int, 2),
    "lyapunov_form": (str, "discrete"),
    "warmup_len": (int, 200),
    "m_grid": (_parse_vec, (6.0, 11.0, 16.0, 21.0)),
    "variants": (str, "full,v1,v2,v3,v4"),
    # control / training
    "action_low": (float, -10.0),
    "action_high": (float, 10.0),
    "nu": (float, 0.9),
    "epochs": (int, 100),
    "episodes_per_epoch": (int, 200),
    "horizon": (int, 200),
    "learning_rate": (float, 0.1),
    "lr_decay": (float, 0.75),
    "updates_per_epoch": (int, 5),
    "x0_jitter": (float, 0.1),
    "grad_clip": (float, 10.0),
    "optimizer": (str, "adam"),
    "state_bound": (float, 100.0),
    "train_seed": (int, 0),
}


class ConfigError(ValueError):
    pass


@dataclass
class Resolved:
    """Fully resolved configuration values."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def sim_config(self) -> SimConfig:
        v = self.values
        model = mountain_car(
            alpha=v["alpha"],
            b=v["b"],
            plant_noise_var=v["plant_noise_var"],
            eta=v["eta"],
            zeta=v["zeta"],
            T=v["sampling_period"],
            tail_norm=v["tail_norm"],
        )
        channel = ChannelConfig(
            N0=v["n0"],
            omega=v["bandwidth"],
            gamma0=db_to_linear(v["gamma0_db"]),
            Pmax=db_to_linear(v["pmax_dbm"]),
            sigma2_h=v["sigma2_h"],
        )
        return SimConfig(
            model=model,
            channel=channel,
            M=v["m_systems"],
            K=v["k_slots"],
            seeds=(0,),
            V=v["v"],
            psi_beta=v["psi_beta"],
            psi_p=v["psi_p"],
            p_rr=db_to_linear(v["p_rr_dbm"]),
            window_capacity=v["window"],
            kernel=KernelParams(v["gpr_h"], v["gpr_l"], v["gpr_s"], v["gpr_noise"]),
            tune_periods=v["gpr_tune_periods"],
            x0=v["x0"],
            lyapunov_form=v["lyapunov_form"],
            warmup_len=v["warmup_len"],
            min_window=v["min_window"],
            fresh_budget=v["fresh_budget"],
            action_low=v["action_low"],
            action_high=v["action_high"],
        )

    def train_config(self, objective: str = "tail") -> TrainConfig:
        v = self.values
        return TrainConfig(
            epochs=v["epochs"],
            episodes_per_epoch=v["episodes_per_epoch"],
            horizon=v["horizon"],
            discount=v["nu"],
            learning_rate=v["learning_rate"],
            seed=v["train_seed"],
            action_low=v["action_low"],
            action_high=v["action_high"],
            x0=v["x0"],
            x0_jitter=v["x0_jitter"],
            grad_clip=v["grad_clip"],
            optimizer=v["optimizer"],
            objective=objective,
            state_bound=v["state_bound"],
            updates_per_epoch=v["updates_per_epoch"],
            lr_decay=v["lr_decay"],
        )

    def variant_list(self):
        names = [n.strip().lower() for n in self.values["variants"].split(",") if n.strip()]
        unknown = [n for n in names if n not in TABLE_VARIANTS]
        if unknown:
            raise ConfigError(
                f"unknown variants {unknown}; valid: {sorted(TABLE_VARIANTS)}"
            )
        return [TABLE_VARIANTS[n] for n in names]

    def m_grid(self):
        return [int(m) for m in self.values["m_grid"]]


def _apply(values: dict, key: str, raw: str, where: str) -> None:
    if key not in SCHEMA:
        valid = ", ".join(sorted(SCHEMA))
        raise ConfigError(f"{where}: unknown key {key!r}; valid keys: {valid}")
    parser, _default = SCHEMA[key]
    try:
        val = parser(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {key}={raw!r}: {exc}") from exc
    if key in _CHOICES and val not in _CHOICES[key]:
        raise ConfigError(f"{where}: {key} must be one of {_CHOICES[key]}")
    values[key] = val


def parse_config(path=None, overrides=()) -> Resolved:
    """Resolve defaults, then a config file, then --set overrides in order."""
    values = {key: default for key, (_p, default) in SCHEMA.items()}
    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                if "=" not in body:
                    raise ConfigError(f"{path}:{lineno}: expected KEY=VALUE, got {body!r}")
                key, raw = body.split("=", 1)
                _apply(values, key.strip(), raw, f"{path}:{lineno}")
    for i, item in enumerate(overrides):
        if "=" not in item:
            raise ConfigError(f"--set #{i + 1}: expected KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        _apply(values, key.strip(), raw, f"--set {key.strip()}")
    resolved = Resolved(values=values)
    resolved.variant_list()  # validate eagerly
    if np.any(np.asarray(values["eta"]) <= 0):
        raise ConfigError("eta must be positive elementwise")
    return resolved
