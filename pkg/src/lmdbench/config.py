"""RunConfig: one JSON document with every knob of a workflow.

Missing keys take defaults, unknown keys are rejected, and the resolved
document is written next to every command's outputs.
"""

from __future__ import annotations

import copy
import json

from .energy import ModelParams
from .errors import ConfigError, LmdError
from .fields import BoundarySpec, GridSpec
from .model import UAFNOConfig
from .orchestrate import RolloutSchedule, TrainConfig
from .solver import SolverConfig

DEFAULTS = {
    "grid": {"nx": 64, "ny": 64, "dx_nm": 0.2},
    "params": ModelParams().to_dict(),
    "solver": {"dt_s": 1e-12, "stabilization": None, "boundary": "paper",
               "snapshot_cadence": 1000, "n_steps": 20000},
    "init": {"solid_fraction": 0.75, "noise_amp": 0.025, "seed": 0, "n_runs": 10},
    "model": {k: v for k, v in UAFNOConfig().to_dict().items()
              if k not in ("height", "width", "in_channels")},
    "train": {"epochs": 20, "lr": 1e-4, "batch_size": 1, "seed": 0, "max_steps": None},
    "rollout": {"n_init": 10000, "leap_steps": 1000, "n_leaps": 10, "n_relax": 0},
    "paths": {"data_dir": None, "out_dir": "out", "weights": None},
}


def _merge(base, over, where=""):
    out = copy.deepcopy(base)
    if not isinstance(over, dict):
        raise ConfigError(f"config section {where or '<root>'} must be an object")
    for k, v in over.items():
        path = f"{where}.{k}" if where else k
        if k not in base:
            raise ConfigError(f"unknown config key: {path}")
        if isinstance(base[k], dict):
            out[k] = _merge(base[k], v, path)
        else:
            out[k] = v
    return out


class RunConfig:
    """Resolved configuration with typed accessors for each module."""

    def __init__(self, data=None):
        self.data = _merge(DEFAULTS, data or {})
        self.validate()

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls(raw)

    def section(self, name):
        return self.data[name]

    def to_json(self):
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    def validate(self):
        try:
            self.grid()
            self.params()
            self.solver()
            self.model()
            self.train()
            self.schedule()
        except ConfigError:
            raise
        except (LmdError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        init = self.data["init"]
        if not 0 < init["solid_fraction"] < 1 or init["noise_amp"] < 0:
            raise ConfigError("init.solid_fraction must be in (0, 1), init.noise_amp >= 0")
        for k in ("seed", "n_runs"):
            if not isinstance(init[k], int) or init[k] < 0:
                raise ConfigError(f"init.{k} must be a non-negative integer")
        s = self.data["solver"]["n_steps"]
        if not isinstance(s, int) or s < 0:
            raise ConfigError("solver.n_steps must be a non-negative integer")

    # typed views ----------------------------------------------------------

    def grid(self):
        g = self.data["grid"]
        return GridSpec(int(g["nx"]), int(g["ny"]), float(g["dx_nm"]))

    def params(self):
        return ModelParams.from_dict(self.data["params"])

    def solver(self):
        s = self.data["solver"]
        return SolverConfig(dt=float(s["dt_s"]), stabilization=s["stabilization"],
                            boundary=BoundarySpec(s["boundary"]),
                            snapshot_cadence=int(s["snapshot_cadence"]))

    def model(self):
        g = self.grid()
        return UAFNOConfig(in_channels=3, height=g.ny, width=g.nx, **self.data["model"])

    def train(self):
        return TrainConfig(**self.data["train"])

    def schedule(self):
        return RolloutSchedule(**self.data["rollout"])

    @property
    def init(self):
        return self.data["init"]

    @property
    def n_steps(self):
        return self.data["solver"]["n_steps"]
